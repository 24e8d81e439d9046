//! Addressing on the degree-3 Bethe lattice rooted at `O`.
//!
//! A site is named by the child indices walked from the root: the first step
//! is one of `0, 1, 2` (the root has three children), every later step is `0`
//! or `1`. Textually the steps are joined by dots (`"0.1"`), and the root is
//! written `O` (the empty string is accepted too).

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Deepest generation a [`SiteId`] can address.
pub const MAX_DEPTH: u32 = 60;

/// A site, stored as its generation and its position within the generation.
///
/// The derived order is breadth-first: by depth, then left to right.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct SiteId {
    depth: u32,
    index: u64,
}

impl SiteId {
    pub const ROOT: SiteId = SiteId { depth: 0, index: 0 };

    /// Number of sites at distance `depth` from the root.
    pub fn generation_size(depth: u32) -> u64 {
        if depth == 0 {
            1
        } else {
            3u64 << (depth - 1)
        }
    }

    pub fn new(depth: u32, index: u64) -> Result<Self> {
        if depth > MAX_DEPTH || index >= Self::generation_size(depth) {
            return Err(Error::InvalidAddress(format!("depth {depth}, index {index}")));
        }
        Ok(SiteId { depth, index })
    }

    pub fn from_steps(steps: &[u8]) -> Result<Self> {
        let mut site = SiteId::ROOT;
        for &step in steps {
            site = site
                .child(step)
                .ok_or_else(|| Error::InvalidAddress(format!("{steps:?}")))?;
        }
        Ok(site)
    }

    pub fn depth(self) -> u32 {
        self.depth
    }

    pub fn index(self) -> u64 {
        self.index
    }

    pub fn is_root(self) -> bool {
        self.depth == 0
    }

    pub fn steps(self) -> Vec<u8> {
        if self.depth == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.depth as usize);
        out.push((self.index >> (self.depth - 1)) as u8);
        for bit in (0..self.depth - 1).rev() {
            out.push(((self.index >> bit) & 1) as u8);
        }
        out
    }

    pub fn parent(self) -> Option<SiteId> {
        match self.depth {
            0 => None,
            1 => Some(SiteId::ROOT),
            d => Some(SiteId {
                depth: d - 1,
                index: self.index >> 1,
            }),
        }
    }

    pub fn child(self, step: u8) -> Option<SiteId> {
        if self.depth >= MAX_DEPTH {
            return None;
        }
        match (self.depth, step) {
            (0, 0..=2) => Some(SiteId {
                depth: 1,
                index: step as u64,
            }),
            (d, 0..=1) if d > 0 => Some(SiteId {
                depth: d + 1,
                index: (self.index << 1) | step as u64,
            }),
            _ => None,
        }
    }

    pub fn child_count(self) -> u8 {
        if self.depth == 0 {
            3
        } else {
            2
        }
    }

    pub fn children(self) -> impl Iterator<Item = SiteId> {
        (0..self.child_count()).filter_map(move |s| self.child(s))
    }

    /// Parent first (when there is one), then the children.
    pub fn adjacent(self) -> impl Iterator<Item = SiteId> {
        self.parent().into_iter().chain(self.children())
    }

    pub fn is_adjacent(self, other: SiteId) -> bool {
        self.parent() == Some(other) || other.parent() == Some(self)
    }

    /// Position in breadth-first order over the whole lattice.
    pub fn ball_index(self) -> u64 {
        if self.depth == 0 {
            0
        } else {
            (3u64 << (self.depth - 1)) - 2 + self.index
        }
    }

    fn ancestor_at(self, depth: u32) -> SiteId {
        debug_assert!(depth <= self.depth);
        let mut site = self;
        while site.depth > depth {
            site = site.parent().expect("non-root has a parent");
        }
        site
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.depth == 0 {
            return f.write_str("O");
        }
        for (k, step) in self.steps().into_iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

impl FromStr for SiteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "O" {
            return Ok(SiteId::ROOT);
        }
        let bad = || Error::InvalidAddress(s.to_string());
        let mut site = SiteId::ROOT;
        for part in s.split('.') {
            if part.len() != 1 {
                return Err(bad());
            }
            let step = part.as_bytes()[0].wrapping_sub(b'0');
            site = site.child(step).ok_or_else(bad)?;
        }
        Ok(site)
    }
}

/// Parses a comma-separated list of site addresses. An empty element (or the
/// whole string being empty) names the root.
pub fn parse_site_set(s: &str) -> Result<Vec<SiteId>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for part in s.split(',') {
        let site: SiteId = part.parse()?;
        if !seen.insert(site) {
            return Err(Error::DuplicateSite(site));
        }
        out.push(site);
    }
    Ok(out)
}

pub fn format_site_set(sites: &[SiteId]) -> String {
    sites
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// All sites at distance exactly `n` from the root.
pub fn generation(n: u32) -> Vec<SiteId> {
    assert!(n <= MAX_DEPTH);
    (0..SiteId::generation_size(n))
        .map(|index| SiteId { depth: n, index })
        .collect()
}

/// `|V_{<=n}| = 1 + 3 (2^n - 1)`.
pub fn ball_size(radius: u32) -> u64 {
    1 + 3 * ((1u64 << radius) - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub site: SiteId,
    /// Set for sites one step outside the ball.
    pub boundary: bool,
}

/// The three neighbours of `site` as seen from a ball of radius `ball_radius`.
pub fn neighbors(site: SiteId, ball_radius: u32) -> Result<Vec<Neighbor>> {
    if site.depth > ball_radius {
        return Err(Error::SiteOutsideRegion(site));
    }
    Ok(site
        .adjacent()
        .map(|n| Neighbor {
            site: n,
            boundary: n.depth > ball_radius,
        })
        .collect())
}

/// The unique path between two sites, endpoints included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SitePath {
    pub sites: Vec<SiteId>,
}

impl SitePath {
    /// Number of sites on the path, endpoints included.
    pub fn inclusive_count(&self) -> usize {
        self.sites.len()
    }

    /// Number of sites strictly between the endpoints.
    pub fn between_count(&self) -> usize {
        self.sites.len().saturating_sub(2)
    }
}

pub fn path_between(v: SiteId, w: SiteId) -> SitePath {
    let common = v.depth.min(w.depth);
    let (mut a, mut b) = (v.ancestor_at(common), w.ancestor_at(common));
    while a != b {
        a = a.parent().expect("distinct sites at equal depth are below the root");
        b = b.parent().expect("distinct sites at equal depth are below the root");
    }
    let meet = a;
    let mut up = vec![v];
    let mut s = v;
    while s != meet {
        s = s.parent().expect("meet is an ancestor");
        up.push(s);
    }
    let mut down = Vec::new();
    let mut s = w;
    while s != meet {
        down.push(s);
        s = s.parent().expect("meet is an ancestor");
    }
    up.extend(down.into_iter().rev());
    SitePath { sites: up }
}

pub fn distance(v: SiteId, w: SiteId) -> usize {
    path_between(v, w).inclusive_count() - 1
}

/// Counts of sites in a connected set having 0, 1 or 2 neighbours outside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct GeometryCounts {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
}

/// Checks that `sites` is a nonempty, duplicate-free, connected set.
pub fn validate_connected(sites: &[SiteId]) -> Result<HashSet<SiteId>> {
    let first = *sites.first().ok_or(Error::EmptySet)?;
    let mut set = HashSet::with_capacity(sites.len());
    for &s in sites {
        if !set.insert(s) {
            return Err(Error::DuplicateSite(s));
        }
    }
    let mut seen = HashSet::from([first]);
    let mut queue = VecDeque::from([first]);
    while let Some(s) = queue.pop_front() {
        for n in s.adjacent() {
            if set.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    if seen.len() != set.len() {
        return Err(Error::Disconnected);
    }
    Ok(set)
}

/// For a single site all three neighbours are outside and every count is 0.
pub fn geometry_counts(sites: &[SiteId]) -> Result<GeometryCounts> {
    let set = validate_connected(sites)?;
    let mut counts = GeometryCounts::default();
    if set.len() == 1 {
        return Ok(counts);
    }
    for &s in sites {
        match s.adjacent().filter(|n| !set.contains(n)).count() {
            0 => counts.n0 += 1,
            1 => counts.n1 += 1,
            2 => counts.n2 += 1,
            _ => unreachable!("a site of a connected set with two or more sites has a neighbour inside"),
        }
    }
    Ok(counts)
}

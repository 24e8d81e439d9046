//! Exact sampling of the process on a finite region of the lattice.
//!
//! A [`Region`] is a finite set of sites that contains the root and is closed
//! under taking parents (a ball `V_{<=n}` is the usual choice). Every child of
//! a region site that is not itself in the region is a *boundary node*. The
//! freeze times pointing out of the region, `Y(i -> b)` for boundary nodes
//! `b`, are i.i.d. with law `F` and independent of the activation times inside,
//! so sampling them together with the interior activation times and then
//! applying the recursion
//!
//! ```text
//! Y(j -> i) = phi(min, max of {Y(i -> k), Y(i -> l)}, U_i),   {k, l} = ∂i \ {j}
//! ```
//!
//! reproduces the joint law of the infinite-lattice process restricted to the
//! region, with no truncation error.
//!
//! Propagation is two sweeps. The inward sweep runs deepest-first and fills
//! every `Y(parent -> site)`; the outward sweep runs root-first and fills every
//! `Y(site -> parent)`. Each edge reads only edges that its sweep has already
//! written.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{phi_pair, sample_f, ExtendedTime};
use crate::error::{Error, Result};
use crate::tree::{validate_connected, SiteId};

const NO_PARENT: u32 = u32::MAX;

/// Current dump format version.
pub const DUMP_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    White,
    Green,
    Red,
}

impl Colour {
    pub const ALL: [Colour; 3] = [Colour::White, Colour::Green, Colour::Red];

    pub fn name(self) -> &'static str {
        match self {
            Colour::White => "white",
            Colour::Green => "green",
            Colour::Red => "red",
        }
    }
}

impl fmt::Display for Colour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Colour {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "white" | "w" => Ok(Colour::White),
            "green" | "g" => Ok(Colour::Green),
            "red" | "r" => Ok(Colour::Red),
            _ => Err(Error::InvalidParameter(format!("unknown colour {s:?}"))),
        }
    }
}

/// An ancestor-closed finite set of sites plus its outer boundary nodes.
#[derive(Debug)]
pub struct Region {
    sites: Vec<SiteId>,
    interior: Vec<bool>,
    parent: Vec<u32>,
    first_child: Vec<u32>,
    child_count: Vec<u8>,
    lookup: HashMap<SiteId, u32>,
    radius: u32,
    interior_len: usize,
}

impl Region {
    /// The ball of the given radius around the root.
    pub fn ball(radius: u32) -> Result<Region> {
        if radius == 0 {
            return Err(Error::ZeroRadius);
        }
        let interior = (0..=radius).flat_map(|d| {
            (0..SiteId::generation_size(d)).map(move |i| SiteId::new(d, i).expect("in range"))
        });
        Region::from_interior(interior)
    }

    /// The smallest region containing every given site (the union of their
    /// paths to the root).
    pub fn spanning(sites: &[SiteId]) -> Result<Region> {
        let mut interior = HashSet::from([SiteId::ROOT]);
        for &s in sites {
            let mut cur = Some(s);
            while let Some(c) = cur {
                if !interior.insert(c) {
                    break;
                }
                cur = c.parent();
            }
        }
        Region::from_interior(interior)
    }

    /// Builds a region from its interior sites, which must contain the root
    /// and every parent of every member.
    pub fn from_interior(sites: impl IntoIterator<Item = SiteId>) -> Result<Region> {
        let interior: HashSet<SiteId> = sites.into_iter().collect();
        if !interior.contains(&SiteId::ROOT) {
            return Err(Error::NotAncestorClosed(SiteId::ROOT));
        }
        for s in &interior {
            if let Some(p) = s.parent() {
                if !interior.contains(&p) {
                    return Err(Error::NotAncestorClosed(*s));
                }
            }
        }
        let mut all: Vec<SiteId> = interior
            .iter()
            .flat_map(|s| std::iter::once(*s).chain(s.children()))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        all.sort_unstable();

        let lookup: HashMap<SiteId, u32> =
            all.iter().enumerate().map(|(k, s)| (*s, k as u32)).collect();
        let n = all.len();
        let mut region = Region {
            interior: all.iter().map(|s| interior.contains(s)).collect(),
            parent: vec![NO_PARENT; n],
            first_child: vec![0; n],
            child_count: vec![0; n],
            radius: interior.iter().map(|s| s.depth()).max().unwrap_or(0),
            interior_len: interior.len(),
            sites: all,
            lookup,
        };
        for k in 0..n {
            let s = region.sites[k];
            if let Some(p) = s.parent() {
                region.parent[k] = region.lookup[&p];
            }
            if region.interior[k] {
                // children of one site are consecutive in breadth-first order
                let first = region.lookup[&s.children().next().expect("every site has children")];
                region.first_child[k] = first;
                region.child_count[k] = s.child_count();
                debug_assert!(s
                    .children()
                    .enumerate()
                    .all(|(c, site)| region.lookup[&site] == first + c as u32));
            }
        }
        Ok(region)
    }

    /// Deepest interior generation.
    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Interior and boundary nodes together.
    pub fn node_count(&self) -> usize {
        self.sites.len()
    }

    pub fn interior_count(&self) -> usize {
        self.interior_len
    }

    pub fn boundary_count(&self) -> usize {
        self.sites.len() - self.interior_len
    }

    pub fn node(&self, site: SiteId) -> Option<usize> {
        self.lookup.get(&site).map(|&k| k as usize)
    }

    /// Node index of an interior site.
    pub fn interior_node(&self, site: SiteId) -> Result<usize> {
        match self.node(site) {
            Some(k) if self.interior[k] => Ok(k),
            _ => Err(Error::SiteOutsideRegion(site)),
        }
    }

    pub fn site(&self, node: usize) -> SiteId {
        self.sites[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.interior[node]
    }

    pub fn interior_sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.sites
            .iter()
            .zip(&self.interior)
            .filter(|(_, &inner)| inner)
            .map(|(s, _)| *s)
    }

    pub fn boundary_sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.sites
            .iter()
            .zip(&self.interior)
            .filter(|(_, &inner)| !inner)
            .map(|(s, _)| *s)
    }

    pub fn parent_node(&self, node: usize) -> Option<usize> {
        match self.parent[node] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn child_nodes(&self, node: usize) -> std::ops::Range<usize> {
        let first = self.first_child[node] as usize;
        first..first + self.child_count[node] as usize
    }

    /// Whether an interior node has a child outside the region.
    pub fn touches_boundary(&self, node: usize) -> bool {
        self.child_nodes(node).any(|c| !self.interior[c])
    }

    fn interior_neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent_node(node)
            .into_iter()
            .chain(self.child_nodes(node).filter(|&c| self.interior[c]))
    }
}

/// A connected set of sites found by breadth-first search inside a region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub sites: Vec<SiteId>,
    /// The cluster reaches a site with a neighbour outside the region, so its
    /// true extent may be larger.
    pub truncated: bool,
}

/// One joint sample of activation times and freeze times on a region.
#[derive(Clone, Debug)]
pub struct Realization {
    region: Arc<Region>,
    u: Vec<f64>,
    down: Vec<Option<ExtendedTime>>,
    up: Vec<Option<ExtendedTime>>,
    z: Vec<ExtendedTime>,
    propagated: bool,
}

/// Samples activation times and boundary freeze times on the ball of the
/// given radius; call [`Realization::propagate`] to fill in the rest.
pub fn sample_ball<R: Rng + ?Sized>(radius: u32, rng: &mut R) -> Result<Realization> {
    let region = Arc::new(Region::ball(radius)?);
    let mut r = Realization::empty(region);
    r.resample(rng);
    Ok(r)
}

impl Realization {
    /// A realization with nothing sampled yet.
    pub fn empty(region: Arc<Region>) -> Realization {
        let n = region.node_count();
        Realization {
            region,
            u: vec![f64::NAN; n],
            down: vec![None; n],
            up: vec![None; n],
            z: vec![ExtendedTime::Infinite; n],
            propagated: false,
        }
    }

    /// Samples and propagates in one go.
    pub fn generate<R: Rng + ?Sized>(region: Arc<Region>, rng: &mut R) -> Realization {
        let mut r = Realization::empty(region);
        r.resample(rng);
        r.propagate().expect("fresh sample has every boundary value");
        r
    }

    /// Draws fresh activation times and boundary freeze times, in
    /// breadth-first node order, and clears everything derived from them.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let region = &*self.region;
        for k in 0..region.node_count() {
            self.up[k] = None;
            if region.interior[k] {
                self.u[k] = rng.sample(Open01);
                self.down[k] = None;
            } else {
                self.u[k] = f64::NAN;
                self.down[k] = Some(sample_f(rng));
            }
        }
        self.propagated = false;
    }

    /// Overrides one activation time. Clears propagation.
    pub fn set_u(&mut self, site: SiteId, value: f64) -> Result<()> {
        let k = self.region.interior_node(site)?;
        self.u[k] = value;
        self.propagated = false;
        Ok(())
    }

    /// Overrides the freeze time on the boundary edge into `site`, a
    /// boundary node. `None` removes it. Clears propagation.
    pub fn set_boundary(&mut self, site: SiteId, value: Option<ExtendedTime>) -> Result<()> {
        match self.region.node(site) {
            Some(k) if !self.region.interior[k] => {
                self.down[k] = value;
                self.propagated = false;
                Ok(())
            }
            _ => Err(Error::SiteOutsideRegion(site)),
        }
    }

    /// Runs both sweeps and computes every site's freeze time.
    pub fn propagate(&mut self) -> Result<()> {
        let region = Arc::clone(&self.region);
        let n = region.node_count();
        for k in 0..n {
            if !region.interior[k] {
                if self.down[k].is_none() {
                    return Err(Error::MissingBoundary(region.sites[k]));
                }
            } else if k != 0 {
                self.down[k] = None;
            }
            self.up[k] = None;
        }

        let read = |v: Option<ExtendedTime>| v.expect("edge read before it was written");

        // Inward: Y(parent -> i) from the two values leaving i downward.
        for k in (1..n).rev() {
            if !region.interior[k] {
                continue;
            }
            let c = region.first_child[k] as usize;
            self.down[k] = Some(phi_pair(read(self.down[c]), read(self.down[c + 1]), self.u[k]));
        }

        // Outward: Y(child -> i) from the two other values leaving i.
        for k in 0..n {
            if !region.interior[k] {
                continue;
            }
            let kids = region.child_nodes(k);
            if k == 0 {
                let [a, b, c] = [kids.start, kids.start + 1, kids.start + 2];
                let (ya, yb, yc) = (read(self.down[a]), read(self.down[b]), read(self.down[c]));
                self.up[a] = Some(phi_pair(yb, yc, self.u[k]));
                self.up[b] = Some(phi_pair(ya, yc, self.u[k]));
                self.up[c] = Some(phi_pair(ya, yb, self.u[k]));
            } else {
                let [a, b] = [kids.start, kids.start + 1];
                let toward_parent = read(self.up[k]);
                let (ya, yb) = (read(self.down[a]), read(self.down[b]));
                self.up[a] = Some(phi_pair(yb, toward_parent, self.u[k]));
                self.up[b] = Some(phi_pair(ya, toward_parent, self.u[k]));
            }
        }

        for k in 0..n {
            if !region.interior[k] {
                continue;
            }
            let mut z = region
                .child_nodes(k)
                .map(|c| read(self.up[c]))
                .min()
                .expect("interior sites have children");
            if k != 0 {
                z = z.min(read(self.down[k]));
            }
            self.z[k] = z;
        }
        self.propagated = true;
        Ok(())
    }

    pub fn region(&self) -> &Arc<Region> {
        &self.region
    }

    pub fn is_propagated(&self) -> bool {
        self.propagated
    }

    fn ensure_propagated(&self) -> Result<()> {
        if self.propagated {
            Ok(())
        } else {
            Err(Error::NotPropagated)
        }
    }

    pub fn u(&self, site: SiteId) -> Result<f64> {
        Ok(self.u[self.region.interior_node(site)?])
    }

    #[inline]
    pub fn u_node(&self, node: usize) -> f64 {
        self.u[node]
    }

    /// `Y(from -> to)`, the freeze time of `to` in the subtree hanging off
    /// `to` away from `from`. `None` until the edge has been computed.
    pub fn y(&self, from: SiteId, to: SiteId) -> Result<Option<ExtendedTime>> {
        let (a, b) = (
            self.region.node(from).ok_or(Error::SiteOutsideRegion(from))?,
            self.region.node(to).ok_or(Error::SiteOutsideRegion(to))?,
        );
        if self.region.parent_node(b) == Some(a) {
            Ok(self.down[b])
        } else if self.region.parent_node(a) == Some(b) {
            Ok(self.up[a])
        } else {
            Err(Error::InvalidParameter(format!("{from} and {to} are not adjacent")))
        }
    }

    /// Freeze times leaving `node` toward each neighbour: parent (if any)
    /// first, then children.
    fn outgoing(&self, node: usize) -> impl Iterator<Item = ExtendedTime> + '_ {
        let region = &*self.region;
        region
            .parent_node(node)
            .map(|_| self.up[node])
            .into_iter()
            .chain(region.child_nodes(node).map(|c| self.down[c]))
            .map(|y| y.expect("propagated"))
    }

    /// Freeze times arriving at `node` from each neighbour.
    fn incoming(&self, node: usize) -> impl Iterator<Item = ExtendedTime> + '_ {
        let region = &*self.region;
        region
            .parent_node(node)
            .map(|_| self.down[node])
            .into_iter()
            .chain(region.child_nodes(node).map(|c| self.up[c]))
            .map(|y| y.expect("propagated"))
    }

    #[inline]
    pub fn z_node(&self, node: usize) -> ExtendedTime {
        self.z[node]
    }

    /// The two expressions for a site's freeze time: the minimum incoming
    /// value, and the minimum outgoing value not below the activation time.
    pub fn freeze_time_forms(&self, site: SiteId) -> Result<(ExtendedTime, ExtendedTime)> {
        self.ensure_propagated()?;
        let k = self.region.interior_node(site)?;
        Ok((self.z[k], self.freeze_time_from_outgoing(k)))
    }

    fn freeze_time_from_outgoing(&self, node: usize) -> ExtendedTime {
        let u = self.u[node];
        self.outgoing(node)
            .filter(|y| y.at_least(u))
            .min()
            .unwrap_or(ExtendedTime::Infinite)
    }

    /// The freeze time `Z` of a site. Panics if its two defining expressions
    /// disagree, which would mean the recursion does not hold.
    pub fn freeze_time(&self, site: SiteId) -> Result<ExtendedTime> {
        let (z, alt) = self.freeze_time_forms(site)?;
        assert_eq!(z, alt, "freeze time expressions disagree at {site}");
        Ok(z)
    }

    #[inline]
    pub fn colour_node(&self, node: usize, t: f64) -> Colour {
        if self.u[node] > t {
            Colour::White
        } else if self.z[node].at_most(t) {
            Colour::Red
        } else {
            Colour::Green
        }
    }

    pub fn colour(&self, site: SiteId, t: f64) -> Result<Colour> {
        self.ensure_propagated()?;
        Ok(self.colour_node(self.region.interior_node(site)?, t))
    }

    fn component(&self, start: usize, member: impl Fn(usize) -> bool) -> Cluster {
        let region = &*self.region;
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        let mut nodes = Vec::new();
        let mut truncated = false;
        while let Some(k) = queue.pop_front() {
            nodes.push(k);
            truncated |= region.touches_boundary(k);
            for n in region.interior_neighbours(k) {
                if member(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        nodes.sort_unstable();
        Cluster {
            sites: nodes.into_iter().map(|k| region.sites[k]).collect(),
            truncated,
        }
    }

    /// The green cluster of a green site at time `t`.
    pub fn green_cluster(&self, site: SiteId, t: f64) -> Result<Cluster> {
        self.ensure_propagated()?;
        let k = self.region.interior_node(site)?;
        if self.colour_node(k, t) != Colour::Green {
            return Err(Error::WrongColour { site, expected: "green", t });
        }
        Ok(self.component(k, |j| self.colour_node(j, t) == Colour::Green))
    }

    /// Sites connected to a red site through sites with the same freeze time.
    pub fn frozen_cluster(&self, site: SiteId, t: f64) -> Result<Cluster> {
        self.ensure_propagated()?;
        let k = self.region.interior_node(site)?;
        if self.colour_node(k, t) != Colour::Red {
            return Err(Error::WrongColour { site, expected: "red", t });
        }
        let z = self.z[k];
        Ok(self.component(k, |j| self.z[j] == z))
    }

    /// The green cluster of a site just before it freezes: the component of
    /// `{j : U_j < Z_i, Z_j >= Z_i}` containing `i`.
    pub fn cluster_before_freeze(&self, site: SiteId) -> Result<Cluster> {
        self.ensure_propagated()?;
        let k = self.region.interior_node(site)?;
        let z = self.z[k];
        let Some(zv) = z.value() else {
            return Err(Error::WrongColour { site, expected: "eventually red", t: 1.0 });
        };
        Ok(self.component(k, |j| self.u[j] < zv && self.z[j] >= z))
    }

    /// Whether `S ⊆ G(t)`, decided from activation times in `S` and the
    /// freeze times leaving `S` only: every site of `S` has activated and
    /// every edge out of `S` carries a freeze time either before the
    /// activation of its tail or after `t`.
    pub fn check_containment(&self, sites: &[SiteId], t: f64) -> Result<bool> {
        self.ensure_propagated()?;
        let set = validate_connected(sites)?;
        if set.len() < 2 {
            return Err(Error::SetTooSmall);
        }
        let mut nodes = Vec::with_capacity(sites.len());
        for &s in sites {
            match self.region.node(s) {
                Some(k) if self.region.interior[k] => nodes.push(k),
                Some(_) => return Err(Error::TouchesBoundary(s)),
                None => return Err(Error::SiteOutsideRegion(s)),
            }
        }
        if nodes.iter().any(|&k| self.u[k] > t) {
            return Ok(false);
        }
        for &k in &nodes {
            let site = self.region.sites[k];
            let u = self.u[k];
            for n in site.adjacent().filter(|n| !set.contains(n)) {
                let y = self.y(site, n)?.expect("propagated");
                let blocked_early = !y.at_least(u);
                if !(blocked_early || y.exceeds(t)) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Directed edges whose stored value differs from the recursion applied
    /// to its inputs. Zero after propagation.
    pub fn recursion_violations(&self) -> Result<usize> {
        self.ensure_propagated()?;
        let region = &*self.region;
        let mut bad = 0;
        for k in 0..region.node_count() {
            if !region.interior[k] {
                continue;
            }
            let out: Vec<ExtendedTime> = self.outgoing(k).collect();
            let inc: Vec<ExtendedTime> = self.incoming(k).collect();
            for (j, &arrived) in inc.iter().enumerate() {
                let others: Vec<ExtendedTime> = out
                    .iter()
                    .enumerate()
                    .filter(|(m, _)| *m != j)
                    .map(|(_, y)| *y)
                    .collect();
                if phi_pair(others[0], others[1], self.u[k]) != arrived {
                    bad += 1;
                }
            }
        }
        Ok(bad)
    }

    /// Sites whose two freeze time expressions differ. Zero after
    /// propagation.
    pub fn freeze_time_mismatches(&self) -> Result<usize> {
        self.ensure_propagated()?;
        let region = &*self.region;
        Ok((0..region.node_count())
            .filter(|&k| region.interior[k] && self.z[k] != self.freeze_time_from_outgoing(k))
            .count())
    }

    /// Whether some activation time equals a freeze time or another
    /// activation time. Freeze times legitimately repeat, by copying.
    pub fn has_coincident_values(&self) -> Result<bool> {
        self.ensure_propagated()?;
        let region = &*self.region;
        let mut us = HashSet::new();
        for k in 0..region.node_count() {
            if region.interior[k] && !us.insert(self.u[k].to_bits()) {
                return Ok(true);
            }
        }
        let ys = self.down.iter().chain(&self.up).flatten().filter_map(|y| y.value());
        for y in ys {
            if us.contains(&y.to_bits()) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn dump(&self) -> Result<RealizationDump> {
        self.ensure_propagated()?;
        let region = &*self.region;
        let mut dump = RealizationDump {
            schema_version: DUMP_SCHEMA_VERSION,
            radius: region.radius,
            u: BTreeMap::new(),
            y: BTreeMap::new(),
            z: BTreeMap::new(),
        };
        for k in 0..region.node_count() {
            let site = region.sites[k];
            if region.interior[k] {
                dump.u.insert(site.to_string(), self.u[k]);
                dump.z.insert(site.to_string(), self.z[k]);
            }
            if let Some(p) = region.parent_node(k) {
                let parent = region.sites[p];
                dump.y.insert(edge_key(parent, site), self.down[k].expect("propagated"));
                dump.y.insert(edge_key(site, parent), self.up[k].expect("propagated"));
            }
        }
        Ok(dump)
    }
}

fn edge_key(from: SiteId, to: SiteId) -> String {
    format!("{from}->{to}")
}

/// JSON form of a propagated realization, keyed by site address. Directed
/// edges are keyed `"from->to"`; infinite freeze times are the string `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationDump {
    pub schema_version: u32,
    pub radius: u32,
    pub u: BTreeMap<String, f64>,
    pub y: BTreeMap<String, ExtendedTime>,
    pub z: BTreeMap<String, ExtendedTime>,
}

/// What [`RealizationDump::validate`] looked at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DumpCheck {
    pub sites: usize,
    pub edges: usize,
}

impl RealizationDump {
    pub fn from_json(text: &str) -> Result<RealizationDump> {
        serde_json::from_str(text).map_err(|e| Error::MalformedDump(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dump serializes")
    }

    /// Re-derives every freeze time arriving at an interior site from the
    /// stored values, using only the maps in the dump.
    pub fn validate(&self) -> Result<DumpCheck> {
        let bad = |msg: String| Error::MalformedDump(msg);
        if self.schema_version != DUMP_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema version {}", self.schema_version)));
        }
        // ordered, so the first reported fault does not depend on hashing
        let mut u = BTreeMap::new();
        for (key, &value) in &self.u {
            let site: SiteId = key.parse()?;
            if !(value > 0.0 && value < 1.0) {
                return Err(bad(format!("activation time {value} at {site} outside (0, 1)")));
            }
            u.insert(site, value);
        }
        let mut y = HashMap::new();
        for (key, &value) in &self.y {
            let (from, to) = key
                .split_once("->")
                .ok_or_else(|| bad(format!("edge key {key:?} lacks \"->\"")))?;
            let (from, to): (SiteId, SiteId) = (from.parse()?, to.parse()?);
            if !from.is_adjacent(to) {
                return Err(bad(format!("edge {key} joins non-adjacent sites")));
            }
            if let Some(v) = value.value() {
                if !(0.5..=1.0).contains(&v) {
                    return Err(bad(format!("freeze time {v} on {key} outside [1/2, 1]")));
                }
            }
            y.insert((from, to), value);
        }
        let mut edges = 0;
        for (&site, &ui) in &u {
            let nbrs: Vec<SiteId> = site.adjacent().collect();
            let lookup = |a: SiteId, b: SiteId| {
                y.get(&(a, b))
                    .copied()
                    .ok_or_else(|| bad(format!("missing edge {a}->{b}")))
            };
            let mut arriving = Vec::with_capacity(3);
            for (j, &from) in nbrs.iter().enumerate() {
                let mut rest = nbrs.iter().enumerate().filter(|(m, _)| *m != j);
                let (_, &k) = rest.next().expect("three neighbours");
                let (_, &l) = rest.next().expect("three neighbours");
                let expected = phi_pair(lookup(site, k)?, lookup(site, l)?, ui);
                let stored = lookup(from, site)?;
                if stored != expected {
                    return Err(bad(format!(
                        "edge {from}->{site} holds {stored}, recursion gives {expected}"
                    )));
                }
                arriving.push(stored);
                edges += 1;
            }
            let z = *self
                .z
                .get(&site.to_string())
                .ok_or_else(|| bad(format!("missing freeze time for {site}")))?;
            let min = arriving.into_iter().min().expect("three neighbours");
            if z != min {
                return Err(bad(format!("freeze time at {site} is {z}, minimum arrival {min}")));
            }
        }
        if self.z.len() != u.len() {
            return Err(bad("freeze times and activation times cover different sites".into()));
        }
        Ok(DumpCheck { sites: u.len(), edges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const INF: ExtendedTime = ExtendedTime::Infinite;

    fn site(s: &str) -> SiteId {
        s.parse().unwrap()
    }

    fn fin(v: f64) -> ExtendedTime {
        ExtendedTime::finite(v)
    }

    fn ball(radius: u32, seed: u64) -> Realization {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Realization::generate(Arc::new(Region::ball(radius).unwrap()), &mut rng)
    }

    #[test]
    fn sample_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = sample_ball(1, &mut rng).unwrap();
        assert_eq!(r.region().interior_count(), 4);
        assert_eq!(r.region().boundary_count(), 6);
        let r = sample_ball(3, &mut rng).unwrap();
        assert_eq!(r.region().interior_count(), 22);
        assert_eq!(r.region().boundary_count(), 24);
        assert!(!r.is_propagated());
        assert_eq!(sample_ball(0, &mut rng).unwrap_err(), Error::ZeroRadius);
    }

    #[test]
    fn all_infinite_boundary_never_freezes() {
        let mut r = ball(1, 5);
        let boundary: Vec<SiteId> = r.region().boundary_sites().collect();
        for b in boundary {
            r.set_boundary(b, Some(INF)).unwrap();
        }
        r.propagate().unwrap();
        for s in r.region().interior_sites().collect::<Vec<_>>() {
            assert_eq!(r.freeze_time(s).unwrap(), INF);
            for n in s.adjacent() {
                assert_eq!(r.y(n, s).unwrap(), Some(INF));
            }
        }
    }

    #[test]
    fn single_step_of_the_recursion() {
        let mut r = ball(1, 6);
        r.set_boundary(site("0.0"), Some(fin(0.9))).unwrap();
        r.set_boundary(site("0.1"), Some(fin(0.9))).unwrap();
        r.set_u(site("0"), 0.4).unwrap();
        r.propagate().unwrap();
        assert_eq!(r.y(SiteId::ROOT, site("0")).unwrap(), Some(fin(0.9)));
    }

    #[test]
    fn missing_boundary_is_reported() {
        let mut r = ball(1, 7);
        r.set_boundary(site("2.1"), None).unwrap();
        assert_eq!(r.propagate(), Err(Error::MissingBoundary(site("2.1"))));
        assert_eq!(r.colour(SiteId::ROOT, 0.5), Err(Error::NotPropagated));
    }

    #[test]
    fn freeze_time_minimum() {
        // Root of a radius-1 ball: arrivals come from its three children.
        let mut r = ball(1, 8);
        for (child, target) in [("0", fin(0.8)), ("1", INF), ("2", fin(0.6))] {
            // Force Y(child -> O) by making the child activate early and
            // both its outgoing values equal the target.
            r.set_u(site(child), 0.01).unwrap();
            for g in site(child).children() {
                r.set_boundary(g, Some(target)).unwrap();
            }
        }
        r.propagate().unwrap();
        assert_eq!(r.freeze_time(SiteId::ROOT).unwrap(), fin(0.6));
    }

    #[test]
    fn colours_follow_definition() {
        let mut r = ball(1, 9);
        r.set_u(SiteId::ROOT, 0.3).unwrap();
        for c in ["0", "1", "2"] {
            r.set_u(site(c), 0.2).unwrap();
        }
        for b in r.region().boundary_sites().collect::<Vec<_>>() {
            r.set_boundary(b, Some(fin(0.7))).unwrap();
        }
        r.propagate().unwrap();
        assert_eq!(r.freeze_time(SiteId::ROOT).unwrap(), fin(0.7));
        assert_eq!(r.colour(SiteId::ROOT, 0.0).unwrap(), Colour::White);
        assert_eq!(r.colour(SiteId::ROOT, 0.5).unwrap(), Colour::Green);
        assert_eq!(r.colour(SiteId::ROOT, 0.7).unwrap(), Colour::Red);
    }

    #[test]
    fn green_at_one_when_never_frozen() {
        let mut r = ball(1, 10);
        for b in r.region().boundary_sites().collect::<Vec<_>>() {
            r.set_boundary(b, Some(INF)).unwrap();
        }
        r.propagate().unwrap();
        assert_eq!(r.colour(SiteId::ROOT, 1.0).unwrap(), Colour::Green);
        let c = r.green_cluster(SiteId::ROOT, 1.0).unwrap();
        assert_eq!(c.sites.len(), 4);
        assert!(c.truncated);
    }

    #[test]
    fn isolated_green_site() {
        let mut r = ball(2, 11);
        r.set_u(SiteId::ROOT, 0.1).unwrap();
        for c in ["0", "1", "2"] {
            r.set_u(site(c), 0.9).unwrap();
        }
        r.propagate().unwrap();
        let c = r.green_cluster(SiteId::ROOT, 0.5).unwrap();
        assert_eq!(c, Cluster { sites: vec![SiteId::ROOT], truncated: false });
        assert!(matches!(
            r.frozen_cluster(SiteId::ROOT, 0.5),
            Err(Error::WrongColour { .. })
        ));
    }

    #[test]
    fn chain_to_boundary_is_truncated() {
        let mut r = ball(2, 12);
        for (s, u) in [("O", 0.10), ("0", 0.11), ("0.1", 0.12)] {
            r.set_u(site(s), u).unwrap();
        }
        for s in ["1", "2", "0.0"] {
            r.set_u(site(s), 0.95).unwrap();
        }
        r.propagate().unwrap();
        let c = r.green_cluster(SiteId::ROOT, 0.2).unwrap();
        assert_eq!(c.sites, vec![SiteId::ROOT, site("0"), site("0.1")]);
        assert!(c.truncated);
    }

    #[test]
    fn containment_edge_cases() {
        let mut r = ball(3, 13);
        let pair = [SiteId::ROOT, site("0")];
        for s in r.region().interior_sites().collect::<Vec<_>>() {
            r.set_u(s, 0.9).unwrap();
        }
        r.propagate().unwrap();
        assert!(!r.check_containment(&pair, 0.5).unwrap());

        let mut r = ball(3, 14);
        for s in r.region().interior_sites().collect::<Vec<_>>() {
            r.set_u(s, 0.2).unwrap();
        }
        for b in r.region().boundary_sites().collect::<Vec<_>>() {
            r.set_boundary(b, Some(INF)).unwrap();
        }
        r.propagate().unwrap();
        assert!(r.check_containment(&pair, 0.4).unwrap());

        assert_eq!(
            r.check_containment(&[site("0")], 0.4),
            Err(Error::SetTooSmall)
        );
        assert_eq!(
            r.check_containment(&[site("0.0.0"), site("0.0.0.1")], 0.4),
            Err(Error::TouchesBoundary(site("0.0.0.1")))
        );
        assert_eq!(
            r.check_containment(&[site("0"), site("1")], 0.4),
            Err(Error::Disconnected)
        );
    }

    #[test]
    fn structural_invariants_on_random_balls() {
        for seed in 0..200 {
            let r = ball(4, seed);
            assert_eq!(r.recursion_violations().unwrap(), 0);
            assert_eq!(r.freeze_time_mismatches().unwrap(), 0);
            assert!(!r.has_coincident_values().unwrap());
        }
    }

    #[test]
    fn containment_matches_colours() {
        let shapes = [
            vec![SiteId::ROOT, site("0")],
            vec![site("1"), SiteId::ROOT, site("0")],
            vec![SiteId::ROOT, site("0"), site("1"), site("2")],
            vec![site("0"), site("0.1"), site("0.1.0"), site("0.0")],
        ];
        for seed in 0..1000 {
            let r = ball(4, 100 + seed);
            for t in [0.3, 0.55, 0.7, 0.85, 1.0] {
                for s in &shapes {
                    let all_green = s.iter().all(|&x| r.colour(x, t).unwrap() == Colour::Green);
                    assert_eq!(r.check_containment(s, t).unwrap(), all_green);
                }
            }
        }
    }

    #[test]
    fn spanning_region_of_a_path() {
        let w = site("0.0.0.0");
        let region = Region::spanning(&[w]).unwrap();
        assert_eq!(region.interior_count(), 5);
        // O has two off-path children, every other path site one, the end two.
        assert_eq!(region.boundary_count(), 2 + 3 + 2);
        assert!(Region::from_interior([site("0")]).is_err());
        assert!(Region::from_interior([SiteId::ROOT, site("0.1")]).is_err());
    }

    #[test]
    fn dump_round_trip_and_validation() {
        let r = ball(2, 15);
        let dump = r.dump().unwrap();
        let text = dump.to_json();
        let back = RealizationDump::from_json(&text).unwrap();
        assert_eq!(back, dump);
        let check = back.validate().unwrap();
        assert_eq!(check.sites, 10);
        assert_eq!(check.edges, 30);

        let mut broken = dump.clone();
        let key = edge_key(site("0"), SiteId::ROOT);
        let old = broken.y[&key];
        broken.y.insert(key, if old == INF { fin(0.75) } else { INF });
        assert!(broken.validate().is_err());
        assert!(RealizationDump::from_json("{\"radius\": 1}").is_err());
    }
}

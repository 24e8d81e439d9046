//! Leaf-freezing process on the finite rooted binary tree `T(n)`.
//!
//! The tree has levels `0..=n`; the root has two children and nodes are
//! stored in heap order (node `k` has children `2k + 1` and `2k + 2`). An
//! activated site `i` is red at time `t` when some downward path
//! `i = i_1, ..., i_k` ending on level `n` has every activation time at most
//! `t` and ends at a site activated no earlier than every site before it on
//! the path. A leaf that has activated is red by itself.

use rand::distr::Open01;
use rand::Rng;

use crate::bethe_sim::Colour;
use crate::error::{Error, Result};

/// Activation times on every site of `T(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectedSample {
    depth: u32,
    u: Vec<f64>,
}

/// Largest supported depth for a fully materialized sample.
pub const MAX_SAMPLE_DEPTH: u32 = 26;

pub fn node_count(depth: u32) -> usize {
    (1usize << (depth + 1)) - 1
}

pub fn level_of(node: usize) -> u32 {
    usize::BITS - 1 - (node + 1).leading_zeros()
}

pub fn sample_directed<R: Rng + ?Sized>(depth: u32, rng: &mut R) -> Result<DirectedSample> {
    if depth == 0 || depth > MAX_SAMPLE_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "directed tree depth must lie in 1..={MAX_SAMPLE_DEPTH}, got {depth}"
        )));
    }
    let u = (0..node_count(depth)).map(|_| rng.sample(Open01)).collect();
    Ok(DirectedSample { depth, u })
}

impl DirectedSample {
    pub fn from_values(depth: u32, u: Vec<f64>) -> Result<DirectedSample> {
        if depth == 0 || depth > MAX_SAMPLE_DEPTH || u.len() != node_count(depth) {
            return Err(Error::InvalidParameter(format!(
                "{} activation times do not fill a tree of depth {depth}",
                u.len()
            )));
        }
        Ok(DirectedSample { depth, u })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn classify(&self, node: usize, t: f64) -> Result<Colour> {
        if node >= self.u.len() {
            return Err(Error::InvalidParameter(format!("node {node} outside T({})", self.depth)));
        }
        let mut source = |k: usize| self.u[k];
        Ok(classify_with(&mut source, self.depth, node, t))
    }
}

/// Classifies `node` at time `t`, reading activation times through
/// `source`. Each node is read at most once, and only when the search
/// reaches it, so `source` may draw fresh uniforms instead of looking up
/// stored ones.
pub fn classify_with(
    source: &mut impl FnMut(usize) -> f64,
    depth: u32,
    node: usize,
    t: f64,
) -> Colour {
    let u = source(node);
    if u > t {
        return Colour::White;
    }
    let level = level_of(node);
    if level == depth || reaches_leaf(source, depth, level, node, u, t) {
        Colour::Red
    } else {
        Colour::Green
    }
}

/// Depth-first search for an activated path from the children of `node`
/// down to level `depth` whose last site is at least `prefix_max`, the
/// largest activation time seen so far on the path.
fn reaches_leaf(
    source: &mut impl FnMut(usize) -> f64,
    depth: u32,
    level: u32,
    node: usize,
    prefix_max: f64,
    t: f64,
) -> bool {
    for child in [2 * node + 1, 2 * node + 2] {
        let u = source(child);
        if u > t {
            continue;
        }
        let found = if level + 1 == depth {
            u >= prefix_max
        } else {
            reaches_leaf(source, depth, level + 1, child, prefix_max.max(u), t)
        };
        if found {
            return true;
        }
    }
    false
}

/// Whether the root of a fresh `T(depth)` is red at time `t`, drawing
/// activation times only for the sites the search visits.
pub fn root_is_red_lazy<R: Rng + ?Sized>(depth: u32, t: f64, rng: &mut R) -> bool {
    let mut source = |_: usize| rng.sample::<f64, _>(Open01);
    classify_with(&mut source, depth, 0, t) == Colour::Red
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every downward path from `node` to the last level and
    /// evaluates the set definition literally.
    fn exhaustive(s: &DirectedSample, node: usize, t: f64) -> Colour {
        let u = s.values();
        if u[node] > t {
            return Colour::White;
        }
        let mut paths = vec![vec![node]];
        while level_of(*paths[0].last().unwrap()) < s.depth() {
            paths = paths
                .into_iter()
                .flat_map(|p| {
                    let last = *p.last().unwrap();
                    [2 * last + 1, 2 * last + 2].into_iter().map(move |c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        // Green iff every path is blocked: some later site is inactive, or
        // the end activated before something earlier on the path.
        let blocked = |p: &Vec<usize>| {
            let (&end, prefix) = p.split_last().unwrap();
            p[1..].iter().any(|&j| u[j] > t)
                || (!prefix.is_empty()
                    && u[end] < prefix.iter().map(|&j| u[j]).fold(f64::MIN, f64::max))
        };
        if paths.iter().all(blocked) {
            Colour::Green
        } else {
            Colour::Red
        }
    }

    #[test]
    fn sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_directed(1, &mut rng).unwrap().values().len(), 3);
        assert_eq!(sample_directed(3, &mut rng).unwrap().values().len(), 15);
        assert!(sample_directed(0, &mut rng).is_err());
        assert_eq!(level_of(0), 0);
        assert_eq!(level_of(2), 1);
        assert_eq!(level_of(3), 2);
        assert_eq!(level_of(14), 3);
    }

    #[test]
    fn hand_evaluated_cases() {
        let s = DirectedSample::from_values(1, vec![0.4, 0.3, 0.9]).unwrap();
        assert_eq!(s.classify(0, 0.5).unwrap(), Colour::Green);
        assert_eq!(s.classify(0, 0.3).unwrap(), Colour::White);
        // at t = 1 the path through the second child ends at the maximum
        assert_eq!(s.classify(0, 1.0).unwrap(), Colour::Red);
        // an activated leaf is red on its own
        assert_eq!(s.classify(1, 0.5).unwrap(), Colour::Red);
        assert_eq!(s.classify(2, 0.5).unwrap(), Colour::White);
        assert!(s.classify(3, 0.5).is_err());
    }

    #[test]
    fn pruned_search_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for depth in 1..=6 {
            for _ in 0..300 {
                let s = sample_directed(depth, &mut rng).unwrap();
                for t in [0.2, 0.5, 0.7, 0.9, 1.0] {
                    for node in 0..s.values().len() {
                        assert_eq!(s.classify(node, t).unwrap(), exhaustive(&s, node, t));
                    }
                }
            }
        }
    }

    #[test]
    fn white_is_monotone_in_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = sample_directed(5, &mut rng).unwrap();
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
        for node in 0..s.values().len() {
            let first_active = grid.iter().position(|&t| s.classify(node, t).unwrap() != Colour::White);
            if let Some(p) = first_active {
                assert!(grid[p..].iter().all(|&t| s.classify(node, t).unwrap() != Colour::White));
            }
        }
    }

    #[test]
    fn lazy_search_reads_each_node_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_directed(8, &mut rng).unwrap();
        let mut reads = vec![0u32; s.values().len()];
        let mut source = |k: usize| {
            reads[k] += 1;
            s.values()[k]
        };
        classify_with(&mut source, 8, 0, 0.9);
        assert!(reads.iter().all(|&r| r <= 1));
    }

    #[test]
    fn root_never_red_at_time_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..1000).all(|_| !root_is_red_lazy(10, 0.0, &mut rng)));
    }
}

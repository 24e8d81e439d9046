//! Closed-form oracles, Monte Carlo estimators and their comparison.
//!
//! Every estimator runs `N` independent replicas. Replica `r` of a run with
//! master seed `s` draws from ChaCha8 seeded with `s` on stream `r`, so
//! results depend only on `(quantity, parameters, N, seed)` and not on how
//! replicas are scheduled across threads. Replica outcomes are accumulated as
//! integer counts, which makes the merge order irrelevant.

use std::f64::consts::LN_2;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bethe_sim::{Colour, Realization, Region};
use crate::directed_sim::root_is_red_lazy;
use crate::dist::{aldous_g, decay_constant, single_site_green_prob, ExtendedTime};
use crate::error::{Error, Result};
use crate::tree::{format_site_set, geometry_counts, path_between, validate_connected, SiteId};

/// Quadrature resolution used inside oracles.
pub const ORACLE_STEPS: usize = 100_000;

/// Default acceptance threshold in standard errors.
pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

const BATCH: u64 = 1024;

pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Derives an independent master seed for sub-run `k` (splitmix64).
pub fn mix_seed(seed: u64, k: u64) -> u64 {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    splitmix(seed ^ splitmix(k))
}

/// Runs `n` replicas and sums their integer tallies slot by slot.
fn run_replicas<S, I, F>(n: u64, seed: u64, slots: usize, init: I, step: F) -> Vec<u64>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &mut ChaCha8Rng, &mut [u64]) + Sync,
{
    (0..n.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut scratch = init();
            let mut tally = vec![0u64; slots];
            for r in b * BATCH..n.min((b + 1) * BATCH) {
                let mut rng = replica_rng(seed, r);
                step(&mut scratch, &mut rng, &mut tally);
            }
            tally
        })
        .reduce(
            || vec![0u64; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// How a report is judged against its oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// `|mean - oracle| <= z * stderr`.
    Equality,
    /// `|mean| - z * stderr <= oracle`.
    UpperBound,
    /// `mean + z * stderr >= oracle`.
    LowerBound,
    /// Reported only.
    None,
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gate::Equality => "equality",
            Gate::UpperBound => "upper_bound",
            Gate::LowerBound => "lower_bound",
            Gate::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub quantity: String,
    pub t: Option<f64>,
    pub radius: Option<u32>,
    pub depth: Option<u32>,
    pub sites: Option<String>,
    pub distance: Option<u32>,
    pub colours: Option<String>,
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    pub oracle: Option<f64>,
    pub z: Option<f64>,
    pub gate: Gate,
    pub seed: u64,
}

/// Column order of the CSV form.
pub const CSV_HEADER: [&str; 17] = [
    "quantity", "t", "radius", "depth", "sites", "distance", "colours", "n", "mean", "stderr",
    "ci95_low", "ci95_high", "oracle", "z", "gate", "seed", "pass",
];

impl EstimateReport {
    fn new(quantity: &Quantity, n: u64, mean: f64, stderr: f64, seed: u64) -> Result<Self> {
        let (oracle, gate) = (oracle(quantity)?, quantity.gate());
        let z = oracle.and_then(|o| {
            if stderr > 0.0 {
                Some((mean - o) / stderr)
            } else if mean == o {
                Some(0.0)
            } else {
                None
            }
        });
        let mut report = EstimateReport {
            quantity: quantity.id().to_string(),
            t: None,
            radius: None,
            depth: None,
            sites: None,
            distance: None,
            colours: None,
            n,
            mean,
            stderr,
            ci95: [mean - 1.96 * stderr, mean + 1.96 * stderr],
            oracle,
            z,
            gate: if oracle.is_some() { gate } else { Gate::None },
            seed,
        };
        quantity.describe(&mut report);
        Ok(report)
    }

    fn from_hits(quantity: &Quantity, hits: u64, n: u64, seed: u64) -> Result<Self> {
        Self::from_moments(quantity, hits, hits, n, seed)
    }

    /// Mean and standard error from the exact integer sums of a value and
    /// its square.
    fn from_moments(quantity: &Quantity, sum: u64, sum_sq: u64, n: u64, seed: u64) -> Result<Self> {
        let mean = sum as f64 / n as f64;
        let stderr = if n > 1 {
            let centred = n as u128 * sum_sq as u128 - sum as u128 * sum as u128;
            let var = centred as f64 / (n as f64 * (n - 1) as f64);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self::new(quantity, n, mean, stderr, seed)
    }

    /// Pass/fail against the oracle, when there is a gate.
    pub fn passes(&self, threshold: f64) -> Option<bool> {
        compare(self, threshold).ok()
    }

    pub fn csv_record(&self, threshold: f64) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.quantity.clone(),
            opt(self.t),
            self.radius.map(|v| v.to_string()).unwrap_or_default(),
            self.depth.map(|v| v.to_string()).unwrap_or_default(),
            self.sites.clone().unwrap_or_default(),
            self.distance.map(|v| v.to_string()).unwrap_or_default(),
            self.colours.clone().unwrap_or_default(),
            self.n.to_string(),
            self.mean.to_string(),
            self.stderr.to_string(),
            self.ci95[0].to_string(),
            self.ci95[1].to_string(),
            opt(self.oracle),
            opt(self.z),
            self.gate.to_string(),
            self.seed.to_string(),
            self.passes(threshold).map(|p| p.to_string()).unwrap_or_default(),
        ]
    }
}

/// Writes reports as CSV with the fixed column order of [`CSV_HEADER`].
pub fn write_csv<W: Write>(out: W, reports: &[EstimateReport], threshold: f64) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record(threshold))?;
    }
    w.flush()
}

/// Judges a report against its oracle at `threshold` standard errors.
pub fn compare(report: &EstimateReport, threshold: f64) -> Result<bool> {
    let oracle = match (report.oracle, report.gate) {
        (Some(o), g) if g != Gate::None => o,
        _ => return Err(Error::NoOracle(report.quantity.clone())),
    };
    let slack = threshold * report.stderr;
    Ok(match report.gate {
        Gate::Equality => (report.mean - oracle).abs() <= slack,
        Gate::UpperBound => report.mean.abs() - slack <= oracle,
        Gate::LowerBound => report.mean + slack >= oracle,
        Gate::None => unreachable!(),
    })
}

/// Identifiers accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantityKind {
    GreenFinal,
    RedFinal,
    DistinctFrozenPair,
    SingleSiteGreen,
    Containment,
    PathGreen,
    GenerationMean,
    DecayBound,
    Covariance,
    DirectedFn,
}

impl QuantityKind {
    pub const ALL: [QuantityKind; 10] = [
        QuantityKind::GreenFinal,
        QuantityKind::RedFinal,
        QuantityKind::DistinctFrozenPair,
        QuantityKind::SingleSiteGreen,
        QuantityKind::Containment,
        QuantityKind::PathGreen,
        QuantityKind::GenerationMean,
        QuantityKind::DecayBound,
        QuantityKind::Covariance,
        QuantityKind::DirectedFn,
    ];

    pub fn id(self) -> &'static str {
        match self {
            QuantityKind::GreenFinal => "green_final",
            QuantityKind::RedFinal => "red_final",
            QuantityKind::DistinctFrozenPair => "distinct_frozen_pair",
            QuantityKind::SingleSiteGreen => "single_site_green",
            QuantityKind::Containment => "containment",
            QuantityKind::PathGreen => "path_green",
            QuantityKind::GenerationMean => "generation_mean",
            QuantityKind::DecayBound => "decay_bound",
            QuantityKind::Covariance => "covariance",
            QuantityKind::DirectedFn => "directed_fn",
        }
    }
}

impl FromStr for QuantityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuantityKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::UnknownQuantity(s.to_string()))
    }
}

/// A quantity together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Quantity {
    /// `P(O in G(1))`.
    GreenFinal,
    /// `P(O in R(1))`.
    RedFinal,
    /// `P(O, 0 in R(1), Z_O != Z_0)` for the adjacent pair `O`, `0`.
    DistinctFrozenPair,
    /// `P(O in G(t))`.
    SingleSiteGreen { t: f64 },
    /// `P(S ⊆ G(t))` for a connected set `S`.
    Containment { sites: Vec<SiteId>, t: f64 },
    /// Probability that the whole path between two sites is green at `t`.
    PathGreen { from: SiteId, to: SiteId, t: f64 },
    /// `E|G_O(t) ∩ V_depth|`.
    GenerationMean { t: f64, depth: u32 },
    /// `5 A^floor(d / 12)`.
    DecayBound { distance: u32 },
    /// Covariance of colour indicators of `O` and a site with `distance`
    /// sites strictly between them.
    Covariance { distance: u32, t: f64, first: Colour, second: Colour },
    /// `F_n(t)` of the directed leaf-freezing process.
    DirectedFn { depth: u32, t: f64 },
}

impl Quantity {
    pub fn kind(&self) -> QuantityKind {
        match self {
            Quantity::GreenFinal => QuantityKind::GreenFinal,
            Quantity::RedFinal => QuantityKind::RedFinal,
            Quantity::DistinctFrozenPair => QuantityKind::DistinctFrozenPair,
            Quantity::SingleSiteGreen { .. } => QuantityKind::SingleSiteGreen,
            Quantity::Containment { .. } => QuantityKind::Containment,
            Quantity::PathGreen { .. } => QuantityKind::PathGreen,
            Quantity::GenerationMean { .. } => QuantityKind::GenerationMean,
            Quantity::DecayBound { .. } => QuantityKind::DecayBound,
            Quantity::Covariance { .. } => QuantityKind::Covariance,
            Quantity::DirectedFn { .. } => QuantityKind::DirectedFn,
        }
    }

    pub fn id(&self) -> &'static str {
        self.kind().id()
    }

    fn gate(&self) -> Gate {
        match self {
            Quantity::Covariance { t, .. } if *t > 0.5 => Gate::UpperBound,
            Quantity::PathGreen { .. } | Quantity::DirectedFn { .. } | Quantity::DecayBound { .. } => {
                Gate::None
            }
            _ => Gate::Equality,
        }
    }

    fn t(&self) -> Option<f64> {
        match self {
            Quantity::GreenFinal | Quantity::RedFinal | Quantity::DistinctFrozenPair => Some(1.0),
            Quantity::SingleSiteGreen { t }
            | Quantity::Containment { t, .. }
            | Quantity::PathGreen { t, .. }
            | Quantity::GenerationMean { t, .. }
            | Quantity::Covariance { t, .. }
            | Quantity::DirectedFn { t, .. } => Some(*t),
            Quantity::DecayBound { .. } => None,
        }
    }

    fn describe(&self, report: &mut EstimateReport) {
        report.t = self.t();
        match self {
            Quantity::DistinctFrozenPair => {
                report.sites = Some(format_site_set(&[SiteId::ROOT, first_child()]));
            }
            Quantity::GreenFinal | Quantity::RedFinal | Quantity::SingleSiteGreen { .. } => {
                report.sites = Some(SiteId::ROOT.to_string());
            }
            Quantity::Containment { sites, .. } => report.sites = Some(format_site_set(sites)),
            Quantity::PathGreen { from, to, .. } => {
                report.sites = Some(format_site_set(&[*from, *to]));
                report.distance = Some(path_between(*from, *to).between_count() as u32);
            }
            Quantity::GenerationMean { depth, .. } | Quantity::DirectedFn { depth, .. } => {
                report.depth = Some(*depth)
            }
            Quantity::DecayBound { distance } => report.distance = Some(*distance),
            Quantity::Covariance { distance, first, second, .. } => {
                report.distance = Some(*distance);
                report.sites = Some(format_site_set(&[SiteId::ROOT, covariance_partner(*distance)]));
                report.colours = Some(format!("{first}/{second}"));
            }
        }
    }

    /// Deepest site the quantity looks at on the lattice.
    fn max_depth(&self) -> u32 {
        match self {
            Quantity::DistinctFrozenPair => 1,
            Quantity::Containment { sites, .. } => sites.iter().map(|s| s.depth()).max().unwrap_or(0),
            Quantity::PathGreen { from, to, .. } => from.depth().max(to.depth()),
            _ => 0,
        }
    }
}

fn first_child() -> SiteId {
    SiteId::ROOT.child(0).expect("root has children")
}

/// The site reached from the root by `distance + 1` steps along child 0.
pub fn covariance_partner(distance: u32) -> SiteId {
    SiteId::new(distance + 1, 0).expect("depth within range")
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time {t} outside [0, 1]")))
    }
}

/// `(3/2) ln^2 2 - 1/2`.
pub fn green_final_value() -> f64 {
    1.5 * LN_2 * LN_2 - 0.5
}

/// `P(S ⊆ G(t))` from the shape of `S`.
pub fn containment_probability(sites: &[SiteId], t: f64) -> Result<f64> {
    check_t(t)?;
    let counts = geometry_counts(sites)?;
    if sites.len() == 1 {
        return Ok(single_site_green_prob(t, ORACLE_STEPS));
    }
    if t <= 0.5 {
        return Ok(t.powi(sites.len() as i32));
    }
    let two = t - (2.0 * t).ln();
    Ok(two.powi(counts.n2 as i32) * 0.5f64.powi(counts.n1 as i32) * t.powi(counts.n0 as i32))
}

/// `2 - 2 ln 2 - ln^2 2`: `P(v, w ∈ R(1), Z_v ≠ Z_w)` for adjacent `v`, `w`,
/// integrated directly from the two-site construction. Reported beside the
/// `distinct_frozen_pair` oracle as a diagnostic.
pub fn distinct_frozen_pair_derived() -> f64 {
    2.0 - 2.0 * LN_2 - LN_2 * LN_2
}

pub fn decay_bound(distance: u32) -> f64 {
    5.0 * decay_constant(ORACLE_STEPS).powi((distance / 12) as i32)
}

/// The closed-form value for a quantity, `None` where there is none.
pub fn oracle(quantity: &Quantity) -> Result<Option<f64>> {
    if let Some(t) = quantity.t() {
        check_t(t)?;
    }
    Ok(match quantity {
        Quantity::GreenFinal => Some(green_final_value()),
        Quantity::RedFinal => Some(1.0 - green_final_value()),
        Quantity::DistinctFrozenPair => Some(3.0 * LN_2 - 2.0),
        Quantity::SingleSiteGreen { t } => Some(single_site_green_prob(*t, ORACLE_STEPS)),
        Quantity::Containment { sites, t } => Some(containment_probability(sites, *t)?),
        Quantity::GenerationMean { t, depth } => {
            if *depth == 0 {
                return Err(Error::InvalidParameter("generation depth must be positive".into()));
            }
            if *t >= 0.5 {
                Some(3.0 * (t - (2.0 * t).ln()).powi(2))
            } else {
                Some(3.0 * 2f64.powi(*depth as i32 - 1) * t.powi(*depth as i32 + 1))
            }
        }
        Quantity::DecayBound { distance } => Some(decay_bound(*distance)),
        Quantity::Covariance { distance, t, .. } => {
            Some(if *t <= 0.5 { 0.0 } else { decay_bound(*distance) })
        }
        Quantity::PathGreen { .. } | Quantity::DirectedFn { .. } => None,
    })
}

/// Candidate closed forms for the probability that the path between two
/// sites is green at `t`. The displayed constant `((1 - ln 2) / 2)^2 (1/2)^π`
/// is evaluated under both readings of `π`; the cluster formula applies the
/// geometric containment law to the path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathFormulas {
    pub inclusive_count: usize,
    pub between_count: usize,
    pub displayed_inclusive: f64,
    pub displayed_between: f64,
    pub cluster_formula: f64,
}

pub fn path_green_candidates(from: SiteId, to: SiteId, t: f64) -> Result<PathFormulas> {
    let path = path_between(from, to);
    let prefactor = ((1.0 - LN_2) / 2.0).powi(2);
    Ok(PathFormulas {
        inclusive_count: path.inclusive_count(),
        between_count: path.between_count(),
        displayed_inclusive: prefactor * 0.5f64.powi(path.inclusive_count() as i32),
        displayed_between: prefactor * 0.5f64.powi(path.between_count() as i32),
        cluster_formula: containment_probability(&path.sites, t)?,
    })
}

enum Probe {
    Colour { node: usize, t: f64, colour: Colour },
    DistinctRed { a: usize, b: usize },
    AllGreen { nodes: Vec<usize>, t: f64 },
}

impl Probe {
    fn hit(&self, r: &Realization) -> bool {
        match self {
            Probe::Colour { node, t, colour } => r.colour_node(*node, *t) == *colour,
            Probe::DistinctRed { a, b } => {
                r.colour_node(*a, 1.0) == Colour::Red
                    && r.colour_node(*b, 1.0) == Colour::Red
                    && r.z_node(*a) != r.z_node(*b)
            }
            Probe::AllGreen { nodes, t } => nodes.iter().all(|&k| r.colour_node(k, *t) == Colour::Green),
        }
    }
}

fn ensure_replicas(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::ZeroReplicas)
    } else {
        Ok(())
    }
}

/// Estimates one indicator quantity on balls of radius (deepest site) + 1.
pub fn mc_event(quantity: &Quantity, n: u64, seed: u64) -> Result<EstimateReport> {
    Ok(mc_events(std::slice::from_ref(quantity), n, seed)?.remove(0))
}

/// Estimates several indicator quantities from the same replicas, on balls
/// large enough for all of them.
pub fn mc_events(quantities: &[Quantity], n: u64, seed: u64) -> Result<Vec<EstimateReport>> {
    ensure_replicas(n)?;
    let radius = quantities.iter().map(Quantity::max_depth).max().unwrap_or(0) + 1;
    let region = Arc::new(Region::ball(radius)?);
    let root = 0;
    let node = |s: SiteId| region.interior_node(s);
    let mut probes = Vec::with_capacity(quantities.len());
    for q in quantities {
        oracle(q)?;
        probes.push(match q {
            Quantity::GreenFinal => Probe::Colour { node: root, t: 1.0, colour: Colour::Green },
            Quantity::RedFinal => Probe::Colour { node: root, t: 1.0, colour: Colour::Red },
            Quantity::SingleSiteGreen { t } => Probe::Colour { node: root, t: *t, colour: Colour::Green },
            Quantity::DistinctFrozenPair => Probe::DistinctRed { a: root, b: node(first_child())? },
            Quantity::Containment { sites, t } => {
                validate_connected(sites)?;
                let nodes = sites.iter().map(|&s| node(s)).collect::<Result<_>>()?;
                Probe::AllGreen { nodes, t: *t }
            }
            Quantity::PathGreen { from, to, t } => {
                let path = path_between(*from, *to);
                let nodes = path.sites.iter().map(|&s| node(s)).collect::<Result<_>>()?;
                Probe::AllGreen { nodes, t: *t }
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{} is not a single-realization event",
                    other.id()
                )))
            }
        });
    }
    let tally = run_replicas(
        n,
        seed,
        probes.len(),
        || Realization::empty(Arc::clone(&region)),
        |r, rng, tally| {
            r.resample(rng);
            r.propagate().expect("fresh sample");
            for (slot, p) in tally.iter_mut().zip(&probes) {
                *slot += p.hit(r) as u64;
            }
        },
    );
    quantities
        .iter()
        .zip(tally)
        .map(|(q, hits)| {
            let mut report = EstimateReport::from_hits(q, hits, n, seed)?;
            report.radius = Some(radius);
            Ok(report)
        })
        .collect()
}

/// `E|G_O(t) ∩ V_depth|`: the mean number of generation-`depth` sites joined
/// to the root by an entirely green path.
pub fn mc_generation_count(t: f64, depth: u32, n: u64, seed: u64) -> Result<EstimateReport> {
    Ok(mc_generation_counts(&[t], depth, n, seed)?.remove(0))
}

/// [`mc_generation_count`] for several times, sharing replicas.
pub fn mc_generation_counts(ts: &[f64], depth: u32, n: u64, seed: u64) -> Result<Vec<EstimateReport>> {
    ensure_replicas(n)?;
    let quantities: Vec<Quantity> = ts.iter().map(|&t| Quantity::GenerationMean { t, depth }).collect();
    for q in &quantities {
        oracle(q)?;
    }
    let radius = depth + 1;
    let region = Arc::new(Region::ball(radius)?);
    // Ball nodes come in breadth-first order, generation by generation.
    let upto = crate::tree::ball_size(depth) as usize;
    let first_of_depth = upto - SiteId::generation_size(depth) as usize;
    let tally = run_replicas(
        n,
        seed,
        2 * ts.len(),
        || (Realization::empty(Arc::clone(&region)), vec![false; upto]),
        |(r, reach), rng, tally| {
            r.resample(rng);
            r.propagate().expect("fresh sample");
            let region = Arc::clone(r.region());
            for (k, &t) in ts.iter().enumerate() {
                reach[0] = r.colour_node(0, t) == Colour::Green;
                for node in 1..upto {
                    let parent = region.parent_node(node).expect("non-root");
                    reach[node] = reach[parent] && r.colour_node(node, t) == Colour::Green;
                }
                let count = reach[first_of_depth..].iter().filter(|&&x| x).count() as u64;
                tally[2 * k] += count;
                tally[2 * k + 1] += count * count;
            }
        },
    );
    quantities
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let mut report = EstimateReport::from_moments(q, tally[2 * k], tally[2 * k + 1], n, seed)?;
            report.radius = Some(radius);
            Ok(report)
        })
        .collect()
}

/// Covariance of the indicators `O ∈ C1(t)` and `w ∈ C2(t)` where `w` has
/// `distance` sites strictly between it and `O`.
pub fn mc_covariance(
    distance: u32,
    t: f64,
    first: Colour,
    second: Colour,
    n: u64,
    seed: u64,
) -> Result<EstimateReport> {
    let table = mc_covariance_table(distance, &[t], n, seed)?;
    Ok(table
        .into_iter()
        .find(|r| r.colours.as_deref() == Some(&format!("{first}/{second}")))
        .expect("table covers all colour pairs"))
}

/// All nine colour pairs at each time, from one set of replicas.
///
/// The replicas live on the path from `O` to its partner plus the boundary
/// edges leaving it, which already carries the exact joint law of the two
/// colours.
pub fn mc_covariance_table(distance: u32, ts: &[f64], n: u64, seed: u64) -> Result<Vec<EstimateReport>> {
    ensure_replicas(n)?;
    for &t in ts {
        check_t(t)?;
    }
    let partner = covariance_partner(distance);
    let region = Arc::new(Region::spanning(&[partner])?);
    let far = region.interior_node(partner)?;
    let tally = run_replicas(
        n,
        seed,
        9 * ts.len(),
        || Realization::empty(Arc::clone(&region)),
        |r, rng, tally| {
            r.resample(rng);
            r.propagate().expect("fresh sample");
            for (k, &t) in ts.iter().enumerate() {
                let a = r.colour_node(0, t) as usize;
                let b = r.colour_node(far, t) as usize;
                tally[9 * k + 3 * a + b] += 1;
            }
        },
    );
    let mut out = Vec::with_capacity(9 * ts.len());
    for (k, &t) in ts.iter().enumerate() {
        let joint = &tally[9 * k..9 * k + 9];
        for first in Colour::ALL {
            for second in Colour::ALL {
                let (a, b) = (first as usize, second as usize);
                let nx: u64 = (0..3).map(|j| joint[3 * a + j]).sum();
                let ny: u64 = (0..3).map(|i| joint[3 * i + b]).sum();
                let nxy = joint[3 * a + b];
                let (mean, stderr) = indicator_covariance(nx, ny, nxy, n);
                let q = Quantity::Covariance { distance, t, first, second };
                let mut report = EstimateReport::new(&q, n, mean, stderr, seed)?;
                report.radius = Some(region.radius());
                out.push(report);
            }
        }
    }
    Ok(out)
}

/// Sample covariance of two 0/1 variables from their counts, and the
/// standard error of the mean of `(x - x̄)(y - ȳ)`.
fn indicator_covariance(nx: u64, ny: u64, nxy: u64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let (mx, my) = (nx as f64 / nf, ny as f64 / nf);
    let cells = [
        (1.0, 1.0, nxy),
        (1.0, 0.0, nx - nxy),
        (0.0, 1.0, ny - nxy),
        (0.0, 0.0, n + nxy - nx - ny),
    ];
    let psi = |x: f64, y: f64| (x - mx) * (y - my);
    let total: f64 = cells.iter().map(|&(x, y, c)| c as f64 * psi(x, y)).sum();
    if n < 2 {
        return (total / nf, 0.0);
    }
    let mean_psi = total / nf;
    let var: f64 = cells
        .iter()
        .map(|&(x, y, c)| c as f64 * (psi(x, y) - mean_psi).powi(2))
        .sum::<f64>()
        / (nf - 1.0);
    (total / (nf - 1.0), (var / nf).sqrt())
}

/// `F_n(t)`, the probability that the root of `T(n)` is red at time `t`.
pub fn estimate_fn(depth: u32, t: f64, n: u64, seed: u64) -> Result<EstimateReport> {
    ensure_replicas(n)?;
    check_t(t)?;
    if depth == 0 {
        return Err(Error::InvalidParameter("directed tree depth must be positive".into()));
    }
    let tally = run_replicas(n, seed, 1, || (), |_, rng, tally| {
        tally[0] += root_is_red_lazy(depth, t, rng) as u64;
    });
    EstimateReport::from_hits(&Quantity::DirectedFn { depth, t }, tally[0], n, seed)
}

/// `F_n(t)` for each depth, each with its own derived seed.
pub fn estimate_fn_curve(depths: &[u32], t: f64, n: u64, seed: u64) -> Result<Vec<EstimateReport>> {
    depths
        .iter()
        .map(|&d| {
            let mut report = estimate_fn(d, t, n, mix_seed(seed, d as u64))?;
            report.seed = seed;
            Ok(report)
        })
        .collect()
}

/// Summarizes an `F_n` curve as the largest upper confidence value
/// `F̂_n + z stderr`, set against the lower bound `1 - 1/(2t)` for the limit
/// superior.
pub fn fn_limsup_check(curve: &[EstimateReport], t: f64, threshold: f64) -> Result<EstimateReport> {
    let best = curve
        .iter()
        .max_by(|a, b| {
            (a.mean + threshold * a.stderr).total_cmp(&(b.mean + threshold * b.stderr))
        })
        .ok_or_else(|| Error::InvalidParameter("empty F_n curve".into()))?;
    let bound = aldous_g(ExtendedTime::finite(t));
    Ok(EstimateReport {
        quantity: "directed_fn_limsup".to_string(),
        oracle: Some(bound),
        z: (best.stderr > 0.0).then(|| (best.mean - bound) / best.stderr),
        gate: Gate::LowerBound,
        ..best.clone()
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and a
/// distribution function on the extended line. Mass at infinity is handled
/// exactly: both functions equal 1 there.
pub fn ks_distance(samples: &[ExtendedTime], cdf: impl Fn(ExtendedTime) -> f64) -> f64 {
    let n = samples.len() as f64;
    let mut finite: Vec<f64> = samples.iter().filter_map(|s| s.value()).collect();
    finite.sort_unstable_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    for (i, &x) in finite.iter().enumerate() {
        let f = cdf(ExtendedTime::Finite(x));
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let top = finite.len() as f64 / n;
    d.max((top - cdf(ExtendedTime::Finite(f64::MAX))).abs())
}

/// Dvoretzky–Kiefer–Wolfowitz critical value `sqrt(ln(2/α) / 2N)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

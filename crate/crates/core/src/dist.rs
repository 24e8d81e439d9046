//! Freeze-time distribution of the directed process and the recursion kernel.
//!
//! A freeze time is either a finite instant in `[1/2, 1]` or "never"
//! ([`ExtendedTime::Infinite`]). Its law `F` is defective:
//!
//! ```text
//! F(t) = 0          t <= 1/2
//!        ln(2t)     1/2 < t <= 1
//!        ln 2       1 < t < inf
//!        1          t = inf
//! ```
//!
//! and is the non-degenerate fixed point of `Y = phi(min(Y1, Y2), max(Y1, Y2), U)`.

use std::cmp::Ordering;
use std::f64::consts::LN_2;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A point of `[0, 1]` extended by a distinguished maximum `Infinite`.
///
/// Equality is bit-exact on the finite part: freeze times are copied, never
/// recomputed, so two sites share a frozen cluster exactly when their values
/// are the same bits.
#[derive(Clone, Copy, Debug)]
pub enum ExtendedTime {
    Finite(f64),
    Infinite,
}

impl ExtendedTime {
    /// Panics on NaN, which would break the total order.
    pub fn finite(value: f64) -> Self {
        assert!(!value.is_nan(), "freeze time cannot be NaN");
        ExtendedTime::Finite(value)
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedTime::Finite(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ExtendedTime::Finite(v) => Some(v),
            ExtendedTime::Infinite => None,
        }
    }

    /// `self >= z` for a real `z`.
    #[inline]
    pub fn at_least(self, z: f64) -> bool {
        match self {
            ExtendedTime::Finite(v) => v >= z,
            ExtendedTime::Infinite => true,
        }
    }

    /// `self > z` for a real `z`.
    #[inline]
    pub fn exceeds(self, z: f64) -> bool {
        match self {
            ExtendedTime::Finite(v) => v > z,
            ExtendedTime::Infinite => true,
        }
    }

    /// `self <= z` for a real `z`.
    #[inline]
    pub fn at_most(self, z: f64) -> bool {
        !self.exceeds(z)
    }
}

impl PartialEq for ExtendedTime {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ExtendedTime::Finite(a), ExtendedTime::Finite(b)) => a.to_bits() == b.to_bits(),
            (ExtendedTime::Infinite, ExtendedTime::Infinite) => true,
            _ => false,
        }
    }
}

impl Eq for ExtendedTime {}

impl Ord for ExtendedTime {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtendedTime::Finite(a), ExtendedTime::Finite(b)) => a.total_cmp(b),
            (ExtendedTime::Finite(_), ExtendedTime::Infinite) => Ordering::Less,
            (ExtendedTime::Infinite, ExtendedTime::Finite(_)) => Ordering::Greater,
            (ExtendedTime::Infinite, ExtendedTime::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for ExtendedTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ExtendedTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedTime::Finite(v) => write!(f, "{v}"),
            ExtendedTime::Infinite => f.write_str("inf"),
        }
    }
}

// JSON: finite values are numbers, infinity is the string "inf".
impl Serialize for ExtendedTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtendedTime::Finite(v) => serializer.serialize_f64(*v),
            ExtendedTime::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) if v.is_finite() => Ok(ExtendedTime::Finite(v)),
            Repr::Number(_) => Err(serde::de::Error::custom("non-finite number")),
            Repr::Text(s) if s == "inf" => Ok(ExtendedTime::Infinite),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Distribution function of the freeze time.
pub fn cdf_f(t: ExtendedTime) -> f64 {
    match t {
        ExtendedTime::Infinite => 1.0,
        ExtendedTime::Finite(t) => cdf_f_finite(t),
    }
}

#[inline]
pub fn cdf_f_finite(t: f64) -> f64 {
    if t <= 0.5 {
        0.0
    } else if t <= 1.0 {
        (2.0 * t).ln()
    } else {
        LN_2
    }
}

/// The degenerate solution that never freezes.
pub fn zero_solution_cdf(t: ExtendedTime) -> f64 {
    match t {
        ExtendedTime::Infinite => 1.0,
        ExtendedTime::Finite(_) => 0.0,
    }
}

/// Inverse transform of `F`: `v` uniform on `[0, 1)` maps to a sample of `F`.
#[inline]
pub fn freeze_time_from_uniform(v: f64) -> ExtendedTime {
    if v <= LN_2 {
        // exp(ln 2) may round a hair above 2
        ExtendedTime::Finite((v.exp() / 2.0).min(1.0))
    } else {
        ExtendedTime::Infinite
    }
}

#[inline]
pub fn sample_f<R: Rng + ?Sized>(rng: &mut R) -> ExtendedTime {
    freeze_time_from_uniform(rng.random::<f64>())
}

/// The recursion kernel.
///
/// Returns `low` if `low >= u`, `high` if `low < u <= high`, and
/// `Infinite` otherwise. The result is always one of the inputs or
/// `Infinite`; nothing is computed. Callers pass `low <= high`.
#[inline]
pub fn phi(low: ExtendedTime, high: ExtendedTime, u: f64) -> ExtendedTime {
    debug_assert!(low <= high, "phi called with low > high");
    if low.at_least(u) {
        low
    } else if high.at_least(u) {
        high
    } else {
        ExtendedTime::Infinite
    }
}

/// [`phi`] applied to an unordered pair.
#[inline]
pub fn phi_pair(a: ExtendedTime, b: ExtendedTime, u: f64) -> ExtendedTime {
    if a <= b {
        phi(a, b, u)
    } else {
        phi(b, a, u)
    }
}

/// Composite trapezoidal rule on `[a, b]` with `steps` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
    assert!(steps > 0);
    let h = (b - a) / steps as f64;
    let inner: f64 = (1..steps).map(|k| f(a + k as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// Signed residual `RHS(t) - cdf(t)` of the integral form of the fixed-point
/// condition,
///
/// ```text
/// F(t) = t [2F(t) - F(t)^2] + 2F(t) ∫_0^t F(s) ds - ∫_0^t [2F(s) + F(s)^2] ds,
/// ```
///
/// with both integrals evaluated by the trapezoidal rule.
pub fn fixed_point_residual(t: f64, cdf: impl Fn(ExtendedTime) -> f64, steps: usize) -> f64 {
    assert!(steps >= 100, "at least 100 quadrature steps required");
    assert!((0.5..=1.0).contains(&t), "t must lie in [1/2, 1]");
    let at = |s: f64| cdf(ExtendedTime::Finite(s));
    let ft = at(t);
    let mass = trapezoid(at, 0.0, t, steps);
    let mixed = trapezoid(|s| {
        let fs = at(s);
        2.0 * fs + fs * fs
    }, 0.0, t, steps);
    let rhs = t * (2.0 * ft - ft * ft) + 2.0 * ft * mass - mixed;
    rhs - ft
}

/// `A = 1 - 2 ∫_{1/2}^1 (1 - s) ln(2s) ds`, the per-block decay factor in the
/// correlation bound.
pub fn decay_constant(steps: usize) -> f64 {
    assert!(steps >= 100, "at least 100 quadrature steps required");
    1.0 - 2.0 * trapezoid(|s| (1.0 - s) * (2.0 * s).ln(), 0.5, 1.0, steps)
}

/// Reference curve `G` of the edge model, a lower bound for `limsup F_n`.
pub fn aldous_g(t: ExtendedTime) -> f64 {
    match t {
        ExtendedTime::Infinite => 1.0,
        ExtendedTime::Finite(t) if t < 0.5 => 0.0,
        ExtendedTime::Finite(t) if t <= 1.0 => 1.0 - 1.0 / (2.0 * t),
        ExtendedTime::Finite(_) => 0.5,
    }
}

/// `P(v in G(t)) = ∫_0^t [F(u) + 1 - F(t)]^3 du`.
///
/// A site is green at `t` when it has activated and every outgoing freeze
/// time either precedes its activation or exceeds `t`.
pub fn single_site_green_prob(t: f64, steps: usize) -> f64 {
    assert!(steps >= 100, "at least 100 quadrature steps required");
    assert!((0.0..=1.0).contains(&t), "t must lie in [0, 1]");
    let tail = 1.0 - cdf_f_finite(t);
    trapezoid(|u| (cdf_f_finite(u) + tail).powi(3), 0.0, t, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const INF: ExtendedTime = ExtendedTime::Infinite;

    fn fin(v: f64) -> ExtendedTime {
        ExtendedTime::finite(v)
    }

    #[test]
    fn cdf_values() {
        assert_eq!(cdf_f(fin(0.5)), 0.0);
        assert!((cdf_f(fin(1.0)) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(cdf_f(fin(2.0)), LN_2);
        assert_eq!(cdf_f(INF), 1.0);
        assert_eq!(cdf_f(fin(0.1)), 0.0);
        assert!((1.0 - cdf_f(fin(1.0)) - (1.0 - LN_2)).abs() < 1e-15);
    }

    #[test]
    fn ordering_puts_infinity_last() {
        assert!(fin(1.0) < INF);
        assert!(fin(0.6) < fin(0.7));
        assert_eq!(INF, INF);
        assert_eq!(fin(0.6).max(INF), INF);
    }

    #[test]
    fn inverse_transform_endpoints() {
        assert_eq!(freeze_time_from_uniform(0.0), fin(0.5));
        assert_eq!(freeze_time_from_uniform(LN_2), fin(1.0));
        assert_eq!(freeze_time_from_uniform(LN_2 + 1e-12), INF);
    }

    #[test]
    fn phi_cases() {
        assert_eq!(phi(fin(0.6), fin(0.8), 0.5), fin(0.6));
        assert_eq!(phi(fin(0.6), fin(0.8), 0.7), fin(0.8));
        assert_eq!(phi(fin(0.6), fin(0.8), 0.9), INF);
        assert_eq!(phi(INF, INF, 0.3), INF);
        assert_eq!(phi_pair(fin(0.8), fin(0.6), 0.7), fin(0.8));
    }

    #[test]
    fn infinity_fraction_matches_defect() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000u32;
        let never = (0..n).filter(|_| !sample_f(&mut rng).is_finite()).count() as f64;
        let p = 1.0 - LN_2;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = (never / n as f64 - p) / se;
        assert!(z.abs() <= 4.0, "z = {z}");
    }

    #[test]
    fn samples_stay_in_freeze_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            if let Some(v) = sample_f(&mut rng).value() {
                assert!((0.5..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn residual_vanishes_for_f() {
        assert!(fixed_point_residual(0.75, cdf_f, 100_000).abs() < 1e-6);
        assert!(fixed_point_residual(0.5, cdf_f, 1_000).abs() < 1e-12);
        for k in 0..=10 {
            let t = 0.5 + 0.05 * k as f64;
            assert_eq!(fixed_point_residual(t, zero_solution_cdf, 1_000), 0.0);
        }
    }

    #[test]
    fn residual_converges_with_refinement() {
        let coarse = fixed_point_residual(0.83, cdf_f, 200).abs();
        let fine = fixed_point_residual(0.83, cdf_f, 20_000).abs();
        assert!(fine < coarse);
        assert!(fine < 1e-8);
    }

    #[test]
    fn residual_detects_wrong_distribution() {
        // Aldous' curve is not a fixed point of this kernel.
        let r = fixed_point_residual(0.9, aldous_g, 10_000);
        assert!(r.abs() > 1e-3);
    }

    #[test]
    fn decay_constant_matches_antiderivatives() {
        // ∫ ln(2s) = s ln(2s) - s ; ∫ s ln(2s) = (s²/2) ln(2s) - s²/4
        let first = |s: f64| s * (2.0 * s).ln() - s;
        let second = |s: f64| 0.5 * s * s * (2.0 * s).ln() - 0.25 * s * s;
        let integral = (first(1.0) - first(0.5)) - (second(1.0) - second(0.5));
        let closed = 1.0 - 2.0 * integral;
        let a = decay_constant(100_000);
        assert!(a > 0.0 && a < 1.0);
        assert!((a - closed).abs() < 1e-9);
        assert!((decay_constant(100_000) - decay_constant(1_000_000)).abs() < 1e-8);
    }

    #[test]
    fn aldous_curve() {
        assert_eq!(aldous_g(fin(0.5)), 0.0);
        assert_eq!(aldous_g(fin(1.0)), 0.5);
        assert_eq!(aldous_g(fin(3.0)), 0.5);
        assert_eq!(aldous_g(INF), 1.0);
        assert!((aldous_g(fin(0.8)) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn single_site_green_values() {
        assert!((single_site_green_prob(0.5, 1_000) - 0.5).abs() < 1e-12);
        assert!((single_site_green_prob(0.3, 1_000) - 0.3).abs() < 1e-12);
        let closed = 1.5 * LN_2 * LN_2 - 0.5;
        assert!((single_site_green_prob(1.0, 100_000) - closed).abs() < 1e-8);
        assert!((closed - 0.220680).abs() < 1e-6);
    }

    #[test]
    fn time_json_round_trip() {
        let text = serde_json::to_string(&vec![fin(0.75), INF]).unwrap();
        assert_eq!(text, "[0.75,\"inf\"]");
        let back: Vec<ExtendedTime> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vec![fin(0.75), INF]);
        assert!(serde_json::from_str::<ExtendedTime>("\"nan\"").is_err());
    }
}

//! Local stability matrices, their spectra, unstable-interval segmentation
//! and the uncertainty-product verdict.
//!
//! The deviation equation `ξ̈ = N ξ` is driven by one of
//!
//! * the local Lyapunov matrix `N^L = −(1/m) ∂²V`,
//! * the geometric (GEM) matrix
//!   `N^G = −(1/m) (3/(2(E−V)) ∇V ⊗ ∇V + ∂²V)`,
//! * the toy schedule of [`crate::models::toy_matrix`].
//!
//! With `M = [[0, I], [N, 0]]` the eigenvalues satisfy `μ² = λ(N)`, so a
//! configuration point is locally unstable exactly when the larger eigenvalue
//! of `N` is positive. A run of unstable samples of duration `Δt` whose
//! largest eigenvalue is `λmax` can only seed chaos if `Δt·λmax > 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DomainError, Error, Result};
use crate::linalg::{add, det, frobenius, outer, scale, sym_eigenvalues, trace, Mat2, Vec2, ZERO2};
use crate::models::{evaluate_potential, toy_matrix, ModelSpec, PotentialEval, ToyParams};

/// Positivity threshold on `λ+` used when segmenting eigenvalue series.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// The GEM matrix is marked invalid where `E − V < GEM_TURN_FACTOR·|E|`.
pub const GEM_TURN_FACTOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indicator {
    Lyapunov,
    Gem,
}

impl Indicator {
    pub fn name(self) -> &'static str {
        match self {
            Indicator::Lyapunov => "lyapunov",
            Indicator::Gem => "gem",
        }
    }
}

impl std::str::FromStr for Indicator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lyapunov" => Ok(Indicator::Lyapunov),
            "gem" => Ok(Indicator::Gem),
            other => Err(format!(
                "unknown indicator '{other}' (expected gem or lyapunov)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Lyapunov,
    Gem,
    Toy,
}

impl From<Indicator> for MatrixKind {
    fn from(i: Indicator) -> Self {
        match i {
            Indicator::Lyapunov => MatrixKind::Lyapunov,
            Indicator::Gem => MatrixKind::Gem,
        }
    }
}

/// Symmetric deviation matrix `N` at one sample.
///
/// `valid` is false (and `entries` zero) where the GEM turning-point guard
/// tripped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMatrix {
    pub entries: Mat2,
    pub kind: MatrixKind,
    pub t: f64,
    pub valid: bool,
}

impl StabilityMatrix {
    pub fn toy(params: &ToyParams, t: f64) -> Self {
        Self {
            entries: toy_matrix(params, t),
            kind: MatrixKind::Toy,
            t,
            valid: true,
        }
    }
}

/// `N` at position `q` and time `t` for an orbit of energy `energy`.
pub fn stability_matrix(
    model: &ModelSpec,
    q: Vec2,
    t: f64,
    energy: f64,
    indicator: Indicator,
) -> Result<StabilityMatrix, DomainError> {
    let ev = evaluate_potential(model, q, t)?;
    let mut n = matrix_from_potential(model, &ev, energy, indicator);
    n.t = t;
    Ok(n)
}

/// Builds `N` from an already evaluated potential. The returned `t` is zero;
/// callers that need it set it themselves.
pub fn matrix_from_potential(
    model: &ModelSpec,
    ev: &PotentialEval,
    energy: f64,
    indicator: Indicator,
) -> StabilityMatrix {
    let inv_m = -1.0 / model.mass;
    let entries = match indicator {
        Indicator::Lyapunov => scale(&ev.hessian, inv_m),
        Indicator::Gem => {
            let kinetic = energy - ev.value;
            if kinetic.is_nan() || kinetic < GEM_TURN_FACTOR * energy.abs() || kinetic <= 0.0 {
                return StabilityMatrix {
                    entries: ZERO2,
                    kind: MatrixKind::Gem,
                    t: 0.0,
                    valid: false,
                };
            }
            let g = ev.gradient;
            let weight = 1.5 / kinetic;
            scale(&add(&scale(&outer(g, g), weight), &ev.hessian), inv_m)
        }
    };
    // Symmetrize exactly; the analytic Hessians already are, the outer product
    // can differ in the last bit.
    let off = 0.5 * (entries[0][1] + entries[1][0]);
    StabilityMatrix {
        entries: [[entries[0][0], off], [off, entries[1][1]]],
        kind: indicator.into(),
        t: 0.0,
        valid: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    Unstable,
}

/// Eigenvalues of `N` and of the first-order matrix `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSpectrum {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// `±√λ+` then `±√λ−`; real for positive `λ`, imaginary for negative.
    pub mu: [Complex64; 4],
    pub classification: Classification,
}

fn sqrt_pair(lambda: f64) -> [Complex64; 2] {
    let root = lambda.abs().sqrt();
    if lambda >= 0.0 {
        [Complex64::new(root, 0.0), Complex64::new(-root, 0.0)]
    } else {
        [Complex64::new(0.0, root), Complex64::new(0.0, -root)]
    }
}

/// Closed-form spectrum of a valid stability matrix.
pub fn local_spectrum(n: &StabilityMatrix) -> Result<LocalSpectrum> {
    if !n.valid {
        return Err(Error::InvalidSample { t: n.t });
    }
    let (lambda_minus, lambda_plus) = sym_eigenvalues(&n.entries);
    let [a, b] = sqrt_pair(lambda_plus);
    let [c, d] = sqrt_pair(lambda_minus);
    Ok(LocalSpectrum {
        lambda_minus,
        lambda_plus,
        mu: [a, b, c, d],
        classification: if lambda_plus > 0.0 {
            Classification::Unstable
        } else {
            Classification::Stable
        },
    })
}

/// `|λ² − λ tr N + det N|` for an eigenvalue `lambda` of `n`.
pub fn characteristic_residual(n: &Mat2, lambda: f64) -> f64 {
    (lambda * lambda - lambda * trace(n) + det(n)).abs()
}

/// Scale used for the characteristic-polynomial residual bound.
pub fn residual_scale(n: &Mat2) -> f64 {
    frobenius(n).powi(2).max(1.0)
}

/// Larger and smaller eigenvalue of `N` at one trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub t: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub valid: bool,
}

impl EigenSample {
    pub fn new(t: f64, lambda_plus: f64) -> Self {
        Self {
            t,
            lambda_minus: f64::NAN,
            lambda_plus,
            valid: true,
        }
    }
}

/// Maximal contiguous stretch with `λ+ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnstableInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub delta_t: f64,
    pub lambda_max: f64,
    /// `delta_t · lambda_max`.
    pub product: f64,
}

impl UnstableInterval {
    pub fn new(t_start: f64, t_end: f64, lambda_max: f64) -> Self {
        let delta_t = t_end - t_start;
        Self {
            t_start,
            t_end,
            delta_t,
            lambda_max,
            product: delta_t * lambda_max,
        }
    }

    /// `Δt·√λmax`, the product with the growth rate of `ξ` itself.
    pub fn mu_product(&self) -> f64 {
        self.delta_t * self.lambda_max.sqrt()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

/// Time where the line through `(t0, l0)` and `(t1, l1)` crosses zero,
/// clamped to `[t0, t1]`.
fn zero_crossing(t0: f64, l0: f64, t1: f64, l1: f64) -> f64 {
    let denom = l1 - l0;
    if denom == 0.0 {
        return t0;
    }
    (t0 - l0 * (t1 - t0) / denom).clamp(t0, t1)
}

/// Splits a uniformly sampled `λ+` series into maximal runs of valid samples
/// with `λ+ > tol`.
///
/// Boundaries against a valid neighbour are moved to the linear zero crossing
/// of `λ+`; a boundary at the series end or next to an invalid sample stays
/// on the outermost run sample. `lambda_max` is the largest sampled value.
/// Runs that collapse to zero duration (a single sample between invalid
/// neighbours) are dropped.
pub fn detect_unstable_intervals(samples: &[EigenSample], tol: f64) -> Vec<UnstableInterval> {
    let positive = |s: &EigenSample| s.valid && s.lambda_plus > tol;
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        if !positive(&samples[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < samples.len() && positive(&samples[i]) {
            i += 1;
        }
        let end = i - 1;

        let first = &samples[start];
        let t_start = match start.checked_sub(1).map(|k| &samples[k]) {
            Some(prev) if prev.valid => {
                zero_crossing(prev.t, prev.lambda_plus, first.t, first.lambda_plus)
            }
            _ => first.t,
        };
        let last = &samples[end];
        let t_end = match samples.get(end + 1) {
            Some(next) if next.valid => {
                zero_crossing(last.t, last.lambda_plus, next.t, next.lambda_plus)
            }
            _ => last.t,
        };
        let lambda_max = samples[start..=end]
            .iter()
            .map(|s| s.lambda_plus)
            .fold(f64::NEG_INFINITY, f64::max);
        if t_end > t_start {
            out.push(UnstableInterval::new(t_start, t_end, lambda_max));
        }
    }
    out
}

/// Verdict over a set of unstable intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub intervals: Vec<UnstableInterval>,
    pub max_product: f64,
    /// True when some interval has `Δt·λmax > 1`.
    pub chaos_possible: bool,
    /// `Σ Δt_i·λmax,i` over all intervals.
    pub cumulative_product: f64,
}

impl StabilityVerdict {
    pub fn max_mu_product(&self) -> f64 {
        self.intervals
            .iter()
            .map(|i| i.mu_product())
            .fold(0.0, f64::max)
    }
}

pub fn uncertainty_verdict(intervals: Vec<UnstableInterval>) -> StabilityVerdict {
    let max_product = intervals.iter().map(|i| i.product).fold(0.0, f64::max);
    let cumulative_product = intervals.iter().map(|i| i.product).fold(0.0, |a, b| a + b);
    StabilityVerdict {
        intervals,
        max_product,
        chaos_possible: max_product > 1.0,
        cumulative_product,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    fn sym(a: f64, b: f64, d: f64) -> StabilityMatrix {
        StabilityMatrix {
            entries: [[a, b], [b, d]],
            kind: MatrixKind::Lyapunov,
            t: 0.0,
            valid: true,
        }
    }

    #[test]
    fn toda_origin_both_indicators() {
        for ind in [Indicator::Lyapunov, Indicator::Gem] {
            let n = stability_matrix(&ModelSpec::toda(), [0.0, 0.0], 0.0, 0.15, ind).unwrap();
            assert!(n.valid);
            assert_eq!(n.entries, [[-1.0, 0.0], [0.0, -1.0]]);
        }
    }

    #[test]
    fn kepler_lyapunov_has_positive_radial_eigenvalue() {
        let k = 4.0 * PI * PI;
        let n = stability_matrix(
            &ModelSpec::kepler(1.0),
            [1.0, 0.0],
            0.0,
            -k / 2.0,
            Indicator::Lyapunov,
        )
        .unwrap();
        let s = local_spectrum(&n).unwrap();
        assert!((s.lambda_plus - 2.0 * k).abs() < 1e-12 * k);
        assert!((s.lambda_minus + k).abs() < 1e-12 * k);
        assert_eq!(s.classification, Classification::Unstable);
    }

    #[test]
    fn kepler_lyapunov_matches_finite_differences() {
        // Finite-difference Hessian of −k/r at an off-axis point.
        let k = 4.0 * PI * PI;
        let v = |x: f64, y: f64| -k / x.hypot(y);
        let (x, y, h) = (0.7, -0.4, 1e-4);
        let fd = [
            [
                (v(x + h, y) - 2.0 * v(x, y) + v(x - h, y)) / (h * h),
                (v(x + h, y + h) - v(x + h, y - h) - v(x - h, y + h) + v(x - h, y - h))
                    / (4.0 * h * h),
            ],
            [0.0, (v(x, y + h) - 2.0 * v(x, y) + v(x, y - h)) / (h * h)],
        ];
        let n = stability_matrix(
            &ModelSpec::kepler(1.0),
            [x, y],
            0.0,
            -1.0,
            Indicator::Lyapunov,
        )
        .unwrap();
        assert!((n.entries[0][0] + fd[0][0]).abs() < 1e-4 * k);
        assert!((n.entries[0][1] + fd[0][1]).abs() < 1e-4 * k);
        assert!((n.entries[1][1] + fd[1][1]).abs() < 1e-4 * k);
    }

    #[test]
    fn toda_hessian_on_axis() {
        let n = stability_matrix(
            &ModelSpec::toda(),
            [0.0, 0.5],
            0.0,
            1.0,
            Indicator::Lyapunov,
        )
        .unwrap();
        assert_eq!(n.entries, [[-2.0, 0.0], [0.0, -1.5]]);
    }

    #[test]
    fn gem_guard_marks_turning_points() {
        let model = ModelSpec::toda();
        let v = evaluate_potential(&model, [0.1, 0.2], 0.0).unwrap().value;
        let n = stability_matrix(&model, [0.1, 0.2], 3.0, v, Indicator::Gem).unwrap();
        assert!(!n.valid);
        assert_eq!(n.entries, ZERO2);
        assert_eq!(n.t, 3.0);
        assert!(matches!(local_spectrum(&n), Err(Error::InvalidSample { t }) if t == 3.0));
        // Forbidden region (E < V) is also guarded.
        assert!(
            !stability_matrix(&model, [0.1, 0.2], 0.0, v - 1.0, Indicator::Gem)
                .unwrap()
                .valid
        );
    }

    #[test]
    fn swap_matrix_spectrum() {
        let s = local_spectrum(&sym(0.0, 1.0, 0.0)).unwrap();
        assert_eq!((s.lambda_minus, s.lambda_plus), (-1.0, 1.0));
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        assert_eq!(s.mu, expect);
        assert_eq!(s.classification, Classification::Unstable);
    }

    #[test]
    fn negative_definite_is_stable() {
        let s = local_spectrum(&sym(-2.0, 0.0, -3.0)).unwrap();
        assert_eq!((s.lambda_minus, s.lambda_plus), (-3.0, -2.0));
        assert!(s.mu.iter().all(|m| m.re == 0.0 && m.im != 0.0));
        assert_eq!(s.classification, Classification::Stable);
    }

    #[test]
    fn toy_spectrum_follows_schedule() {
        let p = ToyParams::new(5.0);
        for i in 0..=150 {
            let t = i as f64 * 0.1;
            let s = local_spectrum(&StabilityMatrix::toy(&p, t)).unwrap();
            assert!((s.lambda_plus - (1.0 - t / 5.0)).abs() < 1e-14);
            assert!((s.lambda_minus - (-1.0 - t / 5.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn toy_spectrum_is_theta_invariant() {
        let mut worst: f64 = 0.0;
        for k in 0..64 {
            let p = ToyParams {
                delta_t: 2.0,
                rho: 0.7,
                theta: k as f64 * 2.0 * PI / 64.0,
            };
            for i in 0..20 {
                let t = i as f64 * 0.3;
                let (lo, hi) = sym_eigenvalues(&toy_matrix(&p, t));
                let a = -t / 2.0;
                worst = worst
                    .max((lo - (a - 0.7)).abs())
                    .max((hi - (a + 0.7)).abs());
            }
        }
        assert!(worst < 1e-12, "θ deviation {worst}");
    }

    fn series(h: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Vec<EigenSample> {
        let n = (t_end / h).round() as usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 * h;
                EigenSample::new(t, f(t))
            })
            .collect()
    }

    #[test]
    fn toy_series_single_interval() {
        let dt = 5.0;
        let s = series(1e-3, 3.0 * dt, |t| 1.0 - t / dt);
        let iv = detect_unstable_intervals(&s, POSITIVITY_TOL);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].t_start, 0.0);
        assert!((iv[0].t_end - dt).abs() < 1e-9);
        assert_eq!(iv[0].lambda_max, 1.0);
        assert!((iv[0].product - dt).abs() < 1e-9);
    }

    #[test]
    fn all_negative_series_has_no_interval() {
        let s = series(0.1, 10.0, |t| -1.0 - t);
        assert!(detect_unstable_intervals(&s, POSITIVITY_TOL).is_empty());
    }

    #[test]
    fn zero_plateau_is_not_unstable() {
        let s = series(0.1, 10.0, |_| 0.0);
        assert!(detect_unstable_intervals(&s, POSITIVITY_TOL).is_empty());
    }

    #[test]
    fn two_bumps() {
        let bump = |t: f64| (0.5 - (t - 2.0).abs()).max(0.0) + (0.8 - (t - 6.0).abs()).max(0.0);
        let s = series(0.01, 8.0, bump);
        let iv = detect_unstable_intervals(&s, POSITIVITY_TOL);
        assert_eq!(iv.len(), 2);
        let expected = [(1.5, 2.5, 0.5, 0.5), (5.2, 6.8, 0.8, 1.28)];
        for (got, (a, b, lmax, prod)) in iv.iter().zip(expected) {
            assert!((got.t_start - a).abs() < 1e-9);
            assert!((got.t_end - b).abs() < 1e-9);
            assert!((got.lambda_max - lmax).abs() < 1e-9);
            assert!((got.product - prod).abs() < 1e-8);
            assert_eq!(got.product, got.delta_t * got.lambda_max);
        }
    }

    #[test]
    fn invalid_samples_break_runs() {
        let mut s = series(0.1, 4.0, |_| 1.0);
        s[20].valid = false;
        let iv = detect_unstable_intervals(&s, POSITIVITY_TOL);
        assert_eq!(iv.len(), 2);
        assert!((iv[0].t_end - 1.9).abs() < 1e-12);
        assert!((iv[1].t_start - 2.1).abs() < 1e-12);
    }

    #[test]
    fn verdict_examples() {
        let kepler = uncertainty_verdict(vec![UnstableInterval::new(0.0, 0.6, 1.0)]);
        assert!(!kepler.chaos_possible);
        let toda = uncertainty_verdict(vec![UnstableInterval::new(0.0, 1.044, 1.0)]);
        assert!(toda.chaos_possible);
        let empty = uncertainty_verdict(Vec::new());
        assert_eq!(empty.max_product, 0.0);
        assert_eq!(empty.cumulative_product, 0.0);
        assert!(!empty.chaos_possible);
    }

    #[test]
    fn verdict_cumulative_and_mu() {
        let v = uncertainty_verdict(vec![
            UnstableInterval::new(0.0, 0.5, 4.0),
            UnstableInterval::new(3.0, 3.25, 4.0),
        ]);
        assert_eq!(v.max_product, 2.0);
        assert_eq!(v.cumulative_product, 3.0);
        assert_eq!(v.max_mu_product(), 1.0);
    }

    #[test]
    fn gem_equals_lyapunov_at_critical_points() {
        for model in [ModelSpec::toda(), ModelSpec::harmonic()] {
            for e in [0.01, 0.2, 3.0] {
                let l = stability_matrix(&model, [0.0, 0.0], 0.0, e, Indicator::Lyapunov).unwrap();
                let g = stability_matrix(&model, [0.0, 0.0], 0.0, e, Indicator::Gem).unwrap();
                assert_eq!(l.entries, g.entries);
            }
        }
    }

    fn arb_sample() -> impl Strategy<Value = (f64, bool)> {
        (-2.0f64..2.0, prop::bool::weighted(0.9))
    }

    proptest! {
        #[test]
        fn spectrum_residuals(a in -1e3f64..1e3, b in -1e3f64..1e3, d in -1e3f64..1e3) {
            let n = sym(a, b, d);
            let s = local_spectrum(&n).unwrap();
            prop_assert!(s.lambda_minus <= s.lambda_plus);
            let bound = 1e-10 * residual_scale(&n.entries);
            for l in [s.lambda_minus, s.lambda_plus] {
                prop_assert!(characteristic_residual(&n.entries, l) < bound);
            }
            for (mu, l) in s.mu.iter().zip([s.lambda_plus, s.lambda_plus, s.lambda_minus, s.lambda_minus]) {
                let sq = mu * mu;
                prop_assert!((sq.re - l).abs() < 1e-10 * l.abs().max(1.0));
                prop_assert!(sq.im.abs() < 1e-10 * l.abs().max(1.0));
            }
            prop_assert_eq!(s.classification == Classification::Unstable, s.lambda_plus > 0.0);
        }

        #[test]
        fn verdict_is_monotone(
            products in prop::collection::vec(0.0f64..2.0, 0..8),
            extra in 0.0f64..2.0,
        ) {
            let ivs: Vec<_> = products.iter().enumerate()
                .map(|(i, p)| UnstableInterval::new(i as f64, i as f64 + 1.0, *p))
                .collect();
            let before = uncertainty_verdict(ivs.clone());
            let mut more = ivs;
            more.push(UnstableInterval::new(100.0, 101.0, extra));
            let after = uncertainty_verdict(more);
            prop_assert!(!before.chaos_possible || after.chaos_possible);
            prop_assert!(after.max_product >= before.max_product);
        }

        #[test]
        fn intervals_cover_positive_samples(values in prop::collection::vec(arb_sample(), 1..200)) {
            let h = 0.01;
            let s: Vec<EigenSample> = values.iter().enumerate().map(|(i, (l, valid))| EigenSample {
                t: i as f64 * h,
                lambda_minus: f64::NAN,
                lambda_plus: *l,
                valid: *valid,
            }).collect();
            let tol = POSITIVITY_TOL;
            let iv = detect_unstable_intervals(&s, tol);
            let inside = |t: f64| iv.iter().any(|i| i.t_start <= t && t <= i.t_end);
            for (k, x) in s.iter().enumerate() {
                // A lone sample between invalid neighbours has zero duration.
                let isolated = (k == 0 || !s[k - 1].valid) && (k + 1 == s.len() || !s[k + 1].valid);
                if x.valid && x.lambda_plus > tol && !isolated {
                    prop_assert!(inside(x.t), "sample {} not covered", k);
                }
                if x.valid && x.lambda_plus < -tol {
                    prop_assert!(!iv.iter().any(|i| i.t_start < x.t && x.t < i.t_end));
                }
            }
            for i in &iv {
                prop_assert!(i.t_end > i.t_start);
                prop_assert!(i.lambda_max > tol);
                prop_assert_eq!(i.product, i.delta_t * i.lambda_max);
            }
        }
    }
}

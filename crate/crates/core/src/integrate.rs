//! Fixed-step classical RK4 for the phase flow, the linear deviation system
//! `ξ̈ = N(t) ξ` written as `ζ̇ = Mζ` with `M = [[0, I], [N, 0]]`, and the two
//! advanced in lockstep.
//!
//! Steppers yield one sample per step so long runs (Poincaré sections,
//! energy sweeps) can stream without keeping the trajectory; the
//! `propagate_*` functions collect everything into records.

use serde::{Deserialize, Serialize};

use crate::error::{DomainError, Error, Result};
use crate::linalg::{mat_vec, sym_eigenvalues, Mat2, Vec2};
use crate::models::{
    evaluate_potential, toy_matrix, ModelKind, ModelSpec, PhaseState, PotentialEval, ToyParams,
};
use crate::stability::{matrix_from_potential, EigenSample, Indicator};

/// Separation `ξ` between neighbouring trajectories and its rate `η = ξ̇`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviationState {
    pub xi: Vec2,
    pub eta: Vec2,
}

impl DeviationState {
    pub fn new(xi: Vec2, eta: Vec2) -> Self {
        Self { xi, eta }
    }

    /// Unit displacement along the first axis at rest.
    pub fn unit_displacement() -> Self {
        Self::new([1.0, 0.0], [0.0, 0.0])
    }

    fn to_array(self) -> [f64; 4] {
        [self.xi[0], self.xi[1], self.eta[0], self.eta[1]]
    }

    fn from_array(z: [f64; 4]) -> Self {
        Self::new([z[0], z[1]], [z[2], z[3]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Time-indexed provider of the 2×2 deviation matrix `N(t)`.
pub trait MatrixSource {
    fn matrix(&self, t: f64) -> Mat2;
}

impl MatrixSource for ToyParams {
    fn matrix(&self, t: f64) -> Mat2 {
        toy_matrix(self, t)
    }
}

impl<F: Fn(f64) -> Mat2> MatrixSource for F {
    fn matrix(&self, t: f64) -> Mat2 {
        self(t)
    }
}

/// One classical RK4 step of `ẏ = f(t, y)`.
pub fn rk4_step<const N: usize, E>(
    t: f64,
    y: &[f64; N],
    h: f64,
    mut f: impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
) -> Result<[f64; N], E> {
    let shift = |k: &[f64; N], c: f64| -> [f64; N] { std::array::from_fn(|i| y[i] + c * k[i]) };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &shift(&k1, 0.5 * h))?;
    let k3 = f(t + 0.5 * h, &shift(&k2, 0.5 * h))?;
    let k4 = f(t + h, &shift(&k3, h))?;
    Ok(std::array::from_fn(|i| {
        y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

fn check_step(h: f64, t0: f64, t_final: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    if !(t_final > t0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_final {t_final} must exceed the initial time {t0}"
        )));
    }
    // Tolerate round-off when the horizon is an exact multiple of h.
    Ok(((t_final - t0) / h + 1e-9).floor() as usize)
}

/// Number of RK4 steps taken for a horizon; the last sample time is
/// `t0 + steps·h ≤ t_final`.
pub fn step_count(h: f64, t0: f64, t_final: f64) -> Result<usize> {
    check_step(h, t0, t_final)
}

fn check_model(model: &ModelSpec) -> Result<()> {
    model.validate().map_err(Error::InvalidArgument)?;
    if matches!(model.kind, ModelKind::Toy(_)) {
        return Err(Error::InvalidArgument(
            "the toy model has no phase flow; use propagate_deviation".into(),
        ));
    }
    Ok(())
}

/// Phase state with the potential evaluated at it.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSample {
    pub state: PhaseState,
    pub potential: PotentialEval,
}

impl PhaseSample {
    pub fn energy(&self, mass: f64) -> f64 {
        let p = self.state.p;
        (p[0] * p[0] + p[1] * p[1]) / (2.0 * mass) + self.potential.value
    }
}

fn phase_rhs(model: &ModelSpec, t: f64, y: &[f64; 4]) -> Result<[f64; 4], DomainError> {
    let ev = evaluate_potential(model, [y[0], y[1]], t)?;
    let m = model.mass;
    Ok([y[2] / m, y[3] / m, -ev.gradient[0], -ev.gradient[1]])
}

/// Streams RK4 samples of `q̇ = p/m`, `ṗ = −∇V(q, t)` on a uniform grid.
pub struct PhaseStepper<'a> {
    model: &'a ModelSpec,
    current: PhaseSample,
    t0: f64,
    h: f64,
    index: usize,
}

impl<'a> PhaseStepper<'a> {
    pub fn new(model: &'a ModelSpec, initial: PhaseState, h: f64) -> Result<Self> {
        check_model(model)?;
        if !initial.is_finite() {
            return Err(DomainError::NonFinite.into());
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {h}"
            )));
        }
        let potential = evaluate_potential(model, initial.q, initial.t)?;
        Ok(Self {
            model,
            current: PhaseSample {
                state: initial,
                potential,
            },
            t0: initial.t,
            h,
            index: 0,
        })
    }

    pub fn current(&self) -> &PhaseSample {
        &self.current
    }

    /// Advances one step and returns the new sample.
    pub fn advance(&mut self) -> Result<PhaseSample> {
        let s = self.current.state;
        let y = [s.q[0], s.q[1], s.p[0], s.p[1]];
        let fail = |source| Error::Integration {
            source,
            last_valid: s,
        };
        let next = rk4_step(s.t, &y, self.h, |t, y| phase_rhs(self.model, t, y)).map_err(fail)?;
        self.index += 1;
        let t = self.t0 + self.index as f64 * self.h;
        let state = PhaseState::new([next[0], next[1]], [next[2], next[3]], t);
        if !state.is_finite() {
            return Err(fail(DomainError::NonFinite));
        }
        let potential = evaluate_potential(self.model, state.q, t).map_err(fail)?;
        self.current = PhaseSample { state, potential };
        Ok(self.current)
    }
}

/// Uniformly sampled phase trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub model: ModelSpec,
    pub step: f64,
    pub samples: Vec<PhaseState>,
    pub energy_series: Vec<f64>,
}

impl TrajectoryRecord {
    /// Largest `|E(t) − E(0)| / |E(0)|` over the record.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energy_series[0];
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energy_series
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Integrates the phase flow from `initial` to `t_final` with step `h`.
///
/// On leaving the model domain the error carries the last recorded state.
pub fn propagate_phase(
    model: &ModelSpec,
    initial: PhaseState,
    h: f64,
    t_final: f64,
) -> Result<TrajectoryRecord> {
    let steps = check_step(h, initial.t, t_final)?;
    let mut stepper = PhaseStepper::new(model, initial, h)?;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut energy_series = Vec::with_capacity(steps + 1);
    samples.push(initial);
    energy_series.push(stepper.current().energy(model.mass));
    for _ in 0..steps {
        let s = stepper.advance()?;
        samples.push(s.state);
        energy_series.push(s.energy(model.mass));
    }
    Ok(TrajectoryRecord {
        model: *model,
        step: h,
        samples,
        energy_series,
    })
}

/// Deviation samples with an exponential reference curve `exp(λref (t − t0))`.
#[derive(Debug, Clone)]
pub struct DeviationRecord {
    pub samples: Vec<(f64, DeviationState)>,
    pub lambda_ref: f64,
    pub envelope: Vec<f64>,
}

impl DeviationRecord {
    fn new(samples: Vec<(f64, DeviationState)>) -> Self {
        let mut out = Self {
            samples,
            lambda_ref: 1.0,
            envelope: Vec::new(),
        };
        out.set_envelope_rate(1.0);
        out
    }

    /// Recomputes the reference envelope for growth rate `lambda_ref`.
    pub fn set_envelope_rate(&mut self, lambda_ref: f64) {
        let t0 = self.samples.first().map_or(0.0, |s| s.0);
        self.lambda_ref = lambda_ref;
        self.envelope = self
            .samples
            .iter()
            .map(|(t, _)| (lambda_ref * (t - t0)).exp())
            .collect();
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }
}

fn deviation_rhs(n: &Mat2, z: &[f64; 4]) -> [f64; 4] {
    let acc = mat_vec(n, [z[0], z[1]]);
    [z[2], z[3], acc[0], acc[1]]
}

/// Integrates `ζ̇ = Mζ` under `N(t)` from `source`, starting at `t = 0`.
pub fn propagate_deviation(
    source: &impl MatrixSource,
    zeta0: DeviationState,
    h: f64,
    t_final: f64,
) -> Result<DeviationRecord> {
    let steps = check_step(h, 0.0, t_final)?;
    if !zeta0.is_finite() {
        return Err(Error::InvalidArgument("non-finite deviation state".into()));
    }
    let mut samples = Vec::with_capacity(steps + 1);
    let mut z = zeta0.to_array();
    samples.push((0.0, zeta0));
    for i in 0..steps {
        let t = i as f64 * h;
        z = rk4_step::<4, std::convert::Infallible>(t, &z, h, |t, z| {
            Ok(deviation_rhs(&source.matrix(t), z))
        })
        .unwrap_or_else(|e| match e {});
        samples.push(((i + 1) as f64 * h, DeviationState::from_array(z)));
    }
    Ok(DeviationRecord::new(samples))
}

/// One lockstep sample of the orbit, the deviation and the local spectrum.
#[derive(Debug, Clone, Copy)]
pub struct CoupledSample {
    pub phase: PhaseSample,
    pub deviation: DeviationState,
    pub eigen: EigenSample,
}

/// Streams the phase flow and the deviation system advanced together, with
/// `N` rebuilt from the current position at every RK4 stage.
pub struct CoupledStepper<'a> {
    model: &'a ModelSpec,
    indicator: Indicator,
    energy: f64,
    current: CoupledSample,
    t0: f64,
    h: f64,
    index: usize,
}

impl<'a> CoupledStepper<'a> {
    pub fn new(
        model: &'a ModelSpec,
        initial: PhaseState,
        zeta0: DeviationState,
        indicator: Indicator,
        h: f64,
    ) -> Result<Self> {
        check_model(model)?;
        if !initial.is_finite() {
            return Err(DomainError::NonFinite.into());
        }
        if !zeta0.is_finite() {
            return Err(Error::InvalidArgument("non-finite deviation state".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {h}"
            )));
        }
        let potential = evaluate_potential(model, initial.q, initial.t)?;
        let phase = PhaseSample {
            state: initial,
            potential,
        };
        let energy = phase.energy(model.mass);
        let eigen = eigen_sample(model, &phase, energy, indicator);
        Ok(Self {
            model,
            indicator,
            energy,
            current: CoupledSample {
                phase,
                deviation: zeta0,
                eigen,
            },
            t0: initial.t,
            h,
            index: 0,
        })
    }

    /// Orbit energy fixed at the initial state (used by the GEM matrix).
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn current(&self) -> &CoupledSample {
        &self.current
    }

    pub fn advance(&mut self) -> Result<CoupledSample> {
        let s = self.current.phase.state;
        let d = self.current.deviation;
        let y = [
            s.q[0], s.q[1], s.p[0], s.p[1], d.xi[0], d.xi[1], d.eta[0], d.eta[1],
        ];
        let fail = |source| Error::Integration {
            source,
            last_valid: s,
        };
        let (model, energy, indicator) = (self.model, self.energy, self.indicator);
        let next = rk4_step(s.t, &y, self.h, |t, y| {
            let ev = evaluate_potential(model, [y[0], y[1]], t)?;
            let n = matrix_from_potential(model, &ev, energy, indicator).entries;
            let acc = mat_vec(&n, [y[4], y[5]]);
            let m = model.mass;
            Ok([
                y[2] / m,
                y[3] / m,
                -ev.gradient[0],
                -ev.gradient[1],
                y[6],
                y[7],
                acc[0],
                acc[1],
            ])
        })
        .map_err(fail)?;
        self.index += 1;
        let t = self.t0 + self.index as f64 * self.h;
        let state = PhaseState::new([next[0], next[1]], [next[2], next[3]], t);
        let deviation = DeviationState::new([next[4], next[5]], [next[6], next[7]]);
        if !state.is_finite() || !deviation.is_finite() {
            return Err(fail(DomainError::NonFinite));
        }
        let potential = evaluate_potential(model, state.q, t).map_err(fail)?;
        let phase = PhaseSample { state, potential };
        self.current = CoupledSample {
            phase,
            deviation,
            eigen: eigen_sample(model, &phase, energy, indicator),
        };
        Ok(self.current)
    }
}

fn eigen_sample(
    model: &ModelSpec,
    phase: &PhaseSample,
    energy: f64,
    indicator: Indicator,
) -> EigenSample {
    let n = matrix_from_potential(model, &phase.potential, energy, indicator);
    let (lambda_minus, lambda_plus) = if n.valid {
        sym_eigenvalues(&n.entries)
    } else {
        (f64::NAN, f64::NAN)
    };
    EigenSample {
        t: phase.state.t,
        lambda_minus,
        lambda_plus,
        valid: n.valid,
    }
}

/// Output of [`propagate_coupled`].
#[derive(Debug, Clone)]
pub struct CoupledRecord {
    pub trajectory: TrajectoryRecord,
    pub deviation: DeviationRecord,
    pub eigen: Vec<EigenSample>,
    pub indicator: Indicator,
    /// Energy of the initial state, held fixed in the GEM matrix.
    pub energy: f64,
}

/// Advances the orbit and the deviation driven by the Lyapunov or GEM
/// matrix along it. Samples where the GEM turning-point guard trips carry
/// `valid = false` and drive the deviation with `N = 0`.
pub fn propagate_coupled(
    model: &ModelSpec,
    initial: PhaseState,
    zeta0: DeviationState,
    indicator: Indicator,
    h: f64,
    t_final: f64,
) -> Result<CoupledRecord> {
    let steps = check_step(h, initial.t, t_final)?;
    let mut stepper = CoupledStepper::new(model, initial, zeta0, indicator, h)?;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut energy_series = Vec::with_capacity(steps + 1);
    let mut deviation = Vec::with_capacity(steps + 1);
    let mut eigen = Vec::with_capacity(steps + 1);
    let mut push = |s: &CoupledSample| {
        samples.push(s.phase.state);
        energy_series.push(s.phase.energy(model.mass));
        deviation.push((s.phase.state.t, s.deviation));
        eigen.push(s.eigen);
    };
    push(stepper.current());
    for _ in 0..steps {
        push(&stepper.advance()?);
    }
    Ok(CoupledRecord {
        trajectory: TrajectoryRecord {
            model: *model,
            step: h,
            samples,
            energy_series,
        },
        deviation: DeviationRecord::new(deviation),
        eigen,
        indicator,
        energy: stepper.energy(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::linalg::ZERO2;

    #[test]
    fn rk4_exponential() {
        let mut y = [1.0];
        for i in 0..10 {
            y = rk4_step::<1, ()>(i as f64 * 0.1, &y, 0.1, |_, y| Ok([y[0]])).unwrap();
        }
        assert!((y[0] - std::f64::consts::E).abs() < 1e-5);
    }

    #[test]
    fn kepler_circular_one_period() {
        let model = ModelSpec::kepler(1.0);
        let init = PhaseState::new([1.0, 0.0], [0.0, 2.0 * PI], 0.0);
        let rec = propagate_phase(&model, init, 1e-4, 1.0).unwrap();
        for s in &rec.samples {
            assert!((s.q[0].hypot(s.q[1]) - 1.0).abs() < 1e-6);
        }
        let last = rec.samples.last().unwrap();
        assert!((last.t - 1.0).abs() < 1e-12);
        for i in 0..2 {
            assert!((last.q[i] - init.q[i]).abs() < 1e-5);
            assert!((last.p[i] - init.p[i]).abs() < 1e-5 * 2.0 * PI);
        }
    }

    #[test]
    fn equilibrium_stays_put() {
        for model in [ModelSpec::toda(), ModelSpec::harmonic()] {
            let init = PhaseState::new([0.0, 0.0], [0.0, 0.0], 0.0);
            let rec = propagate_phase(&model, init, 1e-2, 5.0).unwrap();
            for s in &rec.samples {
                assert!(s.q.iter().chain(&s.p).all(|x| x.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn harmonic_matches_cosine() {
        let rec = propagate_phase(
            &ModelSpec::harmonic(),
            PhaseState::new([1.0, 0.0], [0.0, 0.0], 0.0),
            1e-3,
            10.0,
        )
        .unwrap();
        for s in &rec.samples {
            assert!((s.q[0] - s.t.cos()).abs() < 1e-8, "t = {}", s.t);
        }
    }

    /// Body at rest exactly where the perturber arrives half a step later.
    pub(crate) fn collision_setup(h: f64) -> (ModelSpec, PhaseState) {
        let params = crate::models::ThreeBodyParams::sun_jupiter(1.0);
        let q = params.perturber_position(0.5 * h);
        (
            ModelSpec::three_body(params),
            PhaseState::new(q, [0.0, 0.0], 0.0),
        )
    }

    #[test]
    fn domain_error_reports_last_valid_state() {
        let (model, init) = collision_setup(1e-3);
        match propagate_phase(&model, init, 1e-3, 1.0) {
            Err(Error::Integration { last_valid, source }) => {
                assert_eq!(last_valid, init);
                assert!(matches!(source, DomainError::PerturberCollision { .. }));
            }
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn argument_checks() {
        let model = ModelSpec::harmonic();
        let init = PhaseState::new([1.0, 0.0], [0.0, 0.0], 0.0);
        assert!(propagate_phase(&model, init, 0.0, 1.0).is_err());
        assert!(propagate_phase(&model, init, 0.1, 0.0).is_err());
        let toy = ModelSpec::toy(ToyParams::new(1.0));
        assert!(propagate_phase(&toy, init, 0.1, 1.0).is_err());
    }

    #[test]
    fn free_deviation_is_linear_in_time() {
        let rec = propagate_deviation(
            &|_t: f64| ZERO2,
            DeviationState::new([1.0, 0.0], [0.0, 3.0]),
            1e-2,
            4.0,
        )
        .unwrap();
        for (t, d) in &rec.samples {
            assert!((d.xi[0] - 1.0).abs() < 1e-12);
            assert!((d.xi[1] - 3.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_deviation() {
        let rec = propagate_deviation(
            &|_t: f64| [[-1.0, 0.0], [0.0, -1.0]],
            DeviationState::unit_displacement(),
            1e-3,
            10.0,
        )
        .unwrap();
        for (t, d) in &rec.samples {
            assert!((d.xi[0] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn toy_growth_is_an_order_of_magnitude() {
        let rec = propagate_deviation(
            &ToyParams::new(5.0),
            DeviationState::unit_displacement(),
            1e-3,
            12.0,
        )
        .unwrap();
        let (t_max, xi_max) = rec
            .samples
            .iter()
            .map(|(t, d)| (*t, d.xi[0].abs()))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert!((5.0..=30.0).contains(&xi_max), "max |ξ1| = {xi_max}");
        assert!(t_max > 5.0 && t_max < 7.0, "argmax t = {t_max}");
    }

    #[test]
    fn envelope_rate_is_configurable() {
        let mut rec = propagate_deviation(
            &ToyParams::new(1.0),
            DeviationState::unit_displacement(),
            0.5,
            1.0,
        )
        .unwrap();
        assert_eq!(rec.envelope[0], 1.0);
        assert!((rec.envelope[2] - 1f64.exp()).abs() < 1e-15);
        rec.set_envelope_rate(2.0);
        assert!((rec.envelope[2] - 2f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn coupled_harmonic_lyapunov_spectrum_is_constant() {
        let rec = propagate_coupled(
            &ModelSpec::harmonic(),
            PhaseState::new([0.3, -0.2], [0.1, 0.5], 0.0),
            DeviationState::unit_displacement(),
            Indicator::Lyapunov,
            1e-2,
            10.0,
        )
        .unwrap();
        for e in &rec.eigen {
            assert!(e.valid);
            assert_eq!((e.lambda_minus, e.lambda_plus), (-1.0, -1.0));
        }
    }

    #[test]
    fn coupled_kepler_circular_lyapunov_spectrum() {
        let rec = propagate_coupled(
            &ModelSpec::kepler(1.0),
            PhaseState::new([1.0, 0.0], [0.0, 2.0 * PI], 0.0),
            DeviationState::unit_displacement(),
            Indicator::Lyapunov,
            1e-4,
            1.0,
        )
        .unwrap();
        let k = 4.0 * PI * PI;
        for e in &rec.eigen {
            assert!((e.lambda_plus - 2.0 * k).abs() < 1e-4 * k);
            assert!((e.lambda_minus + k).abs() < 1e-4 * k);
        }
    }

    #[test]
    fn coupled_toda_low_energy_gem_is_stable() {
        let model = ModelSpec::toda();
        // E = 0.1 on the section x = 0, p_y = 0.
        let y0 = 0.2;
        let v = evaluate_potential(&model, [0.0, y0], 0.0).unwrap().value;
        let px = (2.0 * (0.1 - v)).sqrt();
        let rec = propagate_coupled(
            &model,
            PhaseState::new([0.0, y0], [px, 0.0], 0.0),
            DeviationState::unit_displacement(),
            Indicator::Gem,
            1e-3,
            100.0,
        )
        .unwrap();
        assert!((rec.energy - 0.1).abs() < 1e-12);
        assert!(rec.eigen.iter().all(|e| !e.valid || e.lambda_plus <= 0.0));
    }
}

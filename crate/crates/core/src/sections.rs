//! Poincaré sections and apsis detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{step_count, PhaseSample, PhaseStepper, TrajectoryRecord};
use crate::models::{ModelSpec, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// The plane `q[axis] = offset`, crossed with momentum along `axis` of sign
/// `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlane {
    pub axis: Axis,
    pub offset: f64,
    /// `+1.0` or `-1.0`.
    pub direction: f64,
}

impl Default for SectionPlane {
    /// `x = 0` crossed with `p_x > 0`.
    fn default() -> Self {
        Self {
            axis: Axis::X,
            offset: 0.0,
            direction: 1.0,
        }
    }
}

/// One section crossing. For an `x` plane the fields are `(y, p_y)`; for a
/// `y` plane they hold `(x, p_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub y: f64,
    pub p_y: f64,
    pub t_cross: f64,
}

/// Cubic Hermite interpolant on `[0, 1]` with end values `f0`, `f1` and end
/// derivatives `d0`, `d1` already scaled by the interval length.
fn hermite(s: f64, f0: f64, f1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * f1
        + (s3 - s2) * d1
}

/// Incremental crossing detector fed with consecutive phase samples.
#[derive(Debug, Clone)]
pub struct SectionDetector {
    plane: SectionPlane,
    mass: f64,
    prev: Option<PhaseSample>,
}

impl SectionDetector {
    pub fn new(plane: SectionPlane, mass: f64) -> Self {
        Self {
            plane,
            mass,
            prev: None,
        }
    }

    /// Consumes the next sample and returns the crossing between it and the
    /// previous one, if any.
    pub fn feed(&mut self, cur: &PhaseSample) -> Option<SectionPoint> {
        let prev = self.prev.replace(*cur)?;
        self.crossing(&prev, cur)
    }

    fn crossing(&self, a: &PhaseSample, b: &PhaseSample) -> Option<SectionPoint> {
        let k = self.plane.axis.index();
        let o = 1 - k;
        let dir = self.plane.direction.signum();
        let g0 = dir * (a.state.q[k] - self.plane.offset);
        let g1 = dir * (b.state.q[k] - self.plane.offset);
        if !(g0 < 0.0 && g1 >= 0.0) {
            return None;
        }
        let (t0, t1) = (a.state.t, b.state.t);
        let h = t1 - t0;
        let m = self.mass;
        let d0 = dir * a.state.p[k] / m * h;
        let d1 = dir * b.state.p[k] / m * h;

        let s = if g1 == 0.0 {
            1.0
        } else {
            // g is negative at 0 and positive at 1; bisect the cubic.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if hermite(mid, g0, g1, d0, d1) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let t_cross = t0 + s * h;
        let p_along = hermite(
            s,
            a.state.p[k],
            b.state.p[k],
            -a.potential.gradient[k] * h,
            -b.potential.gradient[k] * h,
        );
        if dir * p_along <= 0.0 {
            return None;
        }
        let y = hermite(
            s,
            a.state.q[o],
            b.state.q[o],
            a.state.p[o] / m * h,
            b.state.p[o] / m * h,
        );
        let p_y = hermite(
            s,
            a.state.p[o],
            b.state.p[o],
            -a.potential.gradient[o] * h,
            -b.potential.gradient[o] * h,
        );
        Some(SectionPoint { y, p_y, t_cross })
    }
}

/// Section on `x = 0` with `p_x > 0`.
pub fn poincare_section(
    model: &ModelSpec,
    initial: PhaseState,
    h: f64,
    t_final: f64,
) -> Result<Vec<SectionPoint>> {
    poincare_section_on(
        model,
        initial,
        h,
        t_final,
        SectionPlane::default(),
        usize::MAX,
    )
}

/// Integrates from `initial` and collects up to `max_points` crossings of
/// `plane`. If integration fails, the error carries the crossings found so
/// far.
pub fn poincare_section_on(
    model: &ModelSpec,
    initial: PhaseState,
    h: f64,
    t_final: f64,
    plane: SectionPlane,
    max_points: usize,
) -> Result<Vec<SectionPoint>> {
    let steps = step_count(h, initial.t, t_final)?;
    let mut stepper = PhaseStepper::new(model, initial, h)?;
    let mut detector = SectionDetector::new(plane, model.mass);
    detector.feed(stepper.current());
    let mut points = Vec::new();
    for _ in 0..steps {
        if points.len() >= max_points {
            break;
        }
        match stepper.advance() {
            Ok(s) => points.extend(detector.feed(&s)),
            Err(e) => {
                return Err(Error::SectionInterrupted {
                    found: points,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApsisKind {
    Perihelion,
    Aphelion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApsisEvent {
    pub t: f64,
    pub r: f64,
    pub kind: ApsisKind,
}

/// Relative spread of `r` below which an orbit counts as circular.
pub const CIRCULAR_TOL: f64 = 1e-9;

/// Local extrema of the heliocentric distance, refined by a parabola through
/// the extremal sample and its two neighbours.
pub fn apsis_events(trajectory: &TrajectoryRecord) -> Vec<ApsisEvent> {
    let r: Vec<f64> = trajectory
        .samples
        .iter()
        .map(|s| s.q[0].hypot(s.q[1]))
        .collect();
    if r.len() < 3 {
        return Vec::new();
    }
    let (lo, hi) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    if (hi - lo) < CIRCULAR_TOL * mean {
        return Vec::new();
    }
    let h = trajectory.step;
    let mut out = Vec::new();
    for i in 1..r.len() - 1 {
        let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
        let kind = if b < a && b <= c {
            ApsisKind::Perihelion
        } else if b > a && b >= c {
            ApsisKind::Aphelion
        } else {
            continue;
        };
        let curv = a - 2.0 * b + c;
        let (dt, r_ext) = if curv != 0.0 {
            let delta = 0.5 * (a - c) / curv;
            (delta * h, b - 0.25 * (a - c) * delta)
        } else {
            (0.0, b)
        };
        out.push(ApsisEvent {
            t: trajectory.samples[i].t + dt,
            r: r_ext,
            kind,
        });
    }
    out
}

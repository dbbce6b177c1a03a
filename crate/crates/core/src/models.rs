//! Potential-energy models with analytic derivatives.
//!
//! Celestial models (Kepler, restricted three-body) use AU, years and solar
//! masses, so the gravitational parameter of the Sun is `4π²` ([`GM_SUN`]).

use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::linalg::{dot, Mat2, Vec2};
use crate::GM_SUN;

/// Minimum admissible distance (AU) to the Sun and to the perturber.
pub const COLLISION_GUARD: f64 = 1e-6;

/// Position, momentum and time of a 2-DOF system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec2,
    pub p: Vec2,
    pub t: f64,
}

impl PhaseState {
    pub fn new(q: Vec2, p: Vec2, t: f64) -> Self {
        Self { q, p, t }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite()) && self.t.is_finite()
    }
}

/// Parameters of the linear toy deviation matrix `N = aI + bσ1 + cσ3`
/// with `a = -t/Δt`, `b = ρ cos θ`, `c = ρ sin θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub delta_t: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub theta: f64,
}

fn default_rho() -> f64 {
    1.0
}

impl ToyParams {
    pub fn new(delta_t: f64) -> Self {
        Self {
            delta_t,
            rho: 1.0,
            theta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(format!(
                "toy delta_t must be positive, got {}",
                self.delta_t
            ));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(format!("toy rho must be positive, got {}", self.rho));
        }
        if !self.theta.is_finite() {
            return Err("toy theta must be finite".into());
        }
        Ok(())
    }
}

/// Restricted three-body parameters: a test body of mass `m_e` moving in the
/// field of the Sun and of a perturber of mass `m_j` on a prescribed circular
/// orbit of radius `r_j` and angular frequency `omega_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeBodyParams {
    pub m_e: f64,
    pub m_j: f64,
    pub r_j: f64,
    pub omega_j: f64,
}

impl ThreeBodyParams {
    /// Earth in the field of the Sun and Jupiter on a circular orbit.
    pub fn sun_jupiter(m_e: f64) -> Self {
        let r_j = 5.2;
        Self {
            m_e,
            m_j: 9.547_919e-4,
            r_j,
            omega_j: (GM_SUN / (r_j * r_j * r_j)).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.m_e > 0.0 && self.m_e.is_finite()) {
            return Err(format!("m_e must be positive, got {}", self.m_e));
        }
        if !(self.m_j >= 0.0 && self.m_j.is_finite()) {
            return Err(format!("m_j must be non-negative, got {}", self.m_j));
        }
        if self.m_j > 0.0 && !(self.r_j > 0.0 && self.r_j.is_finite()) {
            return Err(format!(
                "r_j must be positive when m_j > 0, got {}",
                self.r_j
            ));
        }
        if !self.omega_j.is_finite() {
            return Err("omega_j must be finite".into());
        }
        Ok(())
    }

    /// Perturber position at time `t`.
    pub fn perturber_position(&self, t: f64) -> Vec2 {
        let (s, c) = (self.omega_j * t).sin_cos();
        [self.r_j * c, self.r_j * s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Toy(ToyParams),
    /// `V = ½(x²+y²) + x²y − y³/3 + 3x⁴/2 + y⁴/2`.
    Toda,
    /// `V = ½(x²+y²)`; integrable fixture.
    Harmonic,
    /// `V = −4π² m / r`.
    Kepler,
    ThreeBody(ThreeBodyParams),
}

/// A model together with the inertial mass of the moving body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mass: f64,
    #[serde(flatten)]
    pub kind: ModelKind,
}

impl ModelSpec {
    pub fn toy(params: ToyParams) -> Self {
        Self {
            mass: 1.0,
            kind: ModelKind::Toy(params),
        }
    }

    pub fn toda() -> Self {
        Self {
            mass: 1.0,
            kind: ModelKind::Toda,
        }
    }

    pub fn harmonic() -> Self {
        Self {
            mass: 1.0,
            kind: ModelKind::Harmonic,
        }
    }

    pub fn kepler(m_e: f64) -> Self {
        Self {
            mass: m_e,
            kind: ModelKind::Kepler,
        }
    }

    pub fn three_body(params: ThreeBodyParams) -> Self {
        Self {
            mass: params.m_e,
            kind: ModelKind::ThreeBody(params),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(format!("mass must be positive, got {}", self.mass));
        }
        match &self.kind {
            ModelKind::Toy(p) => p.validate(),
            ModelKind::ThreeBody(p) => {
                p.validate()?;
                if p.m_e != self.mass {
                    return Err(format!(
                        "three-body mass {} differs from m_e {}",
                        self.mass, p.m_e
                    ));
                }
                Ok(())
            }
            ModelKind::Toda | ModelKind::Harmonic | ModelKind::Kepler => Ok(()),
        }
    }

    pub fn is_celestial(&self) -> bool {
        matches!(self.kind, ModelKind::Kepler | ModelKind::ThreeBody(_))
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Toy(_) => "toy",
            ModelKind::Toda => "toda",
            ModelKind::Harmonic => "harmonic",
            ModelKind::Kepler => "kepler",
            ModelKind::ThreeBody(_) => "three_body",
        }
    }
}

/// Potential value with its gradient and Hessian at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    pub gradient: Vec2,
    pub hessian: Mat2,
}

/// `V`, `∇V` and `∂²V/∂x_i∂x_j` at `q` and time `t`.
///
/// Time only matters for the three-body model, whose perturber sits at
/// `r_j (cos ω_j t, sin ω_j t)`.
pub fn evaluate_potential(
    model: &ModelSpec,
    q: Vec2,
    t: f64,
) -> Result<PotentialEval, DomainError> {
    if !(q[0].is_finite() && q[1].is_finite()) {
        return Err(DomainError::NonFinite);
    }
    match &model.kind {
        ModelKind::Toy(_) => Err(DomainError::NoPotential),
        ModelKind::Toda => Ok(toda(q)),
        ModelKind::Harmonic => Ok(PotentialEval {
            value: 0.5 * dot(q, q),
            gradient: q,
            hessian: [[1.0, 0.0], [0.0, 1.0]],
        }),
        ModelKind::Kepler => {
            point_mass(q, GM_SUN * model.mass).ok_or(DomainError::PrimaryCollision {
                r: q[0].hypot(q[1]),
                guard: COLLISION_GUARD,
            })
        }
        ModelKind::ThreeBody(p) => three_body(p, q, t),
    }
}

fn toda(q: Vec2) -> PotentialEval {
    let [x, y] = q;
    let (x2, y2) = (x * x, y * y);
    let value = 0.5 * (x2 + y2) + x2 * y - y2 * y / 3.0 + 1.5 * x2 * x2 + 0.5 * y2 * y2;
    let gradient = [x + 2.0 * x * y + 6.0 * x2 * x, y + x2 - y2 + 2.0 * y2 * y];
    let hxy = 2.0 * x;
    let hessian = [
        [1.0 + 2.0 * y + 18.0 * x2, hxy],
        [hxy, 1.0 - 2.0 * y + 6.0 * y2],
    ];
    PotentialEval {
        value,
        gradient,
        hessian,
    }
}

/// `−k/|d|` with derivatives, or `None` inside the collision guard.
fn point_mass(d: Vec2, k: f64) -> Option<PotentialEval> {
    let r = d[0].hypot(d[1]);
    if r.is_nan() || r < COLLISION_GUARD {
        return None;
    }
    let inv_r = 1.0 / r;
    let inv_r3 = inv_r * inv_r * inv_r;
    let inv_r5 = inv_r3 * inv_r * inv_r;
    let off = -3.0 * k * d[0] * d[1] * inv_r5;
    Some(PotentialEval {
        value: -k * inv_r,
        gradient: [k * d[0] * inv_r3, k * d[1] * inv_r3],
        hessian: [
            [k * (inv_r3 - 3.0 * d[0] * d[0] * inv_r5), off],
            [off, k * (inv_r3 - 3.0 * d[1] * d[1] * inv_r5)],
        ],
    })
}

fn three_body(p: &ThreeBodyParams, q: Vec2, t: f64) -> Result<PotentialEval, DomainError> {
    let sun = point_mass(q, GM_SUN * p.m_e).ok_or(DomainError::PrimaryCollision {
        r: q[0].hypot(q[1]),
        guard: COLLISION_GUARD,
    })?;
    if p.m_j == 0.0 {
        return Ok(sun);
    }
    let qj = p.perturber_position(t);
    let d = [q[0] - qj[0], q[1] - qj[1]];
    let jup = point_mass(d, GM_SUN * p.m_e * p.m_j).ok_or(DomainError::PerturberCollision {
        r12: d[0].hypot(d[1]),
        guard: COLLISION_GUARD,
    })?;
    // Constant terms: the perturber's rotational energy and its binding to the Sun.
    let constant = 0.5 * p.m_j * p.r_j * p.r_j * p.omega_j * p.omega_j - GM_SUN * p.m_j / p.r_j;
    let mut out = sun;
    out.value += constant + jup.value;
    for i in 0..2 {
        out.gradient[i] += jup.gradient[i];
        for j in 0..2 {
            out.hessian[i][j] += jup.hessian[i][j];
        }
    }
    Ok(out)
}

/// `p·p/(2m) + V(q, t)`.
pub fn total_energy(model: &ModelSpec, state: &PhaseState) -> Result<f64, DomainError> {
    let v = evaluate_potential(model, state.q, state.t)?.value;
    Ok(dot(state.p, state.p) / (2.0 * model.mass) + v)
}

/// The toy deviation matrix `[[a+c, b], [b, a−c]]` at time `t`.
pub fn toy_matrix(params: &ToyParams, t: f64) -> Mat2 {
    let a = -t / params.delta_t;
    let (s, c) = params.theta.sin_cos();
    let b = params.rho * c;
    let c = params.rho * s;
    [[a + c, b], [b, a - c]]
}

/// Periapsis state of a Kepler ellipse with semi-major axis `a` and
/// eccentricity `e`, moving counter-clockwise.
pub fn periapsis_state(mass: f64, a: f64, e: f64) -> Result<PhaseState, String> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(format!("semi-major axis must be positive, got {a}"));
    }
    if !(0.0..1.0).contains(&e) {
        return Err(format!("eccentricity must lie in [0, 1), got {e}"));
    }
    let r_peri = a * (1.0 - e);
    let v_peri = (GM_SUN * (1.0 + e) / r_peri).sqrt();
    Ok(PhaseState::new([r_peri, 0.0], [0.0, mass * v_peri], 0.0))
}

/// Orbital period in years of a test body with semi-major axis `a` (AU).
pub fn kepler_period(a: f64) -> f64 {
    a.powf(1.5)
}

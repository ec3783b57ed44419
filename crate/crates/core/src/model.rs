//! Domain types shared by every other module, and the closed-form algebra
//! linking the soliton parameters to the medium constants.
//!
//! All quantities are dimensionless working units. Widths quoted in
//! picoseconds and lengths in metres for the published parameter sets are
//! read as plain numbers on the same scale (t in units of the pulse-width
//! label, z in units of the propagation-length label).

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for purely algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-9;
/// Tolerance for values rounded to five significant digits.
pub const ROUNDED_TOL: f64 = 1e-3;

/// Fixed constants of the doped two-mode fiber.
///
/// `beta*` multiply `-i ∂²/∂t²`, `gamma*` weight self-phase modulation (1) and
/// cross-phase modulation (2), `eta*` couple each mode to its atomic
/// coherence, `delta` is the single-photon detuning and `omega2` the
/// frequency shift of mode G.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumParams {
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub delta: f64,
    #[serde(default)]
    pub omega2: f64,
}

impl MediumParams {
    /// Same-sign dispersion set (β₁ = −0.25, β₂ = −1.25).
    pub fn same_sign_gvd() -> Self {
        MediumParams {
            beta1: -0.25,
            beta2: -1.25,
            gamma1: 1.0,
            gamma2: 1.0,
            eta1: 1.0,
            eta2: 1.2,
            delta: 1.0,
            omega2: 0.0,
        }
    }

    /// Opposite-sign dispersion set (β₁ = 1, β₂ = −2.5), also used for the
    /// velocity curve.
    pub fn opposite_sign_gvd() -> Self {
        MediumParams {
            beta1: 1.0,
            beta2: -2.5,
            ..Self::same_sign_gvd()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.beta1,
            self.beta2,
            self.gamma1,
            self.gamma2,
            self.eta1,
            self.eta2,
            self.delta,
            self.omega2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `3 + 2β₁/γ₁ + 2β₂/γ₂`, which must vanish for the coupled pair to exist.
pub fn sum_rule_residual(beta1: f64, gamma1: f64, beta2: f64, gamma2: f64) -> Result<f64> {
    if gamma1 == 0.0 || gamma2 == 0.0 {
        return Err(Error::InvalidParameter(
            "Kerr coefficients gamma1 and gamma2 must be nonzero".into(),
        ));
    }
    Ok(3.0 + 2.0 * beta1 / gamma1 + 2.0 * beta2 / gamma2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `None` when a Kerr coefficient vanishes.
    pub sum_rule_residual: Option<f64>,
    pub sum_rule_ok: bool,
    pub equal_gvd: bool,
    pub zero_kerr: bool,
    pub non_finite: bool,
    /// β₂ forced by the sum rule for the given (β₁, γ₁, γ₂).
    pub forced_beta2: Option<f64>,
    pub valid: bool,
}

pub fn validate_medium(med: &MediumParams, tol: f64) -> ValidationReport {
    let zero_kerr = med.gamma1 == 0.0 || med.gamma2 == 0.0;
    let non_finite = !med.is_finite();
    let residual = sum_rule_residual(med.beta1, med.gamma1, med.beta2, med.gamma2).ok();
    let sum_rule_ok = residual.is_some_and(|r| r.abs() <= tol);
    let equal_gvd = med.beta1 == med.beta2;
    let forced_beta2 =
        (!zero_kerr).then(|| -med.gamma2 * (3.0 + 2.0 * med.beta1 / med.gamma1) / 2.0);
    ValidationReport {
        sum_rule_residual: residual,
        sum_rule_ok,
        equal_gvd,
        zero_kerr,
        non_finite,
        forced_beta2,
        valid: sum_rule_ok && !equal_gvd && !zero_kerr && !non_finite,
    }
}

/// A ±1 factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("sign must be +1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        })
    }
}

/// Discrete sign choices applied to the closed-form ansatz.
///
/// `eps_zeta1` and `eps_zeta2` multiply the atomic amplitudes ζ₁ and ζ₂,
/// `eps_offset` is the sign in `eps_offset·sin θ = σ(Ω₁ − Ω₂)` and `eps_grey`
/// multiplies the `i·sin θ` offset of the grey field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignConvention {
    pub eps_zeta1: Sign,
    pub eps_zeta2: Sign,
    pub eps_offset: Sign,
    pub eps_grey: Sign,
}

impl SignConvention {
    /// All signs +1.
    pub const ALL_PLUS: SignConvention = SignConvention {
        eps_zeta1: Sign::Plus,
        eps_zeta2: Sign::Plus,
        eps_offset: Sign::Plus,
        eps_grey: Sign::Plus,
    };

    /// The convention under which the closed form satisfies all five
    /// governing equations.
    pub const CALIBRATED: SignConvention = SignConvention {
        eps_zeta1: Sign::Minus,
        eps_zeta2: Sign::Plus,
        eps_offset: Sign::Plus,
        eps_grey: Sign::Minus,
    };

    /// The 16 combinations, in a fixed order.
    pub fn all() -> Vec<SignConvention> {
        let signs = [Sign::Plus, Sign::Minus];
        let mut out = Vec::with_capacity(16);
        for &eps_zeta1 in &signs {
            for &eps_zeta2 in &signs {
                for &eps_offset in &signs {
                    for &eps_grey in &signs {
                        out.push(SignConvention {
                            eps_zeta1,
                            eps_zeta2,
                            eps_offset,
                            eps_grey,
                        });
                    }
                }
            }
        }
        out
    }
}

impl Default for SignConvention {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

impl fmt::Display for SignConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "zeta1={} zeta2={} offset={} grey={}",
            self.eps_zeta1, self.eps_zeta2, self.eps_offset, self.eps_grey
        )
    }
}

/// Full self-consistent parameter set of one grey-bright soliton pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSolution {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub theta: f64,
    /// Inverse group velocity: the envelope depends on `t − u z`.
    pub u: f64,
    pub p1: f64,
    pub p2: f64,
    pub omega1: f64,
    /// Carrier shift of mode G, copied from the medium.
    pub omega2: f64,
    /// Serialized as `[re, im]`.
    pub alpha: Complex64,
    pub gamma_bg: f64,
    pub signs: SignConvention,
}

impl SolitonSolution {
    pub fn with_signs(mut self, signs: SignConvention) -> Self {
        self.signs = signs;
        self
    }

    /// Ω₁ as seen by the ansatz under `signs`. Flipping `eps_offset` relative to
    /// the convention the solution was built with reflects Ω₁ about Ω₂.
    pub fn omega1_under(&self, signs: &SignConvention) -> f64 {
        if signs.eps_offset == self.signs.eps_offset {
            self.omega1
        } else {
            2.0 * self.omega2 - self.omega1
        }
    }

    pub fn alpha_sq(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// Temporal half-width of the envelope, `σ / cos θ`.
    pub fn envelope_width(&self) -> f64 {
        self.sigma / self.theta.cos()
    }
}

/// `Δ − Ω₁ + b²σ sin θ`, the effective detuning seen by the atoms.
pub fn effective_detuning(delta: f64, omega1: f64, b: f64, sigma: f64, theta: f64) -> f64 {
    delta - omega1 + b * b * sigma * theta.sin()
}

/// Atomic mixing amplitude `α = a²σ² / (a²σ² − i D σ/Γ)`.
///
/// This is the branch under which the Bloch equations close; the other sign
/// of `i` is the complex conjugate and leaves |α| unchanged.
pub fn alpha_closed_form(
    a: f64,
    b: f64,
    sigma: f64,
    theta: f64,
    omega1: f64,
    delta: f64,
    gamma_bg: f64,
) -> Complex64 {
    let x = a * a * sigma * sigma;
    let d = effective_detuning(delta, omega1, b, sigma, theta);
    Complex64::new(x, 0.0) / Complex64::new(x, -d * sigma / gamma_bg)
}

/// Γ from population normalization, `Γ² = (1 − |α|² cos²θ)/(1 − |α|²)`.
pub fn gamma_from_alpha_sq(alpha_sq: f64, theta: f64) -> Result<f64> {
    if !(alpha_sq < 1.0) {
        return Err(Error::DegenerateAlpha { alpha_sq });
    }
    let c = theta.cos();
    Ok(((1.0 - alpha_sq * c * c) / (1.0 - alpha_sq)).sqrt())
}

/// u from the bright-mode balance: `η₁|α|²/a² + 2β₁Ω₁`.
pub fn u_from_bright(med: &MediumParams, alpha_sq: f64, a: f64, omega1: f64) -> f64 {
    med.eta1 * alpha_sq / (a * a) + 2.0 * med.beta1 * omega1
}

/// u from the grey-mode balance written with Ω₁: `η₂|α|²/a² + 2β₂Ω₁`.
pub fn u_from_grey_omega1(med: &MediumParams, alpha_sq: f64, a: f64, omega1: f64) -> f64 {
    med.eta2 * alpha_sq / (a * a) + 2.0 * med.beta2 * omega1
}

/// u from the grey-mode balance written with Ω₂ and θ:
/// `2β₂Ω₂ + (b² − 2a²)γ₂σ sin θ + η₂|α|²/a²`.
pub fn u_from_grey_theta(
    med: &MediumParams,
    alpha_sq: f64,
    a: f64,
    b: f64,
    sigma: f64,
    theta: f64,
) -> f64 {
    2.0 * med.beta2 * med.omega2
        + (b * b - 2.0 * a * a) * med.gamma2 * sigma * theta.sin()
        + med.eta2 * alpha_sq / (a * a)
}

/// z-phase rate of the grey mode, `γ₂b² + β₂Ω₂²`.
pub fn p2_closed_form(med: &MediumParams, b: f64) -> f64 {
    med.gamma2 * b * b + med.beta2 * med.omega2 * med.omega2
}

/// z-phase rate of the bright mode:
/// `η₁|α|²D/(a⁴σ²) + 2γ₁b² + β₁(Ω₁² − cos²θ/σ²)`.
pub fn p1_closed_form(
    med: &MediumParams,
    alpha_sq: f64,
    a: f64,
    b: f64,
    sigma: f64,
    theta: f64,
    omega1: f64,
) -> f64 {
    let d = effective_detuning(med.delta, omega1, b, sigma, theta);
    let c = theta.cos();
    alpha_sq * med.eta1 * d / (a.powi(4) * sigma * sigma)
        + 2.0 * b * b * med.gamma1
        + med.beta1 * (omega1 * omega1 - c * c / (sigma * sigma))
}

/// Ω₁ demanded by equal group velocities of the two modes.
pub fn omega1_from_velocity_match(med: &MediumParams, alpha_sq: f64, a: f64) -> f64 {
    (alpha_sq / (a * a)) * (med.eta2 - med.eta1) / (2.0 * (med.beta1 - med.beta2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub tol: f64,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// Residuals of the algebraic identities tying a solution to its medium.
///
/// Residuals are absolute except the velocity agreement, which is relative
/// to |u|.
pub fn check_solution_identities(
    sol: &SolitonSolution,
    med: &MediumParams,
    tol: f64,
) -> IdentityReport {
    let (a, b, sigma, theta) = (sol.a, sol.b, sol.sigma, sol.theta);
    let alpha_sq = sol.alpha_sq();
    let c = theta.cos();
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64| {
        let residual = if residual.is_nan() {
            f64::INFINITY
        } else {
            residual
        };
        checks.push(IdentityCheck {
            name: name.to_string(),
            residual,
            passed: residual <= tol,
        });
    };

    push(
        "amplitude_balance",
        (a * a - b * b - 1.0 / (sigma * sigma)).abs(),
    );
    push(
        "frequency_offset",
        (sol.signs.eps_offset.value() * theta.sin() - sigma * (sol.omega1 - med.omega2)).abs(),
    );
    let alpha_cf = alpha_closed_form(a, b, sigma, theta, sol.omega1, med.delta, sol.gamma_bg);
    push("alpha_closed_form", (sol.alpha - alpha_cf).norm());
    push(
        "background_norm",
        (sol.gamma_bg * sol.gamma_bg - (1.0 - alpha_sq * c * c) / (1.0 - alpha_sq)).abs(),
    );
    push("re_alpha", (sol.alpha.re - alpha_sq).abs());
    let (e10e, e10f) = if med.gamma1 != 0.0 && med.gamma2 != 0.0 {
        (
            (2.0 * med.beta1 / (med.gamma1 * sigma * sigma) + a * a - 2.0 * b * b).abs(),
            (2.0 * med.beta2 / (med.gamma2 * sigma * sigma) + 2.0 * a * a - b * b).abs(),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    push("kerr_balance_g", e10e);
    push("kerr_balance_big_g", e10f);
    push(
        "sum_rule",
        sum_rule_residual(med.beta1, med.gamma1, med.beta2, med.gamma2)
            .map(f64::abs)
            .unwrap_or(f64::INFINITY),
    );
    let u_c = u_from_bright(med, alpha_sq, a, sol.omega1);
    let u_d = u_from_grey_omega1(med, alpha_sq, a, sol.omega1);
    let u_11 = u_from_grey_theta(med, alpha_sq, a, b, sigma, theta);
    let spread = [u_c, u_d, u_11, sol.u]
        .iter()
        .flat_map(|x| [u_c, u_d, u_11, sol.u].map(|y| (x - y).abs()))
        .fold(0.0, f64::max);
    push("u_agreement", spread / sol.u.abs().max(f64::MIN_POSITIVE));
    IdentityReport { tol, checks }
}

/// Time window and z-stepping of a simulation.
///
/// The t-grid is periodic: `t_k = t_min + k·dt` for `k < nt`, with
/// `dt = (t_max − t_min)/nt`, so `t_max` itself is the first image point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
    pub dz: f64,
    pub z_end: f64,
    pub apod_fraction: f64,
}

/// Minimum window, in units of σ/cos θ.
pub const MIN_WINDOW_WIDTHS: f64 = 20.0;
/// Fraction of the window (centred) used for comparisons.
pub const CENTRAL_FRACTION: f64 = 0.6;

impl SimGrid {
    /// Window of `widths·σ/cos θ` plus the distance the pulse travels by
    /// `z_end`, centred on the mid-run position.
    pub fn for_solution(
        sol: &SolitonSolution,
        nt: usize,
        widths: f64,
        dz: f64,
        z_end: f64,
    ) -> Self {
        let travel = sol.u * z_end;
        let half = 0.5 * (widths * sol.envelope_width() + travel.abs());
        let centre = 0.5 * travel;
        SimGrid {
            t_min: centre - half,
            t_max: centre + half,
            nt,
            dz,
            z_end,
            apod_fraction: 0.1,
        }
    }

    /// The default desk-scale grid: nt = 2048, dz = 1e−3, z_end = 3.
    pub fn default_for(sol: &SolitonSolution) -> Self {
        Self::for_solution(sol, 2048, 24.0, 1e-3, 3.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("grid: {m}")));
        if self.nt < 16 {
            return bad("nt must be at least 16");
        }
        if !(self.t_max > self.t_min) {
            return bad("t_max must exceed t_min");
        }
        if !(self.dz > 0.0) {
            return bad("dz must be positive");
        }
        if !(self.z_end >= 0.0) {
            return bad("z_end must be non-negative");
        }
        if !(0.0..0.5).contains(&self.apod_fraction) {
            return bad("apod_fraction must lie in [0, 0.5)");
        }
        Ok(())
    }

    /// Check the window holds the soliton core.
    pub fn validate_for(&self, sol: &SolitonSolution) -> Result<()> {
        self.validate()?;
        let needed = MIN_WINDOW_WIDTHS * sol.envelope_width();
        if self.t_max - self.t_min < needed {
            return Err(Error::InvalidParameter(format!(
                "grid: window {} narrower than {needed} (20·σ/cos θ)",
                self.t_max - self.t_min
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / self.nt as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.nt).map(|k| self.t_min + k as f64 * dt).collect()
    }

    pub fn steps(&self) -> usize {
        (self.z_end / self.dz).round() as usize
    }

    /// Index range of the centred comparison window.
    pub fn central_range(&self) -> std::ops::Range<usize> {
        central_range(self.nt, CENTRAL_FRACTION)
    }
}

/// Centred index range covering `fraction` of `n` samples.
pub fn central_range(n: usize, fraction: f64) -> std::ops::Range<usize> {
    let margin = ((1.0 - fraction) * 0.5 * n as f64).round() as usize;
    margin..n - margin
}

/// Complex samples of the five fields on the t-grid at one z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub z: f64,
    pub g: Vec<Complex64>,
    #[serde(rename = "G")]
    pub big_g: Vec<Complex64>,
    pub zeta1: Vec<Complex64>,
    pub zeta2: Vec<Complex64>,
    pub zeta3: Vec<Complex64>,
}

impl FieldState {
    pub fn zeros(n: usize, z: f64) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); n];
        FieldState {
            z,
            g: zero.clone(),
            big_g: zero.clone(),
            zeta1: zero.clone(),
            zeta2: zero.clone(),
            zeta3: zero,
        }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn check_lengths(&self) -> Result<()> {
        let n = self.g.len();
        for row in [&self.big_g, &self.zeta1, &self.zeta2, &self.zeta3] {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> [&[Complex64]; 5] {
        [&self.g, &self.big_g, &self.zeta1, &self.zeta2, &self.zeta3]
    }

    pub fn is_finite(&self) -> bool {
        self.rows()
            .iter()
            .all(|row| row.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// Largest pointwise departure of `|ζ₁|²+|ζ₂|²+|ζ₃|²` from one.
    pub fn population_max_error(&self) -> f64 {
        self.zeta1
            .iter()
            .zip(&self.zeta2)
            .zip(&self.zeta3)
            .map(|((z1, z2), z3)| (z1.norm_sqr() + z2.norm_sqr() + z3.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Check `theta` lies in `[0, π/2)`.
pub fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta = {theta} outside [0, π/2)"
        )));
    }
    Ok(())
}

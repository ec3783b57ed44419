//! Self-consistent parameters of the grey-bright pair for a given medium and
//! blackness angle θ, and the resulting velocity curve u(θ).
//!
//! The amplitudes are fixed by the medium up to the width σ:
//! `a²σ² = 2 + 2β₁/γ₁`, `b²σ² = 1 + 2β₁/γ₁`. For a trial σ the frequency
//! shift follows from `sin θ = σ(Ω₁ − Ω₂)`, the pair (α, Γ) from a fixed
//! point, and σ itself from the requirement that both modes travel with the
//! same u. That last condition is a scalar equation in σ, solved by
//! bracketing and Brent's method.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    alpha_closed_form, check_solution_identities, check_theta, gamma_from_alpha_sq,
    omega1_from_velocity_match, p1_closed_form, p2_closed_form, u_from_bright, validate_medium,
    MediumParams, SignConvention, SolitonSolution, ALGEBRAIC_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub root_tol: f64,
    pub sigma_bracket: (f64, f64),
    pub root_max_iter: usize,
    /// Convention recorded on the solution; only `eps_offset` affects the algebra.
    pub signs: SignConvention,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            fp_tol: 1e-12,
            fp_max_iter: 10_000,
            root_tol: 1e-12,
            sigma_bracket: (0.1, 100.0),
            root_max_iter: 200,
            signs: SignConvention::CALIBRATED,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.sigma_bracket;
        if !(self.fp_tol > 0.0 && self.root_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "solver tolerances must be positive".into(),
            ));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "sigma_bracket ({lo}, {hi}) must satisfy 0 < lo < hi"
            )));
        }
        if self.fp_max_iter == 0 || self.root_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `(a²σ², b²σ²)` fixed by the dispersion/Kerr balance.
pub fn amplitude_products(med: &MediumParams) -> Result<(f64, f64)> {
    let report = validate_medium(med, ALGEBRAIC_TOL);
    if !report.valid {
        return Err(Error::InvalidParameter(format!(
            "medium fails validation: {report:?}"
        )));
    }
    let ratio = med.beta1 / med.gamma1;
    let x = 2.0 + 2.0 * ratio;
    let y = 1.0 + 2.0 * ratio;
    if !(y > 0.0) {
        return Err(Error::NoSolitonRegime { y });
    }
    Ok((x, y))
}

/// Fixed point of α(Γ) and Γ(|α|²) starting from Γ = 1.
///
/// Switches to 0.5 damping as soon as successive Γ updates change sign.
pub fn solve_alpha_gamma(
    a: f64,
    b: f64,
    sigma: f64,
    theta: f64,
    omega1: f64,
    delta: f64,
    cfg: &SolverConfig,
) -> Result<(Complex64, f64)> {
    if !(a > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "a = {a} and sigma = {sigma} must be positive"
        )));
    }
    let mut gamma_bg = 1.0;
    let mut alpha = alpha_closed_form(a, b, sigma, theta, omega1, delta, gamma_bg);
    let mut damping = 1.0;
    let mut last_step = 0.0f64;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.fp_max_iter {
        let target = gamma_from_alpha_sq(alpha.norm_sqr(), theta)?;
        let step = target - gamma_bg;
        if step * last_step < 0.0 {
            damping = 0.5;
        }
        last_step = step;
        let next_gamma = gamma_bg + damping * step;
        let next_alpha = alpha_closed_form(a, b, sigma, theta, omega1, delta, next_gamma);
        change = (next_gamma - gamma_bg)
            .abs()
            .max((next_alpha - alpha).norm());
        gamma_bg = next_gamma;
        alpha = next_alpha;
        if !gamma_bg.is_finite() || gamma_bg > 1e12 {
            return Err(Error::DegenerateAlpha {
                alpha_sq: alpha.norm_sqr(),
            });
        }
        if change < cfg.fp_tol {
            // Final Γ consistent with the returned α.
            let gamma_bg = gamma_from_alpha_sq(alpha.norm_sqr(), theta)?;
            return Ok((alpha, gamma_bg));
        }
    }
    Err(Error::FixedPointNotConverged {
        iterations: cfg.fp_max_iter,
        last_change: change,
    })
}

/// Solution at a fixed σ, without imposing the velocity match. Also returns
/// the residual `Ω₁ − Ω₁(velocity match)` of that constraint.
pub fn solve_at_sigma(
    med: &MediumParams,
    theta: f64,
    sigma: f64,
    cfg: &SolverConfig,
) -> Result<(SolitonSolution, f64)> {
    check_theta(theta)?;
    let (x, y) = amplitude_products(med)?;
    let trial = Trial::new(med, theta, sigma, x, y, cfg)?;
    let residual = trial.residual(med);
    Ok((trial.into_solution(med, cfg), residual))
}

struct Trial {
    a: f64,
    b: f64,
    sigma: f64,
    theta: f64,
    omega1: f64,
    alpha: Complex64,
    gamma_bg: f64,
}

impl Trial {
    fn new(
        med: &MediumParams,
        theta: f64,
        sigma: f64,
        x: f64,
        y: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let a = x.sqrt() / sigma;
        let b = y.sqrt() / sigma;
        let omega1 = med.omega2 + cfg.signs.eps_offset.value() * theta.sin() / sigma;
        let (alpha, gamma_bg) = solve_alpha_gamma(a, b, sigma, theta, omega1, med.delta, cfg)?;
        Ok(Trial {
            a,
            b,
            sigma,
            theta,
            omega1,
            alpha,
            gamma_bg,
        })
    }

    fn residual(&self, med: &MediumParams) -> f64 {
        self.omega1 - omega1_from_velocity_match(med, self.alpha.norm_sqr(), self.a)
    }

    fn into_solution(self, med: &MediumParams, cfg: &SolverConfig) -> SolitonSolution {
        let alpha_sq = self.alpha.norm_sqr();
        SolitonSolution {
            a: self.a,
            b: self.b,
            sigma: self.sigma,
            theta: self.theta,
            u: u_from_bright(med, alpha_sq, self.a, self.omega1),
            p1: p1_closed_form(
                med,
                alpha_sq,
                self.a,
                self.b,
                self.sigma,
                self.theta,
                self.omega1,
            ),
            p2: p2_closed_form(med, self.b),
            omega1: self.omega1,
            omega2: med.omega2,
            alpha: self.alpha,
            gamma_bg: self.gamma_bg,
            signs: cfg.signs,
        }
    }
}

const BRACKET_SAMPLES: usize = 256;

/// Solve the full self-consistent system for blackness angle `theta`.
pub fn solve_parameters(
    med: &MediumParams,
    theta: f64,
    cfg: &SolverConfig,
) -> Result<SolitonSolution> {
    cfg.validate()?;
    check_theta(theta)?;
    let (x, y) = amplitude_products(med)?;
    if theta == 0.0 && med.eta1 == med.eta2 {
        return Err(Error::UndeterminedSigma);
    }
    let (lo, hi) = cfg.sigma_bracket;
    let r = |sigma: f64| -> Option<f64> {
        Trial::new(med, theta, sigma, x, y, cfg)
            .ok()
            .map(|t| t.residual(med))
            .filter(|v| v.is_finite())
    };
    let (s0, s1) = bracket_log(lo, hi, &r).ok_or(Error::NoSelfConsistentSigma { lo, hi })?;
    let sigma = brent(s0, s1, cfg.root_tol, cfg.root_max_iter, |s| {
        r(s).ok_or(Error::NoSelfConsistentSigma { lo, hi })
    })?;
    let sol = Trial::new(med, theta, sigma, x, y, cfg)?.into_solution(med, cfg);
    let report = check_solution_identities(&sol, med, ALGEBRAIC_TOL);
    if let Some(fail) = report.first_failure() {
        return Err(Error::InconsistentSolution {
            identity: fail.name.clone(),
            residual: fail.residual,
        });
    }
    Ok(sol)
}

/// Convenience inverse: the θ ∈ (0, π/2) whose self-consistent width is
/// `sigma`.
pub fn solve_theta_for_sigma(
    med: &MediumParams,
    sigma: f64,
    cfg: &SolverConfig,
) -> Result<SolitonSolution> {
    cfg.validate()?;
    let (x, y) = amplitude_products(med)?;
    let r = |theta: f64| -> Option<f64> {
        Trial::new(med, theta, sigma, x, y, cfg)
            .ok()
            .map(|t| t.residual(med))
            .filter(|v| v.is_finite())
    };
    let hi = FRAC_PI_2 * (1.0 - 1e-9);
    let (t0, t1) = bracket_lin(1e-9, hi, &r).ok_or(Error::NoSelfConsistentTheta { sigma })?;
    let theta = brent(t0, t1, 1e-14, cfg.root_max_iter, |t| {
        r(t).ok_or(Error::NoSelfConsistentTheta { sigma })
    })?;
    let sol = Trial::new(med, theta, sigma, x, y, cfg)?.into_solution(med, cfg);
    let report = check_solution_identities(&sol, med, ALGEBRAIC_TOL);
    if let Some(fail) = report.first_failure() {
        return Err(Error::InconsistentSolution {
            identity: fail.name.clone(),
            residual: fail.residual,
        });
    }
    Ok(sol)
}

/// θ = 0 partner of a grey solution: same width and amplitudes, Ω₁ = Ω₂.
///
/// When η₁ ≠ η₂ this is not an exact solution (the two modes want different
/// velocities); u is taken from the bright-mode balance. The second value is
/// the velocity-match residual.
pub fn dark_counterpart(
    grey: &SolitonSolution,
    med: &MediumParams,
    cfg: &SolverConfig,
) -> Result<(SolitonSolution, f64)> {
    solve_at_sigma(med, 0.0, grey.sigma, cfg)
}

fn bracket_log(lo: f64, hi: f64, f: &impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let ratio = (hi / lo).ln();
    let points = (0..=BRACKET_SAMPLES)
        .map(|k| lo * (ratio * k as f64 / BRACKET_SAMPLES as f64).exp())
        .collect::<Vec<_>>();
    bracket_points(&points, f)
}

fn bracket_lin(lo: f64, hi: f64, f: &impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let points = (0..=BRACKET_SAMPLES)
        .map(|k| lo + (hi - lo) * k as f64 / BRACKET_SAMPLES as f64)
        .collect::<Vec<_>>();
    bracket_points(&points, f)
}

fn bracket_points(points: &[f64], f: &impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let mut prev: Option<(f64, f64)> = None;
    for &p in points {
        let Some(v) = f(p) else {
            prev = None;
            continue;
        };
        if v == 0.0 {
            return Some((p, p));
        }
        if let Some((q, w)) = prev {
            if w.signum() != v.signum() {
                return Some((q, p));
            }
        }
        prev = Some((p, v));
    }
    None
}

/// Brent's method on a sign-changing bracket.
fn brent(
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    if a == b {
        return Ok(a);
    }
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..max_iter {
        if fb.abs() < tol || (b - a).abs() < 4.0 * f64::EPSILON * b.abs() {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let outside = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0
        };
        if outside || slow {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityPoint {
    pub u: f64,
    pub sigma: f64,
    pub omega1: f64,
    pub alpha_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityRow {
    pub theta: f64,
    pub point: std::result::Result<VelocityPoint, String>,
}

/// One solve per θ, sorted by θ. Failures stay in the table as error rows.
pub fn velocity_curve(med: &MediumParams, thetas: &[f64], cfg: &SolverConfig) -> Vec<VelocityRow> {
    let mut sorted = thetas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted
        .par_iter()
        .map(|&theta| VelocityRow {
            theta,
            point: solve_parameters(med, theta, cfg)
                .map(|s| VelocityPoint {
                    u: s.u,
                    sigma: s.sigma,
                    omega1: s.omega1,
                    alpha_sq: s.alpha_sq(),
                })
                .map_err(|e| e.to_string()),
        })
        .collect()
}

pub const VELOCITY_CSV_HEADER: &str = "theta,u,sigma,omega1,alpha_sq,status";

/// CSV body (header included, no metadata) for a velocity table.
pub fn velocity_csv(rows: &[VelocityRow]) -> String {
    let mut out = String::from(VELOCITY_CSV_HEADER);
    out.push('\n');
    for row in rows {
        match &row.point {
            Ok(p) => out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},ok\n",
                row.theta, p.u, p.sigma, p.omega1, p.alpha_sq
            )),
            Err(e) => out.push_str(&format!(
                "{:.17e},nan,nan,nan,nan,\"error: {}\"\n",
                row.theta,
                e.replace('"', "'")
            )),
        }
    }
    out
}

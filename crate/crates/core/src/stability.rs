//! Linearization of the phase-factored system about the soliton.
//!
//! With `g = g̃e^{i(p₁z−Ω₁t)}`, `G = G̃e^{i(p₂z−Ω₂t)}`,
//! `ζ₁ = ζ̃₁e^{i(p₁z−Ω₁t)}`, `ζ₂ = ζ̃₂e^{i((p₁−p₂)z−(Ω₁−Ω₂)t)}`, `ζ₃ = ζ̃₃`,
//! the tilde fields obey
//!
//! ```text
//! ∂z g̃ = −ip₁g̃ − iβ₁(∂t² − 2iΩ₁∂t − Ω₁²)g̃ + iγ₁(|g̃|² + 2|G̃|²)g̃ + iη₁ζ̃₃*ζ̃₁
//! ∂z G̃ = −ip₂G̃ − iβ₂(∂t² − 2iΩ₂∂t − Ω₂²)G̃ + iγ₂(|G̃|² + 2|g̃|²)G̃ + iη₂ζ̃₂*ζ̃₁
//! ∂t ζ̃₁ = i(Ω₁ − Δ)ζ̃₁ + iG̃ζ̃₂ + ig̃ζ̃₃
//! ∂t ζ̃₂ = i(Ω₁ − Ω₂)ζ̃₂ + iG̃*ζ̃₁
//! ∂t ζ̃₃ = ig̃*ζ̃₁
//! ```
//!
//! and [`LinearizedOperator::apply`] is the real-linear map taking a
//! perturbation (δg, δG, δζ₁, δζ₂, δζ₃) to the first-order change of these
//! five rates. Conjugate entries make it real-linear only.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::model::{central_range, FieldState, MediumParams, SimGrid, SolitonSolution};
use crate::spectral::Spectrum;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Five complex rows over the t-grid: (δg, δG, δζ₁, δζ₂, δζ₃), or the
/// matching rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationField {
    pub rows: [Vec<Complex64>; 5],
}

impl PerturbationField {
    pub fn zeros(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        PerturbationField {
            rows: [z.clone(), z.clone(), z.clone(), z.clone(), z],
        }
    }

    pub fn from_state(state: &FieldState) -> Self {
        PerturbationField {
            rows: [
                state.g.clone(),
                state.big_g.clone(),
                state.zeta1.clone(),
                state.zeta2.clone(),
                state.zeta3.clone(),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, n: usize) -> Result<()> {
        for r in &self.rows {
            if r.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        Ok(())
    }

    /// `self + k·other`.
    pub fn axpy(&self, k: f64, other: &PerturbationField) -> PerturbationField {
        let mut out = self.clone();
        for (o, p) in out.rows.iter_mut().zip(&other.rows) {
            for (a, b) in o.iter_mut().zip(p) {
                *a += k * b;
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> PerturbationField {
        PerturbationField::zeros(self.len()).axpy(k, self)
    }
}

/// Coefficient of `G̃²·δG̃*` in the G row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateKerrCoefficient {
    /// γ₂, the coefficient that follows from the G equation.
    Gamma2,
    /// γ₁, kept for comparison.
    Gamma1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityOptions {
    /// Frequency in the ζ₁ diagonal `i(Ω − Δ)`; Ω₁ when unset.
    pub omega33: Option<f64>,
    pub big_g_conj_kerr: ConjugateKerrCoefficient,
    pub taper_fraction: f64,
    pub interior: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            omega33: None,
            big_g_conj_kerr: ConjugateKerrCoefficient::Gamma2,
            taper_fraction: 0.1,
            interior: 0.6,
        }
    }
}

/// The operator bound to one background.
pub struct LinearizedOperator {
    med: MediumParams,
    sol: SolitonSolution,
    omega1: f64,
    omega33: f64,
    conj_kerr: f64,
    spec: Spectrum,
    opts: StabilityOptions,
    background: PerturbationField,
}

impl LinearizedOperator {
    /// Background = tilde fields of `sol` at z = 0 on `grid`.
    pub fn new(
        sol: &SolitonSolution,
        med: &MediumParams,
        grid: &SimGrid,
        opts: &StabilityOptions,
    ) -> Result<Self> {
        grid.validate()?;
        let ans = Ansatz::new(sol);
        let background = PerturbationField::from_state(&ans.eval_tilde(&grid.times(), 0.0));
        Self::with_background(sol, med, grid, opts, background)
    }

    pub fn with_background(
        sol: &SolitonSolution,
        med: &MediumParams,
        grid: &SimGrid,
        opts: &StabilityOptions,
        background: PerturbationField,
    ) -> Result<Self> {
        background.check(grid.nt)?;
        let omega1 = Ansatz::new(sol).omega1();
        Ok(LinearizedOperator {
            med: *med,
            sol: *sol,
            omega1,
            omega33: opts.omega33.unwrap_or(omega1),
            conj_kerr: match opts.big_g_conj_kerr {
                ConjugateKerrCoefficient::Gamma2 => med.gamma2,
                ConjugateKerrCoefficient::Gamma1 => med.gamma1,
            },
            spec: Spectrum::for_grid(grid),
            opts: *opts,
            background,
        })
    }

    pub fn background(&self) -> &PerturbationField {
        &self.background
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        central_range(self.spec.len(), self.opts.interior)
    }

    /// `−i p y − iβ(y_tt − 2iΩy_t − Ω²y)`, the linear part of a field row.
    fn dispersive(&self, y: &[Complex64], p: f64, beta: f64, omega: f64) -> Vec<Complex64> {
        let (d1, d2) = self
            .spec
            .derivatives_nonperiodic(y, 0.0, self.opts.taper_fraction);
        y.iter()
            .zip(d1.iter().zip(&d2))
            .map(|(&v, (&v1, &v2))| {
                -I * p * v - I * beta * (v2 - 2.0 * I * omega * v1 - omega * omega * v)
            })
            .collect()
    }

    /// The five tilde rates at `state`.
    pub fn nonlinear_rates(&self, state: &PerturbationField) -> Result<PerturbationField> {
        state.check(self.spec.len())?;
        let (m, s) = (&self.med, &self.sol);
        let [g, big_g, z1, z2, z3] = &state.rows;
        let mut out = PerturbationField {
            rows: [
                self.dispersive(g, s.p1, m.beta1, self.omega1),
                self.dispersive(big_g, s.p2, m.beta2, s.omega2),
                Vec::new(),
                Vec::new(),
                Vec::new(),
            ],
        };
        for k in 0..self.spec.len() {
            let (pg, pb) = (g[k].norm_sqr(), big_g[k].norm_sqr());
            out.rows[0][k] +=
                I * m.gamma1 * (pg + 2.0 * pb) * g[k] + I * m.eta1 * z3[k].conj() * z1[k];
            out.rows[1][k] +=
                I * m.gamma2 * (pb + 2.0 * pg) * big_g[k] + I * m.eta2 * z2[k].conj() * z1[k];
            out.rows[2].push(
                I * (self.omega1 - m.delta) * z1[k] + I * big_g[k] * z2[k] + I * g[k] * z3[k],
            );
            out.rows[3].push(I * (self.omega1 - s.omega2) * z2[k] + I * big_g[k].conj() * z1[k]);
            out.rows[4].push(I * g[k].conj() * z1[k]);
        }
        Ok(out)
    }

    /// First-order change of the rates under `pert`.
    pub fn apply(&self, pert: &PerturbationField) -> Result<PerturbationField> {
        pert.check(self.spec.len())?;
        let (m, s) = (&self.med, &self.sol);
        let [g, big_g, z1, z2, z3] = &self.background.rows;
        let [dg, dbig, dz1, dz2, dz3] = &pert.rows;
        let mut out = PerturbationField {
            rows: [
                self.dispersive(dg, s.p1, m.beta1, self.omega1),
                self.dispersive(dbig, s.p2, m.beta2, s.omega2),
                Vec::new(),
                Vec::new(),
                Vec::new(),
            ],
        };
        for k in 0..self.spec.len() {
            let (g, bg, a1, a2, a3) = (g[k], big_g[k], z1[k], z2[k], z3[k]);
            let (pg, pb) = (g.norm_sqr(), bg.norm_sqr());
            out.rows[0][k] += I
                * m.gamma1
                * (2.0 * (pg + pb) * dg[k]
                    + g * g * dg[k].conj()
                    + 2.0 * g * bg.conj() * dbig[k]
                    + 2.0 * g * bg * dbig[k].conj())
                + I * m.eta1 * (a3.conj() * dz1[k] + a1 * dz3[k].conj());
            out.rows[1][k] += I
                * m.gamma2
                * (2.0 * (pb + pg) * dbig[k]
                    + 2.0 * bg * g.conj() * dg[k]
                    + 2.0 * bg * g * dg[k].conj())
                + I * self.conj_kerr * bg * bg * dbig[k].conj()
                + I * m.eta2 * (a2.conj() * dz1[k] + a1 * dz2[k].conj());
            out.rows[2].push(
                I * (self.omega33 - m.delta) * dz1[k]
                    + I * bg * dz2[k]
                    + I * a2 * dbig[k]
                    + I * g * dz3[k]
                    + I * a3 * dg[k],
            );
            out.rows[3].push(
                I * (self.omega1 - s.omega2) * dz2[k]
                    + I * bg.conj() * dz1[k]
                    + I * a1 * dbig[k].conj(),
            );
            out.rows[4].push(I * g.conj() * dz1[k] + I * a1 * dg[k].conj());
        }
        Ok(out)
    }

    /// Central-difference directional derivative of the nonlinear rates.
    pub fn finite_difference(
        &self,
        pert: &PerturbationField,
        eps: f64,
    ) -> Result<PerturbationField> {
        let plus = self.nonlinear_rates(&self.background.axpy(eps, pert))?;
        let minus = self.nonlinear_rates(&self.background.axpy(-eps, pert))?;
        Ok(plus.axpy(-1.0, &minus).scale(1.0 / (2.0 * eps)))
    }

    /// Per-row `max|a − b| / max|b|` over the interior.
    pub fn row_errors(&self, a: &PerturbationField, b: &PerturbationField) -> [f64; 5] {
        let range = self.interior();
        let mut out = [0.0; 5];
        for (o, (ra, rb)) in out.iter_mut().zip(a.rows.iter().zip(&b.rows)) {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for k in range.clone() {
                num = num.max((ra[k] - rb[k]).norm());
                den = den.max(rb[k].norm());
            }
            *o = if den > 0.0 { num / den } else { num };
        }
        out
    }

    pub fn jvp_check(&self, pert: &PerturbationField, eps: f64) -> Result<JvpReport> {
        if !(1e-8..=1e-3).contains(&eps) {
            return Err(Error::InvalidParameter(format!(
                "jvp epsilon {eps} outside [1e-8, 1e-3]"
            )));
        }
        let fd = self.finite_difference(pert, eps)?;
        let lin = self.apply(pert)?;
        let rows = self.row_errors(&fd, &lin);
        Ok(JvpReport {
            epsilon: eps,
            rows,
            max: rows.iter().cloned().fold(0.0, f64::max),
        })
    }

    /// Translation mode: apply the operator to `∂t` of the background and
    /// compare with `−u·∂t²` of the field rows and `∂t²` of the atomic rows.
    pub fn zero_mode_check(&self) -> Result<ZeroModeReport> {
        let ans = Ansatz::new(&self.sol);
        let n = self.spec.len();
        let mut pert = PerturbationField::zeros(n);
        let mut expected = PerturbationField::zeros(n);
        for k in 0..n {
            let (d1, d2) = ans.tilde_derivatives(self.spec.t(k), 0.0);
            for r in 0..5 {
                pert.rows[r][k] = d1[r];
                expected.rows[r][k] = if r < 2 { -self.sol.u * d2[r] } else { d2[r] };
            }
        }
        let got = self.apply(&pert)?;
        let rows = self.row_errors(&got, &expected);
        Ok(ZeroModeReport {
            rows,
            max: rows.iter().cloned().fold(0.0, f64::max),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JvpReport {
    pub epsilon: f64,
    pub rows: [f64; 5],
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroModeReport {
    pub rows: [f64; 5],
    pub max: f64,
}

pub fn apply_linearized(
    background: &FieldState,
    sol: &SolitonSolution,
    med: &MediumParams,
    grid: &SimGrid,
    opts: &StabilityOptions,
    pert: &PerturbationField,
) -> Result<PerturbationField> {
    LinearizedOperator::with_background(
        sol,
        med,
        grid,
        opts,
        PerturbationField::from_state(background),
    )?
    .apply(pert)
}

/// Smooth localized random perturbation: a few Gaussian bumps per row with
/// random complex amplitudes, centred in the middle fifth of the window.
pub fn random_perturbation(grid: &SimGrid, width: f64, seed: u64) -> PerturbationField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = grid.times();
    let span = grid.t_max - grid.t_min;
    let mid = 0.5 * (grid.t_min + grid.t_max);
    let mut out = PerturbationField::zeros(grid.nt);
    for row in out.rows.iter_mut() {
        for _ in 0..4 {
            let c = mid + rng.gen_range(-0.1..0.1) * span;
            let w = width * rng.gen_range(0.5..2.0);
            let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            for (v, &t) in row.iter_mut().zip(&times) {
                *v += amp * (-((t - c) / w).powi(2)).exp();
            }
        }
    }
    out
}

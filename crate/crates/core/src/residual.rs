//! Residuals of the full atom-field system evaluated on closed-form fields.
//!
//! t-derivatives are spectral (with the edge-ramp split for non-periodic
//! rows), z-derivatives are Richardson-extrapolated central differences of
//! the closed form. Each equation's residual is reported relative to the
//! largest of its individual terms over the central window.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{sech, Ansatz};
use crate::error::{Error, Result};
use crate::model::{central_range, MediumParams, Sign, SignConvention, SimGrid, SolitonSolution};
use crate::spectral::Spectrum;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Labels of the five equations, in report order.
pub const EQUATIONS: [&str; 5] = ["zeta1", "zeta2", "zeta3", "g", "G"];

/// Default pass threshold on relative residuals.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualOptions {
    /// Propagation distance at which the residuals are evaluated.
    pub z: f64,
    /// Central-difference offset in z (refined once by halving).
    pub delta: f64,
    /// Fraction of the window over which residuals are measured.
    pub interior: f64,
    /// Taper width per side used by the non-periodic derivative.
    pub taper_fraction: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions {
            z: 0.0,
            delta: 1e-4,
            interior: 0.6,
            taper_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationResidual {
    pub equation: String,
    pub max_abs: f64,
    pub l2: f64,
    /// Max-abs of the largest individual term.
    pub scale: f64,
    /// `max_abs / scale` (0 when every term vanishes).
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub signs: SignConvention,
    pub equations: Vec<EquationResidual>,
    pub nt: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub z: f64,
    pub delta: f64,
    pub interior: f64,
}

impl ResidualReport {
    pub fn max_relative(&self) -> f64 {
        self.equations
            .iter()
            .map(|e| e.relative)
            .fold(0.0, f64::max)
    }

    pub fn summed_relative(&self) -> f64 {
        self.equations.iter().map(|e| e.relative).sum()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.equations.iter().all(|e| e.relative < tol)
    }

    pub fn equation(&self, name: &str) -> Option<&EquationResidual> {
        self.equations.iter().find(|e| e.equation == name)
    }

    /// Plain-text table, one line per equation.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8}{:>14}{:>14}{:>14}\n",
            "eq", "max_abs", "l2", "relative"
        );
        for e in &self.equations {
            out.push_str(&format!(
                "{:<8}{:>14.3e}{:>14.3e}{:>14.3e}\n",
                e.equation, e.max_abs, e.l2, e.relative
            ));
        }
        out
    }
}

/// Rows of (g, G, ζ₁, ζ₂, ζ₃) on the time grid.
type Rows = [Vec<Complex64>; 5];

fn sample(times: &[f64], z: f64, f: &(impl Fn(f64, f64) -> [Complex64; 5] + ?Sized)) -> Rows {
    let mut rows: Rows = Default::default();
    for r in rows.iter_mut() {
        r.reserve(times.len());
    }
    for &t in times {
        for (r, v) in rows.iter_mut().zip(f(t, z)) {
            r.push(v);
        }
    }
    rows
}

/// Residuals of the five equations for an arbitrary field evaluator
/// `fields(t, z) → (g, G, ζ₁, ζ₂, ζ₃)` whose envelopes carry the given
/// carrier frequencies.
pub fn system_residuals(
    fields: &(impl Fn(f64, f64) -> [Complex64; 5] + Sync + ?Sized),
    carriers: [f64; 5],
    med: &MediumParams,
    grid: &SimGrid,
    opts: &ResidualOptions,
    signs: SignConvention,
) -> ResidualReport {
    let spec = Spectrum::for_grid(grid);
    let times = grid.times();
    let z = opts.z;
    let f0 = sample(&times, z, fields);
    // z-derivative: Richardson on central differences at δ and δ/2.
    let dz_rows = |d: f64| {
        let p = sample(&times, z + d, fields);
        let m = sample(&times, z - d, fields);
        let mut out: Rows = Default::default();
        for (o, (pp, mm)) in out.iter_mut().zip(p.iter().zip(&m)) {
            *o = pp
                .iter()
                .zip(mm)
                .map(|(a, b)| (a - b) / (2.0 * d))
                .collect();
        }
        out
    };
    let coarse = dz_rows(opts.delta);
    let fine = dz_rows(0.5 * opts.delta);
    let dz: Vec<Vec<Complex64>> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| c.iter().zip(f).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
        .collect();
    let derivs: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..5)
        .map(|k| spec.derivatives_nonperiodic(&f0[k], carriers[k], opts.taper_fraction))
        .collect();
    let [g, big_g, z1, z2, z3] = &f0;
    let range = central_range(grid.nt, opts.interior);
    let d = med.delta;

    let mut acc: Vec<Accumulator> = EQUATIONS.iter().map(|n| Accumulator::new(n)).collect();
    for k in range {
        let (g, bg, a1, a2, a3) = (g[k], big_g[k], z1[k], z2[k], z3[k]);
        let (pg, pb) = (g.norm_sqr(), bg.norm_sqr());
        acc[0].push(&[
            derivs[2].0[k],
            -(-I * d * a1),
            -(I * bg * a2),
            -(I * g * a3),
        ]);
        acc[1].push(&[derivs[3].0[k], -(I * bg.conj() * a1)]);
        acc[2].push(&[derivs[4].0[k], -(I * g.conj() * a1)]);
        acc[3].push(&[
            dz[0][k],
            I * med.beta1 * derivs[0].1[k],
            -(I * med.gamma1 * pg * g),
            -(2.0 * I * med.gamma1 * pb * g),
            -(I * med.eta1 * a3.conj() * a1),
        ]);
        acc[4].push(&[
            dz[1][k],
            I * med.beta2 * derivs[1].1[k],
            -(I * med.gamma2 * pb * bg),
            -(2.0 * I * med.gamma2 * pg * bg),
            -(I * med.eta2 * a2.conj() * a1),
        ]);
    }
    ResidualReport {
        signs,
        equations: acc.into_iter().map(Accumulator::finish).collect(),
        nt: grid.nt,
        t_min: grid.t_min,
        t_max: grid.t_max,
        z,
        delta: opts.delta,
        interior: opts.interior,
    }
}

struct Accumulator {
    name: &'static str,
    max_abs: f64,
    sum_sq: f64,
    count: usize,
    scale: f64,
}

impl Accumulator {
    fn new(name: &'static str) -> Self {
        Accumulator {
            name,
            max_abs: 0.0,
            sum_sq: 0.0,
            count: 0,
            scale: 0.0,
        }
    }

    /// Terms whose sum is the residual.
    fn push(&mut self, terms: &[Complex64]) {
        let r: Complex64 = terms.iter().sum();
        let a = r.norm();
        self.max_abs = self.max_abs.max(a);
        self.sum_sq += a * a;
        self.count += 1;
        for t in terms {
            self.scale = self.scale.max(t.norm());
        }
    }

    fn finish(self) -> EquationResidual {
        let l2 = if self.count > 0 {
            (self.sum_sq / self.count as f64).sqrt()
        } else {
            0.0
        };
        let relative = if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            0.0
        };
        EquationResidual {
            equation: self.name.to_string(),
            max_abs: if self.max_abs.is_nan() {
                f64::INFINITY
            } else {
                self.max_abs
            },
            l2,
            scale: self.scale,
            relative: if relative.is_nan() {
                f64::INFINITY
            } else {
                relative
            },
        }
    }
}

/// Residuals of the closed-form solution under `signs`.
pub fn pde_residuals(
    sol: &SolitonSolution,
    signs: SignConvention,
    med: &MediumParams,
    grid: &SimGrid,
    opts: &ResidualOptions,
) -> ResidualReport {
    let ans = Ansatz::with_signs(sol, signs);
    system_residuals(
        &|t, z| ans.fields_at(t, z),
        ans.carriers(),
        med,
        grid,
        opts,
        signs,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub signs: SignConvention,
    pub report: ResidualReport,
    /// Conventions whose residuals all clear the tolerance.
    pub passing: Vec<SignConvention>,
    /// Summed relative residual of every convention, in scan order.
    pub scan: Vec<(SignConvention, f64)>,
}

/// Scan all 16 conventions; return the best one, or fail if it does not
/// clear `tol`.
pub fn calibrate_signs(
    sol: &SolitonSolution,
    med: &MediumParams,
    grid: &SimGrid,
    opts: &ResidualOptions,
    tol: f64,
) -> Result<Calibration> {
    let reports: Vec<ResidualReport> = SignConvention::all()
        .into_par_iter()
        .map(|s| pde_residuals(sol, s, med, grid, opts))
        .collect();
    let scan: Vec<(SignConvention, f64)> = reports
        .iter()
        .map(|r| (r.signs, r.summed_relative()))
        .collect();
    let passing: Vec<SignConvention> = reports
        .iter()
        .filter(|r| r.passes(tol))
        .map(|r| r.signs)
        .collect();
    let best = reports
        .into_iter()
        .min_by(|a, b| a.summed_relative().total_cmp(&b.summed_relative()))
        .expect("16 conventions");
    if !best.passes(tol) {
        return Err(Error::NoCalibration {
            tol,
            best: best.summed_relative(),
        });
    }
    Ok(Calibration {
        signs: best.signs,
        report: best,
        passing,
        scan,
    })
}

/// Bright-mode phase rate p₁ that best balances the g equation, by linear
/// least squares.
///
/// p₁ enters that equation only through `i·p₁·g` in ∂z g, so with R₀ the
/// residual at p₁ = 0, `p₁ = −Im Σ ḡR₀ / Σ|g|²` over the interior.
/// Evaluated at z = 0, where no other field depends on p₁.
pub fn solve_p1_empirical(
    sol: &SolitonSolution,
    signs: SignConvention,
    med: &MediumParams,
    grid: &SimGrid,
    opts: &ResidualOptions,
) -> f64 {
    let base = SolitonSolution { p1: 0.0, ..*sol };
    let ans = Ansatz::with_signs(&base, signs);
    let spec = Spectrum::for_grid(grid);
    let times = grid.times();
    let carrier = ans.omega1();
    let row =
        |z: f64| -> Vec<Complex64> { times.iter().map(|&t| ans.fields_at(t, z)[0]).collect() };
    let fields: Vec<[Complex64; 5]> = times.iter().map(|&t| ans.fields_at(t, 0.0)).collect();
    let g: Vec<Complex64> = fields.iter().map(|f| f[0]).collect();
    let d = opts.delta;
    let cd = |h: f64| -> Vec<Complex64> {
        row(h)
            .iter()
            .zip(row(-h))
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect()
    };
    let (c1, c2) = (cd(d), cd(0.5 * d));
    let (_, g_tt) = spec.derivatives_nonperiodic(&g, carrier, opts.taper_fraction);
    let (mut num, mut den) = (0.0, 0.0);
    for k in central_range(grid.nt, opts.interior) {
        let [g, big_g, z1, _, z3] = fields[k];
        let g_z = (4.0 * c2[k] - c1[k]) / 3.0;
        let rhs = -I * med.beta1 * g_tt[k]
            + I * med.gamma1 * (g.norm_sqr() + 2.0 * big_g.norm_sqr()) * g
            + I * med.eta1 * z3.conj() * z1;
        let r0 = g_z - rhs;
        num += (g.conj() * r0).im;
        den += g.norm_sqr();
    }
    -num / den
}

/// Ranges of the randomized two-level scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoLevelScan {
    pub samples: usize,
    pub seed: u64,
    pub theta: f64,
    pub b_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub nt: usize,
}

impl Default for TwoLevelScan {
    fn default() -> Self {
        TwoLevelScan {
            samples: 100,
            seed: 7,
            theta: 0.6,
            b_range: (0.05, 1.0),
            sigma_range: (1.0, 10.0),
            nt: 1024,
        }
    }
}

/// One candidate of the reduced (g ≡ 0, ζ₃ ≡ 0) system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelCandidate {
    pub b: f64,
    pub sigma: f64,
    pub theta: f64,
    pub u: f64,
    pub p2: f64,
    pub omega1: f64,
    pub k1: f64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub eps_grey: Sign,
}

impl TwoLevelCandidate {
    /// `G = b(cosθ T + iε sinθ)e^{i(p₂z − Ω₂t)}`,
    /// `ζ₁ = A₁ S e^{i(k₁z − Ω₁t)}`, `ζ₂ = A₂ S e^{i((k₁−p₂)z − (Ω₁−Ω₂)t)}`.
    pub fn fields(&self, omega2: f64, t: f64, z: f64) -> [Complex64; 5] {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let x = (t - self.u * z) * c / self.sigma;
        let (sh, th) = (sech(x), x.tanh());
        let big_g = self.b
            * Complex64::new(c * th, self.eps_grey.value() * s)
            * (I * (self.p2 * z - omega2 * t)).exp();
        let z1 = self.a1 * sh * (I * (self.k1 * z - self.omega1 * t)).exp();
        let z2 = self.a2 * sh * (I * ((self.k1 - self.p2) * z - (self.omega1 - omega2) * t)).exp();
        let zero = Complex64::new(0.0, 0.0);
        [zero, big_g, z1, z2, zero]
    }

    pub fn carriers(&self, omega2: f64) -> [f64; 5] {
        [0.0, omega2, self.omega1, self.omega1 - omega2, 0.0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelReport {
    pub theta: f64,
    pub samples: usize,
    /// Smallest, over candidates, of the largest relative residual.
    pub min_residual: f64,
    pub best: Option<TwoLevelCandidate>,
    pub best_report: Option<ResidualReport>,
}

fn draw_candidate(
    rng: &mut ChaCha8Rng,
    scan: &TwoLevelScan,
    med: &MediumParams,
    tuned: bool,
) -> TwoLevelCandidate {
    let b = rng.gen_range(scan.b_range.0..=scan.b_range.1);
    let sigma = rng.gen_range(scan.sigma_range.0..=scan.sigma_range.1);
    let eps_grey = if rng.gen_bool(0.5) {
        Sign::Plus
    } else {
        Sign::Minus
    };
    let a1 = Complex64::from_polar(
        rng.gen_range(0.05..1.0),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let s = scan.theta.sin();
    if tuned {
        // Closes the ζ₂ equation exactly and the G background phase rate.
        TwoLevelCandidate {
            b,
            sigma,
            theta: scan.theta,
            u: rng.gen_range(-3.0..3.0),
            p2: med.gamma2 * b * b + med.beta2 * med.omega2 * med.omega2,
            omega1: med.omega2 - eps_grey.value() * s / sigma,
            k1: rng.gen_range(-2.0..2.0),
            a1,
            a2: -I * sigma * b * a1,
            eps_grey,
        }
    } else {
        TwoLevelCandidate {
            b,
            sigma,
            theta: scan.theta,
            u: rng.gen_range(-3.0..3.0),
            p2: rng.gen_range(-1.0..1.0),
            omega1: rng.gen_range(-1.0..1.0),
            k1: rng.gen_range(-2.0..2.0),
            a1,
            a2: Complex64::from_polar(
                rng.gen_range(0.05..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ),
            eps_grey,
        }
    }
}

/// Residual scan of grey/tanh G profiles in the two-level reduction.
/// Half the candidates are random, half are tuned to satisfy every balance
/// that can be satisfied.
pub fn two_level_prohibition_check(
    med: &MediumParams,
    scan: &TwoLevelScan,
    opts: &ResidualOptions,
) -> Result<TwoLevelReport> {
    if scan.samples == 0 {
        return Err(Error::InvalidParameter(
            "two-level scan needs samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
    let candidates: Vec<TwoLevelCandidate> = (0..scan.samples)
        .map(|k| draw_candidate(&mut rng, scan, med, k % 2 == 1))
        .collect();
    let reports: Vec<ResidualReport> = candidates
        .par_iter()
        .map(|cand| {
            let width = cand.sigma / cand.theta.cos();
            let half = 12.0 * width;
            let grid = SimGrid {
                t_min: -half,
                t_max: half,
                nt: scan.nt,
                dz: 1e-3,
                z_end: 0.0,
                apod_fraction: 0.1,
            };
            let omega2 = med.omega2;
            system_residuals(
                &|t, z| cand.fields(omega2, t, z),
                cand.carriers(omega2),
                med,
                &grid,
                opts,
                SignConvention::CALIBRATED,
            )
        })
        .collect();
    let (idx, report) = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.max_relative().total_cmp(&b.1.max_relative()))
        .expect("non-empty scan");
    Ok(TwoLevelReport {
        theta: scan.theta,
        samples: scan.samples,
        min_residual: report.max_relative(),
        best: Some(candidates[idx]),
        best_report: Some(report.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_parameters, SolverConfig};

    fn same_sign() -> (SolitonSolution, MediumParams, SimGrid) {
        let med = MediumParams::same_sign_gvd();
        let sol = solve_parameters(&med, 0.60908, &SolverConfig::default()).unwrap();
        let grid = SimGrid::default_for(&sol);
        (sol, med, grid)
    }

    #[test]
    fn calibrated_solution_has_tiny_residuals() {
        let (sol, med, grid) = same_sign();
        let rep = pde_residuals(
            &sol,
            SignConvention::CALIBRATED,
            &med,
            &grid,
            &ResidualOptions::default(),
        );
        assert!(rep.passes(RESIDUAL_TOL), "{}", rep.table());
    }

    #[test]
    fn all_plus_convention_breaks_zeta3_equation() {
        let (sol, med, grid) = same_sign();
        let rep = pde_residuals(
            &sol,
            SignConvention::ALL_PLUS,
            &med,
            &grid,
            &ResidualOptions::default(),
        );
        let r = rep.equation("zeta3").unwrap().relative;
        assert!(r > 0.5, "{}", rep.table());
    }

    #[test]
    fn p2_perturbation_only_moves_big_g_equation() {
        let (sol, med, grid) = same_sign();
        let opts = ResidualOptions::default();
        let base = pde_residuals(&sol, sol.signs, &med, &grid, &opts);
        let mut r = Vec::new();
        for frac in [0.1, 0.2] {
            let pert = SolitonSolution {
                p2: sol.p2 * (1.0 + frac),
                ..sol
            };
            let rep = pde_residuals(&pert, sol.signs, &med, &grid, &opts);
            // ζ₂ carries p₂ in its phase, but |ζ̇₂ − iG*ζ₁| is unchanged.
            for name in ["zeta1", "zeta2", "zeta3", "g"] {
                let a = base.equation(name).unwrap().relative;
                let b = rep.equation(name).unwrap().relative;
                assert!((a - b).abs() < 1e-9, "{name}");
            }
            r.push(rep.equation("G").unwrap().max_abs);
        }
        assert!((r[1] / r[0] - 2.0).abs() < 1e-6, "{r:?}");
        assert!((r[0] - 0.1 * sol.p2 * sol.b).abs() < 1e-6);
    }

    #[test]
    fn translation_in_z_leaves_residuals_unchanged() {
        let (sol, med, grid) = same_sign();
        let z0 = 1.7;
        let shifted = SimGrid {
            t_min: grid.t_min + sol.u * z0,
            t_max: grid.t_max + sol.u * z0,
            ..grid
        };
        let a = pde_residuals(&sol, sol.signs, &med, &grid, &ResidualOptions::default());
        let b = pde_residuals(
            &sol,
            sol.signs,
            &med,
            &shifted,
            &ResidualOptions {
                z: z0,
                ..ResidualOptions::default()
            },
        );
        for (x, y) in a.equations.iter().zip(&b.equations) {
            assert!((x.relative - y.relative).abs() < 1e-9, "{x:?} {y:?}");
        }
    }

    #[test]
    fn empirical_p1_without_coupling() {
        let (sol, mut med, grid) = same_sign();
        med.eta1 = 0.0;
        let sol = SolitonSolution {
            alpha: Complex64::new(0.0, 0.0),
            ..sol
        };
        let p1 = solve_p1_empirical(&sol, sol.signs, &med, &grid, &ResidualOptions::default());
        let c = sol.theta.cos();
        let expected = 2.0 * sol.b * sol.b * med.gamma1
            + med.beta1 * (sol.omega1 * sol.omega1 - c * c / (sol.sigma * sol.sigma));
        assert!(
            (p1 - expected).abs() < 1e-9 * expected.abs().max(1.0),
            "{p1} {expected}"
        );
    }

    #[test]
    fn calibration_rejects_inconsistent_amplitudes() {
        let (sol, med, grid) = same_sign();
        let bad = SolitonSolution { b: sol.a, ..sol };
        let r = calibrate_signs(&bad, &med, &grid, &ResidualOptions::default(), RESIDUAL_TOL);
        assert!(matches!(r, Err(Error::NoCalibration { .. })));
    }

    #[test]
    fn vacuum_is_a_two_level_solution() {
        let med = MediumParams::same_sign_gvd();
        let cand = TwoLevelCandidate {
            b: 0.0,
            sigma: 2.0,
            theta: 0.6,
            u: 0.0,
            p2: 0.0,
            omega1: 0.0,
            k1: 0.0,
            a1: Complex64::new(0.0, 0.0),
            a2: Complex64::new(0.0, 0.0),
            eps_grey: Sign::Plus,
        };
        let grid = SimGrid {
            t_min: -30.0,
            t_max: 30.0,
            nt: 256,
            dz: 1e-3,
            z_end: 0.0,
            apod_fraction: 0.1,
        };
        let rep = system_residuals(
            &|t, z| cand.fields(0.0, t, z),
            cand.carriers(0.0),
            &med,
            &grid,
            &ResidualOptions::default(),
            SignConvention::CALIBRATED,
        );
        assert_eq!(rep.max_relative(), 0.0);
    }
}

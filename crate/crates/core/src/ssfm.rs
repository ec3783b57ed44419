//! Split-step propagation of the two optical modes in z,
//!
//! ```text
//! ∂z g = −iβ₁ g_tt + iγ₁(|g|² + 2|G|²) g + iη₁ ζ₃* ζ₁
//! ∂z G = −iβ₂ G_tt + iγ₂(|G|² + 2|g|²) G + iη₂ ζ₂* ζ₁
//! ```
//!
//! with the atomic rows recomputed from the current fields by the Bloch
//! integrator. One step is Strang-symmetric: half dispersion, Kerr and
//! atomic source terms over the full step, half dispersion, then the edge
//! mask that blends the outer margins back onto the closed-form background.
//!
//! Dispersion acts on the grey mode's non-periodic tanh background through
//! an edge-ramp split (see [`linear_step_ramped`]); the margins are still
//! masked, so what reaches the central window is the interior dynamics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::bloch::{integrate_bloch, BlochOptions, BlochState, BlochTrajectory};
use crate::diagnostics::{shape_deviation, track_extrema, DiagnosticsRecord, RunningFit};
use crate::error::{Error, Result};
use crate::model::{FieldState, MediumParams, SimGrid, SolitonSolution};
use crate::spectral::{power, raised_cosine_mask, EdgeRamp, Spectrum};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// How the atomic rows feeding the source terms are refreshed per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlochRefresh {
    /// No atoms: ζ rows are zero and the Bloch integrator is skipped.
    Off,
    /// One refresh from the fields entering the nonlinear substep. First
    /// order in dz.
    Once,
    /// A second refresh from a half-step predictor, so the frozen rows sit
    /// at the substep midpoint. Second order in dz.
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearScheme {
    /// Plain periodic spectral propagator.
    Periodic,
    /// Edge ramp split off and propagated in closed form.
    EdgeRamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub bloch: BlochOptions,
    pub refresh: BlochRefresh,
    pub linear: LinearScheme,
    pub apodize: bool,
    /// Keep a field snapshot every this many steps (0: first and last only).
    pub snapshot_every: usize,
    /// Diagnostics record every this many steps.
    pub record_every: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            bloch: BlochOptions::default(),
            refresh: BlochRefresh::Midpoint,
            linear: LinearScheme::EdgeRamp,
            apodize: true,
            snapshot_every: 500,
            record_every: 1,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "record_every must be positive".into(),
            ));
        }
        if self.bloch.substeps == 0 {
            return Err(Error::InvalidParameter(
                "bloch substeps must be positive".into(),
            ));
        }
        if !(self.bloch.drift_bound > 0.0) {
            return Err(Error::InvalidParameter(
                "bloch drift bound must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub sol: SolitonSolution,
    pub grid: SimGrid,
    pub snapshots: Vec<FieldState>,
    pub records: Vec<DiagnosticsRecord>,
    pub max_bloch_drift: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldState {
        self.snapshots
            .last()
            .expect("trajectory always holds the initial snapshot")
    }

    pub fn last_record(&self) -> &DiagnosticsRecord {
        self.records
            .last()
            .expect("trajectory always holds the initial record")
    }
}

/// Exact dispersion over `h` for a periodic row: `f̂ ← f̂·e^{iβω²h}`.
pub fn linear_step(spec: &Spectrum, row: &mut [Complex64], beta: f64, h: f64) {
    if h != 0.0 {
        Dispersion::new(spec, beta, h, 0.0, LinearScheme::Periodic).apply(spec, row);
    }
}

/// Dispersion over `h` for a row whose envelope tends to different
/// constants at the two edges.
///
/// With the fitted ramp `R = e^{−iΩt}(m + d·tanh κ(t − t_c))`,
/// `R_tt = −Ω²R + Q` where Q is localized. Writing `f = e^{λz}R + H`
/// with `λ = iβΩ²` leaves H periodic and forced by `−iβQe^{λz}`, which is
/// integrated exactly per Fourier mode.
pub fn linear_step_ramped(spec: &Spectrum, row: &mut [Complex64], beta: f64, h: f64, carrier: f64) {
    if h != 0.0 {
        Dispersion::new(spec, beta, h, carrier, LinearScheme::EdgeRamp).apply(spec, row);
    }
}

/// Precomputed dispersion propagator for a fixed (β, h, Ω).
#[derive(Clone, Debug)]
pub struct Dispersion {
    scheme: LinearScheme,
    beta: f64,
    carrier: f64,
    e_lambda: Complex64,
    e_mu: Vec<Complex64>,
    kernel: Vec<Complex64>,
}

impl Dispersion {
    pub fn new(spec: &Spectrum, beta: f64, h: f64, carrier: f64, scheme: LinearScheme) -> Self {
        let lambda = I * beta * carrier * carrier;
        let e_lambda = (lambda * h).exp();
        let mut e_mu = Vec::with_capacity(spec.len());
        let mut kernel = Vec::with_capacity(spec.len());
        for &w in spec.omega() {
            let mu = I * beta * w * w;
            let em = (mu * h).exp();
            let d = (lambda - mu) * h;
            // ∫₀ʰ e^{μ(h−s)} e^{λs} ds
            let k = if d.norm() < 1e-4 {
                em * h * (1.0 + d / 2.0 + d * d / 6.0 + d * d * d / 24.0)
            } else {
                (e_lambda - em) / (lambda - mu)
            };
            e_mu.push(em);
            kernel.push(k);
        }
        Dispersion {
            scheme,
            beta,
            carrier,
            e_lambda,
            e_mu,
            kernel,
        }
    }

    pub fn apply(&self, spec: &Spectrum, row: &mut [Complex64]) {
        match self.scheme {
            LinearScheme::Periodic => {
                spec.forward(row);
                for (v, e) in row.iter_mut().zip(&self.e_mu) {
                    *v *= e;
                }
                spec.inverse(row);
            }
            LinearScheme::EdgeRamp => {
                let n = spec.len();
                let ramp = EdgeRamp::fit(spec, row, self.carrier);
                let mut force = Vec::with_capacity(n);
                let mut base = Vec::with_capacity(n);
                for (k, v) in row.iter_mut().enumerate() {
                    let t = spec.t(k);
                    let [r, _, d2] = ramp.derivatives(t);
                    base.push(r);
                    *v -= r;
                    force.push(-I * self.beta * (d2 + self.carrier * self.carrier * r));
                }
                spec.forward(row);
                spec.forward(&mut force);
                for ((v, f), (em, k)) in row
                    .iter_mut()
                    .zip(&force)
                    .zip(self.e_mu.iter().zip(&self.kernel))
                {
                    *v = em * *v + k * f;
                }
                spec.inverse(row);
                for (v, r) in row.iter_mut().zip(&base) {
                    *v += self.e_lambda * r;
                }
            }
        }
    }
}

/// Kerr and atomic source terms at one grid point.
fn source_rates(
    g: Complex64,
    big_g: Complex64,
    z1: Complex64,
    z2: Complex64,
    z3: Complex64,
    med: &MediumParams,
) -> (Complex64, Complex64) {
    let (pg, pb) = (g.norm_sqr(), big_g.norm_sqr());
    (
        I * med.gamma1 * (pg + 2.0 * pb) * g + I * med.eta1 * z3.conj() * z1,
        I * med.gamma2 * (pb + 2.0 * pg) * big_g + I * med.eta2 * z2.conj() * z1,
    )
}

/// One classical RK4 step of the pointwise Kerr + source system, with the
/// atomic rows frozen.
pub fn nonlinear_step(
    g: &mut [Complex64],
    big_g: &mut [Complex64],
    zeta: [&[Complex64]; 3],
    med: &MediumParams,
    dz: f64,
) {
    let [z1, z2, z3] = zeta;
    for k in 0..g.len() {
        let (a1, b1, c1) = (z1[k], z2[k], z3[k]);
        let f = |x: Complex64, y: Complex64| source_rates(x, y, a1, b1, c1, med);
        let (x0, y0) = (g[k], big_g[k]);
        let (k1x, k1y) = f(x0, y0);
        let (k2x, k2y) = f(x0 + 0.5 * dz * k1x, y0 + 0.5 * dz * k1y);
        let (k3x, k3y) = f(x0 + 0.5 * dz * k2x, y0 + 0.5 * dz * k2y);
        let (k4x, k4y) = f(x0 + dz * k3x, y0 + dz * k3y);
        g[k] = x0 + dz / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        big_g[k] = y0 + dz / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    }
}

/// Per-step by-products.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    pub bloch_drift: f64,
    pub edge_energy: f64,
}

/// Stepper bound to one solution, medium and grid.
pub struct Propagator {
    med: MediumParams,
    sol: SolitonSolution,
    grid: SimGrid,
    cfg: PropagationConfig,
    spec: Spectrum,
    ansatz: Ansatz,
    mask: Vec<f64>,
    margin: Vec<usize>,
    half_g: Dispersion,
    half_big_g: Dispersion,
}

impl Propagator {
    pub fn new(
        sol: &SolitonSolution,
        med: &MediumParams,
        grid: &SimGrid,
        cfg: &PropagationConfig,
    ) -> Result<Self> {
        grid.validate()?;
        cfg.validate()?;
        if !med.is_finite() {
            return Err(Error::InvalidParameter(
                "medium constants must be finite".into(),
            ));
        }
        let mask = raised_cosine_mask(grid.nt, grid.apod_fraction);
        let margin = (0..grid.nt).filter(|&k| mask[k] < 1.0).collect();
        let spec = Spectrum::for_grid(grid);
        let ansatz = Ansatz::new(sol);
        let [w1, w2, ..] = ansatz.carriers();
        let h = 0.5 * grid.dz;
        let half_g = Dispersion::new(&spec, med.beta1, h, w1, cfg.linear);
        let half_big_g = Dispersion::new(&spec, med.beta2, h, w2, cfg.linear);
        Ok(Propagator {
            med: *med,
            sol: *sol,
            grid: *grid,
            cfg: *cfg,
            spec,
            ansatz,
            mask,
            margin,
            half_g,
            half_big_g,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spec
    }

    /// Half-step dispersion on both modes (`h` must be dz/2).
    fn dispersion(&self, state: &mut FieldState, h: f64) {
        if (h - 0.5 * self.grid.dz).abs() <= 1e-12 * self.grid.dz {
            self.half_g.apply(&self.spec, &mut state.g);
            self.half_big_g.apply(&self.spec, &mut state.big_g);
        } else {
            let [w1, w2, ..] = self.ansatz.carriers();
            Dispersion::new(&self.spec, self.med.beta1, h, w1, self.cfg.linear)
                .apply(&self.spec, &mut state.g);
            Dispersion::new(&self.spec, self.med.beta2, h, w2, self.cfg.linear)
                .apply(&self.spec, &mut state.big_g);
        }
    }

    /// Atomic rows driven by (g, G), started from the closed form at the
    /// left edge.
    pub fn atoms(&self, g: &[Complex64], big_g: &[Complex64], z: f64) -> Result<BlochTrajectory> {
        let [_, _, z1, z2, z3] = self.ansatz.fields_at(self.grid.t_min, z);
        integrate_bloch(
            g,
            big_g,
            self.grid.dt(),
            self.grid.t_min,
            BlochState::new(z1, z2, z3),
            self.med.delta,
            &self.cfg.bloch,
        )
    }

    fn store_atoms(state: &mut FieldState, traj: BlochTrajectory) {
        state.zeta1 = traj.zeta1;
        state.zeta2 = traj.zeta2;
        state.zeta3 = traj.zeta3;
    }

    /// Recompute the atomic rows of `state` from its fields.
    pub fn refresh_atoms(&self, state: &mut FieldState) -> Result<f64> {
        if self.cfg.refresh == BlochRefresh::Off {
            let n = state.len();
            state.zeta1 = vec![Complex64::new(0.0, 0.0); n];
            state.zeta2 = state.zeta1.clone();
            state.zeta3 = state.zeta1.clone();
            return Ok(0.0);
        }
        let traj = self.atoms(&state.g, &state.big_g, state.z)?;
        let drift = traj.max_drift;
        Self::store_atoms(state, traj);
        Ok(drift)
    }

    /// Advance `state` by one dz.
    pub fn step(&self, state: &mut FieldState, z_next: f64) -> Result<StepInfo> {
        let dz = z_next - state.z;
        let z_mid = state.z + 0.5 * dz;
        self.dispersion(state, 0.5 * dz);
        let mut info = StepInfo::default();
        state.z = z_mid;
        match self.cfg.refresh {
            BlochRefresh::Off => {
                self.refresh_atoms(state)?;
                let [z1, z2, z3] = [&state.zeta1, &state.zeta2, &state.zeta3];
                nonlinear_step(&mut state.g, &mut state.big_g, [z1, z2, z3], &self.med, dz);
            }
            BlochRefresh::Once => {
                info.bloch_drift = self.refresh_atoms(state)?;
                let [z1, z2, z3] = [&state.zeta1, &state.zeta2, &state.zeta3];
                nonlinear_step(&mut state.g, &mut state.big_g, [z1, z2, z3], &self.med, dz);
            }
            BlochRefresh::Midpoint => {
                let first = self.atoms(&state.g, &state.big_g, z_mid)?;
                let mut g = state.g.clone();
                let mut big_g = state.big_g.clone();
                let rows = [&first.zeta1[..], &first.zeta2[..], &first.zeta3[..]];
                nonlinear_step(&mut g, &mut big_g, rows, &self.med, 0.5 * dz);
                let mid = self.atoms(&g, &big_g, z_mid)?;
                info.bloch_drift = first.max_drift.max(mid.max_drift);
                let rows = [&mid.zeta1[..], &mid.zeta2[..], &mid.zeta3[..]];
                nonlinear_step(&mut state.g, &mut state.big_g, rows, &self.med, dz);
                Self::store_atoms(state, mid);
            }
        }
        self.dispersion(state, 0.5 * dz);
        state.z = z_next;
        if self.cfg.apodize {
            info.edge_energy = self.apodize(state);
        }
        if !state.g.iter().chain(&state.big_g).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { z: z_next });
        }
        Ok(info)
    }

    /// Blend the margins onto the closed form at `state.z`; returns the
    /// energy of the deviation that was removed.
    fn apodize(&self, state: &mut FieldState) -> f64 {
        let mut removed = 0.0;
        for &k in &self.margin {
            let t = self.grid.t_min + k as f64 * self.grid.dt();
            let [g, big_g, ..] = self.ansatz.fields_at(t, state.z);
            let m = self.mask[k];
            let (dg, db) = (state.g[k] - g, state.big_g[k] - big_g);
            removed += (1.0 - m) * (dg.norm_sqr() + db.norm_sqr());
            state.g[k] = g + m * dg;
            state.big_g[k] = big_g + m * db;
        }
        removed * self.grid.dt()
    }

    fn record(
        &self,
        state: &FieldState,
        info: &StepInfo,
        fit_g: &mut RunningFit,
        fit_big: &mut RunningFit,
    ) -> Result<DiagnosticsRecord> {
        let (dev_g, dev_big_g) = shape_deviation(state, &self.sol, &self.grid, state.z)?;
        let (peak, dip) = track_extrema(state, &self.grid).unwrap_or((f64::NAN, f64::NAN));
        if peak.is_finite() {
            fit_g.push(state.z, peak);
        }
        if dip.is_finite() {
            fit_big.push(state.z, dip);
        }
        let pop = if self.cfg.refresh == BlochRefresh::Off {
            0.0
        } else {
            state.population_max_error()
        };
        Ok(DiagnosticsRecord {
            z: state.z,
            dev_g,
            dev_big_g,
            peak_t_g: peak,
            dip_t_big_g: dip,
            u_meas_g: fit_g.slope(),
            u_meas_big_g: fit_big.slope(),
            power_g: power(&state.g, self.grid.dt()),
            power_big_g: power(&state.big_g, self.grid.dt()),
            pop_norm_max_err: pop,
            edge_energy: info.edge_energy,
        })
    }

    /// Propagate from `init` over the grid's z range.
    pub fn run(&self, init: &FieldState) -> Result<Trajectory> {
        init.check_lengths()?;
        if init.len() != self.grid.nt {
            return Err(Error::LengthMismatch {
                expected: self.grid.nt,
                got: init.len(),
            });
        }
        if !init.is_finite() {
            return Err(Error::NonFinite { z: init.z });
        }
        let z0 = init.z;
        let dz = self.grid.dz;
        let steps = self.grid.steps();
        let mut state = init.clone();
        let mut max_drift = self.refresh_atoms(&mut state)?;
        let (mut fit_g, mut fit_big) = (RunningFit::default(), RunningFit::default());
        let mut records =
            vec![self.record(&state, &StepInfo::default(), &mut fit_g, &mut fit_big)?];
        let mut snapshots = vec![state.clone()];
        for n in 1..=steps {
            let info = self.step(&mut state, z0 + n as f64 * dz)?;
            max_drift = max_drift.max(info.bloch_drift);
            let last = n == steps;
            let snap = last || (self.cfg.snapshot_every > 0 && n % self.cfg.snapshot_every == 0);
            if snap {
                // Atomic rows consistent with the stored fields.
                max_drift = max_drift.max(self.refresh_atoms(&mut state)?);
                snapshots.push(state.clone());
            }
            if last || n % self.cfg.record_every == 0 {
                records.push(self.record(&state, &info, &mut fit_g, &mut fit_big)?);
            }
        }
        Ok(Trajectory {
            sol: self.sol,
            grid: self.grid,
            snapshots,
            records,
            max_bloch_drift: max_drift,
        })
    }
}

pub fn propagate(
    init: &FieldState,
    sol: &SolitonSolution,
    med: &MediumParams,
    grid: &SimGrid,
    cfg: &PropagationConfig,
) -> Result<Trajectory> {
    Propagator::new(sol, med, grid, cfg)?.run(init)
}

/// Relative L2 distance of (g, G) over an index range.
pub fn field_distance(a: &FieldState, b: &FieldState, range: std::ops::Range<usize>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in range {
        num += (a.g[k] - b.g[k]).norm_sqr() + (a.big_g[k] - b.big_g[k]).norm_sqr();
        den += b.g[k].norm_sqr() + b.big_g[k].norm_sqr();
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::eval_solution;
    use crate::solver::{solve_parameters, SolverConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn same_sign() -> (SolitonSolution, MediumParams) {
        let med = MediumParams::same_sign_gvd();
        let sol = solve_parameters(&med, 0.60908, &SolverConfig::default()).unwrap();
        (sol, med)
    }

    #[test]
    fn plane_wave_phase() {
        let n = 128;
        let spec = Spectrum::new(n, -10.0, 20.0 / n as f64);
        let w = spec.omega()[5];
        let (beta, h) = (-0.7, 0.3);
        let mut row: Vec<_> = spec.times().iter().map(|&t| (-I * w * t).exp()).collect();
        let orig = row.clone();
        linear_step(&spec, &mut row, beta, h);
        for (a, b) in row.iter().zip(&orig) {
            assert!((a - b * (I * beta * w * w * h).exp()).norm() < 1e-12);
        }
        // Off-grid carrier: only the ramped step handles it exactly.
        let w = 0.3137;
        let mut row: Vec<_> = spec.times().iter().map(|&t| (-I * w * t).exp()).collect();
        let orig = row.clone();
        linear_step_ramped(&spec, &mut row, beta, h, w);
        for (a, b) in row.iter().zip(&orig) {
            assert!((a - b * (I * beta * w * w * h).exp()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let spec = Spectrum::new(64, 0.0, 0.1);
        let row: Vec<_> = (0..64).map(|k| c(k as f64, -0.5)).collect();
        let mut a = row.clone();
        linear_step(&spec, &mut a, 1.0, 0.0);
        linear_step_ramped(&spec, &mut a, 1.0, 0.0, 0.2);
        assert_eq!(a, row);
    }

    #[test]
    fn gaussian_dispersion_matches_closed_form() {
        // g(0) = e^{−t²/2T²}; under ∂z g = −iβ g_tt,
        // g(z) = (T²/(T² − 2iβz))^{1/2} e^{−t²/(2(T² − 2iβz))}.
        let n = 1024;
        let spec = Spectrum::new(n, -40.0, 80.0 / n as f64);
        let (tw, beta, z) = (1.5, 0.8, 0.9);
        let mut row: Vec<_> = spec
            .times()
            .iter()
            .map(|&t| c((-t * t / (2.0 * tw * tw)).exp(), 0.0))
            .collect();
        linear_step(&spec, &mut row, beta, z);
        let q = c(tw * tw, -2.0 * beta * z);
        let mut err: f64 = 0.0;
        for (k, &t) in spec.times().iter().enumerate() {
            let exact = (c(tw * tw, 0.0) / q).sqrt() * (-t * t / (2.0 * q)).exp();
            err = err.max((row[k] - exact).norm());
        }
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn ramped_step_matches_periodic_for_localized_rows() {
        let n = 512;
        let spec = Spectrum::new(n, -30.0, 60.0 / n as f64);
        let row: Vec<_> = spec
            .times()
            .iter()
            .map(|&t| c(1.0 / t.cosh(), 0.0) * (-I * 0.4 * t).exp())
            .collect();
        let (mut a, mut b) = (row.clone(), row);
        linear_step(&spec, &mut a, -0.25, 0.5);
        linear_step_ramped(&spec, &mut b, -0.25, 0.5, 0.4);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn ramped_step_advances_dark_profile_consistently() {
        // Two half steps equal one full step.
        let n = 1024;
        let spec = Spectrum::new(n, -60.0, 120.0 / n as f64);
        let row: Vec<_> = spec
            .times()
            .iter()
            .map(|&t| c(0.6 * (t / 3.0).tanh(), 0.4) * (-I * 0.2 * t).exp())
            .collect();
        let (mut a, mut b) = (row.clone(), row);
        linear_step_ramped(&spec, &mut a, 0.9, 0.2, 0.2);
        linear_step_ramped(&spec, &mut b, 0.9, 0.1, 0.2);
        linear_step_ramped(&spec, &mut b, 0.9, 0.1, 0.2);
        for k in crate::model::central_range(n, 0.6) {
            assert!((a[k] - b[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn kerr_only_preserves_modulus() {
        let med = MediumParams {
            eta1: 0.0,
            eta2: 0.0,
            ..MediumParams::same_sign_gvd()
        };
        let mut g = vec![c(0.3, 0.1), c(-0.2, 0.5), c(1.0, 0.0)];
        let mut big_g = vec![c(0.1, 0.0), c(0.4, -0.4), c(0.0, 0.2)];
        let (g0, b0) = (g.clone(), big_g.clone());
        let z = vec![c(0.5, 0.5); 3];
        nonlinear_step(&mut g, &mut big_g, [&z, &z, &z], &med, 1e-3);
        for k in 0..3 {
            assert!((g[k].norm() - g0[k].norm()).abs() < 1e-12);
            assert!((big_g[k].norm() - b0[k].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_phase() {
        let med = MediumParams {
            gamma1: 1.0,
            eta1: 0.0,
            eta2: 0.0,
            ..MediumParams::same_sign_gvd()
        };
        let mut g = vec![c(1.0, 0.0)];
        let mut big_g = vec![c(0.0, 0.0)];
        let z = vec![c(0.0, 0.0)];
        nonlinear_step(&mut g, &mut big_g, [&z, &z, &z], &med, 0.1);
        // RK4 on the cubic flow: local error ≈ 1.1e-6 at this step.
        assert!((g[0] - (I * 0.1).exp()).norm() < 2e-6);
    }

    #[test]
    fn decoupled_power_conservation() {
        let (sol, mut med) = same_sign();
        med.eta1 = 0.0;
        med.eta2 = 0.0;
        let grid = SimGrid {
            z_end: 0.2,
            ..SimGrid::default_for(&sol)
        };
        let cfg = PropagationConfig {
            refresh: BlochRefresh::Off,
            linear: LinearScheme::Periodic,
            apodize: false,
            record_every: 50,
            ..PropagationConfig::default()
        };
        let init = eval_solution(&sol, &grid, 0.0);
        let traj = propagate(&init, &sol, &med, &grid, &cfg).unwrap();
        let (first, last) = (traj.records[0], *traj.last_record());
        assert!((last.power_g / first.power_g - 1.0).abs() < 1e-8);
        assert!((last.power_big_g / first.power_big_g - 1.0).abs() < 1e-8);
    }

    #[test]
    fn short_run_tracks_closed_form() {
        let (sol, med) = same_sign();
        let grid = SimGrid {
            nt: 1024,
            z_end: 0.1,
            dz: 2e-3,
            ..SimGrid::default_for(&sol)
        };
        let init = eval_solution(&sol, &grid, 0.0);
        let traj = propagate(&init, &sol, &med, &grid, &PropagationConfig::default()).unwrap();
        let rec = traj.last_record();
        assert!(rec.dev_g < 1e-3 && rec.dev_big_g < 1e-3, "{rec:?}");
        assert!(rec.pop_norm_max_err < 1e-6);
        let exact = eval_solution(&sol, &grid, traj.final_state().z);
        assert!(field_distance(traj.final_state(), &exact, grid.central_range()) < 1e-3);
    }

    #[test]
    fn non_finite_input_rejected() {
        let (sol, med) = same_sign();
        let grid = SimGrid {
            nt: 256,
            z_end: 0.01,
            ..SimGrid::default_for(&sol)
        };
        let mut init = eval_solution(&sol, &grid, 0.0);
        init.g[3] = c(f64::NAN, 0.0);
        assert!(matches!(
            propagate(&init, &sol, &med, &grid, &PropagationConfig::default()),
            Err(Error::NonFinite { .. })
        ));
    }
}

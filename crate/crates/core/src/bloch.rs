//! Atomic amplitudes of the Λ system, marched in t at fixed z:
//!
//! ```text
//! ζ̇₁ = −iΔζ₁ + iGζ₂ + igζ₃
//! ζ̇₂ = iG*ζ₁
//! ζ̇₃ = ig*ζ₁
//! ```
//!
//! Classical RK4 over the sampled field rows; the fields between samples
//! come from Catmull-Rom cubics (at interval midpoints these coincide with
//! four-point Lagrange interpolation).

use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochState {
    pub zeta1: Complex64,
    pub zeta2: Complex64,
    pub zeta3: Complex64,
}

impl BlochState {
    pub fn new(zeta1: Complex64, zeta2: Complex64, zeta3: Complex64) -> Self {
        BlochState {
            zeta1,
            zeta2,
            zeta3,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.zeta1.norm_sqr() + self.zeta2.norm_sqr() + self.zeta3.norm_sqr()
    }
}

impl Add for BlochState {
    type Output = BlochState;
    fn add(self, o: BlochState) -> BlochState {
        BlochState::new(
            self.zeta1 + o.zeta1,
            self.zeta2 + o.zeta2,
            self.zeta3 + o.zeta3,
        )
    }
}

impl Mul<f64> for BlochState {
    type Output = BlochState;
    fn mul(self, k: f64) -> BlochState {
        BlochState::new(self.zeta1 * k, self.zeta2 * k, self.zeta3 * k)
    }
}

impl Mul<Complex64> for BlochState {
    type Output = BlochState;
    fn mul(self, k: Complex64) -> BlochState {
        BlochState::new(self.zeta1 * k, self.zeta2 * k, self.zeta3 * k)
    }
}

/// Time derivative of the lab-frame amplitudes driven by fields (g, G).
pub fn bloch_rhs(state: &BlochState, g: Complex64, big_g: Complex64, delta: f64) -> BlochState {
    BlochState {
        zeta1: -I * delta * state.zeta1 + I * big_g * state.zeta2 + I * g * state.zeta3,
        zeta2: I * big_g.conj() * state.zeta1,
        zeta3: I * g.conj() * state.zeta1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochOptions {
    /// RK4 steps per grid interval (`dt_sub = dt / substeps`).
    pub substeps: usize,
    /// Abort when `| |ζ|²(t) − |ζ|²(t_min) |` exceeds this.
    pub drift_bound: f64,
}

impl Default for BlochOptions {
    fn default() -> Self {
        BlochOptions {
            substeps: 2,
            drift_bound: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlochTrajectory {
    pub zeta1: Vec<Complex64>,
    pub zeta2: Vec<Complex64>,
    pub zeta3: Vec<Complex64>,
    /// Largest norm departure from the initial value over all grid points.
    pub max_drift: f64,
}

/// Catmull-Rom cubic through `p1 → p2`, with neighbours `p0`, `p3`.
#[derive(Clone, Copy)]
struct Cubic([Complex64; 4]);

impl Cubic {
    fn new(p0: Complex64, p1: Complex64, p2: Complex64, p3: Complex64) -> Self {
        Cubic([
            p1,
            0.5 * (p2 - p0),
            0.5 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3),
            0.5 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3),
        ])
    }

    fn at(&self, tau: f64) -> Complex64 {
        let [c0, c1, c2, c3] = self.0;
        c0 + tau * (c1 + tau * (c2 + tau * c3))
    }
}

fn cubic_on(row: &[Complex64], k: usize) -> Cubic {
    let n = row.len();
    let p1 = row[k];
    let p2 = row[k + 1];
    let p0 = if k > 0 { row[k - 1] } else { 2.0 * p1 - p2 };
    let p3 = if k + 2 < n { row[k + 2] } else { 2.0 * p2 - p1 };
    Cubic::new(p0, p1, p2, p3)
}

/// March the amplitudes across the grid from `init` at the first sample.
pub fn integrate_bloch(
    g_row: &[Complex64],
    big_g_row: &[Complex64],
    dt: f64,
    t_min: f64,
    init: BlochState,
    delta: f64,
    opts: &BlochOptions,
) -> Result<BlochTrajectory> {
    let n = g_row.len();
    if big_g_row.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: big_g_row.len(),
        });
    }
    if opts.substeps == 0 {
        return Err(Error::InvalidParameter(
            "bloch substeps must be positive".into(),
        ));
    }
    let mut out = BlochTrajectory {
        zeta1: Vec::with_capacity(n),
        zeta2: Vec::with_capacity(n),
        zeta3: Vec::with_capacity(n),
        max_drift: 0.0,
    };
    if n == 0 {
        return Ok(out);
    }
    let norm0 = init.norm_sqr();
    let mut y = init;
    let push = |out: &mut BlochTrajectory, y: &BlochState| {
        out.zeta1.push(y.zeta1);
        out.zeta2.push(y.zeta2);
        out.zeta3.push(y.zeta3);
    };
    push(&mut out, &y);
    let m = opts.substeps;
    let h = dt / m as f64;
    for k in 0..n.saturating_sub(1) {
        let cg = cubic_on(g_row, k);
        let cbig = cubic_on(big_g_row, k);
        for j in 0..m {
            let tau0 = j as f64 / m as f64;
            let tau_mid = (j as f64 + 0.5) / m as f64;
            let tau1 = (j + 1) as f64 / m as f64;
            let (g0, b0) = (cg.at(tau0), cbig.at(tau0));
            let (gm, bm) = (cg.at(tau_mid), cbig.at(tau_mid));
            let (g1, b1) = (cg.at(tau1), cbig.at(tau1));
            let k1 = bloch_rhs(&y, g0, b0, delta);
            let k2 = bloch_rhs(&(y + k1 * (0.5 * h)), gm, bm, delta);
            let k3 = bloch_rhs(&(y + k2 * (0.5 * h)), gm, bm, delta);
            let k4 = bloch_rhs(&(y + k3 * h), g1, b1, delta);
            y = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let drift = (y.norm_sqr() - norm0).abs();
        if !(drift <= opts.drift_bound) {
            return Err(Error::BlochDrift {
                drift,
                bound: opts.drift_bound,
                t: t_min + (k + 1) as f64 * dt,
            });
        }
        out.max_drift = out.max_drift.max(drift);
        push(&mut out, &y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rhs_pure_detuning() {
        let s = BlochState::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let d = bloch_rhs(&s, c(0.0, 0.0), c(0.0, 0.0), 0.8);
        assert_eq!(d, BlochState::new(c(0.0, -0.8), c(0.0, 0.0), c(0.0, 0.0)));
    }

    #[test]
    fn rhs_single_coupling() {
        let s = BlochState::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let d = bloch_rhs(&s, c(0.0, 0.0), c(1.0, 0.0), 0.0);
        assert_eq!(d, BlochState::new(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)));
    }

    #[test]
    fn free_precession() {
        let n = 401;
        let dt = 0.1;
        let zero = vec![c(0.0, 0.0); n];
        let init = BlochState::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let delta = 1.3;
        let opts = BlochOptions {
            substeps: 4,
            ..BlochOptions::default()
        };
        let traj = integrate_bloch(&zero, &zero, dt, -20.0, init, delta, &opts).unwrap();
        for k in 0..n {
            let exact = (-I * delta * (k as f64 * dt)).exp();
            assert!((traj.zeta1[k] - exact).norm() < 1e-6);
            assert_eq!(traj.zeta2[k], c(0.0, 0.0));
        }
        assert!(traj.max_drift < 1e-7);
    }

    #[test]
    fn initial_phase_factors_out() {
        let n = 200;
        let dt = 0.05;
        let g: Vec<_> = (0..n).map(|k| c((k as f64 * 0.03).sin(), 0.2)).collect();
        let big_g: Vec<_> = (0..n).map(|k| c(0.4, (k as f64 * 0.02).cos())).collect();
        let init = BlochState::new(c(0.1, 0.0), c(0.2, 0.3), c(0.0, 0.9));
        let opts = BlochOptions::default();
        let a = integrate_bloch(&g, &big_g, dt, 0.0, init, 1.0, &opts).unwrap();
        let ph = Complex64::from_polar(1.0, 0.7);
        let b = integrate_bloch(&g, &big_g, dt, 0.0, init * ph, 1.0, &opts).unwrap();
        for k in 0..n {
            assert!((a.zeta1[k] * ph - b.zeta1[k]).norm() < 1e-14);
            assert!((a.zeta3[k] * ph - b.zeta3[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn drift_bound_aborts() {
        let n = 50;
        let g = vec![c(3.0, 0.0); n];
        let init = BlochState::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        let opts = BlochOptions {
            substeps: 1,
            drift_bound: 1e-15,
        };
        let r = integrate_bloch(&g, &g, 0.5, 0.0, init, 0.0, &opts);
        assert!(matches!(r, Err(Error::BlochDrift { .. })));
    }

    #[test]
    fn length_mismatch() {
        let r = integrate_bloch(
            &[c(0.0, 0.0); 3],
            &[c(0.0, 0.0); 4],
            0.1,
            0.0,
            BlochState::default(),
            0.0,
            &BlochOptions::default(),
        );
        assert!(matches!(r, Err(Error::LengthMismatch { .. })));
    }
}

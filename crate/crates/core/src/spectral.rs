//! FFT plumbing on the periodic t-grid.
//!
//! DFT convention: forward kernel `e^{−iωt}`, so `∂t ↔ iω` and a field
//! `e^{−iΩt}` sits at `ω = −Ω`.
//!
//! Fields with a non-vanishing background (the tanh mode, ζ₃) are not
//! periodic. [`Spectrum::derivatives_nonperiodic`] splits off a smooth tanh
//! ramp matched to the two edge values, differentiates the ramp exactly,
//! tapers the remainder to zero over the outer margins and differentiates it
//! spectrally. Results are exact (to spectral accuracy) wherever the taper
//! equals one.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Ramp steepness: the tanh ramp saturates this many widths before each edge.
const RAMP_WIDTHS_PER_HALF_WINDOW: f64 = 20.0;

#[derive(Clone)]
pub struct Spectrum {
    n: usize,
    dt: f64,
    t0: f64,
    omega: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectrum")
            .field("n", &self.n)
            .field("dt", &self.dt)
            .field("t0", &self.t0)
            .finish()
    }
}

impl Spectrum {
    pub fn new(n: usize, t0: f64, dt: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let span = n as f64 * dt;
        let omega = (0..n)
            .map(|k| {
                let k = if k <= n / 2 {
                    k as f64
                } else {
                    k as f64 - n as f64
                };
                2.0 * PI * k / span
            })
            .collect();
        Spectrum {
            n,
            dt,
            t0,
            omega,
            fwd,
            inv,
        }
    }

    pub fn for_grid(grid: &crate::model::SimGrid) -> Self {
        Self::new(grid.nt, grid.t_min, grid.dt())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.t(k)).collect()
    }

    /// Angular frequencies in FFT order.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Normalized inverse.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Spectral derivative of a periodic sample row. The Nyquist bin is
    /// dropped for odd orders.
    pub fn derivative(&self, f: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        for (k, (v, &w)) in buf.iter_mut().zip(&self.omega).enumerate() {
            if order % 2 == 1 && self.n.is_multiple_of(2) && k == self.n / 2 {
                *v = Complex64::new(0.0, 0.0);
            } else {
                *v *= (I * w).powu(order);
            }
        }
        self.inverse(&mut buf);
        buf
    }

    /// First and second t-derivatives of a possibly non-periodic row whose
    /// envelope `f·e^{iΩt}` tends to constants at both edges.
    ///
    /// Valid where the taper of width `taper_fraction` (per side) is one.
    pub fn derivatives_nonperiodic(
        &self,
        f: &[Complex64],
        carrier: f64,
        taper_fraction: f64,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let ramp = EdgeRamp::fit(self, f, carrier);
        let taper = smooth_taper(self.n, taper_fraction);
        let rem: Vec<Complex64> = (0..self.n)
            .map(|k| taper[k] * (f[k] - ramp.value(self.t(k))))
            .collect();
        let d1 = self.derivative(&rem, 1);
        let d2 = self.derivative(&rem, 2);
        let mut out1 = Vec::with_capacity(self.n);
        let mut out2 = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let [_, r1, r2] = ramp.derivatives(self.t(k));
            out1.push(d1[k] + r1);
            out2.push(d2[k] + r2);
        }
        (out1, out2)
    }
}

/// `e^{−iΩt}·(m + d·tanh(κ(t − t_c)))` fitted to a row's two edge samples.
#[derive(Clone, Copy, Debug)]
pub struct EdgeRamp {
    pub carrier: f64,
    pub mean: Complex64,
    pub half_jump: Complex64,
    pub centre: f64,
    pub kappa: f64,
}

impl EdgeRamp {
    pub fn fit(spec: &Spectrum, f: &[Complex64], carrier: f64) -> Self {
        let n = spec.len();
        let (t_first, t_last) = (spec.t(0), spec.t(n - 1));
        let centre = 0.5 * (t_first + t_last);
        let kappa = RAMP_WIDTHS_PER_HALF_WINDOW / (0.5 * (t_last - t_first));
        let left = f[0] * (I * carrier * t_first).exp();
        let right = f[n - 1] * (I * carrier * t_last).exp();
        let edge = (kappa * (t_last - centre)).tanh();
        EdgeRamp {
            carrier,
            mean: 0.5 * (left + right),
            half_jump: 0.5 * (right - left) / edge,
            centre,
            kappa,
        }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        self.derivatives(t)[0]
    }

    /// Value and first two t-derivatives.
    pub fn derivatives(&self, t: f64) -> [Complex64; 3] {
        let x = self.kappa * (t - self.centre);
        let th = x.tanh();
        let s2 = 1.0 - th * th;
        let env = self.mean + self.half_jump * th;
        let env1 = self.half_jump * (self.kappa * s2);
        let env2 = self.half_jump * (-2.0 * self.kappa * self.kappa * s2 * th);
        let w = self.carrier;
        let phase = (-I * w * t).exp();
        [
            env * phase,
            (env1 - I * w * env) * phase,
            (env2 - 2.0 * I * w * env1 - w * w * env) * phase,
        ]
    }

    /// The localized part of `∂t²` of the ramp: everything except the
    /// plane-wave term `−Ω²·ramp`.
    pub fn localized_second_derivative(&self, t: f64) -> Complex64 {
        let [v, _, d2] = self.derivatives(t);
        d2 + self.carrier * self.carrier * v
    }
}

/// C∞ window: 0 at both edges, 1 on the interior, smooth-step transitions
/// over `fraction·n` samples per side.
pub fn smooth_taper(n: usize, fraction: f64) -> Vec<f64> {
    let m = (fraction * n as f64).round() as usize;
    (0..n)
        .map(|k| {
            let d = k.min(n - 1 - k);
            if m == 0 || d >= m {
                1.0
            } else {
                smooth_step(d as f64 / m as f64)
            }
        })
        .collect()
}

fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Raised-cosine mask over the outer `fraction` of the window.
pub fn raised_cosine_mask(n: usize, fraction: f64) -> Vec<f64> {
    let m = (fraction * n as f64).round() as usize;
    (0..n)
        .map(|k| {
            let d = k.min(n - 1 - k);
            if m == 0 || d >= m {
                1.0
            } else {
                0.5 * (1.0 - (PI * d as f64 / m as f64).cos())
            }
        })
        .collect()
}

/// Trapezoid-free sum `Σ|f|²·dt` over a periodic grid.
pub fn power(f: &[Complex64], dt: f64) -> f64 {
    f.iter().map(|v| v.norm_sqr()).sum::<f64>() * dt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn derivative_of_gaussian() {
        let spec = Spectrum::new(256, -20.0, 40.0 / 256.0);
        let f: Vec<_> = spec
            .times()
            .iter()
            .map(|&t| c((-t * t / 2.0).exp()))
            .collect();
        let d1 = spec.derivative(&f, 1);
        let d2 = spec.derivative(&f, 2);
        for (k, t) in spec.times().into_iter().enumerate() {
            let g = (-t * t / 2.0).exp();
            assert!((d1[k] - c(-t * g)).norm() < 1e-12);
            assert!((d2[k] - c((t * t - 1.0) * g)).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_sits_at_minus_carrier() {
        let n = 64;
        let spec = Spectrum::new(n, 0.0, 1.0);
        let w = 2.0 * PI * 3.0 / n as f64;
        let mut f: Vec<_> = spec.times().iter().map(|&t| (-I * w * t).exp()).collect();
        spec.forward(&mut f);
        let peak = (0..n)
            .max_by(|&a, &b| f[a].norm().total_cmp(&f[b].norm()))
            .unwrap();
        assert!((spec.omega()[peak] + w).abs() < 1e-12);
    }

    #[test]
    fn nonperiodic_tanh_derivatives() {
        let n = 1024;
        let spec = Spectrum::new(n, -50.0, 100.0 / n as f64);
        let carrier = 0.3;
        let (b, th) = (0.7, 0.4f64);
        let field = |t: f64| {
            let x = t / 3.0;
            Complex64::new(b * th.cos() * x.tanh(), b * th.sin()) * (-I * carrier * t).exp()
        };
        let f: Vec<_> = spec.times().iter().map(|&t| field(t)).collect();
        let (d1, d2) = spec.derivatives_nonperiodic(&f, carrier, 0.1);
        let h = 1e-4;
        for k in central_range(n) {
            let t = spec.t(k);
            let fd1 = (field(t + h) - field(t - h)) / (2.0 * h);
            let fd2 = (field(t + h) - 2.0 * field(t) + field(t - h)) / (h * h);
            assert!((d1[k] - fd1).norm() < 1e-7, "{k}");
            assert!((d2[k] - fd2).norm() < 1e-5, "{k}");
        }
    }

    fn central_range(n: usize) -> std::ops::Range<usize> {
        crate::model::central_range(n, 0.6)
    }

    #[test]
    fn tapers_are_bounded_and_flat_inside() {
        for mask in [smooth_taper(100, 0.1), raised_cosine_mask(100, 0.1)] {
            assert_eq!(mask[0], 0.0);
            assert_eq!(mask[99], 0.0);
            assert!(mask[10..90].iter().all(|&v| v == 1.0));
            assert!(mask.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(smooth_taper(10, 0.0).iter().all(|&v| v == 1.0));
    }
}

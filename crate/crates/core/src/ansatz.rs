//! Closed-form soliton fields.
//!
//! With `X = (t − uz)·cos θ/σ`, `S = sech X`, `T = tanh X`:
//!
//! ```text
//! g  = a cosθ S                         e^{i(p₁z − Ω₁t)}
//! G  = b (cosθ T + i ε_grey sinθ)       e^{i(p₂z − Ω₂t)}
//! ζ₁ = ε₁ · iα cosθ/(aσ) S              e^{i(p₁z − Ω₁t)}
//! ζ₂ = ε₂ · (−α b cosθ/a) S             e^{i((p₁−p₂)z − (Ω₁−Ω₂)t)}
//! ζ₃ = α cosθ T + (1 − α) Γ
//! ```
//!
//! The "tilde" fields are the same expressions without the exponentials.

use num_complex::Complex64;

use crate::model::{FieldState, SignConvention, SimGrid, SolitonSolution};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `sech x`, overflow-safe for large |x|.
pub fn sech(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 350.0 {
        2.0 * (-ax).exp()
    } else {
        1.0 / ax.cosh()
    }
}

/// Pointwise evaluator of the ansatz under a fixed sign convention.
#[derive(Clone, Copy, Debug)]
pub struct Ansatz {
    sol: SolitonSolution,
    signs: SignConvention,
    omega1: f64,
    cos: f64,
    sin: f64,
}

impl Ansatz {
    pub fn new(sol: &SolitonSolution) -> Self {
        Self::with_signs(sol, sol.signs)
    }

    pub fn with_signs(sol: &SolitonSolution, signs: SignConvention) -> Self {
        Ansatz {
            sol: *sol,
            signs,
            omega1: sol.omega1_under(&signs),
            cos: sol.theta.cos(),
            sin: sol.theta.sin(),
        }
    }

    pub fn solution(&self) -> &SolitonSolution {
        &self.sol
    }

    pub fn signs(&self) -> SignConvention {
        self.signs
    }

    /// Ω₁ seen by this convention.
    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    /// Carrier frequencies of (g, G, ζ₁, ζ₂, ζ₃).
    pub fn carriers(&self) -> [f64; 5] {
        let o2 = self.sol.omega2;
        [self.omega1, o2, self.omega1, self.omega1 - o2, 0.0]
    }

    /// Envelope argument `X = (t − uz)cosθ/σ`.
    pub fn envelope_arg(&self, t: f64, z: f64) -> f64 {
        (t - self.sol.u * z) * self.cos / self.sol.sigma
    }

    /// Coefficients `[c_g, c_G0, c_G1, c_ζ1, c_ζ2, c_ζ3T, c_ζ3const]` so that
    /// g̃ = c_g S, G̃ = c_G1 T + c_G0, ζ̃₁ = c_ζ1 S, ζ̃₂ = c_ζ2 S,
    /// ζ̃₃ = c_ζ3T T + c_ζ3const.
    fn coefficients(&self) -> [Complex64; 7] {
        let s = &self.sol;
        let (c, sn) = (self.cos, self.sin);
        let e1 = self.signs.eps_zeta1.value();
        let e2 = self.signs.eps_zeta2.value();
        let eg = self.signs.eps_grey.value();
        [
            Complex64::new(s.a * c, 0.0),
            Complex64::new(0.0, s.b * eg * sn),
            Complex64::new(s.b * c, 0.0),
            e1 * I * s.alpha * (c / (s.a * s.sigma)),
            e2 * (-s.alpha * (s.b * c / s.a)),
            s.alpha * c,
            (1.0 - s.alpha) * s.gamma_bg,
        ]
    }

    /// Phase-factored fields at envelope argument X.
    pub fn tilde_at_arg(&self, x: f64) -> [Complex64; 5] {
        let [cg, cg0, cg1, cz1, cz2, cz3t, cz30] = self.coefficients();
        let (s, t) = (sech(x), x.tanh());
        [cg * s, cg1 * t + cg0, cz1 * s, cz2 * s, cz3t * t + cz30]
    }

    pub fn tilde_at(&self, t: f64, z: f64) -> [Complex64; 5] {
        self.tilde_at_arg(self.envelope_arg(t, z))
    }

    /// First and second t-derivatives of the tilde fields.
    pub fn tilde_derivatives(&self, t: f64, z: f64) -> ([Complex64; 5], [Complex64; 5]) {
        let x = self.envelope_arg(t, z);
        let k = self.cos / self.sol.sigma;
        let (s, th) = (sech(x), x.tanh());
        // d/dX: S' = −ST, S'' = S(1 − 2S²), T' = S², T'' = −2S²T.
        let s1 = -s * th * k;
        let s2 = s * (1.0 - 2.0 * s * s) * k * k;
        let t1 = s * s * k;
        let t2 = -2.0 * s * s * th * k * k;
        let [cg, _, cg1, cz1, cz2, cz3t, _] = self.coefficients();
        (
            [cg * s1, cg1 * t1, cz1 * s1, cz2 * s1, cz3t * t1],
            [cg * s2, cg1 * t2, cz1 * s2, cz2 * s2, cz3t * t2],
        )
    }

    /// Lab-frame fields `(g, G, ζ₁, ζ₂, ζ₃)` at (t, z).
    pub fn fields_at(&self, t: f64, z: f64) -> [Complex64; 5] {
        let [g, big_g, z1, z2, z3] = self.tilde_at(t, z);
        let s = &self.sol;
        let ph1 = (I * (s.p1 * z - self.omega1 * t)).exp();
        let ph2 = (I * (s.p2 * z - s.omega2 * t)).exp();
        let ph12 = (I * ((s.p1 - s.p2) * z - (self.omega1 - s.omega2) * t)).exp();
        [g * ph1, big_g * ph2, z1 * ph1, z2 * ph12, z3]
    }

    pub fn eval(&self, times: &[f64], z: f64) -> FieldState {
        self.collect(times, z, |t| self.fields_at(t, z))
    }

    pub fn eval_tilde(&self, times: &[f64], z: f64) -> FieldState {
        self.collect(times, z, |t| self.tilde_at(t, z))
    }

    fn collect(&self, times: &[f64], z: f64, f: impl Fn(f64) -> [Complex64; 5]) -> FieldState {
        let mut out = FieldState::zeros(0, z);
        for &t in times {
            let [g, big_g, z1, z2, z3] = f(t);
            out.g.push(g);
            out.big_g.push(big_g);
            out.zeta1.push(z1);
            out.zeta2.push(z2);
            out.zeta3.push(z3);
        }
        out
    }
}

/// Closed-form fields on the grid at distance z, under `sol.signs`.
pub fn eval_solution(sol: &SolitonSolution, grid: &SimGrid, z: f64) -> FieldState {
    Ansatz::new(sol).eval(&grid.times(), z)
}

/// Total phase change of G's envelope across the dip, from t = −∞ to +∞,
/// in (−π, π].
pub fn grey_phase_jump(sol: &SolitonSolution) -> f64 {
    let (c, s) = (sol.theta.cos(), sol.theta.sin());
    let eg = sol.signs.eps_grey.value();
    let right = Complex64::new(c, eg * s).arg();
    let left = Complex64::new(-c, eg * s).arg();
    wrap_phase(right - left)
}

/// Wrap into (−π, π].
pub fn wrap_phase(p: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = p.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

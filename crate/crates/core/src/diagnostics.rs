//! Propagation quality measures: shape retention against the translated
//! closed form, peak/dip tracking and velocity fits, phase profiles, and the
//! dark-versus-grey comparison.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::model::{FieldState, SimGrid, SolitonSolution};

pub const DIAGNOSTICS_CSV_HEADER: &str =
    "z,dev_g,dev_G,u_meas_g,u_meas_G,power_g,power_G,pop_norm_max_err,edge_energy";

/// Default first-crossing thresholds for dev_G.
pub const DEV_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.10];

/// Step sizes above this get a convergence caveat in comparisons.
pub const COARSE_DZ: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub z: f64,
    pub dev_g: f64,
    #[serde(rename = "dev_G")]
    pub dev_big_g: f64,
    pub peak_t_g: f64,
    #[serde(rename = "dip_t_G")]
    pub dip_t_big_g: f64,
    pub u_meas_g: f64,
    #[serde(rename = "u_meas_G")]
    pub u_meas_big_g: f64,
    pub power_g: f64,
    #[serde(rename = "power_G")]
    pub power_big_g: f64,
    pub pop_norm_max_err: f64,
    pub edge_energy: f64,
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(DIAGNOSTICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.z,
            r.dev_g,
            r.dev_big_g,
            r.u_meas_g,
            r.u_meas_big_g,
            r.power_g,
            r.power_big_g,
            r.pop_norm_max_err,
            r.edge_energy
        );
    }
    out
}

/// Relative L2 deviation of |g| and |G| from the closed form at z, over the
/// central window.
pub fn shape_deviation(
    numeric: &FieldState,
    sol: &SolitonSolution,
    grid: &SimGrid,
    z: f64,
) -> Result<(f64, f64)> {
    numeric.check_lengths()?;
    if numeric.len() != grid.nt {
        return Err(Error::LengthMismatch {
            expected: grid.nt,
            got: numeric.len(),
        });
    }
    let ans = Ansatz::new(sol);
    let (mut num_g, mut den_g, mut num_big, mut den_big) = (0.0, 0.0, 0.0, 0.0);
    for k in grid.central_range() {
        let t = grid.t_min + k as f64 * grid.dt();
        let [g, big_g, ..] = ans.tilde_at(t, z);
        num_g += (numeric.g[k].norm() - g.norm()).powi(2);
        den_g += g.norm_sqr();
        num_big += (numeric.big_g[k].norm() - big_g.norm()).powi(2);
        den_big += big_g.norm_sqr();
    }
    let rel = |n: f64, d: f64| if d > 0.0 { (n / d).sqrt() } else { n.sqrt() };
    Ok((rel(num_g, den_g), rel(num_big, den_big)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

/// Sub-grid location of the extremum of `values` within `range`, by a
/// parabola through the extreme sample and its neighbours.
///
/// Fails when the extremum sits on the range boundary or when another
/// sample well away from it comes within 0.1% of the peak-to-valley
/// contrast.
pub fn locate_extremum(
    times: &[f64],
    values: &[f64],
    range: std::ops::Range<usize>,
    kind: Extremum,
    z: f64,
) -> Result<f64> {
    let what = match kind {
        Extremum::Max => "peak",
        Extremum::Min => "dip",
    };
    let ambiguous = Error::AmbiguousExtremum { what, z };
    if range.len() < 3 || range.end > values.len() || times.len() != values.len() {
        return Err(ambiguous);
    }
    let key = |v: f64| match kind {
        Extremum::Max => v,
        Extremum::Min => -v,
    };
    let (mut best, mut worst) = (range.start, range.start);
    for k in range.clone() {
        if key(values[k]) > key(values[best]) {
            best = k;
        }
        if key(values[k]) < key(values[worst]) {
            worst = k;
        }
    }
    if best == range.start || best + 1 == range.end {
        return Err(ambiguous);
    }
    let contrast = (values[best] - values[worst]).abs();
    if !(contrast > 0.0) {
        return Err(ambiguous);
    }
    let guard = (range.len() / 20).max(2);
    let rival = range
        .clone()
        .filter(|&k| k.abs_diff(best) > guard)
        .any(|k| (key(values[best]) - key(values[k])) < 1e-3 * contrast);
    if rival {
        return Err(ambiguous);
    }
    let (fm, f0, fp) = (values[best - 1], values[best], values[best + 1]);
    let curv = fm - 2.0 * f0 + fp;
    let shift = if curv != 0.0 {
        0.5 * (fm - fp) / curv
    } else {
        0.0
    };
    let dt = times[best + 1] - times[best];
    Ok(times[best] + shift.clamp(-0.5, 0.5) * dt)
}

/// Peak of |g|² and dip of |G|² in the central window.
pub fn track_extrema(state: &FieldState, grid: &SimGrid) -> Result<(f64, f64)> {
    let times = grid.times();
    let g2: Vec<f64> = state.g.iter().map(|v| v.norm_sqr()).collect();
    let big2: Vec<f64> = state.big_g.iter().map(|v| v.norm_sqr()).collect();
    let range = grid.central_range();
    let peak = locate_extremum(&times, &g2, range.clone(), Extremum::Max, state.z)?;
    let dip = locate_extremum(&times, &big2, range, Extremum::Min, state.z)?;
    Ok((peak, dip))
}

/// Least-squares line `t = t₀ + u·z`; returns (u, t₀, rms residual).
pub fn fit_line(zs: &[f64], ts: &[f64]) -> Result<(f64, f64, f64)> {
    if zs.len() != ts.len() {
        return Err(Error::LengthMismatch {
            expected: zs.len(),
            got: ts.len(),
        });
    }
    if zs.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: zs.len(),
        });
    }
    let n = zs.len() as f64;
    let zm = zs.iter().sum::<f64>() / n;
    let tm = ts.iter().sum::<f64>() / n;
    let szz: f64 = zs.iter().map(|z| (z - zm).powi(2)).sum();
    let szt: f64 = zs.iter().zip(ts).map(|(z, t)| (z - zm) * (t - tm)).sum();
    if szz == 0.0 {
        return Err(Error::InvalidParameter(
            "velocity fit needs distinct z".into(),
        ));
    }
    let u = szt / szz;
    let t0 = tm - u * zm;
    let rms = (zs
        .iter()
        .zip(ts)
        .map(|(z, t)| (t - t0 - u * z).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((u, t0, rms))
}

/// Incremental version of [`fit_line`] for per-step running estimates.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningFit {
    n: f64,
    sz: f64,
    st: f64,
    szz: f64,
    szt: f64,
}

impl RunningFit {
    pub fn push(&mut self, z: f64, t: f64) {
        self.n += 1.0;
        self.sz += z;
        self.st += t;
        self.szz += z * z;
        self.szt += z * t;
    }

    /// Slope, or NaN with fewer than two distinct points.
    pub fn slope(&self) -> f64 {
        let d = self.n * self.szz - self.sz * self.sz;
        if self.n < 2.0 || d <= 0.0 {
            f64::NAN
        } else {
            (self.n * self.szt - self.sz * self.st) / d
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityFit {
    pub u_g: f64,
    #[serde(rename = "u_G")]
    pub u_big_g: f64,
    pub rms_g: f64,
    #[serde(rename = "rms_G")]
    pub rms_big_g: f64,
}

/// Velocities of the g-peak and G-dip across snapshots.
pub fn measure_velocity(snapshots: &[FieldState], grid: &SimGrid) -> Result<VelocityFit> {
    if snapshots.len() < 3 {
        return Err(Error::TooFewSnapshots {
            needed: 3,
            got: snapshots.len(),
        });
    }
    let mut zs = Vec::with_capacity(snapshots.len());
    let mut peaks = Vec::with_capacity(snapshots.len());
    let mut dips = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let (p, d) = track_extrema(s, grid)?;
        zs.push(s.z);
        peaks.push(p);
        dips.push(d);
    }
    let (u_g, _, rms_g) = fit_line(&zs, &peaks)?;
    let (u_big_g, _, rms_big_g) = fit_line(&zs, &dips)?;
    Ok(VelocityFit {
        u_g,
        u_big_g,
        rms_g,
        rms_big_g,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseOptions {
    pub unwrap: bool,
    /// Remove the plane-wave phase `−Ω·t` of this carrier.
    pub carrier: Option<f64>,
    /// Samples with modulus at or below this are masked.
    pub min_modulus: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            unwrap: true,
            carrier: None,
            min_modulus: 0.0,
        }
    }
}

/// Pointwise phase; masked samples are `None` and unwrapping bridges them.
pub fn extract_phase_masked(
    row: &[Complex64],
    times: &[f64],
    opts: &PhaseOptions,
) -> Result<Vec<Option<f64>>> {
    if row.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: row.len(),
        });
    }
    let mut out = Vec::with_capacity(row.len());
    let mut prev: Option<f64> = None;
    for (v, &t) in row.iter().zip(times) {
        if !(v.norm() > opts.min_modulus) {
            out.push(None);
            continue;
        }
        let v = match opts.carrier {
            Some(w) => v * Complex64::new(0.0, w * t).exp(),
            None => *v,
        };
        let mut p = v.arg();
        if opts.unwrap {
            if let Some(q) = prev {
                p += std::f64::consts::TAU * ((q - p) / std::f64::consts::TAU).round();
            }
        }
        prev = Some(p);
        out.push(Some(p));
    }
    Ok(out)
}

/// Pointwise phase; every sample must clear the modulus mask.
pub fn extract_phase(row: &[Complex64], times: &[f64], opts: &PhaseOptions) -> Result<Vec<f64>> {
    extract_phase_masked(row, times, opts)?
        .into_iter()
        .enumerate()
        .map(|(index, p)| {
            p.ok_or(Error::PhaseMasked {
                index,
                modulus: row[index].norm(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingOrder {
    DarkFirst,
    DarkOnly,
    Simultaneous,
    GreyFirst,
    GreyOnly,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub threshold: f64,
    pub z_dark: Option<f64>,
    pub z_grey: Option<f64>,
    pub order: CrossingOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarkGreyReport {
    pub crossings: Vec<ThresholdCrossing>,
    /// No threshold is crossed first (or only) by the grey run.
    pub dark_never_later: bool,
    pub caveats: Vec<String>,
}

impl DarkGreyReport {
    pub fn crossing(&self, threshold: f64) -> Option<&ThresholdCrossing> {
        self.crossings.iter().find(|c| c.threshold == threshold)
    }

    /// Tab-separated dev_G table, one row per z present in both runs.
    pub fn table(dark: &[DiagnosticsRecord], grey: &[DiagnosticsRecord]) -> String {
        let mut out = String::from("z,dev_G_dark,dev_G_grey\n");
        for (d, g) in dark.iter().zip(grey) {
            let _ = writeln!(out, "{},{},{}", d.z, d.dev_big_g, g.dev_big_g);
        }
        out
    }
}

/// First z at which dev_G exceeds `threshold`.
pub fn first_crossing(records: &[DiagnosticsRecord], threshold: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.dev_big_g > threshold)
        .map(|r| r.z)
}

pub fn compare_dark_grey(
    dark: &[DiagnosticsRecord],
    dz_dark: f64,
    grey: &[DiagnosticsRecord],
    dz_grey: f64,
    thresholds: &[f64],
) -> DarkGreyReport {
    let crossings: Vec<ThresholdCrossing> = thresholds
        .iter()
        .map(|&threshold| {
            let z_dark = first_crossing(dark, threshold);
            let z_grey = first_crossing(grey, threshold);
            let order = match (z_dark, z_grey) {
                (Some(d), Some(g)) if d < g => CrossingOrder::DarkFirst,
                (Some(d), Some(g)) if d > g => CrossingOrder::GreyFirst,
                (Some(_), Some(_)) => CrossingOrder::Simultaneous,
                (Some(_), None) => CrossingOrder::DarkOnly,
                (None, Some(_)) => CrossingOrder::GreyOnly,
                (None, None) => CrossingOrder::Neither,
            };
            ThresholdCrossing {
                threshold,
                z_dark,
                z_grey,
                order,
            }
        })
        .collect();
    let dark_never_later = crossings
        .iter()
        .all(|c| !matches!(c.order, CrossingOrder::GreyFirst | CrossingOrder::GreyOnly));
    let mut caveats = Vec::new();
    for (label, dz) in [("dark", dz_dark), ("grey", dz_grey)] {
        if dz > COARSE_DZ {
            caveats.push(format!(
                "{label} run uses dz = {dz} > {COARSE_DZ}; crossing positions are not converged in dz"
            ));
        }
    }
    DarkGreyReport {
        crossings,
        dark_never_later,
        caveats,
    }
}

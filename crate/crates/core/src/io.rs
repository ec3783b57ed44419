//! Run configuration, built-in presets and artifact writing.
//!
//! Every artifact starts with a metadata header (tool version, config hash,
//! grid, sign convention). Files are staged next to their destination and
//! renamed into place, so readers never see a partial file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{validate_medium, FieldState, MediumParams, SignConvention, SimGrid};
use crate::residual::ResidualOptions;
use crate::solver::SolverConfig;
use crate::ssfm::PropagationConfig;
use crate::stability::StabilityOptions;

pub const TOOL: &str = "greysol";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Angle of the same-sign preset.
pub const SAME_SIGN_THETA: f64 = 0.60908;
/// Angle of the opposite-sign preset.
pub const OPPOSITE_SIGN_THETA: f64 = 0.51291;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    Csv,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Field snapshot every this many z-steps (0: first and last only).
    pub snapshot_every: usize,
    pub format: DumpFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            snapshot_every: 500,
            format: DumpFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JvpSettings {
    pub perturbations: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    pub zero_mode_tolerance: f64,
}

impl Default for JvpSettings {
    fn default() -> Self {
        JvpSettings {
            perturbations: 10,
            epsilon: 1e-5,
            tolerance: 1e-5,
            zero_mode_tolerance: 1e-6,
        }
    }
}

/// One JSON document describing a run. Every field may be omitted; the
/// defaults are the same-sign medium at θ = 0.60908 with grids derived
/// from the solved width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub medium: MediumParams,
    pub theta: f64,
    /// Angles for `sweep-velocity`.
    pub theta_list: Vec<f64>,
    /// Explicit grid; derived from the solution when absent.
    pub grid: Option<SimGrid>,
    pub solver: SolverConfig,
    /// `snapshot_every` here is replaced by `outputs.snapshot_every`.
    pub propagation: PropagationConfig,
    pub residual: ResidualOptions,
    pub stability: StabilityOptions,
    pub jvp: JvpSettings,
    pub outputs: OutputConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            medium: MediumParams::same_sign_gvd(),
            theta: SAME_SIGN_THETA,
            theta_list: Vec::new(),
            grid: None,
            solver: SolverConfig::default(),
            propagation: PropagationConfig::default(),
            residual: ResidualOptions::default(),
            stability: StabilityOptions::default(),
            jvp: JvpSettings::default(),
            outputs: OutputConfig::default(),
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Velocity curve on the opposite-sign medium.
    #[serde(rename = "fig4")]
    Fig4,
    /// Same-sign medium, θ = 0.60908.
    #[serde(rename = "fig5")]
    Fig5,
    /// Opposite-sign medium, θ = 0.51291.
    #[serde(rename = "fig7")]
    Fig7,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig4, Preset::Fig5, Preset::Fig7];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig7 => "fig7",
        }
    }

    /// Overwrite the physical part of `cfg` (medium and angles).
    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Preset::Fig4 => {
                cfg.medium = MediumParams::opposite_sign_gvd();
                cfg.theta = OPPOSITE_SIGN_THETA;
                cfg.theta_list = velocity_thetas();
            }
            Preset::Fig5 => {
                cfg.medium = MediumParams::same_sign_gvd();
                cfg.theta = SAME_SIGN_THETA;
                cfg.theta_list = vec![SAME_SIGN_THETA];
            }
            Preset::Fig7 => {
                cfg.medium = MediumParams::opposite_sign_gvd();
                cfg.theta = OPPOSITE_SIGN_THETA;
                cfg.theta_list = vec![OPPOSITE_SIGN_THETA];
            }
        }
    }

    pub fn config(self) -> RunConfig {
        let mut cfg = RunConfig::default();
        self.apply(&mut cfg);
        cfg
    }
}

/// θ = 0, 0.05, …, 1.55 plus the opposite-sign angle and two points
/// closer to π/2.
pub fn velocity_thetas() -> Vec<f64> {
    let mut out: Vec<f64> = (0..=31).map(|k| 0.05 * k as f64).collect();
    out.extend([OPPOSITE_SIGN_THETA, 1.56, 1.565]);
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if !self.medium.is_finite() {
            return cfg_err("medium: non-finite parameter".into());
        }
        let report = validate_medium(&self.medium, 1e-9);
        if report.equal_gvd || report.zero_kerr {
            return cfg_err(format!("medium: invalid ({report:?})"));
        }
        if !self.theta.is_finite() || self.theta_list.iter().any(|t| !t.is_finite()) {
            return cfg_err("theta: non-finite angle".into());
        }
        if let Some(grid) = &self.grid {
            grid.validate()
                .map_err(|e| Error::Config(format!("grid: {e}")))?;
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        self.propagation
            .validate()
            .map_err(|e| Error::Config(format!("propagation: {e}")))?;
        if !(self.jvp.epsilon > 0.0) {
            return cfg_err("jvp.epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn propagation_config(&self) -> PropagationConfig {
        PropagationConfig {
            snapshot_every: self.outputs.snapshot_every,
            ..self.propagation
        }
    }

    /// SHA-256 of the canonical JSON, ignoring the output directory so the
    /// same run written to two places hashes equal.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.outputs.dir = PathBuf::new();
        let text = serde_json::to_string(&canon).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub convention: SignConvention,
    pub grid: Option<SimGrid>,
}

impl Metadata {
    pub fn new(
        command: &str,
        cfg: &RunConfig,
        convention: SignConvention,
        grid: Option<SimGrid>,
    ) -> Self {
        Metadata {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash: cfg.hash(),
            convention,
            grid,
        }
    }

    /// `# key: value` lines for CSV artifacts.
    pub fn csv_header(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool: {} {}", self.tool, self.version);
        let _ = writeln!(out, "# command: {}", self.command);
        let _ = writeln!(out, "# config_hash: {}", self.config_hash);
        let _ = writeln!(out, "# convention: {}", self.convention);
        match &self.grid {
            Some(g) => {
                let _ = writeln!(
                    out,
                    "# grid: t=[{}, {}) nt={} dz={} z_end={}",
                    g.t_min, g.t_max, g.nt, g.dz, g.z_end
                );
            }
            None => out.push_str("# grid: none\n"),
        }
        out
    }
}

/// JSON artifact: `{"metadata": ..., "data": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document<T> {
    pub metadata: Metadata,
    pub data: T,
}

/// Strip leading `#` lines from a CSV artifact.
pub fn csv_body(text: &str) -> &str {
    let mut rest = text;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, r)| r);
    }
    rest
}

/// Write `bytes` to `dir/name` through a temporary sibling and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let dest = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &dest)?;
    Ok(dest)
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    meta: &Metadata,
    data: &T,
) -> Result<PathBuf> {
    let doc = Document {
        metadata: meta.clone(),
        data,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

pub fn write_csv(dir: &Path, name: &str, meta: &Metadata, body: &str) -> Result<PathBuf> {
    let mut text = meta.csv_header();
    text.push_str(body);
    write_atomic(dir, name, text.as_bytes())
}

pub const FIELD_COLUMNS: [&str; 11] = [
    "t", "g_re", "g_im", "G_re", "G_im", "zeta1_re", "zeta1_im", "zeta2_re", "zeta2_im",
    "zeta3_re", "zeta3_im",
];

/// Layout description written next to a binary field dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryLayout {
    pub file: String,
    pub dtype: String,
    pub order: String,
    pub rows: usize,
    pub columns: Vec<String>,
    pub z: f64,
}

fn field_rows<'a>(state: &'a FieldState, times: &'a [f64]) -> impl Iterator<Item = [f64; 11]> + 'a {
    times.iter().enumerate().map(move |(k, &t)| {
        let r = state.rows().map(|row| row[k]);
        [
            t, r[0].re, r[0].im, r[1].re, r[1].im, r[2].re, r[2].im, r[3].re, r[3].im, r[4].re,
            r[4].im,
        ]
    })
}

pub fn field_csv(state: &FieldState, times: &[f64]) -> String {
    let mut out = FIELD_COLUMNS.join(",");
    out.push('\n');
    for row in field_rows(state, times) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Dump one snapshot as `<stem>.csv`, or as `<stem>.bin` (row-major
/// little-endian f64) plus `<stem>.json`.
pub fn write_field_dump(
    dir: &Path,
    stem: &str,
    state: &FieldState,
    times: &[f64],
    meta: &Metadata,
    format: DumpFormat,
) -> Result<Vec<PathBuf>> {
    state.check_lengths()?;
    if times.len() != state.len() {
        return Err(Error::LengthMismatch {
            expected: state.len(),
            got: times.len(),
        });
    }
    match format {
        DumpFormat::Csv => Ok(vec![write_csv(
            dir,
            &format!("{stem}.csv"),
            meta,
            &field_csv(state, times),
        )?]),
        DumpFormat::Binary => {
            let mut bytes = Vec::with_capacity(times.len() * 11 * 8);
            for row in field_rows(state, times) {
                for v in row {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            let file = format!("{stem}.bin");
            let bin = write_atomic(dir, &file, &bytes)?;
            let layout = BinaryLayout {
                file,
                dtype: "f64le".into(),
                order: "row-major".into(),
                rows: times.len(),
                columns: FIELD_COLUMNS.iter().map(|s| s.to_string()).collect(),
                z: state.z,
            };
            let side = write_json(dir, &format!("{stem}.json"), meta, &layout)?;
            Ok(vec![bin, side])
        }
    }
}

/// Read back a binary dump written by [`write_field_dump`].
pub fn read_binary_dump(bin: &Path) -> Result<(Vec<f64>, FieldState)> {
    let bytes = fs::read(bin)?;
    if bytes.len() % (11 * 8) != 0 {
        return Err(Error::LengthMismatch {
            expected: bytes.len() / 88 * 88,
            got: bytes.len(),
        });
    }
    let n = bytes.len() / 88;
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut state = FieldState::zeros(n, 0.0);
    let mut times = Vec::with_capacity(n);
    for k in 0..n {
        let r = &vals[11 * k..11 * k + 11];
        times.push(r[0]);
        let c = |i: usize| num_complex::Complex64::new(r[i], r[i + 1]);
        state.g[k] = c(1);
        state.big_g[k] = c(3);
        state.zeta1[k] = c(5);
        state.zeta2[k] = c(7);
        state.zeta3[k] = c(9);
    }
    Ok((times, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::eval_solution;
    use crate::solver::solve_parameters;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let err = RunConfig::from_json(r#"{"thetta": 0.5}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("thetta") && err.contains("line 1"), "{err}");
        let err = RunConfig::from_json("{\n \"outputs\": {\"fmt\": \"csv\"}}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("fmt") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn presets_round_trip() {
        for p in Preset::ALL {
            let cfg = p.config();
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        }
        assert!(velocity_thetas()
            .iter()
            .all(|&t| (0.0..std::f64::consts::FRAC_PI_2).contains(&t)));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.outputs.dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_medium_is_a_config_error() {
        let mut cfg = RunConfig::default();
        cfg.medium.beta2 = cfg.medium.beta1;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_header_strips_cleanly() {
        let meta = Metadata::new(
            "solve",
            &RunConfig::default(),
            SignConvention::CALIBRATED,
            None,
        );
        let text = format!("{}a,b\n1,2\n", meta.csv_header());
        assert_eq!(csv_body(&text), "a,b\n1,2\n");
    }

    #[test]
    fn binary_dump_round_trips() {
        let cfg = RunConfig::default();
        let sol = solve_parameters(&cfg.medium, cfg.theta, &cfg.solver).unwrap();
        let grid = SimGrid::for_solution(&sol, 64, 24.0, 1e-3, 0.0);
        let state = eval_solution(&sol, &grid, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let meta = Metadata::new("propagate", &cfg, sol.signs, Some(grid));
        let files = write_field_dump(
            dir.path(),
            "snap",
            &state,
            &grid.times(),
            &meta,
            DumpFormat::Binary,
        )
        .unwrap();
        let (times, back) = read_binary_dump(&files[0]).unwrap();
        assert_eq!(times, grid.times());
        assert_eq!(back.rows(), state.rows());
        let side: Document<BinaryLayout> =
            serde_json::from_str(&fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(side.data.rows, 64);
        assert!(!dir.path().join(".snap.bin.tmp").exists());
    }
}

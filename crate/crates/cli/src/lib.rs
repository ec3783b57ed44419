//! Subcommand implementations behind the `greysol` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use grey_soliton::ansatz::eval_solution;
use grey_soliton::diagnostics::{
    compare_dark_grey, diagnostics_csv, measure_velocity, DarkGreyReport, DiagnosticsRecord,
    VelocityFit, DEV_THRESHOLDS,
};
use grey_soliton::io::{
    write_csv, write_field_dump, write_json, Document, Metadata, Preset, RunConfig,
};
use grey_soliton::model::{check_solution_identities, IdentityReport, ALGEBRAIC_TOL};
use grey_soliton::residual::{
    calibrate_signs, pde_residuals, solve_p1_empirical, Calibration, ResidualReport, RESIDUAL_TOL,
};
use grey_soliton::solver::{dark_counterpart, solve_parameters, velocity_csv, velocity_curve};
use grey_soliton::ssfm::{propagate, Trajectory};
use grey_soliton::stability::{
    random_perturbation, JvpReport, LinearizedOperator, PerturbationField, ZeroModeReport,
};
use grey_soliton::{
    Error, FieldState, MediumParams, Result, SignConvention, SimGrid, SolitonSolution,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    SweepVelocity,
    Verify,
    Propagate,
    Stability,
    CompareDarkGrey,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::SweepVelocity => "sweep-velocity",
            Command::Verify => "verify",
            Command::Propagate => "propagate",
            Command::Stability => "stability",
            Command::CompareDarkGrey => "compare-dark-grey",
        }
    }
}

/// Exit status for an error: 2 config, 3 solver, 4 numerical, 1 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) => 2,
        Error::NoSolitonRegime { .. }
        | Error::FixedPointNotConverged { .. }
        | Error::DegenerateAlpha { .. }
        | Error::NoSelfConsistentSigma { .. }
        | Error::UndeterminedSigma
        | Error::NoSelfConsistentTheta { .. }
        | Error::InconsistentSolution { .. } => 3,
        Error::BlochDrift { .. }
        | Error::NonFinite { .. }
        | Error::NoCalibration { .. }
        | Error::AmbiguousExtremum { .. }
        | Error::TooFewSnapshots { .. }
        | Error::LengthMismatch { .. }
        | Error::PhaseMasked { .. } => 4,
        Error::Io(_) => 1,
    }
}

/// What a subcommand produced: a human summary, files written, and whether
/// its checks passed (a failed check exits 4).
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

/// Body of `solution.json`; `propagate`, `verify` and `stability` accept it
/// back through `--solution`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub medium: MediumParams,
    pub solution: SolitonSolution,
    pub identities: IdentityReport,
}

pub fn read_solution(path: &Path) -> Result<SolutionRecord> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let doc: Document<SolutionRecord> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(doc.data)
}

/// Write each preset's configuration as `<name>.json`.
pub fn write_presets(dir: &Path) -> Result<Vec<PathBuf>> {
    Preset::ALL
        .iter()
        .map(|p| {
            let mut text = serde_json::to_string_pretty(&p.config())?;
            text.push('\n');
            grey_soliton::io::write_atomic(dir, &format!("{}.json", p.name()), text.as_bytes())
        })
        .collect()
}

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    /// Loaded from `--solution` instead of solving.
    pub solution: Option<SolutionRecord>,
    /// Forced convention; a loaded solution otherwise keeps its own.
    pub signs: Option<SignConvention>,
}

impl Run<'_> {
    fn out(&self) -> &Path {
        &self.cfg.outputs.dir
    }

    fn medium(&self) -> MediumParams {
        self.solution.as_ref().map_or(self.cfg.medium, |s| s.medium)
    }

    fn solve(&self) -> Result<SolitonSolution> {
        match &self.solution {
            Some(s) => Ok(self.signs.map_or(s.solution, |c| s.solution.with_signs(c))),
            None => solve_parameters(&self.cfg.medium, self.cfg.theta, &self.cfg.solver),
        }
    }

    fn grid(&self, sol: &SolitonSolution) -> Result<SimGrid> {
        let grid = self.cfg.grid.unwrap_or_else(|| SimGrid::default_for(sol));
        grid.validate_for(sol)?;
        Ok(grid)
    }

    fn meta(&self, cmd: Command, signs: SignConvention, grid: Option<SimGrid>) -> Metadata {
        Metadata::new(cmd.name(), self.cfg, signs, grid)
    }

    pub fn execute(&self, cmd: Command) -> Result<Outcome> {
        match cmd {
            Command::Solve => self.solve_cmd(),
            Command::SweepVelocity => self.sweep(),
            Command::Verify => self.verify(),
            Command::Propagate => self.propagate_cmd(),
            Command::Stability => self.stability(),
            Command::CompareDarkGrey => self.compare(),
        }
    }

    fn solve_cmd(&self) -> Result<Outcome> {
        let med = self.medium();
        let sol = self.solve()?;
        let identities = check_solution_identities(&sol, &med, ALGEBRAIC_TOL);
        let meta = self.meta(Command::Solve, sol.signs, None);
        let record = SolutionRecord {
            medium: med,
            solution: sol,
            identities,
        };
        let file = write_json(self.out(), "solution.json", &meta, &record)?;
        let summary = format!(
            "theta={} sigma={:.8} a={:.8} b={:.8} omega1={:.8} u={:.8} Gamma={:.8} p1={:.8} p2={:.8} |alpha|^2={:.8}\nidentities: max residual {:e} ({})",
            sol.theta,
            sol.sigma,
            sol.a,
            sol.b,
            sol.omega1,
            sol.u,
            sol.gamma_bg,
            sol.p1,
            sol.p2,
            sol.alpha_sq(),
            record.identities.max_residual(),
            if record.identities.all_passed() { "ok" } else { "FAILED" },
        );
        Ok(Outcome {
            summary,
            files: vec![file],
            passed: record.identities.all_passed(),
        })
    }

    fn sweep(&self) -> Result<Outcome> {
        let rows = velocity_curve(&self.cfg.medium, &self.cfg.theta_list, &self.cfg.solver);
        let meta = self.meta(Command::SweepVelocity, self.cfg.solver.signs, None);
        let file = write_csv(self.out(), "velocity.csv", &meta, &velocity_csv(&rows))?;
        let failed = rows.iter().filter(|r| r.point.is_err()).count();
        Ok(Outcome {
            summary: format!("{} angles, {failed} without a soliton", rows.len()),
            files: vec![file],
            passed: true,
        })
    }

    fn verify(&self) -> Result<Outcome> {
        #[derive(Serialize)]
        struct VerifyReport {
            identities: IdentityReport,
            residuals: ResidualReport,
            calibration: Option<Calibration>,
            p1_empirical: f64,
            p1_closed_form: f64,
        }
        let med = self.medium();
        let sol = self.solve()?;
        let grid = self.grid(&sol)?;
        let opts = &self.cfg.residual;
        let residuals = pde_residuals(&sol, sol.signs, &med, &grid, opts);
        let calibration = calibrate_signs(&sol, &med, &grid, opts, RESIDUAL_TOL).ok();
        let report = VerifyReport {
            identities: check_solution_identities(&sol, &med, ALGEBRAIC_TOL),
            p1_empirical: solve_p1_empirical(&sol, sol.signs, &med, &grid, opts),
            p1_closed_form: sol.p1,
            residuals,
            calibration,
        };
        let passed = report.residuals.passes(RESIDUAL_TOL) && report.identities.all_passed();
        let meta = self.meta(Command::Verify, sol.signs, Some(grid));
        let file = write_json(self.out(), "verify.json", &meta, &report)?;

        let mut summary = format!("convention {}\n", sol.signs);
        summary.push_str(&report.residuals.table());
        for eq in &report.residuals.equations {
            if eq.relative >= RESIDUAL_TOL {
                let _ = writeln!(
                    summary,
                    "FLAGGED: {} relative residual {:e}",
                    eq.equation, eq.relative
                );
            }
        }
        match &report.calibration {
            Some(c) => {
                let _ = writeln!(
                    summary,
                    "calibrated convention: {} ({} of 16 pass)",
                    c.signs,
                    c.passing.len()
                );
            }
            None => summary.push_str("calibration: no convention passes\n"),
        }
        let _ = write!(
            summary,
            "p1: empirical {:.12} closed form {:.12}",
            report.p1_empirical, report.p1_closed_form
        );
        Ok(Outcome {
            summary,
            files: vec![file],
            passed,
        })
    }

    fn run_trajectory(&self, sol: &SolitonSolution, grid: &SimGrid) -> Result<Trajectory> {
        let init = eval_solution(sol, grid, 0.0);
        propagate(
            &init,
            sol,
            &self.medium(),
            grid,
            &self.cfg.propagation_config(),
        )
    }

    fn propagate_cmd(&self) -> Result<Outcome> {
        #[derive(Serialize)]
        struct Summary {
            solution: SolitonSolution,
            final_record: DiagnosticsRecord,
            velocity: Option<VelocityFit>,
            max_bloch_drift: f64,
        }
        let sol = self.solve()?;
        let grid = self.grid(&sol)?;
        let traj = self.run_trajectory(&sol, &grid)?;
        let meta = self.meta(Command::Propagate, sol.signs, Some(grid));
        let dir = self.out();
        let mut files = vec![write_csv(
            dir,
            "diagnostics.csv",
            &meta,
            &diagnostics_csv(&traj.records),
        )?];
        let times = grid.times();
        for (k, snap) in traj.snapshots.iter().enumerate() {
            files.extend(write_field_dump(
                dir,
                &format!("snapshot_{k:04}"),
                snap,
                &times,
                &meta,
                self.cfg.outputs.format,
            )?);
        }
        let summary = Summary {
            solution: sol,
            final_record: *traj.last_record(),
            velocity: measure_velocity(&traj.snapshots, &grid).ok(),
            max_bloch_drift: traj.max_bloch_drift,
        };
        files.push(write_json(dir, "propagation.json", &meta, &summary)?);
        let r = &summary.final_record;
        Ok(Outcome {
            summary: format!(
                "z={} dev_g={:.3e} dev_G={:.3e} u_meas_g={:.6} u_meas_G={:.6} u={:.6} bloch_drift={:.1e}",
                r.z, r.dev_g, r.dev_big_g, r.u_meas_g, r.u_meas_big_g, sol.u, traj.max_bloch_drift
            ),
            files,
            passed: true,
        })
    }

    fn stability(&self) -> Result<Outcome> {
        #[derive(Serialize)]
        struct StabilityReport {
            jvp: Vec<JvpReport>,
            zero_mode: ZeroModeReport,
        }
        let sol = self.solve()?;
        let grid = self.grid(&sol)?;
        let op = LinearizedOperator::new(&sol, &self.medium(), &grid, &self.cfg.stability)?;
        let jvp_cfg = self.cfg.jvp;
        let perts: Vec<PerturbationField> = (0..jvp_cfg.perturbations as u64)
            .map(|k| random_perturbation(&grid, sol.sigma, self.cfg.seed.wrapping_add(k)))
            .collect();
        let jvp = perts
            .iter()
            .map(|p| op.jvp_check(p, jvp_cfg.epsilon))
            .collect::<Result<Vec<_>>>()?;
        let report = StabilityReport {
            jvp,
            zero_mode: op.zero_mode_check()?,
        };

        let mut table = String::from("perturbation,epsilon,g,G,zeta1,zeta2,zeta3,max\n");
        for (k, r) in report.jvp.iter().enumerate() {
            let rows: Vec<String> = r.rows.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(table, "{k},{:e},{},{:e}", r.epsilon, rows.join(","), r.max);
        }
        let meta = self.meta(Command::Stability, sol.signs, Some(grid));
        let dir = self.out();
        let mut files = vec![
            write_csv(dir, "jvp.csv", &meta, &table)?,
            write_json(dir, "stability.json", &meta, &report)?,
        ];
        if let Some(p) = perts.first() {
            let applied = op.apply(p)?;
            let as_state = |f: PerturbationField| {
                let [g, big_g, zeta1, zeta2, zeta3] = f.rows;
                FieldState {
                    z: 0.0,
                    g,
                    big_g,
                    zeta1,
                    zeta2,
                    zeta3,
                }
            };
            files.push(write_csv(
                dir,
                "operator_apply.csv",
                &meta,
                &grey_soliton::io::field_csv(&as_state(applied), &grid.times()),
            )?);
        }
        let worst = report.jvp.iter().map(|r| r.max).fold(0.0, f64::max);
        let passed =
            worst < jvp_cfg.tolerance && report.zero_mode.max < jvp_cfg.zero_mode_tolerance;
        Ok(Outcome {
            summary: format!(
                "{}worst jvp relative error {worst:e} (tolerance {:e}); zero mode {:e} (tolerance {:e})",
                table, jvp_cfg.tolerance, report.zero_mode.max, jvp_cfg.zero_mode_tolerance
            ),
            files,
            passed,
        })
    }

    fn compare(&self) -> Result<Outcome> {
        #[derive(Serialize)]
        struct Comparison {
            grey: SolitonSolution,
            dark: SolitonSolution,
            /// Bright-mode balance left over when the dark profile reuses the
            /// grey width.
            dark_residual: f64,
            report: DarkGreyReport,
        }
        let med = self.medium();
        let grey = self.solve()?;
        let (dark, dark_residual) = dark_counterpart(&grey, &med, &self.cfg.solver)?;
        let grid = self.grid(&grey)?;
        let (d, g) = rayon::join(
            || self.run_trajectory(&dark, &grid),
            || self.run_trajectory(&grey, &grid),
        );
        let (d, g) = (d?, g?);
        let step = grid.dz * self.cfg.propagation.record_every as f64;
        let report = compare_dark_grey(&d.records, step, &g.records, step, &DEV_THRESHOLDS);
        let meta = self.meta(Command::CompareDarkGrey, grey.signs, Some(grid));
        let dir = self.out();
        let files = vec![
            write_csv(
                dir,
                "diagnostics_dark.csv",
                &meta,
                &diagnostics_csv(&d.records),
            )?,
            write_csv(
                dir,
                "diagnostics_grey.csv",
                &meta,
                &diagnostics_csv(&g.records),
            )?,
            write_csv(
                dir,
                "comparison.csv",
                &meta,
                &DarkGreyReport::table(&d.records, &g.records),
            )?,
            write_json(
                dir,
                "comparison.json",
                &meta,
                &Comparison {
                    grey,
                    dark,
                    dark_residual,
                    report: report.clone(),
                },
            )?,
        ];
        let mut summary = String::from("threshold,z_dark,z_grey,order\n");
        for c in &report.crossings {
            let z = |v: Option<f64>| v.map_or("never".to_string(), |z| format!("{z:.3}"));
            let _ = writeln!(
                summary,
                "{},{},{},{:?}",
                c.threshold,
                z(c.z_dark),
                z(c.z_grey),
                c.order
            );
        }
        for c in &report.caveats {
            let _ = writeln!(summary, "caveat: {c}");
        }
        let _ = write!(
            summary,
            "dark never later than grey: {}",
            report.dark_never_later
        );
        Ok(Outcome {
            summary,
            files,
            passed: true,
        })
    }
}

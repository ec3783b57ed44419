//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs without the libtest harness so every line is always shown.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use grey_soliton::ansatz::{eval_solution, Ansatz};
use grey_soliton::bloch::{integrate_bloch, BlochOptions, BlochState, BlochTrajectory};
use grey_soliton::diagnostics::{first_crossing, measure_velocity};
use grey_soliton::io::{velocity_thetas, OPPOSITE_SIGN_THETA, SAME_SIGN_THETA};
use grey_soliton::model::{check_solution_identities, validate_medium, ALGEBRAIC_TOL};
use grey_soliton::residual::{
    calibrate_signs, pde_residuals, solve_p1_empirical, two_level_prohibition_check,
    ResidualOptions, TwoLevelScan, RESIDUAL_TOL,
};
use grey_soliton::solver::{dark_counterpart, solve_parameters, velocity_curve, SolverConfig};
use grey_soliton::ssfm::{
    field_distance, propagate, BlochRefresh, LinearScheme, PropagationConfig, Trajectory,
};
use grey_soliton::stability::{random_perturbation, LinearizedOperator, StabilityOptions};
use grey_soliton::{MediumParams, Result, SignConvention, SimGrid, SolitonSolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn same_sign() -> (MediumParams, SolitonSolution) {
    let med = MediumParams::same_sign_gvd();
    let sol = solve_parameters(&med, SAME_SIGN_THETA, &SolverConfig::default()).unwrap();
    (med, sol)
}

fn opposite_sign() -> (MediumParams, SolitonSolution) {
    let med = MediumParams::opposite_sign_gvd();
    let sol = solve_parameters(&med, OPPOSITE_SIGN_THETA, &SolverConfig::default()).unwrap();
    (med, sol)
}

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

fn reproduce(med: &MediumParams, theta: f64, expected: [(&str, f64); 7]) -> Result<Verdict> {
    let start = Instant::now();
    let sol = solve_parameters(med, theta, &SolverConfig::default())?;
    let elapsed = start.elapsed().as_secs_f64();
    let got = [
        sol.sigma,
        sol.a,
        sol.b,
        sol.omega1,
        sol.u,
        sol.gamma_bg,
        sol.p2,
    ];
    let mut worst = ("", 0.0);
    for ((name, want), g) in expected.iter().zip(got) {
        let e = rel(g, *want);
        if e > worst.1 {
            worst = (name, e);
        }
    }
    Ok(verdict(
        worst.1 < 1e-3 && elapsed < 1.0,
        format!(
            "worst relative error {:.2e} ({}), solve time {elapsed:.3}s",
            worst.1, worst.0
        ),
    ))
}

fn c1() -> Result<Verdict> {
    let (med, _) = same_sign();
    reproduce(
        &med,
        SAME_SIGN_THETA,
        [
            ("sigma", 3.6712),
            ("a", 0.33361),
            ("b", 0.19261),
            ("omega1", 0.15584),
            ("u", 1.4805),
            ("Gamma", 1.0338),
            ("p2", 0.037098),
        ],
    )
}

fn c2() -> Result<Verdict> {
    let (med, _) = opposite_sign();
    reproduce(
        &med,
        OPPOSITE_SIGN_THETA,
        [
            ("sigma", 6.768),
            ("a", 0.29551),
            ("b", 0.25592),
            ("omega1", 0.072505),
            ("u", 2.6827),
            ("Gamma", 1.0337),
            ("p2", 0.065494),
        ],
    )
}

fn c3() -> Result<Verdict> {
    let opts = ResidualOptions::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, (med, sol)) in [
        ("same-sign", same_sign()),
        ("opposite-sign", opposite_sign()),
    ] {
        let grid = SimGrid::default_for(&sol);
        let p1 = solve_p1_empirical(&sol, sol.signs, &med, &grid, &opts);
        let with_p1 = SolitonSolution { p1, ..sol };
        let report = pde_residuals(&with_p1, sol.signs, &med, &grid, &opts);
        let e = rel(p1, sol.p1);
        pass &= e < 1e-6 && report.passes(RESIDUAL_TOL);
        detail.push(format!(
            "{label}: p1 {p1:.9} vs closed form {:.9} (rel {e:.1e}), max residual {:.1e}",
            sol.p1,
            report.max_relative()
        ));
    }
    Ok(verdict(pass, detail.join("; ")))
}

fn c4() -> Result<Verdict> {
    let opts = ResidualOptions::default();
    let mut found: Vec<(usize, SignConvention)> = Vec::new();
    for (med, sol) in [same_sign(), opposite_sign()] {
        let grid = SimGrid::default_for(&sol);
        let cal = calibrate_signs(&sol, &med, &grid, &opts, RESIDUAL_TOL)?;
        found.push((cal.passing.len(), cal.signs));
    }
    let pass = found.iter().all(|(n, _)| *n == 1) && found[0].1 == found[1].1;
    Ok(verdict(
        pass,
        format!(
            "passing conventions per preset: {} and {}; convention {}",
            found[0].0, found[1].0, found[0].1
        ),
    ))
}

/// Random medium with β₂ forced by the sum rule and a positive b²σ².
fn random_medium(rng: &mut ChaCha8Rng) -> MediumParams {
    let gamma1 = rng.gen_range(0.5..2.0);
    let mut med = MediumParams {
        beta1: gamma1 * rng.gen_range(-0.45..1.5),
        beta2: 0.0,
        gamma1,
        gamma2: rng.gen_range(0.5..2.0),
        eta1: rng.gen_range(0.5..1.5),
        eta2: rng.gen_range(0.5..1.5),
        delta: rng.gen_range(0.5..2.0),
        omega2: rng.gen_range(-0.1..0.1),
    };
    med.beta2 = validate_medium(&med, 0.0).forced_beta2.unwrap();
    med
}

/// Draws continue until 50 media admit a soliton; draws without one are
/// counted, not checked.
fn c5() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut solved, mut draws, mut failed_identities, mut worst) = (0, 0, 0, 0.0f64);
    while solved < 50 && draws < 1000 {
        draws += 1;
        let med = random_medium(&mut rng);
        let theta = rng.gen_range(0.1..1.4);
        if let Ok(sol) = solve_parameters(&med, theta, &SolverConfig::default()) {
            solved += 1;
            let report = check_solution_identities(&sol, &med, ALGEBRAIC_TOL);
            worst = worst.max(report.max_residual());
            if !report.all_passed() {
                failed_identities += 1;
            }
        }
    }
    Ok(verdict(
        failed_identities == 0 && solved == 50,
        format!(
            "{solved} solved media ({} draws without a soliton), {failed_identities} with a failing identity, worst residual {worst:.1e}",
            draws - solved
        ),
    ))
}

fn c6() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for (_, sol) in [same_sign(), opposite_sign()] {
        let grid = SimGrid::for_solution(&sol, 4096, 24.0, 1e-3, 3.0);
        for z in [0.0, 1.5, 3.0] {
            let s = eval_solution(&sol, &grid, z);
            for k in 0..grid.nt {
                let n = s.zeta1[k].norm_sqr() + s.zeta2[k].norm_sqr() + s.zeta3[k].norm_sqr();
                worst = worst.max((n - 1.0).abs());
            }
        }
    }
    Ok(verdict(
        worst < 1e-10,
        format!("max |population − 1| = {worst:.1e}"),
    ))
}

fn shape_run(med: &MediumParams, sol: &SolitonSolution) -> Result<Trajectory> {
    let grid = SimGrid::default_for(sol);
    let init = eval_solution(sol, &grid, 0.0);
    propagate(&init, sol, med, &grid, &PropagationConfig::default())
}

fn shape_verdict(traj: &Trajectory, u_ref: f64) -> Result<Verdict> {
    let last = traj.last_record();
    let fit = measure_velocity(&traj.snapshots, &traj.grid)?;
    let (eg, eb) = (rel(fit.u_g, u_ref), rel(fit.u_big_g, u_ref));
    let mutual = rel(fit.u_g, fit.u_big_g);
    Ok(verdict(
        last.dev_g < 0.02 && last.dev_big_g < 0.02 && eg < 0.01 && eb < 0.01 && mutual < 0.005,
        format!(
            "z={} dev_g {:.1e}, dev_G {:.1e}, u_g {:.5}, u_G {:.5} (ref {u_ref}), mutual {:.1e}",
            last.z, last.dev_g, last.dev_big_g, fit.u_g, fit.u_big_g, mutual
        ),
    ))
}

fn c7() -> Result<Verdict> {
    let (med, sol) = same_sign();
    shape_verdict(&shape_run(&med, &sol)?, 1.4805)
}

fn c8() -> Result<Verdict> {
    let (med, sol) = opposite_sign();
    shape_verdict(&shape_run(&med, &sol)?, 2.6827)
}

fn c9() -> Result<Verdict> {
    let (med, grey) = same_sign();
    let (dark, _) = dark_counterpart(&grey, &med, &SolverConfig::default())?;
    let grid = SimGrid::default_for(&grey);
    let cfg = PropagationConfig {
        record_every: 10,
        ..PropagationConfig::default()
    };
    let (d, g) = rayon::join(
        || propagate(&eval_solution(&dark, &grid, 0.0), &dark, &med, &grid, &cfg),
        || propagate(&eval_solution(&grey, &grid, 0.0), &grey, &med, &grid, &cfg),
    );
    let (zd, zg) = (
        first_crossing(&d?.records, 0.05),
        first_crossing(&g?.records, 0.05),
    );
    let pass = match (zd, zg) {
        (Some(d), Some(g)) => d < g,
        (Some(_), None) => true,
        _ => false,
    };
    Ok(verdict(
        pass,
        format!("dev_G > 5% first at z: dark {zd:?}, grey {zg:?} (run to z=3)"),
    ))
}

fn bloch_run(
    sol: &SolitonSolution,
    med: &MediumParams,
    grid: &SimGrid,
    substeps: usize,
) -> Result<BlochTrajectory> {
    let s = eval_solution(sol, grid, 0.0);
    let [_, _, z1, z2, z3] = Ansatz::new(sol).fields_at(grid.t_min, 0.0);
    integrate_bloch(
        &s.g,
        &s.big_g,
        grid.dt(),
        grid.t_min,
        BlochState::new(z1, z2, z3),
        med.delta,
        &BlochOptions {
            substeps,
            drift_bound: 1.0,
        },
    )
}

fn c10() -> Result<Verdict> {
    let (med, sol) = same_sign();
    let grid = SimGrid::default_for(&sol);

    // Norm drift at dt/4.
    let mut drift = 0.0f64;
    for (m, s) in [same_sign(), opposite_sign()] {
        drift = drift.max(bloch_run(&s, &m, &SimGrid::default_for(&s), 4)?.max_drift);
    }

    // Decoupled power over z = 1.
    let decoupled = MediumParams {
        eta1: 0.0,
        eta2: 0.0,
        ..med
    };
    let pgrid = SimGrid { z_end: 1.0, ..grid };
    let pcfg = PropagationConfig {
        refresh: BlochRefresh::Off,
        linear: LinearScheme::Periodic,
        apodize: false,
        ..PropagationConfig::default()
    };
    let traj = propagate(
        &eval_solution(&sol, &pgrid, 0.0),
        &sol,
        &decoupled,
        &pgrid,
        &pcfg,
    )?;
    let (first, last) = (&traj.records[0], traj.last_record());
    let power = rel(last.power_g, first.power_g).max(rel(last.power_big_g, first.power_big_g));

    // Strang order: differences between successive halvings of dz.
    let scfg = PropagationConfig {
        apodize: false,
        snapshot_every: 0,
        record_every: 1_000_000,
        ..PropagationConfig::default()
    };
    let finals: Vec<_> = [0.04, 0.02, 0.01]
        .par_iter()
        .map(|&dz| {
            let g = SimGrid {
                dz,
                z_end: 0.4,
                ..grid
            };
            propagate(&eval_solution(&sol, &g, 0.0), &sol, &med, &g, &scfg)
                .map(|t| t.final_state().clone())
        })
        .collect::<Result<_>>()?;
    let range = grid.central_range();
    let strang = field_distance(&finals[0], &finals[1], range.clone())
        / field_distance(&finals[1], &finals[2], range);

    // RK4 order against a fine reference on a coarse t-grid.
    let coarse = SimGrid::for_solution(&sol, 128, 24.0, 1e-3, 0.0);
    let reference = bloch_run(&sol, &med, &coarse, 64)?;
    let err = |s: usize| -> Result<f64> {
        let t = bloch_run(&sol, &med, &coarse, s)?;
        Ok([
            (&t.zeta1, &reference.zeta1),
            (&t.zeta2, &reference.zeta2),
            (&t.zeta3, &reference.zeta3),
        ]
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max))
    };
    let rk4 = err(1)? / err(2)?;

    let pass = drift < 1e-8
        && power < 1e-8
        && (strang / 4.0 - 1.0).abs() < 0.2
        && (rk4 / 16.0 - 1.0).abs() < 0.2;
    Ok(verdict(
        pass,
        format!(
            "Bloch drift {drift:.1e}, decoupled power change {power:.1e}, Strang ratio {strang:.2}, RK4 ratio {rk4:.2}"
        ),
    ))
}

fn c11() -> Result<Verdict> {
    let med = MediumParams::opposite_sign_gvd();
    let cfg = SolverConfig::default();
    let rows = velocity_curve(&med, &velocity_thetas(), &cfg);
    let positive: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.theta > 0.0)
        .filter_map(|r| r.point.as_ref().ok().map(|p| (r.theta, p.u)))
        .collect();
    let all_finite = positive.len() == rows.iter().filter(|r| r.theta > 0.0).count()
        && positive.iter().all(|(_, u)| u.is_finite());
    let argmax = positive
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i);
    let max_at_end = argmax == Some(positive.len() - 1) && positive.last().unwrap().0 < FRAC_PI_2;
    // θ = 0 has no soliton (σ → 0); the curve must still approach a finite
    // limit there.
    let small: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&t| solve_parameters(&med, t, &cfg).map(|s| s.u))
        .collect::<Result<_>>()?;
    let finite_limit = small.windows(2).all(|w| w[1] < w[0]) && small[2] < 0.05;
    let u_ref = solve_parameters(&med, OPPOSITE_SIGN_THETA, &cfg)?.u;
    let e = rel(u_ref, 2.6827);
    Ok(verdict(
        all_finite && max_at_end && finite_limit && e < 1e-3,
        format!(
            "{} angles in (0, π/2) all finite: {all_finite}; max at largest θ: {max_at_end}; u(θ→0) = {:.4} → {:.4} → {:.4}; u(0.51291) = {u_ref:.5} (rel {e:.1e})",
            positive.len(),
            small[0],
            small[1],
            small[2]
        ),
    ))
}

fn c12() -> Result<Verdict> {
    let (med, sol) = same_sign();
    let grid = SimGrid::default_for(&sol);
    let op = LinearizedOperator::new(&sol, &med, &grid, &StabilityOptions::default())?;
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let rep = op.jvp_check(&random_perturbation(&grid, sol.sigma, seed), 1e-5)?;
        worst = worst.max(rep.max);
    }
    let zero = op.zero_mode_check()?.max;
    Ok(verdict(
        worst < 1e-5 && zero < 1e-6,
        format!("worst jvp relative error {worst:.1e}, zero-mode residual {zero:.1e}"),
    ))
}

/// Minimum relative residual of the 100-sample scan when first measured.
const TWO_LEVEL_PINNED: f64 = 0.7301;

fn c13() -> Result<Verdict> {
    let med = MediumParams::same_sign_gvd();
    let rep =
        two_level_prohibition_check(&med, &TwoLevelScan::default(), &ResidualOptions::default())?;
    let drift = (rep.min_residual - TWO_LEVEL_PINNED).abs();
    Ok(verdict(
        rep.min_residual > 0.01 && drift < 1e-3,
        format!(
            "{} samples, minimum relative residual {:.4} (pinned {TWO_LEVEL_PINNED})",
            rep.samples, rep.min_residual
        ),
    ))
}

type Criterion = (&'static str, fn() -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 13] = [
        ("same-sign parameter reproduction", c1),
        ("opposite-sign parameter reproduction", c2),
        ("p1 from the g-equation balance", c3),
        ("unique sign convention", c4),
        ("algebraic identities on a random sweep", c5),
        ("population normalization", c6),
        ("same-sign propagation", c7),
        ("opposite-sign propagation", c8),
        ("dark destabilizes before grey", c9),
        ("conservation and convergence orders", c10),
        ("velocity curve", c11),
        ("linearized operator", c12),
        ("two-level prohibition", c13),
    ];
    let results: Vec<(Result<Verdict>, f64)> = criteria
        .par_iter()
        .map(|(_, f)| {
            let start = Instant::now();
            let r = f();
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut failures = 0;
    for (k, ((name, _), (result, secs))) in criteria.iter().zip(results).enumerate() {
        let (pass, detail) = match result {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{secs:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

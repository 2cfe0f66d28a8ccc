use std::path::Path;

use serde::Serialize;
use serde_json::json;

use krein_core::checks::{self, CheckConfig, Fault};
use krein_core::models::delta1d::{delta1d_bound_state, delta1d_weyl, Delta1DConfig};
use krein_core::models::nelson::{nelson_counterterm, nelson_experiment, NelsonTruncConfig};
use krein_core::renorm::{fmt_sci, hz_family, hz_indices, scan_schedule, theorem_bb_driver, theorem_conv_driver, ConvergenceReport};
use krein_core::C64;

use crate::config::{load, CheckFile, Failure, ScanFile, ScanKind};
use crate::Cli;

fn write_csv(path: &Path, header: &[String], records: &[Vec<String>]) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Run(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in records {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn write_report(cli: &Cli, stem: &str, report: &ConvergenceReport) -> Result<(), Failure> {
    write_csv(&cli.out.join(format!("{stem}.csv")), &report.csv_header(), &report.csv_records())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn check(cli: &Cli) -> Result<(), Failure> {
    let file: CheckFile = load(cli.config.as_deref(), None)?;
    let cfg = CheckConfig {
        seed: cli.seed,
        instances: file.instances,
        z_per_instance: file.z_per_instance,
        tolerance: cli.tolerance,
        fault: if cli.inject_fault { Fault::PerturbResolvent } else { Fault::None },
    };
    let outcomes = checks::run_battery(&cfg);
    let records: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.name.to_string(),
                fmt_sci(o.residual),
                fmt_sci(o.tolerance),
                o.passed.to_string(),
                o.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&cli.out.join("check.csv"), &strings(&["check", "residual", "tolerance", "passed", "error"]), &records)?;
    let passed = outcomes.iter().all(|o| o.passed);
    write_json(
        &cli.out.join("check.json"),
        &json!({ "seed": cli.seed, "instances": cfg.instances, "passed": passed, "checks": outcomes }),
    )?;
    for o in &outcomes {
        println!("{:<22} {:>10.3e} <= {:>8.1e}  {}", o.name, o.residual, o.tolerance, if o.passed { "PASS" } else { "FAIL" });
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "failed: {}",
            outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect::<Vec<_>>().join(", ")
        )))
    }
}

pub fn scan(cli: &Cli) -> Result<(), Failure> {
    let file: ScanFile = load(cli.config.as_deref(), None)?;
    if file.steps < 2 {
        return Err(Failure::Config("steps: need at least 2".into()));
    }
    let z: Option<Vec<C64>> = file.z.as_ref().map(|z| z.iter().map(|p| C64::new(p[0], p[1])).collect());
    let (report, passed, tolerance) = match file.mode.mode() {
        Some(mode) => {
            let (family, theta) = checks::krein_instance(cli.seed);
            let (target, schedule, idx) = scan_schedule(&family, &theta, mode, file.steps, cli.seed)?;
            let z = z.unwrap_or_else(|| vec![C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(1.0, 2.0)]);
            let report = theorem_conv_driver(&family, &target, &schedule, &idx, &z)?;
            if file.mode == ScanKind::Exact {
                let tol = cli.tolerance.unwrap_or(1e-10);
                let ok = report.rows.iter().all(|r| r.d.iter().all(|&d| d <= tol));
                (report, ok, tol)
            } else {
                let tol = cli.tolerance.unwrap_or(f64::INFINITY);
                let ok = report.d_strictly_decreasing.iter().all(|&b| b)
                    && report.rows.last().is_some_and(|r| r.d.iter().all(|&d| d <= tol));
                (report, ok, tol)
            }
        }
        None => {
            let system = checks::hz_instance(cli.seed);
            let family = hz_family(&system, &hz_indices(system.h()))?;
            let report = theorem_bb_driver(&system, &family, None, z.as_deref())?;
            let tol = cli.tolerance.unwrap_or(1e-6);
            let ok = report.d_strictly_decreasing.first() == Some(&true) && report.rows.last().is_some_and(|r| r.d[0] <= tol);
            (report, ok, tol)
        }
    };
    write_report(cli, "scan", &report)?;
    let final_d = report.rows.last().map(|r| r.d.clone()).unwrap_or_default();
    write_json(
        &cli.out.join("scan.json"),
        &json!({
            "mode": file.mode,
            "seed": cli.seed,
            "tolerance": if tolerance.is_finite() { json!(tolerance) } else { json!(null) },
            "passed": passed,
            "final_d": final_d,
            "d_strictly_decreasing": report.d_strictly_decreasing,
            "hy1_sup": report.hy1_sup,
            "report": report,
        }),
    )?;
    println!("scan {:?}: final d = {:?}, passed = {passed}", file.mode, final_d);
    Ok(())
}

pub fn delta1d(cli: &Cli) -> Result<(), Failure> {
    let cfg: Delta1DConfig = load(cli.config.as_deref(), Some("delta1d"))?;
    cfg.validate()?;
    let tol = cli.tolerance.unwrap_or(0.01);
    let mut sizes: Vec<usize> = std::iter::successors(Some(64usize), |p| Some(p * 2)).take_while(|&p| p < cfg.p).collect();
    sizes.push(cfg.p);
    let mut records = Vec::new();
    for &p in &sizes {
        let c = Delta1DConfig { p, ..cfg.clone() };
        let bs = delta1d_bound_state(&c)?;
        let w = -delta1d_weyl(&c, C64::new(-1.0, 0.0)).re;
        records.push(vec![p.to_string(), fmt_sci(bs.energy), fmt_sci(bs.relative_error), fmt_sci(w)]);
    }
    write_csv(&cli.out.join("delta1d.csv"), &strings(&["P", "bound_state", "relative_error", "minus_weyl_at_minus_one"]), &records)?;
    let bs = delta1d_bound_state(&cfg)?;
    let passed = bs.relative_error <= tol;
    write_json(
        &cli.out.join("delta1d.json"),
        &json!({
            "L": cfg.l, "P": cfg.p, "alpha": cfg.alpha,
            "bound_state": bs.energy,
            "exact": bs.exact,
            "relative_error": bs.relative_error,
            "tolerance": tol,
            "passed": passed,
            "minus_weyl_at_minus_one": -delta1d_weyl(&cfg, C64::new(-1.0, 0.0)).re,
        }),
    )?;
    println!("delta1d: E = {:.8} (exact {:.8}, rel. error {:.3e}), passed = {passed}", bs.energy, bs.exact, bs.relative_error);
    Ok(())
}

pub fn nelson(cli: &Cli) -> Result<(), Failure> {
    let cfg: NelsonTruncConfig = load(cli.config.as_deref(), Some("nelson"))?;
    cfg.validate()?;
    let tol = cli.tolerance.unwrap_or(1e-9);
    let rep = nelson_experiment(&cfg)?;
    write_report(cli, "nelson", &rep.convergence)?;
    write_report(cli, "nelson_ablated", &rep.ablated)?;
    let gs: Vec<Vec<String>> = rep
        .ground_states
        .iter()
        .map(|g| vec![fmt_sci(g.index), fmt_sci(g.counterterm), fmt_sci(g.renormalized), fmt_sci(g.bare)])
        .collect();
    write_csv(&cli.out.join("nelson_ground_states.csv"), &strings(&["n", "E_n", "ground_renormalized", "ground_bare"]), &gs)?;
    let slope = (nelson_counterterm(1e4, cfg.g, cfg.n) - nelson_counterterm(1e2, cfg.g, cfg.n)) / 100f64.ln();
    let d_decreasing = rep.convergence.d_strictly_decreasing.first() == Some(&true);
    let passed = d_decreasing
        && rep.ablation_factor >= 10.0
        && rep.renormalized_drift < rep.bare_drift
        && rep.form_residual <= tol;
    write_json(
        &cli.out.join("nelson.json"),
        &json!({
            "config": cfg,
            "dim": rep.dim,
            "gamma_star": rep.gamma_star,
            "d_strictly_decreasing": d_decreasing,
            "final_e": rep.final_e,
            "final_e_ablated": rep.final_e_ablated,
            "ablation_factor": rep.ablation_factor,
            "renormalized_drift": rep.renormalized_drift,
            "bare_drift": rep.bare_drift,
            "form_residual": rep.form_residual,
            "counterterm_log_slope_3d": slope,
            "counterterm_log_slope_expected": cfg.g * cfg.g * cfg.n as f64 / (2.0 * std::f64::consts::PI.powi(2)),
            "tolerance": tol,
            "passed": passed,
        }),
    )?;
    println!(
        "nelson: dim {}, d decreasing = {d_decreasing}, ablation x{:.3e}, drift {:.3e} vs {:.3e}, passed = {passed}",
        rep.dim, rep.ablation_factor, rep.renormalized_drift, rep.bare_drift
    );
    Ok(())
}

//! Experiment orchestration: materialize drivers from a config, run seeded
//! path sweeps in parallel with deterministic reduction, collect report rows,
//! and evaluate the configured assertions.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::drivers::{sample_jump_stream, sample_wiener, MarkSpace};
use crate::error::{Error, Result};
use crate::field::{build_field_path, lp_norm, FieldBuildConfig, FieldDrivers, FieldPath, SpaceGrid};
use crate::fubini::{fubini_cond_value, fubini_pi_check, fubini_tilde_check, protter_cond_value, ParamMeasure};
use crate::grid::TimeGrid;
use crate::lp_verifier::{apriori_estimate_report, eval_ito_lp, AprioriConfig};
use crate::mollifier::{mollify, MollKernel};
use crate::report::{quantiles, ReportRow, Summary};
use crate::rng::path_rng;
use crate::semimartingale::{build_path_fd, eval_ito_fd_power};

/// Run one experiment; returns the per-path report rows and the summary with
/// assertion outcomes. Deterministic given `(config, master_seed)`.
pub fn run_experiment(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    cfg.validate()?;
    if cfg.n_workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.n_workers)
            .build()
            .map_err(|e| Error::config(format!("n_workers: {e}")))?;
        pool.install(|| dispatch(cfg, name))
    } else {
        dispatch(cfg, name)
    }
}

fn dispatch(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    match cfg.kind {
        ExperimentKind::FdIto => run_fd_ito(cfg, name),
        ExperimentKind::LpItoThm21 | ExperimentKind::LpItoThm22 => run_lp_ito(cfg, name),
        ExperimentKind::MollifierStudy => run_mollifier_study(cfg, name),
        ExperimentKind::Fubini => run_fubini(cfg, name),
        ExperimentKind::AprioriSweep => run_apriori(cfg, name),
    }
}

fn space_grid(cfg: &ExperimentConfig) -> Result<SpaceGrid> {
    SpaceGrid::new(cfg.space_dim, cfg.half_width, cfg.n_cells_axis)
}

fn sample_field_path(
    cfg: &ExperimentConfig,
    drivers: &FieldDrivers,
    ms: &MarkSpace,
    sg: &SpaceGrid,
    path_index: u64,
) -> Result<FieldPath> {
    let base = TimeGrid::uniform(cfg.horizon, cfg.n_steps)?;
    let mut rng = path_rng(cfg.master_seed, path_index);
    let js = sample_jump_stream(ms, &base, &mut rng)?;
    let tg = base.with_jump_times(&js.times())?;
    let wb = sample_wiener(&tg, drivers.n_wiener, &mut rng);
    let build = FieldBuildConfig {
        time_grid: tg,
        space_grid: sg.clone(),
        mark_space: ms.clone(),
        p: cfg.p,
    };
    build_field_path(drivers, js, wb, &build)
}

/// Shared tail: record term samples, residual quantiles, and the relative
/// residual assertion from per-path `(term, value)` maps.
fn summarize_terms(
    summary: &mut Summary,
    rows: &mut Vec<ReportRow>,
    name: &str,
    t: f64,
    per_path: Vec<BTreeMap<&'static str, f64>>,
    tolerance: f64,
) {
    let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (i, terms) in per_path.iter().enumerate() {
        for (term, value) in terms {
            rows.push(ReportRow {
                experiment: name.to_string(),
                path: i as u64,
                t,
                term: (*term).to_string(),
                value: *value,
            });
            samples.entry(term).or_default().push(*value);
        }
    }
    for (term, vals) in &samples {
        summary.record_term(term, vals);
    }
    let residuals = samples.get("residual").cloned().unwrap_or_default();
    summary.residual_quantiles = quantiles(&residuals);
    let max_rel = per_path
        .iter()
        .map(|m| {
            let lhs = m.get("lhs").copied().unwrap_or(0.0);
            m.get("residual").copied().unwrap_or(0.0).abs() / (1.0 + lhs.abs())
        })
        .fold(0.0f64, f64::max);
    summary.assert_le("max_relative_residual", max_rel, tolerance);
}

fn run_fd_ito(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    let drivers = cfg.build_driver_fd()?;
    let ms = cfg.mark_space.build()?;
    let t = cfg.eval_time();
    let per_path: Vec<BTreeMap<&'static str, f64>> = (0..cfg.k_paths)
        .into_par_iter()
        .map(|i| -> Result<BTreeMap<&'static str, f64>> {
            let base = TimeGrid::uniform(cfg.horizon, cfg.n_steps)?;
            let mut rng = path_rng(cfg.master_seed, i);
            let js = sample_jump_stream(&ms, &base, &mut rng)?;
            let tg = base.with_jump_times(&js.times())?;
            let wb = sample_wiener(&tg, drivers.n_wiener, &mut rng);
            let x0 = vec![1.0; cfg.m];
            let path = build_path_fd(&drivers, js, wb, x0, tg, ms.clone())?;
            let bd = eval_ito_fd_power(&path, cfg.p, t)?;
            let mut m: BTreeMap<&'static str, f64> = bd.terms().into_iter().collect();
            m.insert("lhs", bd.lhs);
            m.insert("init", bd.initial);
            m.insert("residual", bd.residual);
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut summary = Summary::new(name, cfg.kind.as_str(), cfg.k_paths, cfg.master_seed, t);
    let mut rows = Vec::new();
    summarize_terms(&mut summary, &mut rows, name, t, per_path, cfg.residual_tolerance);
    Ok((rows, summary))
}

fn run_lp_ito(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    let drivers = cfg.build_field_drivers()?;
    let ms = cfg.mark_space.build()?;
    let sg = space_grid(cfg)?;
    let t = cfg.eval_time();
    let mode = cfg.field_mode();
    let per_path: Vec<BTreeMap<&'static str, f64>> = (0..cfg.k_paths)
        .into_par_iter()
        .map(|i| -> Result<BTreeMap<&'static str, f64>> {
            let fp = sample_field_path(cfg, &drivers, &ms, &sg, i)?;
            let bd = eval_ito_lp(&fp, cfg.p, t, mode)?;
            let mut m: BTreeMap<&'static str, f64> = bd.terms().into_iter().collect();
            m.insert("lhs", bd.lhs);
            m.insert("init", bd.init);
            m.insert("residual", bd.residual);
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut summary = Summary::new(name, cfg.kind.as_str(), cfg.k_paths, cfg.master_seed, t);
    let mut rows = Vec::new();
    summarize_terms(&mut summary, &mut rows, name, t, per_path, cfg.residual_tolerance);
    Ok((rows, summary))
}

fn run_mollifier_study(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    let drivers = cfg.build_field_drivers()?;
    let ms = cfg.mark_space.build()?;
    let sg = space_grid(cfg)?;
    let t = cfg.eval_time();
    let mults = cfg.mollifier_eps_multiples.clone();
    if mults.len() < 2 {
        return Err(Error::config("mollifier_eps_multiples: need at least two radii"));
    }
    struct PathStudy {
        norm_before: f64,
        per_eps: Vec<(f64, f64, f64)>, // (eps multiple, norm after, |u_eps - u|_Lp)
    }
    let studies: Vec<PathStudy> = (0..cfg.k_paths)
        .into_par_iter()
        .map(|i| -> Result<PathStudy> {
            let fp = sample_field_path(cfg, &drivers, &ms, &sg, i)?;
            let idx = fp.grid.index_of(t)?;
            let u = &fp.u[idx];
            let norm_before = lp_norm(u, &sg, cfg.m, cfg.p);
            let mut per_eps = Vec::new();
            for &mult in &mults {
                let kern = MollKernel::new(&sg, mult * sg.spacing)?;
                let smoothed = mollify(u, &sg, cfg.m, &kern)?;
                let after = lp_norm(&smoothed, &sg, cfg.m, cfg.p);
                let diff: Vec<f64> = smoothed.iter().zip(u).map(|(a, b)| a - b).collect();
                per_eps.push((mult, after, lp_norm(&diff, &sg, cfg.m, cfg.p)));
            }
            Ok(PathStudy { norm_before, per_eps })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut worst_expansion = 0.0f64;
    let mut worst_ladder_increase = 0.0f64;
    let mut conv_errs_first = Vec::new();
    let mut conv_errs_last = Vec::new();
    for (i, s) in studies.iter().enumerate() {
        rows.push(ReportRow {
            experiment: name.to_string(),
            path: i as u64,
            t,
            term: "lp_norm".to_string(),
            value: s.norm_before,
        });
        for (mult, after, err) in &s.per_eps {
            for (term, value) in
                [("lp_norm_mollified", *after), ("mollification_error", *err)]
            {
                rows.push(ReportRow {
                    experiment: name.to_string(),
                    path: i as u64,
                    t,
                    term: format!("{term}_eps{mult}h"),
                    value,
                });
            }
            worst_expansion = worst_expansion.max(after - s.norm_before);
        }
        for w in s.per_eps.windows(2) {
            // Multiples are listed largest-to-smallest; the error must not
            // grow as the radius shrinks.
            worst_ladder_increase = worst_ladder_increase.max(w[1].2 - w[0].2);
        }
        conv_errs_first.push(s.per_eps.first().unwrap().2);
        conv_errs_last.push(s.per_eps.last().unwrap().2);
    }
    let mut summary = Summary::new(name, cfg.kind.as_str(), cfg.k_paths, cfg.master_seed, t);
    summary.record_term("mollification_error_widest", &conv_errs_first);
    summary.record_term("mollification_error_narrowest", &conv_errs_last);
    summary.assert_le("lp_contraction", worst_expansion.max(0.0), 1e-12);
    summary.assert_le("convergence_ladder_monotone", worst_ladder_increase.max(0.0), 0.0);
    Ok((rows, summary))
}

fn run_fubini(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    let ms = cfg.mark_space.build()?;
    let t = cfg.eval_time();
    let pm = if cfg.fubini.lambda_weights.is_empty() {
        ParamMeasure::unit(cfg.fubini.lambda_points.clone())?
    } else {
        ParamMeasure::new(cfg.fubini.lambda_points.clone(), cfg.fubini.lambda_weights.clone())?
    };
    // Parameterized integrand built from the h driver spec's time profile:
    // f(t, z, lambda) = h(t) * mark_factor-free * (1 + lambda t) * lambda.
    let h_spec = cfg
        .drivers
        .h
        .clone()
        .ok_or_else(|| Error::config("drivers.h: fubini experiments need an h driver"))?;
    let f = move |s: f64, z: &crate::drivers::Mark, l: f64| {
        let zv = match z {
            crate::drivers::Mark::Index(i) => *i as f64 + 1.0,
            crate::drivers::Mark::Point(p) => p[0],
        };
        h_spec.time_value(s).unwrap_or(0.0) * (1.0 + l * s) * (l + 0.5 * zv)
    };

    let per_path: Vec<[f64; 6]> = (0..cfg.k_paths)
        .into_par_iter()
        .map(|i| -> Result<[f64; 6]> {
            let base = TimeGrid::uniform(cfg.horizon, cfg.n_steps)?;
            let mut rng = path_rng(cfg.master_seed, i);
            let js = sample_jump_stream(&ms, &base, &mut rng)?;
            let tg = base.with_jump_times(&js.times())?;
            let (lt, rt) = fubini_tilde_check(&f, &pm, &js, &ms, &tg, t)?;
            let (lp, rp) = fubini_pi_check(&f, &pm, &js, t);
            Ok([lt, rt, lt - rt, lp, rp, lp - rp])
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let names = ["lhs_tilde", "rhs_tilde", "gap_tilde", "lhs_pi", "rhs_pi", "gap_pi"];
    let mut max_rel_gap = 0.0f64;
    for (i, vals) in per_path.iter().enumerate() {
        for (term, value) in names.iter().zip(vals) {
            rows.push(ReportRow {
                experiment: name.to_string(),
                path: i as u64,
                t,
                term: (*term).to_string(),
                value: *value,
            });
        }
        max_rel_gap = max_rel_gap
            .max(vals[2].abs() / (1.0 + vals[0].abs()))
            .max(vals[5].abs() / (1.0 + vals[3].abs()));
    }
    let mut summary = Summary::new(name, cfg.kind.as_str(), cfg.k_paths, cfg.master_seed, t);
    for (j, term) in names.iter().enumerate() {
        let samples: Vec<f64> = per_path.iter().map(|v| v[j]).collect();
        summary.record_term(term, &samples);
    }
    let base = TimeGrid::uniform(cfg.horizon, cfg.n_steps)?;
    summary
        .condition_values
        .insert("fubini_cond".to_string(), fubini_cond_value(&f, &pm, &ms, &base));
    summary
        .condition_values
        .insert("protter_cond".to_string(), protter_cond_value(&f, &pm, &ms, &base));
    summary.assert_le("max_relative_fubini_gap", max_rel_gap, 1e-12);
    Ok((rows, summary))
}

fn run_apriori(cfg: &ExperimentConfig, name: &str) -> Result<(Vec<ReportRow>, Summary)> {
    let drivers = cfg.build_field_drivers()?;
    let acfg = AprioriConfig {
        drivers: &drivers,
        base_grid: TimeGrid::uniform(cfg.horizon, cfg.n_steps)?,
        space_grid: space_grid(cfg)?,
        mark_space: cfg.mark_space.build()?,
        p: cfg.p,
        master_seed: cfg.master_seed,
    };
    let rep = apriori_estimate_report(&acfg, cfg.k_paths)?;
    let t = cfg.horizon;
    let components = [
        ("lhs_sup", rep.lhs),
        ("psi_term", rep.psi_term),
        ("f0_term", rep.f0_term),
        ("hp_term", rep.hp_term),
        ("g_term", rep.g_term),
        ("fi_term", rep.fi_term),
        ("du_term", rep.du_term),
        ("h2_term", rep.h2_term),
        ("ratio", rep.ratio),
    ];
    let rows = components
        .iter()
        .map(|(term, value)| ReportRow {
            experiment: name.to_string(),
            path: 0,
            t,
            term: (*term).to_string(),
            value: *value,
        })
        .collect();
    let mut summary = Summary::new(name, cfg.kind.as_str(), cfg.k_paths, cfg.master_seed, t);
    for (term, value) in components {
        summary.term_means.insert(term.to_string(), value);
    }
    let finite_flag = if rep.ratio.is_finite() { 0.0 } else { 1.0 };
    summary.assert_le("apriori_ratio_finite", finite_flag, 0.0);
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::report::write_csv;

    fn parse(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn fd_ito_zero_drivers_passes_with_zero_residual() {
        let cfg = parse(
            r#"
kind = "fd_ito"
p = 2.0
n_steps = 8
k_paths = 4
"#,
        );
        let (rows, summary) = run_experiment(&cfg, "zero").unwrap();
        assert!(summary.passed);
        assert_eq!(summary.term_means["residual"], 0.0);
        assert!(rows.iter().any(|r| r.term == "lhs"));
    }

    #[test]
    fn lp_thm21_pure_jump_config_passes_tight_tolerance() {
        let cfg = parse(
            r#"
kind = "lp_ito_thm21"
p = 3.0
n_steps = 16
n_cells_axis = 24
k_paths = 8
master_seed = 5
residual_tolerance = 1e-10

[mark_space]
kind = "finite_uniform"
n_marks = 2
lambda = 3.0

[drivers.initial]
id = "bump"
amplitude = 0.8
radius = 0.5

[drivers.h]
id = "bump"
amplitude = 0.5
radius = 0.35
mark_sign_flip = true
"#,
        );
        let (_, summary) = run_experiment(&cfg, "purejump").unwrap();
        assert!(summary.passed, "{:?}", summary.first_failure());
    }

    #[test]
    fn reports_are_bit_identical_across_runs() {
        let text = r#"
kind = "lp_ito_thm21"
p = 2.0
n_steps = 16
n_cells_axis = 16
n_wiener = 1
k_paths = 4
master_seed = 11
residual_tolerance = 1.0

[mark_space]
kind = "finite_uniform"
n_marks = 2
lambda = 1.0

[drivers.initial]
id = "bump"

[[drivers.g]]
id = "bump"
amplitude = 0.4
radius = 0.4

[drivers.h]
id = "bump"
amplitude = 0.3
radius = 0.3
mark_sign_flip = true
"#;
        let cfg = parse(text);
        let (rows_a, sum_a) = run_experiment(&cfg, "det").unwrap();
        let (rows_b, sum_b) = run_experiment(&cfg, "det").unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_csv(&rows_a, &mut csv_a).unwrap();
        write_csv(&rows_b, &mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(sum_a.to_json().unwrap(), sum_b.to_json().unwrap());
    }

    #[test]
    fn mollifier_study_contracts() {
        let cfg = parse(
            r#"
kind = "mollifier_study"
p = 4.0
n_steps = 8
n_cells_axis = 48
k_paths = 3
master_seed = 2

[drivers.initial]
id = "bump"
amplitude = 1.2
radius = 0.5

[drivers.f0]
id = "bump"
amplitude = 0.6
radius = 0.45
"#,
        );
        let (_, summary) = run_experiment(&cfg, "moll").unwrap();
        assert!(summary.passed, "{:?}", summary.first_failure());
    }

    #[test]
    fn fubini_experiment_exact_on_shared_paths() {
        let cfg = parse(
            r#"
kind = "fubini"
n_steps = 32
k_paths = 6
master_seed = 7
p = 2.0

[mark_space]
kind = "finite_uniform"
n_marks = 3
lambda = 2.0

[drivers.h]
id = "sinusoid"
amplitude = 0.7
frequency = 0.8

[fubini]
lambda_points = [0.5, 1.0, 2.0]
lambda_weights = [0.25, 1.0, 0.5]
"#,
        );
        let (rows, summary) = run_experiment(&cfg, "fub").unwrap();
        assert!(summary.passed, "{:?}", summary.first_failure());
        assert!(summary.condition_values["fubini_cond"] > 0.0);
        assert!(summary.condition_values["protter_cond"] > 0.0);
        assert!(rows.iter().any(|r| r.term == "gap_tilde"));
    }

    #[test]
    fn apriori_experiment_reports_components() {
        let cfg = parse(
            r#"
kind = "apriori_sweep"
p = 2.0
n_steps = 16
n_cells_axis = 16
n_wiener = 1
k_paths = 8
master_seed = 3

[mark_space]
kind = "finite_uniform"
n_marks = 2
lambda = 1.0

[drivers.initial]
id = "bump"

[drivers.f0]
id = "bump"
amplitude = 0.5
radius = 0.45

[[drivers.fi]]
id = "bump"
amplitude = 0.4
radius = 0.4

[[drivers.g]]
id = "bump"
amplitude = 0.3
radius = 0.4

[drivers.h]
id = "bump"
amplitude = 0.3
radius = 0.3
mark_sign_flip = true
"#,
        );
        let (rows, summary) = run_experiment(&cfg, "apriori").unwrap();
        assert!(summary.passed, "{:?}", summary.first_failure());
        assert!(summary.term_means["lhs_sup"] > 0.0);
        assert!(rows.iter().any(|r| r.term == "ratio"));
    }
}

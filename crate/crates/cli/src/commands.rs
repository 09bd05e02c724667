//! One function per subcommand: config section in, artifacts out.

use om_core::map_estimation::{
    default_method, map_convergence_experiment, posterior_objective, solve_map,
    solve_map_multistart, MapResult,
};
use om_core::om_functional::{box_inclusion_check, formal_neg_log_density, gamma_probe, sublevel_box, Membership};
use om_core::product_measure::support_diagnostic;
use om_core::reference::validate_assumptions;
use om_core::shift_density::{
    change_of_variables_check, dichotomy_agrees, kakutani_product, shepp_test, shift_density_generic,
};
use om_core::small_ball::{
    continuity_ratio_check, lemma_suite, mc_ball_masses, om_ratio_experiment, quad_ball_mass,
    quad_ratio, RatioRow, QUAD_MAX_K,
};
use om_core::{BallSpec, Point, ReferenceDensity};
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::output::{num, opt_num, Artifact, Csv};
use crate::CliError;

/// What a command produced. `hypothesis_failure` turns into exit code 3
/// after the artifacts are written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    pub hypothesis_failure: Option<String>,
}

pub fn execute(loaded: &Loaded) -> Result<Outcome, CliError> {
    let seed = loaded.seed;
    match loaded.command {
        Command::Validate => validate(body(loaded)?),
        Command::Sample => sample(body(loaded)?, seed),
        Command::OmEval => om_eval(body(loaded)?),
        Command::ShiftDensity => shift_density(body(loaded)?, seed),
        Command::Dichotomy => dichotomy(body(loaded)?),
        Command::SmallBall => small_ball(body(loaded)?, seed),
        Command::OmRatio => om_ratio(body(loaded)?, seed),
        Command::ContinuityRatio => continuity_ratio(body(loaded)?, seed),
        Command::GammaProbe => gamma(body(loaded)?),
        Command::EquicoercivityBox => equicoercivity(body(loaded)?, seed),
        Command::Map => map(body(loaded)?),
        Command::MapConverge => map_converge(body(loaded)?),
        Command::LemmaChecks => lemma_checks(body(loaded)?, seed),
    }
}

fn validate(cfg: ValidateConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut refs: Vec<ReferenceDensity> = cfg
        .references
        .iter()
        .map(|r| ReferenceDensity::from_spec(*r))
        .collect::<Result<_, _>>()?;
    let spec = cfg.measure.as_ref().map(|m| m.build()).transpose()?;
    if let Some(s) = &spec {
        refs.push(s.reference().clone());
    }
    if refs.is_empty() {
        return Err(CliError::Schema("config: give `references` or `measure`".into()));
    }
    let reports: Vec<_> = refs.iter().map(validate_assumptions).collect();
    for r in &reports {
        out.summary.push(format!(
            "{}: {}",
            r.reference,
            if r.admissible() { "admissible" } else { "not admissible" }
        ));
    }
    let bad: Vec<&str> = reports
        .iter()
        .filter(|r| !r.admissible())
        .map(|r| r.reference.as_str())
        .collect();
    if !bad.is_empty() {
        out.hypothesis_failure = Some(format!("not admissible: {}", bad.join(", ")));
    }
    let measure = spec.map(|s| {
        let g = s.gamma_summability(cfg.k);
        json!({ "label": s.label(), "warnings": s.warnings(), "gammaSummability": g })
    });
    out.artifacts
        .push(Artifact::json("validate.json", &json!({ "reports": reports, "measure": measure })));
    Ok(out)
}

fn sample(cfg: SampleConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let x = spec.sample(cfg.k, cfg.n, seed)?;
    let mut header = vec!["k".to_string()];
    header.extend((0..cfg.n).map(|j| format!("draw_{j}")));
    let mut csv = Csv::with_header("sample.csv", header);
    for k in 0..cfg.k {
        let mut row = vec![(k + 1).to_string()];
        row.extend(x.row(k).iter().map(|v| num(*v)));
        csv.row(row);
    }
    let mut out = Outcome {
        artifacts: vec![csv.finish()],
        summary: vec![format!("{} draws of {} coordinates", cfg.n, cfg.k)],
        ..Default::default()
    };
    if let Some(sup) = cfg.support {
        let metric = sup.metric.unwrap_or_else(|| spec.ambient().clone());
        let t = support_diagnostic(&spec, &metric, &sup.k_grid, sup.n, seed, sup.centered)?;
        let mut csv = Csv::new("support.csv", &["K", "mean", "median", "q90", "max"]);
        for r in &t.rows {
            csv.row(vec![r.k.to_string(), num(r.mean), num(r.median), num(r.q90), num(r.max)]);
        }
        out.artifacts.push(csv.finish());
        out.summary.push(format!("partial norms: {:?}", t.trend));
    }
    Ok(out)
}

fn membership(m: Membership) -> &'static str {
    match m {
        Membership::Yes => "yes",
        Membership::No => "no",
        Membership::Unknown => "unknown",
    }
}

fn om_eval(cfg: OmEvalConfig) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let mut csv = Csv::new("om_eval.csv", &["index", "value", "in_e", "partial_sum", "tail_bound", "K"]);
    let mut out = Outcome::default();
    for (i, h) in cfg.points.iter().enumerate() {
        let e = formal_neg_log_density(&spec, h, cfg.k)?;
        csv.row(vec![
            i.to_string(),
            num(e.value),
            membership(e.in_e).into(),
            num(e.partial_sum),
            opt_num(e.tail_bound),
            e.k.to_string(),
        ]);
        out.summary.push(format!("{}", e.value));
    }
    out.artifacts.push(csv.finish());
    Ok(out)
}

fn shift_density(cfg: ShiftDensityConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let mut out = Outcome::default();
    let mut csv = Csv::new("shift_density.csv", &["index", "log_value", "value", "K"]);
    for (i, x) in cfg.points.iter().enumerate() {
        let e = shift_density_generic(&spec, &cfg.h, x, cfg.k)?;
        csv.row(vec![i.to_string(), num(e.log_value), num(e.value()), e.k.to_string()]);
        out.summary.push(format!("r_h(x_{i}) = {}", e.value()));
    }
    out.artifacts.push(csv.finish());
    if let Some(cov) = cfg.change_of_variables {
        let k = cfg.h.support_end().max(1);
        let checks = cov
            .functionals
            .iter()
            .map(|f| change_of_variables_check(&spec, &cfg.h, f, k.max(f.dimension()), cov.n, seed))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, c) in checks.iter().enumerate() {
            out.summary.push(format!("change of variables {i}: z = {:.3}", c.z));
        }
        let rows: Vec<_> = cov
            .functionals
            .iter()
            .zip(&checks)
            .map(|(f, c)| json!({ "functional": f, "result": c }))
            .collect();
        out.artifacts.push(Artifact::json("change_of_variables.json", &rows));
    }
    Ok(out)
}

fn dichotomy(cfg: DichotomyConfig) -> Result<Outcome, CliError> {
    let default = cfg.measure.as_ref().map(|m| m.build()).transpose()?;
    let mut out = Outcome::default();
    let mut csv = Csv::new(
        "dichotomy.csv",
        &["label", "shepp", "partial_sum", "tail_bound", "K", "log_product", "trend", "agree"],
    );
    for v in &cfg.vectors {
        let spec = match (&v.measure, &default) {
            (Some(m), _) => m.build()?,
            (None, Some(d)) => d.clone(),
            (None, None) => {
                return Err(CliError::Schema(format!(
                    "config/vectors: '{}' has no measure and there is no default",
                    v.label
                )))
            }
        };
        let s = shepp_test(&spec, &v.h, cfg.k)?;
        let kk = kakutani_product(&spec, &v.h, cfg.kakutani_k);
        let agree = dichotomy_agrees(s.verdict, kk.trend);
        let verdict = serde_json::to_value(s.verdict)?;
        let trend = serde_json::to_value(kk.trend)?;
        let (verdict, trend) = (verdict.as_str().unwrap_or(""), trend.as_str().unwrap_or(""));
        csv.row(vec![
            v.label.clone(),
            verdict.into(),
            num(s.partial_sum),
            opt_num(s.tail_bound),
            s.k.to_string(),
            num(kk.log_product),
            trend.into(),
            agree.to_string(),
        ]);
        out.summary.push(format!(
            "{}: {verdict}, partial sum {}, kakutani {trend}",
            v.label, s.partial_sum
        ));
    }
    out.artifacts.push(csv.finish());
    Ok(out)
}

fn small_ball(cfg: SmallBallConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let quad = cfg.quadrature.unwrap_or(cfg.k <= QUAD_MAX_K);
    let mut csv = Csv::new("small_ball.csv", &["index", "r", "K", "n", "mc", "stderr", "quad", "z"]);
    let mut out = Outcome::default();
    for (i, b) in cfg.balls.iter().enumerate() {
        let metric = b.metric.clone().unwrap_or_else(|| spec.ambient().clone());
        let mc = mc_ball_masses(&spec, &b.center, &[b.radius], &metric, cfg.k, cfg.n, seed)?[0];
        let q = if quad {
            Some(quad_ball_mass(&spec, &BallSpec::new(b.center.clone(), b.radius, metric, cfg.k)?)?)
        } else {
            None
        };
        let z = q.map(|q| mc.z_against(q));
        csv.row(vec![
            i.to_string(),
            num(b.radius),
            cfg.k.to_string(),
            cfg.n.to_string(),
            num(mc.mean),
            num(mc.stderr),
            opt_num(q),
            opt_num(z),
        ]);
        out.summary.push(format!("ball {i}: mc {} ± {}", mc.mean, mc.stderr));
    }
    out.artifacts.push(csv.finish());
    Ok(out)
}

pub const RATIO_HEADER: [&str; 7] = ["r", "K", "n", "est", "stderr", "predicted", "z"];

fn ratio_csv(name: &str, rows: &[RatioRow]) -> Artifact {
    let mut csv = Csv::new(name, &RATIO_HEADER);
    for r in rows {
        csv.row(vec![
            num(r.r),
            r.k.to_string(),
            r.n.to_string(),
            num(r.est),
            num(r.stderr),
            num(r.predicted),
            num(r.z),
        ]);
    }
    csv.finish()
}

fn om_ratio(cfg: OmRatioConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let rows = om_ratio_experiment(&spec, &cfg.h, &cfg.r_grid, cfg.k, cfg.n, seed)?;
    let mut out = Outcome {
        artifacts: vec![ratio_csv("om_ratio.csv", &rows)],
        ..Default::default()
    };
    if let Some(last) = rows.last() {
        out.summary.push(format!("predicted {}", last.predicted));
        out.summary.push(format!("r = {}: est {} ± {}", last.r, last.est, last.stderr));
    }
    if cfg.quadrature.unwrap_or(cfg.k <= QUAD_MAX_K) {
        let mut csv = Csv::new("om_ratio_quad.csv", &["r", "K", "quad", "mc_z"]);
        for r in &rows {
            let q = quad_ratio(&spec, &cfg.h, &Point::at_shift(), r.r, cfg.k)?;
            csv.row(vec![num(r.r), r.k.to_string(), num(q), num((r.est - q) / r.stderr)]);
        }
        out.artifacts.push(csv.finish());
    }
    Ok(out)
}

fn continuity_ratio(cfg: ContinuityRatioConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let rows = continuity_ratio_check(&spec, &cfg.x_star, &cfg.h, &cfg.r_grid, cfg.k, cfg.n, seed)?;
    let mut out = Outcome {
        artifacts: vec![ratio_csv("continuity_ratio.csv", &rows)],
        ..Default::default()
    };
    if let Some(last) = rows.last() {
        out.summary.push(format!("predicted {}", last.predicted));
        out.summary.push(format!("r = {}: est {} ± {}", last.r, last.est, last.stderr));
    }
    Ok(out)
}

fn gamma(cfg: GammaProbeConfig) -> Result<Outcome, CliError> {
    let probe = gamma_probe(&cfg.family, &cfg.x, &cfg.n_grid, cfg.k)?;
    let mut csv = Csv::new("gamma_probe.csv", &["n", "I_n_recovery", "I_inf", "gap", "I_n_constant"]);
    for r in &probe.rows {
        csv.row(vec![
            r.n.to_string(),
            num(r.i_n_recovery),
            num(r.i_inf),
            num(r.gap),
            num(r.i_n_constant),
        ]);
    }
    let last = probe.rows.last().map(|r| r.gap).unwrap_or(f64::NAN);
    Ok(Outcome {
        artifacts: vec![csv.finish(), Artifact::json("gamma_hypotheses.json", &probe.hypotheses)],
        summary: vec![format!("final recovery gap {last}")],
        ..Default::default()
    })
}

fn equicoercivity(cfg: EquicoercivityBoxConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let mut csv = Csv::new("equicoercivity_box.csv", &["t", "a", "points", "violations", "max_ratio"]);
    let mut boxes = Csv::new("box_intervals.csv", &["t", "k", "lo", "hi"]);
    let mut out = Outcome::default();
    for t in &cfg.t_grid {
        let r = box_inclusion_check(&spec, *t, cfg.n, cfg.k, seed)?;
        csv.row(vec![
            num(*t),
            num(r.a),
            r.points.to_string(),
            r.violations.to_string(),
            num(r.max_ratio),
        ]);
        let b = sublevel_box(&spec, *t)?;
        for k in 1..=cfg.k {
            let (lo, hi) = b.interval(k);
            boxes.row(vec![num(*t), k.to_string(), num(lo), num(hi)]);
        }
        out.summary.push(format!("t = {t}: {} violations in {} points", r.violations, r.points));
    }
    out.artifacts.push(csv.finish());
    out.artifacts.push(boxes.finish());
    Ok(out)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MapReport<'a> {
    result: &'a MapResult,
    starts: Vec<f64>,
    /// Closed-form minimizer where one exists.
    oracle: Option<Vec<f64>>,
    oracle_max_abs_diff: Option<f64>,
}

fn map(cfg: MapConfig) -> Result<Outcome, CliError> {
    let spec = cfg.measure.build()?;
    let phi = cfg.potential.build()?;
    let j = posterior_objective(&spec, phi, cfg.k)?;
    let method = cfg.method.unwrap_or_else(|| default_method(&spec));
    let init = cfg.init.clone().unwrap_or_else(|| j.shift().to_vec());
    let mut inits = vec![init];
    inits.extend(cfg.starts.iter().cloned());
    let (best, runs) = if inits.len() == 1 {
        let r = solve_map(&j, method, &inits[0], &cfg.options)?;
        (r.clone(), vec![r])
    } else {
        solve_map_multistart(&j, method, &inits, &cfg.options)?
    };
    let oracle = j.normal_equations().or_else(|_| j.soft_threshold_solution()).ok();
    let diff = oracle.as_ref().map(|o| {
        o.iter()
            .zip(&best.argmin)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    let mut csv = Csv::new("map.csv", &["k", "argmin"]);
    for (i, v) in best.argmin.iter().enumerate() {
        csv.row(vec![(i + 1).to_string(), num(*v)]);
    }
    let report = MapReport {
        result: &best,
        starts: runs.iter().map(|r| r.objective).collect(),
        oracle,
        oracle_max_abs_diff: diff,
    };
    let mut summary = vec![format!(
        "objective {} after {} iterations (converged: {})",
        best.objective, best.iterations, best.converged
    )];
    if let Some(d) = diff {
        summary.push(format!("max |MAP - closed form| = {d:e}"));
    }
    Ok(Outcome {
        artifacts: vec![csv.finish(), Artifact::json("map.json", &report)],
        summary,
        ..Default::default()
    })
}

fn map_converge(cfg: MapConvergeConfig) -> Result<Outcome, CliError> {
    let phi = cfg.potential.build()?;
    let limit = cfg.family.limit()?;
    let method = cfg.method.unwrap_or_else(|| default_method(&limit));
    let res = map_convergence_experiment(&cfg.family, &phi, cfg.k, &cfg.n_grid, method, &cfg.options)?;
    let mut csv = Csv::new("map_converge.csv", &["n", "dist", "obj", "iters", "converged"]);
    for r in &res.rows {
        csv.row(vec![
            r.n.to_string(),
            num(r.dist),
            num(r.obj),
            r.iters.to_string(),
            r.converged.to_string(),
        ]);
    }
    let last = res.rows.last().map(|r| r.dist).unwrap_or(f64::NAN);
    Ok(Outcome {
        artifacts: vec![csv.finish(), Artifact::json("map_limit.json", &res.limit)],
        summary: vec![format!("final distance {last:e}")],
        ..Default::default()
    })
}

fn lemma_checks(cfg: LemmaChecksConfig, seed: u64) -> Result<Outcome, CliError> {
    let rows = lemma_suite(cfg.cases, seed)?;
    let mut csv = Csv::new("lemma_checks.csv", &["suite", "case", "lhs", "rhs", "pass", "detail"]);
    for r in &rows {
        csv.row(vec![
            r.suite.clone(),
            r.case.to_string(),
            num(r.lhs),
            num(r.rhs),
            r.pass.to_string(),
            r.detail.clone(),
        ]);
    }
    let mut summary = Vec::new();
    for suite in ["lemma-1d", "besov-shift", "taylor"] {
        let (n, ok) = rows
            .iter()
            .filter(|r| r.suite == suite)
            .fold((0, 0), |(n, ok), r| (n + 1, ok + usize::from(r.pass)));
        summary.push(format!("{suite}: {ok}/{n} pass"));
    }
    Ok(Outcome {
        artifacts: vec![csv.finish()],
        summary,
        ..Default::default()
    })
}

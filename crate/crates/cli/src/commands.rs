use std::path::Path;

use rand::Rng;

use smp_passage::estimate::{estimate, estimate_passage, TransitionTrace};
use smp_passage::graph::{check_stochastic, structure};
use smp_passage::model::{validate, SmpModel};
use smp_passage::passage::{
    higher_moments, higher_moments_with, residual_tolerance, verify_first_step, verify_model,
    PassageOptions,
};
use smp_passage::random::state_names;
use smp_passage::sim::{empirical_passage, simulate_trace, InitialState, SimConfig};
use smp_passage::Error;

use crate::report::*;
use crate::{Command, EstimateArgs, MomentsArgs, SimulateArgs};

/// A finished report plus the stderr summary.
pub struct Outcome {
    pub report: Report,
    pub summary: Vec<String>,
}

impl Outcome {
    fn new(name: &str, argv: Vec<String>) -> Self {
        Outcome {
            report: Report::new(name, argv),
            summary: Vec::new(),
        }
    }

    fn fail(mut self, err: &Error, names: &[String]) -> Self {
        self.report.exit_code = exit_code(err);
        self.report.error = Some(error_report(err, names));
        self
    }

    fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }
}

pub fn execute(command: &Command, argv: Vec<String>) -> Outcome {
    match command {
        Command::Check { model } => check(model, argv),
        Command::Analyze { model } => analyze(model, argv),
        Command::Moments(args) => moments(args, argv),
        Command::Simulate(args) => simulate(args, argv),
        Command::Estimate(args) => estimate_cmd(args, argv),
    }
}

/// Reads and validates a model; on failure the outcome carries the report.
#[allow(clippy::result_large_err)]
fn load(path: &Path, out: Outcome) -> Result<(SmpModel, Outcome), Outcome> {
    let mut out = out;
    let model = match SmpModel::read(path) {
        Ok(m) => m,
        Err(e) => return Err(out.fail(&e, &[])),
    };
    out.report.model = Some(ModelDigest::of(&model));
    let diags = validate(&model);
    if !diags.is_empty() {
        out.say(format!("{} problem(s) in {}:", diags.len(), path.display()));
        for d in &diags {
            let at = match (d.row, d.col) {
                (Some(r), Some(c)) => format!(" [{r},{c}]"),
                (Some(r), None) => format!(" [row {r}]"),
                _ => String::new(),
            };
            out.say(format!("  {}{at}", d.message));
        }
        out.report.diagnostics = diags.iter().map(ReportDiagnostic::from).collect();
        out.report.exit_code = EXIT_INVALID;
        return Err(out);
    }
    if let Ok(s) = structure(&model.p) {
        out.report.structure = Some(StructureSummary::from(&s));
    }
    Ok((model, out))
}

fn labels(names: &[String], states: &[usize]) -> String {
    states
        .iter()
        .map(|&i| names[i - 1].as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn vector(names: &[String], v: &[f64]) -> String {
    names
        .iter()
        .zip(v)
        .map(|(n, x)| format!("{n}={}", sig6(*x)))
        .collect::<Vec<_>>()
        .join("  ")
}

fn check(path: &Path, argv: Vec<String>) -> Outcome {
    match load(path, Outcome::new("check", argv)) {
        Ok((model, mut out)) => {
            out.say(format!(
                "{}: valid {}-state {} model",
                path.display(),
                model.state_count(),
                model.sojourn.flavor()
            ));
            out
        }
        Err(out) => out,
    }
}

fn analyze(path: &Path, argv: Vec<String>) -> Outcome {
    let (model, mut out) = match load(path, Outcome::new("analyze", argv)) {
        Ok(x) => x,
        Err(out) => return out,
    };
    let names = &model.state_names;
    let summary = out
        .report
        .structure
        .clone()
        .expect("valid models are stochastic");
    for b in &summary.blocks {
        out.say(format!(
            "{:<9} {{{}}}  rho = {}",
            serde_json::to_value(b.kind).unwrap().as_str().unwrap_or(""),
            labels(names, &b.states),
            sig6(b.spectral_radius)
        ));
    }
    out.say(format!("irreducible: {}", summary.irreducible));
    out.say(format!(
        "universally accessible: {{{}}}",
        labels(names, &summary.ua_states)
    ));
    out
}

fn moments(args: &MomentsArgs, argv: Vec<String>) -> Outcome {
    let (model, mut out) = match load(&args.model, Outcome::new("moments", argv)) {
        Ok(x) => x,
        Err(out) => return out,
    };
    let names = model.state_names.clone();
    let order = args.order as usize;
    let j = match model.resolve_state(&args.target) {
        Ok(j) => j,
        Err(e) => return out.fail(&e, &names),
    };
    let opts = PassageOptions {
        allow_unreachable: args.allow_unreachable,
    };
    let pm = match higher_moments_with(&model, j, order, opts) {
        Ok(pm) => pm,
        Err(e) => return out.fail(&e, &names),
    };
    let residual = match verify_model(&model, &pm) {
        Ok(r) => r,
        Err(e) => return out.fail(&e, &names),
    };
    let tolerance = residual_tolerance(&pm);

    out.say(format!("first-passage moments to {}:", names[j]));
    for (r, v) in pm.mu.iter().enumerate() {
        out.say(format!("  r={}: {}", r + 1, vector(&names, v)));
    }
    out.say(format!(
        "first-step residual {} (tolerance {})",
        sig6(residual),
        sig6(tolerance)
    ));
    for note in &pm.notes {
        out.say(format!("note: {note}"));
    }
    out.report.diagnostics = pm
        .notes
        .iter()
        .map(|n| ReportDiagnostic::note("note", n.clone()))
        .collect();
    out.report.results = Some(Results::Moments(MomentsResult {
        target: StateRef::new(&names, j),
        order,
        moments: pm.mu.clone(),
        residual,
        residual_tolerance: tolerance,
        notes: pm.notes.clone(),
    }));
    if residual.is_nan() || residual > tolerance {
        let err = Error::Internal(format!(
            "first-step residual {residual:e} exceeds tolerance {tolerance:e}"
        ));
        return out.fail(&err, &names);
    }
    out
}

fn simulate(args: &SimulateArgs, argv: Vec<String>) -> Outcome {
    let (model, mut out) = match load(&args.model, Outcome::new("simulate", argv)) {
        Ok(x) => x,
        Err(out) => return out,
    };
    let names = model.state_names.clone();
    if model.distributions().is_err() {
        let err =
            Error::Unsupported("simulate requires a model with a \"distributions\" section".into());
        return out.fail(&err, &names);
    }
    let seed = args.seed.unwrap_or_else(|| rand::rng().random());
    let order = args.order as usize;
    let mut result = SimulateResult {
        seed,
        target: None,
        order,
        replications: args.reps as usize,
        max_transitions: args.max_transitions as usize,
        empirical: None,
        analytic: None,
        z_scores: None,
        trace: None,
        warnings: Vec::new(),
    };
    out.say(format!("seed {seed}"));

    if let Some(target) = &args.target {
        let j = match model.resolve_state(target) {
            Ok(j) => j,
            Err(e) => return out.fail(&e, &names),
        };
        result.target = Some(StateRef::new(&names, j));
        let cfg = SimConfig {
            seed,
            replications: args.reps as usize,
            max_transitions: args.max_transitions as usize,
            initial: InitialState::State(0),
            stop_at_absorbing: false,
        };
        let emp = match empirical_passage(&model, j, &cfg, order) {
            Ok(e) => e,
            Err(e) => return out.fail(&e, &names),
        };
        let analytic = higher_moments(&model, j, order).ok().map(|pm| pm.mu);
        if let Some(a) = &analytic {
            let z = (0..order)
                .map(|r| {
                    (0..names.len())
                        .map(|i| (emp.mean[r][i] - a[r][i]) / emp.std_err[r][i])
                        .collect()
                })
                .collect();
            result.z_scores = Some(z);
        }
        out.say(format!(
            "empirical passage moments to {} ({} replications per source):",
            names[j], args.reps
        ));
        for r in 0..order {
            out.say(format!(
                "  r={} mean:     {}",
                r + 1,
                vector(&names, &emp.mean[r])
            ));
            out.say(format!(
                "  r={} std err:  {}",
                r + 1,
                vector(&names, &emp.std_err[r])
            ));
            if let Some(a) = &analytic {
                out.say(format!("  r={} analytic: {}", r + 1, vector(&names, &a[r])));
            }
        }
        for w in &emp.warnings {
            out.say(format!("warning: {w}"));
        }
        result.warnings = emp.warnings.clone();
        result.analytic = analytic;
        result.empirical = Some(Empirical {
            mean: emp.mean,
            std_err: emp.std_err,
            completed: emp.completed,
            censored: emp.censored,
            mean_transitions: emp.mean_transitions,
        });
    }

    if let Some(path) = &args.emit_trace {
        let start = match model.resolve_state(&args.trace_start) {
            Ok(s) => s,
            Err(e) => return out.fail(&e, &names),
        };
        let cfg = SimConfig {
            seed,
            replications: args.trace_reps as usize,
            max_transitions: args.trace_length as usize,
            initial: InitialState::State(start),
            stop_at_absorbing: args.stop_at_absorbing,
        };
        let written = simulate_trace(&model, &cfg).and_then(|t| {
            t.write_csv_path(path)?;
            Ok(t.records.len())
        });
        let records = match written {
            Ok(n) => n,
            Err(e) => return out.fail(&e, &names),
        };
        out.say(format!("wrote {records} transitions to {}", path.display()));
        result.trace = Some(TraceOutput {
            path: path.display().to_string(),
            replications: cfg.replications,
            max_transitions: cfg.max_transitions,
            start: StateRef::new(&names, start),
            records,
        });
    }
    out.report.results = Some(Results::Simulate(result));
    out
}

fn estimate_cmd(args: &EstimateArgs, argv: Vec<String>) -> Outcome {
    let mut out = Outcome::new("estimate", argv);
    let m = args.states as usize;
    let order = args.order as usize;
    let names = state_names(m);
    let trace = match TransitionTrace::read_csv_path(&args.trace, m) {
        Ok(t) => t,
        Err(e) => return out.fail(&e, &names),
    };
    let est = match estimate(&trace, m, order) {
        Ok(e) => e,
        Err(e) => return out.fail(&e, &names),
    };
    let model = est.to_model(names.clone());
    out.report.model = Some(ModelDigest::of(&model));
    let j = match model.resolve_state(&args.target) {
        Ok(j) => j,
        Err(e) => return out.fail(&e, &names),
    };
    if check_stochastic(&est.p_hat).is_ok() {
        if let Ok(s) = structure(&est.p_hat) {
            out.report.structure = Some(StructureSummary::from(&s));
        }
    }
    out.report.diagnostics = est
        .diagnostics()
        .into_iter()
        .map(|d| ReportDiagnostic::note("coverage", d))
        .collect();
    out.say(format!(
        "{} completed transitions over {m} states",
        trace.transition_count()
    ));
    for d in &out.report.diagnostics.clone() {
        out.say(format!("note: {}", d.message));
    }

    let mut result = EstimateResult {
        states: m,
        transitions: trace.transition_count(),
        censored_discarded: est.censored_discarded,
        counts: est.counts.clone(),
        p_hat: est.p_hat.to_rows(),
        e_hat: est.e_hat.orders.iter().map(|e| e.to_rows()).collect(),
        target: StateRef::new(&names, j),
        order,
        moments: None,
        residual: None,
        emitted_model: None,
    };
    if let Some(path) = &args.emit_model {
        if let Err(e) = model.write(path) {
            out.report.results = Some(Results::Estimate(result));
            return out.fail(&e, &names);
        }
        result.emitted_model = Some(path.display().to_string());
        out.say(format!("wrote estimated model to {}", path.display()));
    }

    match estimate_passage(&est, j, order) {
        Ok(pm) => {
            let residual = verify_first_step(&est.p_hat, &est.e_hat, &pm);
            out.say(format!("estimated first-passage moments to {}:", names[j]));
            for (r, v) in pm.mu.iter().enumerate() {
                out.say(format!("  r={}: {}", r + 1, vector(&names, v)));
            }
            let tolerance = residual_tolerance(&pm);
            result.moments = Some(pm.mu);
            result.residual = Some(residual);
            out.report.results = Some(Results::Estimate(result));
            if residual.is_nan() || residual > tolerance {
                let err = Error::Internal(format!(
                    "first-step residual {residual:e} exceeds tolerance {tolerance:e}"
                ));
                return out.fail(&err, &names);
            }
            out
        }
        Err(e) => {
            out.report.results = Some(Results::Estimate(result));
            out.fail(&e, &names)
        }
    }
}

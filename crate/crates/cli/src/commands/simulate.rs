use mkalloc::allocator::Phase;
use mkalloc::simlab::{
    convergence_experiment, discrete_error_experiment, sensitivity_experiment, BiasedParam, DiscreteErrorConfig, SensitivityConfig,
    SensitivityReport, Summary,
};
use mkalloc::{ObjectiveTolerance, SolverConfig};

use crate::args::{ConvergeArgs, DiscreteErrorArgs, SensitivityArgs, SimulateCommand};
use crate::error::{CliError, CliResult};
use crate::format::{fmt_num, round_value, to_json_text};

use super::{csv_text, emit};

pub fn run(cmd: &SimulateCommand) -> CliResult<()> {
    match cmd {
        SimulateCommand::Converge(a) => converge(a),
        SimulateCommand::Sensitivity(a) => sensitivity(a),
        SimulateCommand::DiscreteError(a) => discrete_error(a),
    }
}

fn positive(name: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be positive")));
    }
    Ok(())
}

fn converge(args: &ConvergeArgs) -> CliResult<()> {
    positive("--n", args.n)?;
    positive("--runs", args.runs)?;
    let solver = SolverConfig {
        epsilon_prime: ObjectiveTolerance::RelativeToMarket(args.epsilon_prime),
        ..Default::default()
    };
    solver.validate()?;
    let seeds = (0..args.runs as u64).map(|k| args.seed.wrapping_add(k));
    let runs = convergence_experiment(args.n, seeds, &solver)?;

    if let Some(path) = &args.out {
        let header = ["seed", "iteration", "phase", "lambda_l", "lambda_r", "f_l", "f_r", "g_l", "g_r"];
        let lines = runs.iter().flat_map(|r| {
            r.trace.iter().enumerate().map(move |(k, t)| {
                let phase = match t.phase {
                    Phase::Doubling => "doubling",
                    Phase::Bisection => "bisection",
                };
                vec![
                    r.seed.to_string(),
                    (k + 1).to_string(),
                    phase.to_string(),
                    fmt_num(t.lambda_l),
                    fmt_num(t.lambda_r),
                    fmt_num(t.f_l),
                    fmt_num(t.f_r),
                    fmt_num(t.g_l),
                    fmt_num(t.g_r),
                ]
            })
        });
        emit(Some(path), &csv_text(&header, lines))?;
    }

    println!(
        "{:>10} {:>6} {:>9} {:>9} {:>6} {:>14} termination",
        "seed", "iters", "doubling", "bisection", "bound", "lambda*"
    );
    for r in &runs {
        println!(
            "{:>10} {:>6} {:>9} {:>9} {:>6} {:>14} {}",
            r.seed,
            r.iterations,
            r.doubling_iterations,
            r.bisection_iterations,
            r.iteration_bound,
            r.lambda_star.map_or("n/a".into(), fmt_num),
            r.termination
        );
    }
    let within = runs.iter().filter(|r| r.iterations <= 10).count();
    println!("{within}/{} runs converged within 10 iterations", runs.len());
    Ok(())
}

/// Threshold checks on the reports, skipping levels that were not run.
fn threshold_checks(reports: &[SensitivityReport]) -> Vec<(String, bool)> {
    let find = |p: BiasedParam, level: f64| reports.iter().find(|r| r.param == p && (r.level - level).abs() < 1e-12);
    let pct = |v: f64| format!("{}%", fmt_num(100.0 * v));
    let mut checks = Vec::new();
    if let Some(a20) = find(BiasedParam::Bias, 0.2) {
        let m = a20.objective_error.mean;
        checks.push((format!("objective error at 20% a-bias {} < 1%", pct(m)), m < 0.01));
        if let Some(b20) = find(BiasedParam::Sensitivity, 0.2) {
            let (a, b) = (a20.exceeded_budget.mean, b20.exceeded_budget.mean);
            checks.push((format!("exceeded budget at 20%: b {} >= a {}", pct(b), pct(a)), b >= a));
        }
    }
    for (param, level) in [(BiasedParam::Bias, 0.1), (BiasedParam::Sensitivity, 0.05)] {
        if let Some(r) = find(param, level) {
            let m = r.exceeded_budget.mean;
            checks.push((
                format!("exceeded budget at {}% {}-bias {} < 5%", fmt_num(100.0 * level), param.as_str(), pct(m)),
                m < 0.05,
            ));
        }
    }
    checks
}

fn summary_fields(s: &Summary) -> [String; 5] {
    [s.mean, s.std, s.median, s.min, s.max].map(fmt_num)
}

fn sensitivity(args: &SensitivityArgs) -> CliResult<()> {
    positive("--n", args.n)?;
    positive("--runs", args.runs)?;
    let cfg = SensitivityConfig {
        n_segments: args.n,
        runs: args.runs,
        seed: args.seed,
        levels: args.levels.clone(),
        ..Default::default()
    };
    let reports = sensitivity_experiment(&cfg)?;

    if let Some(path) = &args.out {
        let header = [
            "param",
            "level",
            "runs",
            "seed",
            "objective_error_mean",
            "objective_error_std",
            "objective_error_median",
            "objective_error_min",
            "objective_error_max",
            "exceeded_budget_mean",
            "exceeded_budget_std",
            "exceeded_budget_median",
            "exceeded_budget_min",
            "exceeded_budget_max",
        ];
        let lines = reports.iter().map(|r| {
            let mut row = vec![r.param.as_str().to_string(), fmt_num(r.level), r.runs.to_string(), r.seed.to_string()];
            row.extend(summary_fields(&r.objective_error));
            row.extend(summary_fields(&r.exceeded_budget));
            row
        });
        emit(Some(path), &csv_text(&header, lines))?;
    }
    let checks = threshold_checks(&reports);
    if let Some(path) = &args.json {
        let value = serde_json::json!({
            "reports": reports,
            "checks": checks.iter().map(|(what, ok)| serde_json::json!({ "check": what, "pass": ok })).collect::<Vec<_>>(),
        });
        emit(Some(path), &to_json_text(&round_value(value)))?;
    }

    println!(
        "{:>5} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "param", "level", "obj err %", "(median)", "exceeded %", "(median)"
    );
    for r in &reports {
        println!(
            "{:>5} {:>6} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            r.param.as_str(),
            fmt_num(r.level),
            100.0 * r.objective_error.mean,
            100.0 * r.objective_error.median,
            100.0 * r.exceeded_budget.mean,
            100.0 * r.exceeded_budget.median
        );
    }
    for (what, ok) in &checks {
        println!("[{}] {what}", if *ok { "ok" } else { "violated" });
    }
    if args.check {
        if checks.is_empty() {
            return Err(CliError::Usage("--check needs levels 0.05, 0.1 or 0.2".into()));
        }
        let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(w, _)| w.as_str()).collect();
        if !failed.is_empty() {
            return Err(CliError::CheckFailed(failed.join("; ")));
        }
    }
    Ok(())
}

fn discrete_error(args: &DiscreteErrorArgs) -> CliResult<()> {
    positive("--n", args.n)?;
    positive("--runs", args.runs)?;
    let cfg = DiscreteErrorConfig {
        distances: args.distances.clone(),
        runs: args.runs,
        n_segments: args.n,
        seed: args.seed,
        ..Default::default()
    };
    let rows = discrete_error_experiment(&cfg)?;

    if let Some(path) = &args.out {
        let header = ["distance", "strategy", "runs", "seed", "mean", "std", "median", "min", "max"];
        let lines = rows.iter().map(|r| {
            let mut row = vec![fmt_num(r.distance), r.strategy.to_string(), r.runs.to_string(), r.seed.to_string()];
            row.extend(summary_fields(&r.error_bound_pct));
            row
        });
        emit(Some(path), &csv_text(&header, lines))?;
    }

    // one line per distance, strategies side by side
    println!("{:>8} {:>22} {:>22}", "distance", "two-step mean (std) %", "direct mean (std) %");
    for d in &cfg.distances {
        let cell = |strategy: &str| {
            rows.iter()
                .find(|r| r.distance == *d && r.strategy == strategy)
                .map_or("n/a".to_string(), |r| format!("{:.4} ({:.4})", r.error_bound_pct.mean, r.error_bound_pct.std))
        };
        println!(
            "{:>8} {:>22} {:>22}",
            fmt_num(*d),
            cell(mkalloc::Strategy::BisectionThenMckp.as_str()),
            cell(mkalloc::Strategy::DirectDyerZemel.as_str())
        );
    }
    Ok(())
}

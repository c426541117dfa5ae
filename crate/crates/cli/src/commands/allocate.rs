use mkalloc::{
    evaluate, solve, solve_discrete, AllocationProblem, Constraint, DiscreteConfig, ObjectiveTolerance, Segment, SolverConfig, Strategy,
};
use serde_json::{json, Value};

use crate::args::{AllocateArgs, StrategyArg};
use crate::error::{CliError, CliResult};
use crate::format::{fmt_num, json_num, round_value, to_json_text};
use crate::input::SegmentsFile;

use super::{csv_text, emit};

struct Row {
    id: String,
    cost: f64,
    share: f64,
    sales: f64,
    spend: f64,
    no_action: Option<bool>,
}

fn rows_at(segments: &[Segment], costs: &[f64]) -> Vec<Row> {
    segments
        .iter()
        .zip(costs)
        .map(|(s, &c)| {
            let sales = s.demand(c);
            Row {
                id: s.id.clone(),
                cost: c,
                share: s.share(c),
                sales,
                spend: sales * c,
                no_action: None,
            }
        })
        .collect()
}

fn row_json(r: &Row) -> Value {
    let mut v = json!({ "id": r.id, "c": r.cost, "q": r.share, "sales": r.sales, "spend": r.spend });
    if let Some(flag) = r.no_action {
        v["no_action"] = json!(flag);
    }
    v
}

pub fn run(args: &AllocateArgs) -> CliResult<()> {
    let file = SegmentsFile::read(&args.segments)?;
    let segments = file.segments()?;
    let solver = SolverConfig {
        epsilon: args.epsilon,
        epsilon_prime: ObjectiveTolerance::RelativeToMarket(args.epsilon_prime),
        ..Default::default()
    };
    solver.validate()?;
    let constraint = match (args.budget, args.roi) {
        (Some(b), None) => Constraint::Budget(b),
        (None, Some(r)) => Constraint::Roi(r),
        _ => return Err(CliError::Usage("give exactly one of --budget and --roi".into())),
    };

    let (rows, mut report) = if args.discrete {
        let Constraint::Budget(budget) = constraint else {
            return Err(CliError::Usage("--discrete supports --budget only".into()));
        };
        if let Some(s) = segments.iter().find(|s| s.options.is_none()) {
            return Err(CliError::Usage(format!("--discrete needs options for every segment; {:?} has none", s.id)));
        }
        let cfg = DiscreteConfig {
            strategy: match args.strategy {
                StrategyArg::TwoStep => Strategy::BisectionThenMckp,
                StrategyArg::Direct => Strategy::DirectDyerZemel,
            },
            solver,
            ..Default::default()
        };
        let sol = solve_discrete(&segments, budget, &cfg)?;
        let mut rows = rows_at(&segments, &sol.costs);
        for (r, &flag) in rows.iter_mut().zip(&sol.implicit_no_action) {
            r.no_action = Some(flag);
        }
        let report = json!({
            "lambda_star": null,
            "iterations": null,
            "termination": cfg.strategy.as_str(),
            "budget": budget,
            "relaxed_objective": sol.relaxed_objective,
            "no_action_objective": sol.no_action_objective,
            "approx_error_upper_bound": sol.approx_error_upper_bound,
            "break_class": sol.break_class.map(|k| sol.ids[k].clone()),
        });
        (rows, report)
    } else {
        let sol = solve(&AllocationProblem::new(segments.clone(), constraint).with_config(solver))?;
        let mut report = json!({
            "lambda_star": sol.lambda_star,
            "iterations": sol.iterations(),
            "termination": sol.termination.as_str(),
        });
        match constraint {
            Constraint::Budget(b) => report["budget"] = json!(b),
            Constraint::Roi(r) => report["roi_target"] = json!(r),
        }
        (rows_at(&segments, &sol.costs()), report)
    };

    let ev = evaluate(&segments, &rows.iter().map(|r| r.cost).collect::<Vec<_>>());
    report["objective"] = json_num(ev.objective);
    report["spend"] = json_num(ev.spend);
    report["roi"] = ev.roi.map_or(Value::Null, json_num);
    report["per_segment"] = Value::Array(rows.iter().map(row_json).collect());

    if let Some(path) = &args.csv {
        let header = ["id", "c", "q", "sales", "spend"];
        let lines = rows
            .iter()
            .map(|r| vec![r.id.clone(), fmt_num(r.cost), fmt_num(r.share), fmt_num(r.sales), fmt_num(r.spend)]);
        emit(Some(path), &csv_text(&header, lines))?;
    }
    let text = to_json_text(&round_value(report));
    match &args.out {
        Some(path) => {
            emit(Some(path), &text)?;
            println!(
                "objective {} spend {} roi {}",
                fmt_num(ev.objective),
                fmt_num(ev.spend),
                ev.roi.map_or("n/a".into(), fmt_num)
            );
        }
        None => emit(None, &text)?,
    }
    Ok(())
}

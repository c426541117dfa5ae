use std::collections::{BTreeMap, HashMap};

use mkalloc::forecaster::{fit_independent_logit, rmae, train, Observation, SegmentContext, TrainConfig, TrainingSet};
use serde_json::json;

use crate::args::FitArgs;
use crate::error::{CliError, CliResult};
use crate::format::{fmt_num, round_value, to_json_text};
use crate::input::{HistoryFile, HistoryRow, SegmentsFile};
use crate::model::{LogitDocument, LogitSegment};

use super::emit;

type SharePredictor = Box<dyn Fn(&str, f64) -> Option<f64>>;

/// Market size per segment, from a segments file or the largest training sale.
fn market_sizes(args: &FitArgs, train_rows: &[HistoryRow]) -> CliResult<HashMap<String, f64>> {
    let mut sizes = HashMap::new();
    if let Some(path) = &args.segments {
        let file = SegmentsFile::read(path)?;
        for r in train_rows {
            let d = file
                .size_of(&r.segment)
                .ok_or_else(|| mkalloc::Error::UnknownSegment(r.segment.clone()))?;
            sizes.insert(r.segment.clone(), d);
        }
    } else {
        for r in train_rows {
            let d = sizes.entry(r.segment.clone()).or_insert(0.0);
            *d = f64::max(*d, r.sales);
        }
        if let Some((id, _)) = sizes.iter().find(|(_, &d)| d <= 0.0) {
            return Err(mkalloc::Error::InsufficientData(format!("segment {id} has no positive sales to size its market")).into());
        }
    }
    Ok(sizes)
}

/// Context of each segment in order of first appearance; rows of one segment
/// must agree.
fn contexts(history: &HistoryFile, rows: &[HistoryRow]) -> CliResult<Vec<SegmentContext>> {
    let mut order = Vec::new();
    let mut seen: HashMap<&str, &HistoryRow> = HashMap::new();
    for r in rows {
        match seen.get(r.segment.as_str()) {
            Some(first) if first.features != r.features => {
                return Err(CliError::Parse {
                    path: history.path.clone(),
                    line: r.line,
                    message: format!("segment {:?} context differs from line {}", r.segment, first.line),
                });
            }
            Some(_) => {}
            None => {
                seen.insert(&r.segment, r);
                order.push(SegmentContext {
                    id: r.segment.clone(),
                    context: r.features.clone(),
                });
            }
        }
    }
    Ok(order)
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    if !(args.train_fraction > 0.0 && args.train_fraction <= 1.0) {
        return Err(CliError::Usage(format!("--train-fraction must lie in (0, 1], got {}", args.train_fraction)));
    }
    let history = HistoryFile::read(&args.history)?;
    let n_train = ((history.rows.len() as f64 * args.train_fraction).round() as usize).clamp(1, history.rows.len());
    let (train_rows, test_rows) = history.rows.split_at(n_train);

    let sizes = market_sizes(args, train_rows)?;
    let set = TrainingSet {
        segments: contexts(&history, train_rows)?,
        observations: train_rows
            .iter()
            .map(|r| Observation::from_sales(r.segment.clone(), r.cost, r.sales, sizes[&r.segment]))
            .collect(),
    };

    // share predictor for held-out rows, plus the model document and losses
    let (predict, document, losses): (SharePredictor, String, serde_json::Value) = if args.baseline {
        let mut by_segment: BTreeMap<&str, Vec<Observation>> = BTreeMap::new();
        for o in &set.observations {
            by_segment.entry(o.segment.as_str()).or_default().push(o.clone());
        }
        let mut fits = Vec::new();
        let mut unfit = Vec::new();
        for (id, obs) in &by_segment {
            match fit_independent_logit(obs) {
                Ok(f) => fits.push(LogitSegment {
                    id: id.to_string(),
                    a: f.bias,
                    b: f.sensitivity,
                }),
                Err(mkalloc::Error::InsufficientData(why)) => {
                    eprintln!("warning: {why}; segment left out of the model");
                    unfit.push(id.to_string());
                }
                Err(e) => return Err(e.into()),
            }
        }
        if fits.is_empty() {
            return Err(mkalloc::Error::InsufficientData("no segment has two distinct costs".into()).into());
        }
        let doc = LogitDocument::new(fits);
        let text = serde_json::to_string_pretty(&doc).expect("model serialises");
        let params: HashMap<String, (f64, f64)> = doc.segments.iter().map(|s| (s.id.clone(), (s.a, s.b))).collect();
        (
            Box::new(move |id, c| params.get(id).map(|&(a, b)| 1.0 / (1.0 + (-(a + b * c)).exp()))),
            text,
            json!({ "kind": "independent-logit", "unfit_segments": unfit }),
        )
    } else {
        let cfg = TrainConfig {
            learning_rate: args.lr,
            epochs: args.epochs,
            seed: args.seed,
            batch_size: args.batch_size,
            ..Default::default()
        };
        let fitted = train(&set, &cfg)?;
        let text = fitted.model.to_json();
        let losses = json!({
            "kind": "semi-black-box",
            "initial_loss": fitted.initial_loss,
            "final_loss": fitted.final_loss,
        });
        let model = fitted.model;
        (Box::new(move |id, c| model.predict_share(id, c).ok()), text, losses)
    };
    emit(Some(&args.out), &format!("{document}\n"))?;

    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut skipped = 0usize;
    for r in test_rows {
        match (predict(&r.segment, r.cost), sizes.get(&r.segment)) {
            (Some(q), Some(&d)) => {
                preds.push(d * q);
                truths.push(r.sales);
            }
            _ => skipped += 1,
        }
    }
    let error = if preds.is_empty() {
        None
    } else {
        Some(rmae(&preds, &truths)?)
    };

    let mut report = json!({
        "train_rows": train_rows.len(),
        "test_rows": preds.len(),
        "skipped_test_rows": skipped,
        "segments": set.segments.len(),
        "rmae": error,
    });
    report.as_object_mut().expect("object").extend(losses.as_object().expect("object").clone());
    if let Some(path) = &args.report {
        emit(Some(path), &to_json_text(&round_value(report)))?;
    }
    println!(
        "trained on {} rows ({} segments); held-out rows {}, skipped {}; rmae {}",
        train_rows.len(),
        set.segments.len(),
        preds.len(),
        skipped,
        error.map_or("n/a".into(), fmt_num)
    );
    Ok(())
}

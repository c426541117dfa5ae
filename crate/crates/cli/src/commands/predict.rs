use mkalloc::Segment;

use crate::args::PredictArgs;
use crate::error::{CliError, CliResult};
use crate::format::fmt_num;
use crate::input::SegmentsFile;
use crate::model::LoadedModel;

use super::{csv_text, emit};

/// `c1,c2,...`, `lo:step:hi` (inclusive) or empty.
pub fn parse_cost_grid(raw: &str) -> CliResult<Vec<f64>> {
    let bad = |m: String| CliError::Usage(format!("--cost-grid: {m}"));
    let number = |t: &str| match t.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad(format!("{t:?} is not a finite number"))),
    };
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = raw.split(':').collect();
    match parts.as_slice() {
        [lo, step, hi] => {
            let (lo, step, hi) = (number(lo)?, number(step)?, number(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(bad("range needs step > 0 and lo <= hi".into()));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| lo + k as f64 * step).collect())
        }
        [_] => raw.split(',').map(number).collect(),
        _ => Err(bad("expected a list or lo:step:hi".into())),
    }
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    let grid = parse_cost_grid(&args.cost_grid)?;
    let model = LoadedModel::read(&args.model)?;
    let file = SegmentsFile::read(&args.segments)?;

    let mut unknown = Vec::new();
    let mut lines = Vec::new();
    for row in &file.rows {
        let Some((a, b)) = model.logit_params(&row.id) else {
            unknown.push(row.id.as_str());
            continue;
        };
        // fitted curves may fall outside the validated domain, so build directly
        let curve = Segment {
            id: row.id.clone(),
            size: row.size,
            bias: a,
            sensitivity: b,
            options: None,
            context: Vec::new(),
        };
        for &c in &grid {
            lines.push(vec![row.id.clone(), fmt_num(c), fmt_num(curve.share(c)), fmt_num(curve.demand(c))]);
        }
    }
    if !unknown.is_empty() {
        eprintln!("unknown segments skipped: {}", unknown.join(", "));
    }
    emit(args.out.as_deref(), &csv_text(&["segment_id", "cost", "q", "sales"], lines))
}

use super::{observation_loss, Observation};
use crate::error::{Error, Result};

/// Per-segment logit fitted on that segment's observations alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitFit {
    pub bias: f64,
    pub sensitivity: f64,
    /// Mean cross-entropy at the fit.
    pub loss: f64,
    pub iterations: usize,
}

impl LogitFit {
    pub fn share(&self, cost: f64) -> f64 {
        1.0 / (1.0 + (-(self.bias + self.sensitivity * cost)).exp())
    }
}

fn mean_loss(obs: &[Observation], a: f64, b: f64, center: f64, total: f64) -> f64 {
    obs.iter()
        .map(|o| o.weight * observation_loss(a + b * (o.cost - center), o.share).0)
        .sum::<f64>()
        / total
}

/// Maximum-likelihood `(a, b)` for one segment by damped Newton steps on the
/// same cross-entropy the shared model uses. The problem is convex in
/// `(a, b)`; costs are centred internally for conditioning.
pub fn fit_independent_logit(obs: &[Observation]) -> Result<LogitFit> {
    let first = obs.first().ok_or(Error::EmptyDataset)?;
    if obs.iter().all(|o| o.cost == first.cost) {
        return Err(Error::InsufficientData(format!(
            "segment {}: all observations share cost {}",
            first.segment, first.cost
        )));
    }
    let total: f64 = obs.iter().map(|o| o.weight).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("observation weights must sum to a positive value".into()));
    }
    let center = obs.iter().map(|o| o.weight * o.cost).sum::<f64>() / total;

    // coefficients on the centred cost: z = a0 + b (c - center)
    let (mut a0, mut b) = (0.0, 0.0);
    let mut loss = mean_loss(obs, a0, b, center, total);
    const MAX_ITER: usize = 200;
    for iter in 1..=MAX_ITER {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for o in obs {
            let x = o.cost - center;
            let w = o.weight / total;
            let z = a0 + b * x;
            let (_, dz) = observation_loss(z, o.share);
            let q = 1.0 / (1.0 + (-z).exp());
            let curv = w * q * (1.0 - q);
            ga += w * dz;
            gb += w * dz * x;
            haa += curv;
            hab += curv * x;
            hbb += curv * x * x;
        }
        if ga.hypot(gb) <= 1e-13 {
            return Ok(finish(a0, b, center, loss, iter));
        }
        let det = haa * hbb - hab * hab;
        let (mut da, mut db) = if det > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let slope = ga * da + gb * db;
        let mut t = 1.0;
        let accepted = loop {
            let trial = mean_loss(obs, a0 - t * da, b - t * db, center, total);
            if trial <= loss - 1e-4 * t * slope {
                break Some(trial);
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some(next) = accepted else {
            return Ok(finish(a0, b, center, loss, iter));
        };
        da *= t;
        db *= t;
        a0 -= da;
        b -= db;
        let improvement = loss - next;
        loss = next;
        if improvement <= 1e-16 * loss.max(1.0) && da.hypot(db) <= 1e-12 * (1.0 + a0.hypot(b)) {
            return Ok(finish(a0, b, center, loss, iter));
        }
    }
    Err(Error::NonConvergence {
        what: "independent logit fit",
        iterations: MAX_ITER,
    })
}

fn finish(a0: f64, b: f64, center: f64, loss: f64, iterations: usize) -> LogitFit {
    LogitFit {
        bias: a0 - b * center,
        sensitivity: b,
        loss,
        iterations,
    }
}

/// Relative mean absolute error `sum |y - t| / sum t` of predictions `y`
/// against truths `t`.
pub fn rmae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidConfig(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let denom: f64 = truths.iter().sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(predictions.iter().zip(truths).map(|(y, t)| (y - t).abs()).sum::<f64>() / denom)
}

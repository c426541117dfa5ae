//! Logit demand curve for a single market segment.
//!
//! `d(c) = D / (1 + exp(-(a + b c)))`, where `c` is the unit marketing cost
//! (positive for a discount, negative for a premium), `D` the market size and
//! `b > 0` the cost sensitivity.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    /// Market size `D`, in sales units.
    pub size: f64,
    /// Logit bias `a`.
    pub bias: f64,
    /// Cost sensitivity `b`.
    pub sensitivity: f64,
    /// Allowed unit costs, strictly ascending, for the discrete setting.
    pub options: Option<Vec<f64>>,
    /// Named categorical features.
    pub context: Vec<(String, String)>,
}

/// Inflection point `-a/b` of the response curve.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MarketCost(pub f64);

impl Segment {
    pub fn new(id: impl Into<String>, size: f64, bias: f64, sensitivity: f64) -> Result<Self> {
        let seg = Self {
            id: id.into(),
            size,
            bias,
            sensitivity,
            options: None,
            context: Vec::new(),
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn with_options(mut self, options: Vec<f64>) -> Result<Self> {
        self.options = Some(options);
        self.validate()?;
        Ok(self)
    }

    pub fn with_context(mut self, context: Vec<(String, String)>) -> Self {
        self.context = context;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidSegment {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.size > 0.0) || !self.size.is_finite() {
            return fail("market size D must be positive and finite");
        }
        if !self.bias.is_finite() {
            return fail("bias a must be finite");
        }
        if !(self.sensitivity > 0.0) || !self.sensitivity.is_finite() {
            return fail("sensitivity b must be positive and finite");
        }
        if let Some(opts) = &self.options {
            if opts.is_empty() {
                return fail("option set is empty");
            }
            if opts.iter().any(|c| !c.is_finite()) {
                return fail("option set contains a non-finite cost");
            }
            if opts.windows(2).any(|w| w[0] >= w[1]) {
                return fail("options must be strictly ascending");
            }
        }
        Ok(())
    }

    pub fn market_cost(&self) -> MarketCost {
        MarketCost(-self.bias / self.sensitivity)
    }

    /// Market share `q(c) = d(c) / D`.
    pub fn share(&self, c: f64) -> f64 {
        1.0 / (1.0 + (-(self.bias + self.sensitivity * c)).exp())
    }

    pub fn demand(&self, c: f64) -> f64 {
        self.size * self.share(c)
    }

    /// Point cost elasticity `b c / (1 + exp(a + b c))`.
    pub fn elasticity(&self, c: f64) -> f64 {
        self.sensitivity * c / (1.0 + (self.bias + self.sensitivity * c).exp())
    }

    /// Ratio of the relative change in sales to the relative change in cost
    /// when moving from `c1` to `c2`.
    pub fn arc_elasticity(&self, c1: f64, c2: f64) -> Result<f64> {
        let d1 = self.demand(c1);
        if c1 == c2 || c1 == 0.0 || d1 <= 0.0 {
            return Err(Error::DegenerateArc { c1, c2 });
        }
        Ok((self.demand(c2) - d1) * c1 / ((c2 - c1) * d1))
    }

    /// Unit cost that yields market share `q`.
    pub fn inverse_cost(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::ShareOutOfRange(q));
        }
        let b = self.sensitivity;
        Ok(-self.bias / b - ((-q).ln_1p() - q.ln()) / b)
    }

    /// Unit cost at odds `x = q / (1 - q)`. Used by the solver, which works
    /// with odds directly so that shares near 1 keep full precision.
    pub(crate) fn cost_from_odds(&self, odds: f64) -> f64 {
        (odds.ln() - self.bias) / self.sensitivity
    }

    /// Spend `d(c) c` at unit cost `c`.
    pub fn spend(&self, c: f64) -> f64 {
        self.demand(c) * c
    }
}

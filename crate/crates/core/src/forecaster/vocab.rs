use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Categories of one feature, sorted, plus a trailing unknown slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub categories: Vec<String>,
}

impl FeatureBlock {
    /// Block width including the unknown slot.
    pub fn width(&self) -> usize {
        self.categories.len() + 1
    }

    /// Offset of `value` within the block; unseen values map to the last slot.
    pub fn slot(&self, value: Option<&str>) -> usize {
        value
            .and_then(|v| self.categories.binary_search_by(|c| c.as_str().cmp(v)).ok())
            .unwrap_or(self.categories.len())
    }
}

/// One-hot layout of the contextual features.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocabulary {
    pub features: Vec<FeatureBlock>,
}

impl FeatureVocabulary {
    /// Vocabulary over the feature names and values seen in `contexts`.
    /// Features and categories are sorted so the layout does not depend on
    /// row order.
    pub fn fit<'a, I>(contexts: I) -> Self
    where
        I: IntoIterator<Item = &'a [(String, String)]>,
    {
        let mut seen: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for ctx in contexts {
            for (name, value) in ctx {
                seen.entry(name).or_default().insert(value);
            }
        }
        let features = seen
            .into_iter()
            .map(|(name, values)| FeatureBlock {
                name: name.to_string(),
                categories: values.into_iter().map(str::to_string).collect(),
            })
            .collect();
        Self { features }
    }

    pub fn width(&self) -> usize {
        self.features.iter().map(FeatureBlock::width).sum()
    }

    /// Position of the hot entry for each feature. A missing feature counts
    /// as unknown.
    pub fn hot_indices(&self, context: &[(String, String)]) -> Vec<usize> {
        let mut offset = 0;
        self.features
            .iter()
            .map(|block| {
                let value = context
                    .iter()
                    .find(|(n, _)| *n == block.name)
                    .map(|(_, v)| v.as_str());
                let idx = offset + block.slot(value);
                offset += block.width();
                idx
            })
            .collect()
    }

    pub fn encode(&self, context: &[(String, String)]) -> Vec<f64> {
        let mut x = vec![0.0; self.width()];
        for i in self.hot_indices(context) {
            x[i] = 1.0;
        }
        x
    }
}

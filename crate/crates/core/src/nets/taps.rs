use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named activations, ordered shallow to deep.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTaps<T = Tensor> {
    entries: Vec<(String, T)>,
}

impl<T> Default for FeatureTaps<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<T> FeatureTaps<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: T) {
        self.entries.push((name.into(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&T> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &T)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn last(&self) -> Option<(&str, &T)> {
        self.entries.last().map(|(n, v)| (n.as_str(), v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> Result<U>) -> Result<FeatureTaps<U>> {
        let entries = self
            .entries
            .iter()
            .map(|(n, v)| Ok((n.clone(), f(n, v)?)))
            .collect::<Result<_>>()?;
        Ok(FeatureTaps { entries })
    }

    pub fn into_entries(self) -> Vec<(String, T)> {
        self.entries
    }
}

impl FeatureTaps<Tensor> {
    /// Item `i` of batched taps.
    pub fn item(&self, i: usize) -> Result<Self> {
        self.map(|_, t| t.index(i))
    }

    /// Stack per-item taps into batched taps. All inputs must carry the
    /// same names in the same order.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("stack of zero tap sets".into()))?;
        first.map(|name, _| {
            let parts = items
                .iter()
                .map(|taps| {
                    taps.get(name)
                        .cloned()
                        .ok_or_else(|| Error::Shape(format!("tap {name} missing from a tap set")))
                })
                .collect::<Result<Vec<_>>>()?;
            Tensor::stack(&parts)
        })
    }
}

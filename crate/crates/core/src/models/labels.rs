use crate::error::{Error, Result};

/// Integer class labels in `0..class_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    class_count: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::DegenerateLabels(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        Ok(Self {
            labels,
            class_count,
        })
    }

    /// Infers `class_count` as `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        Self {
            labels,
            class_count,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Fails unless there are at least two classes and each appears at least
    /// `min_per_class` times.
    pub fn require_all_present(&self, min_per_class: usize) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::DegenerateLabels(format!(
                "need at least 2 classes, found {}",
                self.class_count
            )));
        }
        let counts = self.counts();
        if let Some((class, &n)) = counts.iter().enumerate().find(|(_, &n)| n < min_per_class) {
            return Err(Error::DegenerateLabels(format!(
                "class {class} has {n} samples, need at least {min_per_class}"
            )));
        }
        Ok(())
    }
}

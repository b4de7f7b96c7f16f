//! Multi-domain datasets: containers, synthetic shift families, stratified
//! train/validation splits and CSV ingestion.

mod csvio;
mod split;
mod synthetic;

pub use csvio::{load_csv, write_csv, write_mix_samples, CsvSchema, LoadedCsv};
pub use split::{split, DataSplit};
pub use synthetic::{generate_synthetic, ShiftFamily, ShiftFamilySpec};

use serde::{Deserialize, Serialize};

use crate::numcore::Tensor;
use crate::{Error, Result};

/// Labeled samples tagged with the domain they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    features: Tensor,
    labels: Vec<usize>,
    domain_ids: Vec<usize>,
    class_count: usize,
    domain_count: usize,
}

impl DomainDataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        domain_ids: Vec<usize>,
        class_count: usize,
        domain_count: usize,
    ) -> Result<Self> {
        features.ensure_matrix("dataset features")?;
        let n = features.rows();
        if labels.len() != n || domain_ids.len() != n {
            return Err(Error::Data(format!(
                "{n} feature rows but {} labels and {} domain ids",
                labels.len(),
                domain_ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Data(format!("label {bad} out of range for {class_count} classes")));
        }
        if let Some(&bad) = domain_ids.iter().find(|&&d| d >= domain_count) {
            return Err(Error::Data(format!("domain id {bad} out of range for {domain_count} domains")));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            features,
            labels,
            domain_ids,
            class_count,
            domain_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_width(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn domain_ids(&self) -> &[usize] {
        &self.domain_ids
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn domain_count(&self) -> usize {
        self.domain_count
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Rows `indices` as a new dataset with the same class/domain universe.
    pub fn subset(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            domain_ids: indices.iter().map(|&i| self.domain_ids[i]).collect(),
            class_count: self.class_count,
            domain_count: self.domain_count,
        }
    }

    /// Sample indices belonging to `domain`.
    pub fn domain_indices(&self, domain: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domain_ids[i] == domain).collect()
    }

    /// `cells[d][c]` lists the indices of domain `d`, class `c`.
    pub fn cells(&self) -> Vec<Vec<Vec<usize>>> {
        let mut cells = vec![vec![Vec::new(); self.class_count]; self.domain_count];
        for i in 0..self.len() {
            cells[self.domain_ids[i]][self.labels[i]].push(i);
        }
        cells
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    pub fn domain_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.domain_count];
        for &d in &self.domain_ids {
            h[d] += 1;
        }
        h
    }

    /// One-hot label matrix (`n x C`).
    pub fn one_hot_labels(&self) -> Tensor {
        let c = self.class_count;
        let mut data = vec![0.0; self.len() * c];
        for (r, &y) in self.labels.iter().enumerate() {
            data[r * c + y] = 1.0;
        }
        Tensor::from_parts(vec![self.len(), c], data)
    }
}

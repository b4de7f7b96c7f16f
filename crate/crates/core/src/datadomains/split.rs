use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DomainDataset;
use crate::{Error, Result};

/// Stratified train/validation partition of a source dataset.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: DomainDataset,
    pub val: DomainDataset,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    /// Share of each domain in the parent dataset.
    pub proportions: Vec<f64>,
    pub ratio: f64,
    pub seed: u64,
}

/// Splits every (domain, class) cell so that `round(ratio · n_cell)` samples
/// (at least one, at most `n_cell − 1`) go to training.
pub fn split(dataset: &DomainDataset, ratio: f64, seed: u64) -> Result<DataSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_indices = Vec::new();
    let mut val_indices = Vec::new();
    for (d, row) in dataset.cells().into_iter().enumerate() {
        for (c, mut cell) in row.into_iter().enumerate() {
            match cell.len() {
                0 => continue,
                1 => {
                    return Err(Error::Split(format!(
                        "domain {d}, class {c} has a single sample"
                    )))
                }
                n => {
                    cell.shuffle(&mut rng);
                    let k = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
                    train_indices.extend_from_slice(&cell[..k]);
                    val_indices.extend_from_slice(&cell[k..]);
                }
            }
        }
    }
    train_indices.sort_unstable();
    val_indices.sort_unstable();
    let n = dataset.len() as f64;
    let proportions = dataset
        .domain_histogram()
        .into_iter()
        .map(|k| k as f64 / n)
        .collect();
    Ok(DataSplit {
        train: dataset.subset(&train_indices),
        val: dataset.subset(&val_indices),
        train_indices,
        val_indices,
        proportions,
        ratio,
        seed,
    })
}

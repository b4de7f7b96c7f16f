use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DomainDataset;
use crate::mixgen::MixSample;
use crate::numcore::Tensor;
use crate::{Error, Result};

/// Column names for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub label: String,
    pub domain: String,
}

/// A loaded dataset plus the original label/domain strings, indexed by the
/// dense ids assigned during ingestion.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: DomainDataset,
    pub label_names: Vec<String>,
    pub domain_names: Vec<String>,
}

/// Dense id assignment: numeric order when every value parses as an integer,
/// lexicographic order otherwise.
fn dense_ids(values: &[String]) -> (Vec<usize>, Vec<String>) {
    let unique: BTreeSet<&String> = values.iter().collect();
    let mut names: Vec<String> = unique.into_iter().cloned().collect();
    let numeric: Option<Vec<i64>> = names.iter().map(|s| s.trim().parse().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(i64, String)> = nums.into_iter().zip(names).collect();
        paired.sort();
        names = paired.into_iter().map(|(_, s)| s).collect();
    }
    let ids = values
        .iter()
        .map(|v| names.iter().position(|n| n == v).expect("value present"))
        .collect();
    (ids, names)
}

/// Reads a header-first CSV file.
///
/// Rows and columns in errors are 1-based positions in the file, the header
/// being row 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let file_err = |message: String| Error::IngestionFile {
        path: path.to_path_buf(),
        message,
    };
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| file_err(format!("missing column '{name}'")))
    };
    if schema.features.is_empty() {
        return Err(file_err("schema names no feature columns".into()));
    }
    let feature_cols = schema
        .features
        .iter()
        .map(|f| find(f))
        .collect::<Result<Vec<_>>>()?;
    let label_col = find(&schema.label)?;
    let domain_col = find(&schema.domain)?;

    let width = feature_cols.len();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            row,
            column: 0,
            message: e.to_string(),
        })?;
        for &col in &feature_cols {
            let cell = record.get(col).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
                path: path.to_path_buf(),
                row,
                column: col + 1,
                message: format!("non-numeric feature value '{cell}'"),
            })?;
            if !value.is_finite() {
                return Err(Error::Ingestion {
                    path: path.to_path_buf(),
                    row,
                    column: col + 1,
                    message: format!("non-finite feature value '{cell}'"),
                });
            }
            feats.push(value);
        }
        labels.push(record.get(label_col).unwrap_or("").trim().to_string());
        domains.push(record.get(domain_col).unwrap_or("").trim().to_string());
    }
    if labels.is_empty() {
        return Err(file_err("file contains no data rows".into()));
    }
    let (label_ids, label_names) = dense_ids(&labels);
    let (domain_ids, domain_names) = dense_ids(&domains);
    let n = label_ids.len();
    let dataset = DomainDataset::new(
        Tensor::matrix(n, width, feats)?,
        label_ids,
        domain_ids,
        label_names.len(),
        domain_names.len(),
    )?;
    Ok(LoadedCsv {
        dataset,
        label_names,
        domain_names,
    })
}

/// Writes `dataset` with columns `f0..f{d-1},label,domain`.
pub fn write_csv(dataset: &DomainDataset, path: impl AsRef<Path>) -> Result<CsvSchema> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let features: Vec<String> = (0..dataset.feature_width()).map(|i| format!("f{i}")).collect();
    let mut header = features.clone();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.sample(i).iter().map(|v| v.to_string()).collect();
        rec.push(dataset.labels()[i].to_string());
        rec.push(dataset.domain_ids()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(CsvSchema {
        features,
        label: "label".into(),
        domain: "domain".into(),
    })
}

/// Writes generated Mixup samples: features, soft label columns, λ, parents
/// and the rule tag.
pub fn write_mix_samples(samples: &[MixSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let (d, c) = samples
        .first()
        .map_or((0, 0), |s| (s.x.len(), s.y.len()));
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.extend((0..c).map(|i| format!("y{i}")));
    header.extend(
        ["lambda", "parent_i", "parent_j", "domain_i", "domain_j", "rule"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for s in samples {
        let mut rec: Vec<String> = s.x.iter().chain(&s.y).map(|v| v.to_string()).collect();
        rec.push(s.lambda.to_string());
        rec.push(s.parents.0.to_string());
        rec.push(s.parents.1.to_string());
        rec.push(s.parent_domains.0.to_string());
        rec.push(s.parent_domains.1.to_string());
        rec.push(s.rule.as_str().to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

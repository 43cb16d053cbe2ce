//! Dataset loading, synthesis, standardization, splitting, and perturbation.
//!
//! On disk a dataset is a directory of `omics_<k>.csv` files (rows = samples,
//! header = feature names, first column = sample id), a `labels.csv`
//! (`sample_id,label` with integer class indices), and a `meta.json` naming
//! the omics and the classes. UTF-8, comma-separated, `.` decimal.

use crate::error::DataError;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

type Result<T> = std::result::Result<T, DataError>;

/// One omics layer: an n×d feature table with sample and feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct OmicsMatrix {
    pub name: String,
    pub sample_ids: Vec<String>,
    pub feature_names: Vec<String>,
    values: Vec<f64>, // n×d row-major
}

impl OmicsMatrix {
    pub fn new(
        name: String,
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(values.len(), sample_ids.len() * feature_names.len());
        Self {
            name,
            sample_ids,
            feature_names,
            values,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let d = self.n_features();
        self.values[i * d + j] = v;
    }

    /// Copy of the selected rows, in the given order.
    pub fn subset_rows(&self, indices: &[usize]) -> OmicsMatrix {
        let d = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * d);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            ids.push(self.sample_ids[i].clone());
        }
        OmicsMatrix::new(self.name.clone(), ids, self.feature_names.clone(), values)
    }

    /// Zeroes one feature column across all samples.
    pub fn zero_column(&mut self, j: usize) {
        let d = self.n_features();
        for i in 0..self.n_samples() {
            self.values[i * d + j] = 0.0;
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.n_samples(), self.n_features(), self.values.clone())
            .expect("matrix dimensions are consistent")
    }
}

/// Class labels aligned with the omics sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    pub sample_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabelVector {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Train/test partition of sample indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Random feature-cell zeroing applied to (standardized) test features.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationSpec {
    pub missing_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    omics: Vec<String>,
    classes: Vec<String>,
}

// ── loading ─────────────────────────────────────────────────────────────

/// Loads a dataset directory. Matrices come back aligned to the label file's
/// sample order; the label file defines the canonical sample ordering.
pub fn load_dataset(dir: &Path) -> Result<(Vec<OmicsMatrix>, LabelVector)> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|_| DataError::MissingFile(meta_path.display().to_string()))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| DataError::BadMeta {
        file: meta_path.display().to_string(),
        reason: e.to_string(),
    })?;
    if meta.omics.len() < 2 {
        return Err(DataError::TooFewOmics(meta.omics.len()));
    }

    let labels = load_labels(&dir.join("labels.csv"), &meta.classes)?;

    let mut matrices = Vec::with_capacity(meta.omics.len());
    for (k, omics_name) in meta.omics.iter().enumerate() {
        let path = dir.join(format!("omics_{}.csv", k + 1));
        let m = load_omics_csv(&path, omics_name, &labels)?;
        matrices.push(m);
    }
    Ok((matrices, labels))
}

fn load_labels(path: &Path, class_names: &[String]) -> Result<LabelVector> {
    let file = path.display().to_string();
    let text =
        fs::read_to_string(path).map_err(|_| DataError::MissingFile(file.clone()))?;
    let mut sample_ids = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in text.lines().enumerate() {
        if row == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(DataError::RaggedRow {
                file,
                row,
                expected: 2,
                found: fields.len(),
            });
        }
        let id = fields[0].trim().to_string();
        let label: usize = fields[1].trim().parse().map_err(|_| DataError::NonNumericCell {
            file: file.clone(),
            row,
            column: "label".to_string(),
            value: fields[1].to_string(),
        })?;
        if label >= class_names.len() {
            return Err(DataError::LabelOutOfRange {
                id,
                label,
                classes: class_names.len(),
            });
        }
        sample_ids.push(id);
        labels.push(label);
    }
    let lv = LabelVector {
        sample_ids,
        labels,
        class_names: class_names.to_vec(),
    };
    for (c, &count) in lv.class_counts().iter().enumerate() {
        if count == 0 {
            return Err(DataError::ClassTooSmall {
                class: lv.class_names[c].clone(),
                count: 0,
                needed: 1,
            });
        }
    }
    Ok(lv)
}

fn load_omics_csv(path: &Path, omics_name: &str, labels: &LabelVector) -> Result<OmicsMatrix> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|_| DataError::MissingFile(file.clone()))?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::BadMeta {
            file: file.clone(),
            reason: e.to_string(),
        })?
        .clone();
    let feature_names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let d = feature_names.len();

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based data row, header is row 0
        let record = record.map_err(|e| DataError::BadMeta {
            file: file.clone(),
            reason: e.to_string(),
        })?;
        if record.len() != d + 1 {
            return Err(DataError::RaggedRow {
                file,
                row,
                expected: d + 1,
                found: record.len(),
            });
        }
        let id = record[0].trim().to_string();
        let mut vals = Vec::with_capacity(d);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::NonNumericCell {
                file: file.clone(),
                row,
                column: feature_names[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    file: file.clone(),
                    row,
                    column: feature_names[j].clone(),
                });
            }
            vals.push(v);
        }
        rows.push((id, vals));
    }

    if rows.len() != labels.n_samples() {
        return Err(DataError::SampleCountMismatch {
            file,
            expected: labels.n_samples(),
            found: rows.len(),
        });
    }

    // align to the label file's sample order
    let mut values = vec![0.0; labels.n_samples() * d];
    for (slot, id) in labels.sample_ids.iter().enumerate() {
        let pos = rows
            .iter()
            .position(|(rid, _)| rid == id)
            .ok_or_else(|| DataError::SampleIdMismatch {
                file: file.clone(),
                id: id.clone(),
            })?;
        values[slot * d..(slot + 1) * d].copy_from_slice(&rows[pos].1);
    }

    Ok(OmicsMatrix::new(
        omics_name.to_string(),
        labels.sample_ids.clone(),
        feature_names,
        values,
    ))
}

// ── saving ──────────────────────────────────────────────────────────────

/// Writes a dataset in the canonical directory layout.
pub fn save_dataset(dir: &Path, matrices: &[OmicsMatrix], labels: &LabelVector) -> Result<()> {
    let io_err = |p: &Path, e: std::io::Error| DataError::Io {
        file: p.display().to_string(),
        source: e,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let meta = Meta {
        omics: matrices.iter().map(|m| m.name.clone()).collect(),
        classes: labels.class_names.clone(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
    .map_err(|e| io_err(&meta_path, e))?;

    let labels_path = dir.join("labels.csv");
    let mut text = String::from("sample_id,label\n");
    for (id, y) in labels.sample_ids.iter().zip(labels.labels.iter()) {
        text.push_str(&format!("{id},{y}\n"));
    }
    fs::write(&labels_path, text).map_err(|e| io_err(&labels_path, e))?;

    for (k, m) in matrices.iter().enumerate() {
        let path = dir.join(format!("omics_{}.csv", k + 1));
        let mut text = String::from("sample_id");
        for f in &m.feature_names {
            text.push(',');
            text.push_str(f);
        }
        text.push('\n');
        for i in 0..m.n_samples() {
            text.push_str(&m.sample_ids[i]);
            for v in m.row(i) {
                text.push(',');
                // shortest round-trip decimal form
                text.push_str(&format!("{v}"));
            }
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

// ── synthesis ───────────────────────────────────────────────────────────

/// Generates a class-conditional Gaussian dataset. In each omics,
/// `round(informativeness·d)` features (scattered by a seeded permutation,
/// recoverable via [`planted_feature_indices`]) carry class-dependent means
/// of ±1 with unit noise; the rest are pure noise. Deterministic per seed.
pub fn synthesize_dataset(
    n: usize,
    dims: &[usize],
    n_classes: usize,
    informativeness: &[f64],
    seed: u64,
) -> Result<(Vec<OmicsMatrix>, LabelVector)> {
    if dims.len() != informativeness.len() || dims.is_empty() {
        return Err(DataError::InvalidSizes(format!(
            "{} omics dims vs {} informativeness values",
            dims.len(),
            informativeness.len()
        )));
    }
    if n_classes < 2 || n < 2 * n_classes {
        return Err(DataError::InvalidSizes(format!(
            "need n ≥ 2·C, got n = {n}, C = {n_classes}"
        )));
    }
    for &f in informativeness {
        if !(0.0..=1.0).contains(&f) {
            return Err(DataError::InvalidSizes(format!(
                "informativeness {f} outside [0,1]"
            )));
        }
    }
    for &d in dims {
        if d == 0 {
            return Err(DataError::InvalidSizes("zero-width omics".to_string()));
        }
    }

    // balanced labels, shuffled deterministically
    let mut labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    let mut label_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6265_6c73);
    labels.shuffle(&mut label_rng);
    let sample_ids: Vec<String> = (0..n).map(|i| format!("s{i:04}")).collect();
    let class_names: Vec<String> = (0..n_classes).map(|c| format!("class{c}")).collect();

    let mut matrices = Vec::with_capacity(dims.len());
    for (m, (&d, &inform)) in dims.iter().zip(informativeness.iter()).enumerate() {
        let omics_name = format!("omics{}", m + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ crate::params::fnv1a64(omics_name.as_bytes()),
        );
        let planted = planted_feature_indices(d, inform, seed, m);

        // ±1 class means per informative feature; never constant across classes
        let mut means = vec![0.0f64; n_classes * d];
        for &j in &planted {
            loop {
                let mut any_pos = false;
                let mut any_neg = false;
                for c in 0..n_classes {
                    let s: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    means[c * d + j] = s;
                    any_pos |= s > 0.0;
                    any_neg |= s < 0.0;
                }
                if any_pos && any_neg {
                    break;
                }
            }
        }

        let mut values = vec![0.0f64; n * d];
        for i in 0..n {
            let c = labels[i];
            for j in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                values[i * d + j] = means[c * d + j] + noise;
            }
        }
        let feature_names: Vec<String> = (0..d).map(|j| format!("f{j:04}")).collect();
        matrices.push(OmicsMatrix::new(
            omics_name,
            sample_ids.clone(),
            feature_names,
            values,
        ));
    }

    Ok((
        matrices,
        LabelVector {
            sample_ids,
            labels,
            class_names,
        },
    ))
}

/// Number of planted informative features for an omics generated by
/// [`synthesize_dataset`].
pub fn planted_feature_count(d: usize, informativeness: f64) -> usize {
    ((informativeness * d as f64).round() as usize).min(d)
}

/// Column indices [`synthesize_dataset`] planted class signal into, for the
/// omics at position `omics_index`. Sorted ascending.
pub fn planted_feature_indices(
    d: usize,
    informativeness: f64,
    seed: u64,
    omics_index: usize,
) -> Vec<usize> {
    let k = planted_feature_count(d, informativeness);
    let name = format!("omics{}", omics_index + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ crate::params::fnv1a64(name.as_bytes()) ^ 0x706c_616e_74,
    );
    let mut columns: Vec<usize> = (0..d).collect();
    for i in 0..k.min(d) {
        let j = rng.gen_range(i..d);
        columns.swap(i, j);
    }
    let mut picked: Vec<usize> = columns[..k].to_vec();
    picked.sort_unstable();
    picked
}

// ── standardization ─────────────────────────────────────────────────────

/// Per-feature z-score of `apply` using `train`'s mean and population std.
/// Features with std below 1e-12 map to 0.
pub fn standardize(train: &OmicsMatrix, apply: &OmicsMatrix) -> Result<OmicsMatrix> {
    if train.feature_names != apply.feature_names {
        return Err(DataError::FeatureSetMismatch(apply.name.clone()));
    }
    let d = train.n_features();
    let nt = train.n_samples() as f64;
    let mut mean = vec![0.0; d];
    for i in 0..train.n_samples() {
        for (j, v) in train.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= nt;
    }
    let mut var = vec![0.0; d];
    for i in 0..train.n_samples() {
        for (j, v) in train.row(i).iter().enumerate() {
            let dv = v - mean[j];
            var[j] += dv * dv;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / nt).sqrt()).collect();

    let mut out = apply.clone();
    for i in 0..apply.n_samples() {
        for j in 0..d {
            let v = apply.get(i, j);
            let z = if std[j] < 1e-12 {
                0.0
            } else {
                (v - mean[j]) / std[j]
            };
            out.set(i, j, z);
        }
    }
    Ok(out)
}

// ── splitting ───────────────────────────────────────────────────────────

/// Stratified train/test split: per-class test counts are `round(frac·count)`
/// clamped to leave at least one sample on each side.
pub fn stratified_split(labels: &LabelVector, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidTestFraction(test_fraction));
    }
    let counts = labels.class_counts();
    for (c, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(DataError::ClassTooSmall {
                class: labels.class_names[c].clone(),
                count,
                needed: 2,
            });
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..labels.n_classes() {
        let mut members: Vec<usize> = (0..labels.n_samples())
            .filter(|&i| labels.labels[i] == c)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5370_4c69_u64.wrapping_add(c as u64));
        members.shuffle(&mut rng);
        let want = (test_fraction * members.len() as f64).round() as usize;
        let n_test = want.clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, test, seed })
}

// ── perturbation ────────────────────────────────────────────────────────

/// Zeroes a uniformly random subset of cells covering `missing_rate` of the
/// matrix. Zero is the train mean after standardization, i.e. the least
/// informative imputation.
pub fn apply_missing(matrix: &OmicsMatrix, spec: &PerturbationSpec) -> Result<OmicsMatrix> {
    if !(0.0..=1.0).contains(&spec.missing_rate) {
        return Err(DataError::InvalidMissingRate(spec.missing_rate));
    }
    let total = matrix.n_samples() * matrix.n_features();
    let n_mask = (spec.missing_rate * total as f64).round() as usize;
    let mut out = matrix.clone();
    if n_mask == 0 {
        return Ok(out);
    }
    let mut cells: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d69_7373);
    for i in 0..n_mask.min(total) {
        let j = rng.gen_range(i..total);
        cells.swap(i, j);
    }
    let d = matrix.n_features();
    for &cell in &cells[..n_mask.min(total)] {
        out.set(cell / d, cell % d, 0.0);
    }
    Ok(out)
}

/// Overwrites the given rows of `matrix` with the rows of `sub` (in order).
pub fn replace_rows(matrix: &mut OmicsMatrix, indices: &[usize], sub: &OmicsMatrix) {
    assert_eq!(indices.len(), sub.n_samples());
    assert_eq!(matrix.n_features(), sub.n_features());
    for (r, &i) in indices.iter().enumerate() {
        for j in 0..matrix.n_features() {
            matrix.set(i, j, sub.get(r, j));
        }
    }
}

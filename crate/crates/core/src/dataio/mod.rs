//! Feature banks: labelled feature vectors with optional instance/frame
//! metadata, their binary container, CSV ingestion and a synthetic generator.

mod bank;
mod csvio;
mod synth;

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};

pub use self::bank::{bank_read, bank_write, decode_bank, encode_bank, BankHeader, BANK_MAGIC, BANK_VERSION};
pub use self::csvio::{bank_from_csv, bank_from_csv_reader, CsvSchema};
pub use self::synth::{synth_bank, synth_test_bank, SynthSpec, WithinClassCov};

/// Per-sample ordering metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleMeta {
    pub label: usize,
    pub instance_id: i32,
    pub frame_index: i32,
}

/// Immutable dataset of feature vectors.
///
/// Features live as `f32` (the on-disk precision) and are widened to `f64`
/// when handed to learners. An `instance_ids` entry of `-1` marks a row
/// without instance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    pub dim: usize,
    pub num_classes: usize,
    /// Row-major `n × dim`.
    pub features: Vec<f32>,
    pub labels: Vec<u32>,
    pub instance_ids: Option<Vec<i32>>,
    pub frame_indices: Option<Vec<i32>>,
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BankSummary {
    pub n: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
    pub instances: Option<usize>,
    pub has_class_names: bool,
}

impl FeatureBank {
    /// Builds a bank and checks every invariant.
    pub fn new(
        dim: usize,
        num_classes: usize,
        features: Vec<f32>,
        labels: Vec<u32>,
        instance_ids: Option<Vec<i32>>,
        frame_indices: Option<Vec<i32>>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let bank = Self {
            dim,
            num_classes,
            features,
            labels,
            instance_ids,
            frame_indices,
            class_names,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidBank("dimension must be at least 1".into()));
        }
        let n = self.labels.len();
        if self.features.len() != n * self.dim {
            return Err(Error::InvalidBank(format!(
                "{} feature values for {n} rows of dimension {}",
                self.features.len(),
                self.dim
            )));
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: pos / self.dim,
                col: pos % self.dim,
            });
        }
        if let Some((row, &label)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= self.num_classes)
        {
            return Err(Error::InvalidBank(format!(
                "row {row}: label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        for (name, col) in [("instance_ids", &self.instance_ids), ("frame_indices", &self.frame_indices)] {
            if let Some(col) = col {
                if col.len() != n {
                    return Err(Error::InvalidBank(format!(
                        "{name} has {} entries for {n} rows",
                        col.len()
                    )));
                }
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return Err(Error::InvalidBank(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        if let Some(ids) = &self.instance_ids {
            let mut seen: HashMap<i32, HashSet<i32>> = HashMap::new();
            for (row, &id) in ids.iter().enumerate() {
                if id < 0 {
                    continue;
                }
                let frame = match &self.frame_indices {
                    Some(f) => f[row],
                    None => {
                        return Err(Error::InvalidBank(format!(
                            "row {row} has instance id {id} but the bank has no frame indices"
                        )))
                    }
                };
                if frame < 0 {
                    return Err(Error::InvalidBank(format!(
                        "row {row}: negative frame index {frame} in instance {id}"
                    )));
                }
                if !seen.entry(id).or_default().insert(frame) {
                    return Err(Error::InvalidBank(format!(
                        "row {row}: frame {frame} repeated within instance {id}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Instance/frame metadata for row `i`, if that row carries any.
    pub fn meta(&self, i: usize) -> Option<SampleMeta> {
        let id = *self.instance_ids.as_ref()?.get(i)?;
        if id < 0 {
            return None;
        }
        Some(SampleMeta {
            label: self.label(i),
            instance_id: id,
            frame_index: self.frame_indices.as_ref()?[i],
        })
    }

    /// True when every row has instance and frame metadata.
    pub fn has_full_metadata(&self) -> bool {
        (0..self.len()).all(|i| self.meta(i).is_some())
    }

    /// Rows `indices` as `(f64 features, label)` pairs.
    pub fn labelled_rows(&self, indices: &[usize]) -> Vec<(Vec<f64>, usize)> {
        indices.iter().map(|&i| (self.row_f64(i), self.label(i))).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn summary(&self) -> BankSummary {
        BankSummary {
            n: self.len(),
            dim: self.dim,
            num_classes: self.num_classes,
            class_counts: self.class_counts(),
            instances: self.instance_ids.as_ref().map(|ids| {
                ids.iter().filter(|&&i| i >= 0).collect::<HashSet<_>>().len()
            }),
            has_class_names: self.class_names.is_some(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_repeated_frame_within_instance() {
        let err = FeatureBank::new(
            1,
            1,
            vec![0.0, 1.0],
            vec![0, 0],
            Some(vec![3, 3]),
            Some(vec![0, 0]),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidBank(_)));
    }

    #[test]
    fn rejects_instances_without_frames_and_bad_labels() {
        assert!(FeatureBank::new(1, 1, vec![0.0], vec![0], Some(vec![0]), None, None).is_err());
        assert!(FeatureBank::new(1, 1, vec![0.0], vec![1], None, None, None).is_err());
        assert!(matches!(
            FeatureBank::new(2, 1, vec![0.0, f32::INFINITY], vec![0], None, None, None),
            Err(Error::NonFiniteFeature { row: 0, col: 1 })
        ));
    }

    #[test]
    fn absent_instance_marker() {
        let bank = FeatureBank::new(
            1,
            2,
            vec![0.0, 1.0],
            vec![0, 1],
            Some(vec![-1, 4]),
            Some(vec![0, 2]),
            None,
        )
        .unwrap();
        assert_eq!(bank.meta(0), None);
        assert_eq!(bank.meta(1).unwrap().instance_id, 4);
        assert!(!bank.has_full_metadata());
        assert_eq!(bank.summary().instances, Some(1));
    }
}

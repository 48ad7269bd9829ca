//! CSV ingestion for features exported by upstream extractors.
//!
//! ```text
//! label,instance,frame,f0,f1
//! cup,0,0,0.12,1.5
//! cup,0,1,0.10,1.4
//! plug,1,0,-2.0,0.3
//! ```
//!
//! With the default [`CsvSchema`] (`label` column, no metadata columns, all
//! remaining columns as features) the metadata columns above would be read as
//! features; name them in the schema to route them.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::FeatureBank;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub label_column: String,
    pub instance_column: Option<String>,
    pub frame_column: Option<String>,
    /// Feature columns in order; `None` takes every column not named above.
    pub feature_columns: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            instance_column: None,
            frame_column: None,
            feature_columns: None,
        }
    }
}

pub fn bank_from_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<FeatureBank> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    bank_from_csv_reader(file, schema)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
}

pub fn bank_from_csv_reader(reader: impl Read, schema: &CsvSchema) -> Result<FeatureBank> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let width = headers.len();

    let label_col = column_index(&headers, &schema.label_column)?;
    let instance_col = schema
        .instance_column
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let frame_col = schema
        .frame_column
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|c| column_index(&headers, c))
            .collect::<Result<_>>()?,
        None => (0..width)
            .filter(|&i| i != label_col && Some(i) != instance_col && Some(i) != frame_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::BadShape("CSV has no feature columns".into()));
    }
    let dim = feature_cols.len();

    let mut names = FirstSeen::default();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut instances = instance_col.map(|_| Vec::new());
    let mut frames = frame_col.map(|_| Vec::new());

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let row = labels.len();
        for (j, &c) in feature_cols.iter().enumerate() {
            let raw = &record[c];
            let v: f32 = raw.parse().map_err(|_| Error::UnparsableNumber {
                line,
                column: headers[c].to_owned(),
                value: raw.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, col: j });
            }
            features.push(v);
        }
        labels.push(names.index_of(&record[label_col]));
        for (col, out) in [(instance_col, &mut instances), (frame_col, &mut frames)] {
            if let (Some(c), Some(out)) = (col, out.as_mut()) {
                let raw = &record[c];
                out.push(raw.parse::<i32>().map_err(|_| Error::UnparsableNumber {
                    line,
                    column: headers[c].to_owned(),
                    value: raw.to_owned(),
                })?);
            }
        }
    }
    let class_names = names.into_names();
    FeatureBank::new(
        dim,
        class_names.len(),
        features,
        labels,
        instances,
        frames,
        Some(class_names),
    )
}

/// Dense indices for strings in first-appearance order.
#[derive(Default)]
struct FirstSeen {
    index: HashMap<String, u32>,
    names: Vec<String>,
}

impl FirstSeen {
    fn index_of(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.index.insert(name.to_owned(), i);
        self.names.push(name.to_owned());
        i
    }

    fn into_names(self) -> Vec<String> {
        self.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, schema: &CsvSchema) -> Result<FeatureBank> {
        bank_from_csv_reader(text.as_bytes(), schema)
    }

    #[test]
    fn three_rows_two_features() {
        let bank = parse("label,a,b\ncup,1,2\ncup,3,4\nplug,5,6\n", &CsvSchema::default()).unwrap();
        assert_eq!(bank.len(), 3);
        assert_eq!(bank.dim, 2);
        assert_eq!(bank.labels, vec![0, 0, 1]);
        assert_eq!(bank.class_names.as_deref().unwrap(), &["cup", "plug"]);
        assert_eq!(bank.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn metadata_columns() {
        let schema = CsvSchema {
            instance_column: Some("instance".into()),
            frame_column: Some("frame".into()),
            ..CsvSchema::default()
        };
        let bank = parse(
            "label,instance,frame,f0,f1\ncup,0,0,0.12,1.5\ncup,0,1,0.10,1.4\nplug,1,0,-2.0,0.3\n",
            &schema,
        )
        .unwrap();
        assert_eq!(bank.dim, 2);
        assert_eq!(bank.instance_ids, Some(vec![0, 0, 1]));
        assert_eq!(bank.frame_indices, Some(vec![0, 1, 0]));
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse("label,a,b\ncup,1,2\ncup,3\n", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { line: 3, expected: 3, found: 2 }), "{err:?}");
    }

    #[test]
    fn unparsable_and_unknown_columns() {
        let err = parse("label,a\ncup,x1\n", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::UnparsableNumber { line: 2, .. }));
        let schema = CsvSchema {
            label_column: "class".into(),
            ..CsvSchema::default()
        };
        assert!(matches!(parse("label,a\ncup,1\n", &schema), Err(Error::UnknownColumn(c)) if c == "class"));
    }

    #[test]
    fn explicit_feature_order() {
        let schema = CsvSchema {
            feature_columns: Some(vec!["b".into(), "a".into()]),
            ..CsvSchema::default()
        };
        let bank = parse("a,label,b\n1,x,2\n", &schema).unwrap();
        assert_eq!(bank.row(0), &[2.0, 1.0]);
    }
}

//! CSV ingestion and emission.
//!
//! Files are comma-delimited with a header row. A cell equal to the missing
//! token (default `NA`) is missing. Columns whose non-missing tokens all
//! parse as numbers are continuous unless a schema sidecar says otherwise;
//! any other column is categorical with levels numbered in order of first
//! appearance.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnSpec, MixedDataset, ObservedMatrix, VarKind};
use crate::error::{GemsError, Result};

pub const DEFAULT_NA_TOKEN: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Categorical,
    Continuous,
}

/// Optional sidecar mapping column names to kinds.
pub type Schema = HashMap<String, ColumnRole>;

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Result of ingesting a CSV file.
#[derive(Debug, Clone)]
pub enum Ingested {
    Numeric {
        names: Vec<String>,
        matrix: ObservedMatrix,
    },
    Mixed(MixedDataset),
}

impl Ingested {
    pub fn into_mixed(self) -> Result<MixedDataset> {
        match self {
            Ingested::Mixed(ds) => Ok(ds),
            Ingested::Numeric { names, matrix } => {
                let cols = names.into_iter().map(ColumnSpec::continuous).collect();
                let mut cells = Vec::with_capacity(matrix.n() * matrix.p());
                for i in 0..matrix.n() {
                    cells.extend(matrix.row(i));
                }
                MixedDataset::new(cols, cells)
            }
        }
    }
}

pub fn ingest_csv(path: &Path, na_token: &str, schema: Option<&Schema>) -> Result<Ingested> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    ingest_str(&text, na_token, schema)
}

pub fn ingest_str(text: &str, na_token: &str, schema: Option<&Schema>) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| GemsError::Ingest(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(GemsError::Ingest("empty header".into()));
    }
    let d = names.len();
    let mut raw: Vec<Vec<Option<String>>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => GemsError::Ingest(format!(
                "ragged row {}: expected {expected_len} fields, found {len}",
                line + 1
            )),
            _ => GemsError::Ingest(e.to_string()),
        })?;
        let row: Vec<Option<String>> = rec
            .iter()
            .map(|c| (c != na_token).then(|| c.to_string()))
            .collect();
        if row.iter().all(Option::is_none) {
            return Err(GemsError::Ingest(format!(
                "row {} has every cell missing",
                line + 1
            )));
        }
        raw.push(row);
    }
    if let Some(schema) = schema {
        for key in schema.keys() {
            if !names.contains(key) {
                return Err(GemsError::Ingest(format!("schema names unknown column '{key}'")));
            }
        }
    }

    let mut columns = Vec::with_capacity(d);
    let mut encoders: Vec<Option<HashMap<String, usize>>> = Vec::with_capacity(d);
    for (j, name) in names.iter().enumerate() {
        let numeric = raw
            .iter()
            .filter_map(|r| r[j].as_deref())
            .all(|s| s.parse::<f64>().map(f64::is_finite).unwrap_or(false));
        let role = match schema.and_then(|s| s.get(name)) {
            Some(&r) => r,
            None if numeric => ColumnRole::Continuous,
            None => ColumnRole::Categorical,
        };
        match role {
            ColumnRole::Continuous => {
                if !numeric {
                    return Err(GemsError::Ingest(format!(
                        "column '{name}' is declared continuous but has non-numeric cells"
                    )));
                }
                columns.push(ColumnSpec::continuous(name.clone()));
                encoders.push(None);
            }
            ColumnRole::Categorical => {
                let mut map = HashMap::new();
                let mut level_names = Vec::new();
                for s in raw.iter().filter_map(|r| r[j].as_deref()) {
                    if !map.contains_key(s) {
                        map.insert(s.to_string(), level_names.len());
                        level_names.push(s.to_string());
                    }
                }
                if level_names.len() < 2 {
                    return Err(GemsError::Ingest(format!(
                        "categorical column '{name}' has fewer than two observed levels"
                    )));
                }
                columns.push(ColumnSpec {
                    name: name.clone(),
                    kind: VarKind::Categorical {
                        levels: level_names.len(),
                    },
                    level_names,
                });
                encoders.push(Some(map));
            }
        }
    }

    let mut cells = Vec::with_capacity(raw.len() * d);
    for row in &raw {
        for (j, cell) in row.iter().enumerate() {
            cells.push(match (cell, &encoders[j]) {
                (None, _) => None,
                (Some(s), None) => Some(s.parse::<f64>().expect("checked numeric")),
                (Some(s), Some(map)) => Some(map[s.as_str()] as f64),
            });
        }
    }

    if columns.iter().all(|c| c.kind == VarKind::Continuous) {
        let n = raw.len();
        let mask: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let values = nalgebra::DMatrix::from_fn(n, d, |i, j| cells[i * d + j].unwrap_or(f64::NAN));
        let matrix = ObservedMatrix::new(values, mask)?;
        Ok(Ingested::Numeric { names, matrix })
    } else {
        Ok(Ingested::Mixed(MixedDataset::new(columns, cells)?))
    }
}

/// Serialize a dataset back to CSV using level labels for categorical cells.
pub fn emit_mixed_csv<W: Write>(ds: &MixedDataset, na_token: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| GemsError::Io(std::io::Error::other(e));
    w.write_record(ds.columns().iter().map(|c| c.name.as_str()))
        .map_err(io_err)?;
    for i in 0..ds.n() {
        let rec: Vec<String> = ds
            .row(i)
            .iter()
            .zip(ds.columns())
            .map(|(cell, col)| match (cell, col.kind) {
                (None, _) => na_token.to_string(),
                (Some(v), VarKind::Continuous) => format!("{v}"),
                (Some(v), VarKind::Categorical { .. }) => col
                    .level_names
                    .get(*v as usize)
                    .cloned()
                    .unwrap_or_else(|| format!("{}", *v as usize)),
            })
            .collect();
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_matrix_csv<W: Write>(
    names: &[String],
    matrix: &ObservedMatrix,
    na_token: &str,
    out: W,
) -> Result<()> {
    let cols = names.iter().cloned().map(ColumnSpec::continuous).collect();
    let mut cells = Vec::with_capacity(matrix.n() * matrix.p());
    for i in 0..matrix.n() {
        cells.extend(matrix.row(i));
    }
    emit_mixed_csv(&MixedDataset::new(cols, cells)?, na_token, out)
}

/// Write `bytes` to `path` atomically (temporary file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| GemsError::InvalidInput(format!("bad output path {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_na_gives_single_masked_cell() {
        let text = "a,b\n1,2\nNA,4\n5,6\n";
        match ingest_str(text, "NA", None).unwrap() {
            Ingested::Numeric { matrix, names } => {
                assert_eq!(names, vec!["a", "b"]);
                assert_eq!(matrix.missing_count(), 1);
                assert!(!matrix.is_observed(1, 0));
            }
            _ => panic!("expected numeric"),
        }
    }

    #[test]
    fn complete_file_has_full_mask() {
        let text = "a,b\n1,2\n3,4\n";
        let Ingested::Numeric { matrix, .. } = ingest_str(text, "NA", None).unwrap() else {
            panic!()
        };
        assert!(matrix.is_complete());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = ingest_str("a,b\n1,2\n3\n", "NA", None).unwrap_err();
        assert!(err.to_string().contains("ragged"), "{err}");
    }

    #[test]
    fn all_missing_row_is_named() {
        let err = ingest_str("a,b\n1,2\nNA,NA\n", "NA", None).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn custom_na_token() {
        let Ingested::Numeric { matrix, .. } = ingest_str("a,b\n1,?\n3,4\n", "?", None).unwrap()
        else {
            panic!()
        };
        assert_eq!(matrix.missing_count(), 1);
        // Under the default token '?' is a level, so the column is categorical.
        assert!(matches!(
            ingest_str("a,b\n1,?\n3,4\n", "NA", None).unwrap(),
            Ingested::Mixed(_)
        ));
    }

    #[test]
    fn levels_follow_first_appearance() {
        let text = "w,z\nred,1\nblue,2\nred,NA\ngreen,0.5\n";
        let Ingested::Mixed(ds) = ingest_str(text, "NA", None).unwrap() else {
            panic!()
        };
        assert_eq!(ds.columns()[0].level_names, vec!["red", "blue", "green"]);
        assert_eq!(ds.get(1, 0), Some(1.0));
        assert_eq!(ds.get(3, 0), Some(2.0));
        assert_eq!(ds.get(2, 1), None);
    }

    #[test]
    fn schema_forces_integer_coded_categoricals() {
        // 22 columns shaped like a veterinary record: 7 measurements and 15
        // integer-coded categorical findings.
        let mut header: Vec<String> = (0..7).map(|j| format!("c{j}")).collect();
        header.extend((0..15).map(|j| format!("k{j}")));
        let mut text = header.join(",") + "\n";
        for i in 0..12 {
            let mut row: Vec<String> = (0..7).map(|j| format!("{}.5", i + j)).collect();
            row.extend((0..15).map(|j| {
                if (i + j) % 5 == 0 {
                    "NA".to_string()
                } else {
                    format!("{}", (i + j) % 3 + 1)
                }
            }));
            text += &(row.join(",") + "\n");
        }
        let schema: Schema = (0..15)
            .map(|j| (format!("k{j}"), ColumnRole::Categorical))
            .collect();
        let Ingested::Mixed(ds) = ingest_str(&text, "NA", Some(&schema)).unwrap() else {
            panic!()
        };
        let n_cat = ds.columns().iter().filter(|c| c.kind.is_categorical()).count();
        assert_eq!((ds.width() - n_cat, n_cat), (7, 15));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
    }

    fn dataset_strategy() -> impl Strategy<Value = String> {
        (1usize..6, 1usize..8).prop_flat_map(|(d, n)| {
            let cell = prop_oneof![
                Just("NA".to_string()),
                (-1000i32..1000).prop_map(|v| format!("{}", v as f64 / 8.0)),
            ];
            prop::collection::vec(prop::collection::vec(cell, d), n).prop_map(move |rows| {
                let mut s = (0..d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",") + "\n";
                for mut r in rows {
                    if r.iter().all(|c| c == "NA") {
                        r[0] = "0".into();
                    }
                    s += &(r.join(",") + "\n");
                }
                s
            })
        })
    }

    proptest! {
        #[test]
        fn emit_after_ingest_reproduces_file(text in dataset_strategy()) {
            let ds = ingest_str(&text, "NA", None).unwrap().into_mixed().unwrap();
            let mut out = Vec::new();
            emit_mixed_csv(&ds, "NA", &mut out).unwrap();
            prop_assert_eq!(String::from_utf8(out).unwrap(), text.clone());
            let na = text.lines().skip(1).flat_map(|l| l.split(',')).filter(|c| *c == "NA").count();
            prop_assert_eq!(ds.missing_count(), na);
        }
    }
}

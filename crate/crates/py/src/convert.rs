//! Conversions between plain Python-shaped values and crate types.

use gems_core::{ColumnSpec, GemsError, MixedDataset, Result, VarKind};
use nalgebra::DMatrix;

/// `0` marks a continuous column; `k ≥ 2` a categorical one with `k` levels.
pub fn kinds_from_levels(levels: &[usize]) -> Result<Vec<VarKind>> {
    levels
        .iter()
        .enumerate()
        .map(|(j, &k)| match k {
            0 => Ok(VarKind::Continuous),
            1 => Err(GemsError::InvalidInput(format!("column {j}: a categorical needs at least 2 levels"))),
            k => Ok(VarKind::Categorical { levels: k }),
        })
        .collect()
}

pub fn levels_from_kinds(kinds: &[VarKind]) -> Vec<usize> {
    kinds.iter().map(|k| k.levels().unwrap_or(0)).collect()
}

/// Dataset with columns named `x0, x1, …`.
pub fn mixed_from_rows(rows: &[Vec<Option<f64>>], levels: &[usize]) -> Result<MixedDataset> {
    let kinds = kinds_from_levels(levels)?;
    let d = kinds.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(GemsError::Shape(format!("row {i} has {} cells, expected {d}", r.len())));
    }
    let cols = kinds
        .iter()
        .enumerate()
        .map(|(j, k)| match k {
            VarKind::Continuous => ColumnSpec::continuous(format!("x{j}")),
            VarKind::Categorical { levels } => ColumnSpec::categorical(format!("x{j}"), *levels),
        })
        .collect();
    MixedDataset::new(cols, rows.iter().flatten().copied().collect())
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(GemsError::Shape("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

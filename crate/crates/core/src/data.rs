//! Datasets with missing cells.
//!
//! [`ObservedMatrix`] holds purely numeric data for the Gaussian models and
//! [`MixedDataset`] holds categorical and continuous columns for the
//! regression models. Both are immutable after construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GemsError, Result};

/// An n×p numeric matrix with an observation mask (`true` = observed).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: DMatrix<f64>,
    mask: Vec<bool>,
    observed: Vec<Vec<usize>>,
    missing: Vec<Vec<usize>>,
}

impl ObservedMatrix {
    /// Build from values and a row-major mask. Masked values are replaced by
    /// NaN so they can never leak into arithmetic unnoticed.
    pub fn new(values: DMatrix<f64>, mask: Vec<bool>) -> Result<Self> {
        let (n, p) = values.shape();
        if mask.len() != n * p {
            return Err(GemsError::Shape(format!(
                "mask has {} cells but matrix is {n}x{p}",
                mask.len()
            )));
        }
        let mut values = values;
        let mut observed = Vec::with_capacity(n);
        let mut missing = Vec::with_capacity(n);
        for i in 0..n {
            let (mut o, mut m) = (Vec::new(), Vec::new());
            for j in 0..p {
                if mask[i * p + j] {
                    if !values[(i, j)].is_finite() {
                        return Err(GemsError::InvalidInput(format!(
                            "observed cell ({i}, {j}) is not finite"
                        )));
                    }
                    o.push(j);
                } else {
                    values[(i, j)] = f64::NAN;
                    m.push(j);
                }
            }
            if o.is_empty() {
                return Err(GemsError::EmptyRow { row: i });
            }
            observed.push(o);
            missing.push(m);
        }
        Ok(Self {
            values,
            mask,
            observed,
            missing,
        })
    }

    pub fn from_complete(values: DMatrix<f64>) -> Result<Self> {
        let len = values.len();
        Self::new(values, vec![true; len])
    }

    /// Build from rows of optional values.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(GemsError::Shape("ragged rows".into()));
        }
        let mut mask = Vec::with_capacity(n * p);
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j].unwrap_or(f64::NAN));
        for row in rows {
            mask.extend(row.iter().map(Option::is_some));
        }
        Self::new(values, mask)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.p() + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values[(i, j)])
    }

    /// Raw values; masked cells are NaN.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Observed column indices of row `i` (o_i).
    pub fn observed_idx(&self, i: usize) -> &[usize] {
        &self.observed[i]
    }

    /// Missing column indices of row `i` (m_i).
    pub fn missing_idx(&self, i: usize) -> &[usize] {
        &self.missing[i]
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        (0..self.p()).map(|j| self.get(i, j)).collect()
    }

    /// The complete matrix, or an error when any cell is masked.
    pub fn complete_values(&self) -> Result<DMatrix<f64>> {
        if self.is_complete() {
            Ok(self.values.clone())
        } else {
            Err(GemsError::InvalidInput(format!(
                "{} cells are missing",
                self.missing_count()
            )))
        }
    }

    /// Per-column mean over observed cells.
    pub fn column_means(&self) -> DVector<f64> {
        DVector::from_fn(self.p(), |j, _| {
            let (s, c) = (0..self.n())
                .filter_map(|i| self.get(i, j))
                .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        })
    }

    /// Replace each missing cell by its column's observed mean.
    pub fn mean_imputed(&self) -> DMatrix<f64> {
        let means = self.column_means();
        DMatrix::from_fn(self.n(), self.p(), |i, j| {
            self.get(i, j).unwrap_or(means[j])
        })
    }
}

/// Kind of a mixed-dataset column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    Categorical { levels: usize },
    Continuous,
}

impl VarKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, VarKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<usize> {
        match self {
            VarKind::Categorical { levels } => Some(*levels),
            VarKind::Continuous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: VarKind,
    /// Level labels in first-appearance order (categorical only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_names: Vec<String>,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Continuous,
            level_names: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: usize) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Categorical { levels },
            level_names: (0..levels).map(|l| l.to_string()).collect(),
        }
    }
}

/// Categorical and continuous columns with optional cells. Categorical cells
/// hold the level index as an `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    columns: Vec<ColumnSpec>,
    n: usize,
    cells: Vec<Option<f64>>,
}

impl MixedDataset {
    /// `cells` is row-major with `columns.len()` entries per row.
    pub fn new(columns: Vec<ColumnSpec>, cells: Vec<Option<f64>>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(GemsError::InvalidInput("dataset has no columns".into()));
        }
        if cells.len() % d != 0 {
            return Err(GemsError::Shape(format!(
                "{} cells do not fill rows of width {d}",
                cells.len()
            )));
        }
        for c in &columns {
            if let VarKind::Categorical { levels } = c.kind {
                if levels < 2 {
                    return Err(GemsError::InvalidInput(format!(
                        "categorical column '{}' has {levels} level(s); at least 2 required",
                        c.name
                    )));
                }
            }
        }
        for (idx, cell) in cells.iter().enumerate() {
            let Some(v) = cell else { continue };
            let col = &columns[idx % d];
            match col.kind {
                VarKind::Categorical { levels } => {
                    if v.fract() != 0.0 || *v < 0.0 || *v as usize >= levels {
                        return Err(GemsError::InvalidInput(format!(
                            "row {}: level {v} out of range for '{}' ({levels} levels)",
                            idx / d,
                            col.name
                        )));
                    }
                }
                VarKind::Continuous => {
                    if !v.is_finite() {
                        return Err(GemsError::InvalidInput(format!(
                            "row {}: non-finite value in '{}'",
                            idx / d,
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n: cells.len() / d,
            columns,
            cells,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn kinds(&self) -> Vec<VarKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i * self.width() + j]
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let d = self.width();
        &self.cells[i * d..(i + 1) * d]
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Drop column `j`, returning the rest and the removed column.
    pub fn split_column(&self, j: usize) -> Result<(MixedDataset, Vec<Option<f64>>, ColumnSpec)> {
        if j >= self.width() || self.width() < 2 {
            return Err(GemsError::InvalidInput(format!("cannot split column {j}")));
        }
        let d = self.width();
        let mut cols = self.columns.clone();
        let removed = cols.remove(j);
        let mut cells = Vec::with_capacity(self.n * (d - 1));
        let mut col = Vec::with_capacity(self.n);
        for i in 0..self.n {
            for (k, c) in self.row(i).iter().enumerate() {
                if k == j {
                    col.push(*c);
                } else {
                    cells.push(*c);
                }
            }
        }
        Ok((MixedDataset::new(cols, cells)?, col, removed))
    }

    /// Column-wise imputation: observed mean for continuous columns and
    /// observed mode (lowest level on ties) for categorical columns.
    pub fn mean_mode_imputed(&self) -> MixedDataset {
        let d = self.width();
        let fills: Vec<f64> = (0..d)
            .map(|j| {
                let obs = (0..self.n).filter_map(|i| self.get(i, j));
                match self.columns[j].kind {
                    VarKind::Continuous => {
                        let (s, c) = obs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
                        if c == 0 {
                            0.0
                        } else {
                            s / c as f64
                        }
                    }
                    VarKind::Categorical { levels } => {
                        let mut counts = vec![0usize; levels];
                        obs.for_each(|x| counts[x as usize] += 1);
                        let mut best = 0;
                        for (l, &c) in counts.iter().enumerate() {
                            if c > counts[best] {
                                best = l;
                            }
                        }
                        best as f64
                    }
                }
            })
            .collect();
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(idx, c)| Some(c.unwrap_or(fills[idx % d])))
            .collect();
        MixedDataset {
            columns: self.columns.clone(),
            n: self.n,
            cells,
        }
    }

    /// Numeric view when every column is continuous.
    pub fn to_observed_matrix(&self) -> Result<ObservedMatrix> {
        if self.columns.iter().any(|c| c.kind.is_categorical()) {
            return Err(GemsError::InvalidInput(
                "dataset has categorical columns".into(),
            ));
        }
        let rows: Vec<Vec<Option<f64>>> = (0..self.n).map(|i| self.row(i).to_vec()).collect();
        ObservedMatrix::from_rows(&rows)
    }
}

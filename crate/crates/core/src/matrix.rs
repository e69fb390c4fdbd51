//! Expression matrix and label data model.

use std::collections::{BTreeSet, HashMap, HashSet};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk layout of a dense expression table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    CellsInRows,
    GenesInRows,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cells-in-rows" | "cells" => Ok(Orientation::CellsInRows),
            "genes-in-rows" | "genes" => Ok(Orientation::GenesInRows),
            other => Err(Error::validation(format!("unknown orientation '{other}'"))),
        }
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Orientation::CellsInRows => "cells-in-rows",
            Orientation::GenesInRows => "genes-in-rows",
        })
    }
}

/// Dense cells x genes matrix with cell and gene identifiers.
///
/// Immutable once built: every transform returns a new matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Array2<f64>,
    cell_ids: Vec<String>,
    gene_ids: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(values: Array2<f64>, cell_ids: Vec<String>, gene_ids: Vec<String>) -> Result<Self> {
        if values.nrows() != cell_ids.len() {
            return Err(Error::validation(format!(
                "matrix has {} rows but {} cell ids",
                values.nrows(),
                cell_ids.len()
            )));
        }
        if values.ncols() != gene_ids.len() {
            return Err(Error::validation(format!(
                "matrix has {} columns but {} gene ids",
                values.ncols(),
                gene_ids.len()
            )));
        }
        check_unique("cell", &cell_ids)?;
        check_unique("gene", &gene_ids)?;
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value {v} at cell '{}', gene '{}'",
                cell_ids[i], gene_ids[j]
            )));
        }
        Ok(Self {
            values,
            cell_ids,
            gene_ids,
        })
    }

    /// Builds a matrix with generated identifiers `cell{i}` / `gene{j}`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let cells = (0..values.nrows()).map(|i| format!("cell{i}")).collect();
        let genes = (0..values.ncols()).map(|j| format!("gene{j}")).collect();
        Self::new(values, cells, genes)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<String>, Vec<String>) {
        (self.values, self.cell_ids, self.gene_ids)
    }

    /// Same identifiers, new values of identical shape.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::validation(format!(
                "replacement values have shape {:?}, expected {:?}",
                values.dim(),
                self.values.dim()
            )));
        }
        Self::new(values, self.cell_ids.clone(), self.gene_ids.clone())
    }

    /// Column subset in the given order.
    pub fn select_genes(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_genes()) {
            return Err(Error::validation(format!(
                "gene index {bad} out of range for {} genes",
                self.n_genes()
            )));
        }
        let values = self.values.select(Axis(1), columns);
        let genes = columns.iter().map(|&c| self.gene_ids[c].clone()).collect();
        Self::new(values, self.cell_ids.clone(), genes)
    }

    pub fn transpose(&self) -> Self {
        Self {
            values: self.values.t().to_owned(),
            cell_ids: self.gene_ids.clone(),
            gene_ids: self.cell_ids.clone(),
        }
    }
}

fn check_unique(kind: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::validation(format!("duplicate {kind} id '{id}'")));
        }
    }
    Ok(())
}

/// Per-cell integer labels in `[0, C)`, each class used at least once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<usize>,
    class_names: Option<Vec<String>>,
}

impl LabelSet {
    pub fn new(labels: Vec<usize>, class_names: Option<Vec<String>>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        if used.len() != n_classes {
            let missing = (0..n_classes).find(|c| !used.contains(c)).unwrap_or(0);
            return Err(Error::validation(format!(
                "label {missing} is unused; labels must cover [0, {n_classes})"
            )));
        }
        if let Some(names) = &class_names {
            if names.len() != n_classes {
                return Err(Error::validation(format!(
                    "{} class names for {n_classes} classes",
                    names.len()
                )));
            }
        }
        Ok(Self {
            labels,
            class_names,
        })
    }

    /// Renumbers arbitrary integer labels to `[0, C)` by ascending value.
    pub fn from_raw(raw: &[usize]) -> Self {
        let classes: BTreeSet<usize> = raw.iter().copied().collect();
        let index: HashMap<usize, usize> =
            classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            labels: raw.iter().map(|c| index[c]).collect(),
            class_names: None,
        }
    }

    /// Builds labels from class names; class ids follow sorted name order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let classes: BTreeSet<&str> = names.iter().map(|s| s.as_ref()).collect();
        let index: HashMap<&str, usize> =
            classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            labels: names.iter().map(|s| index[s.as_ref()]).collect(),
            class_names: Some(classes.into_iter().map(str::to_owned).collect()),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl AsRef<[usize]> for LabelSet {
    fn as_ref(&self) -> &[usize] {
        &self.labels
    }
}

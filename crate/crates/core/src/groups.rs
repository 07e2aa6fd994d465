//! Partitions of the `m x n` cells of an explicand into named players.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One player: the cross section `rows x features`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub rows: BTreeSet<usize>,
    pub features: BTreeSet<usize>,
}

impl Group {
    pub fn new(
        name: impl Into<String>,
        rows: impl IntoIterator<Item = usize>,
        features: impl IntoIterator<Item = usize>,
    ) -> Self {
        Self {
            name: name.into(),
            rows: rows.into_iter().collect(),
            features: features.into_iter().collect(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.features.len()
    }
}

/// A validated partition of all cells of an `m x n` sample.
///
/// Groups must be non-empty, pairwise disjoint and together cover every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    groups: Vec<Group>,
    shape: (usize, usize),
    /// `cell_owner[[i, j]]` is the index of the group owning cell `(i, j)`.
    cell_owner: Array2<usize>,
}

impl GroupSpec {
    pub fn new(groups: Vec<Group>, rows: usize, cols: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidGroups("no groups given".into()));
        }
        const UNOWNED: usize = usize::MAX;
        let mut owner = Array2::from_elem((rows, cols), UNOWNED);
        let mut names = BTreeSet::new();
        for (g, group) in groups.iter().enumerate() {
            if !names.insert(group.name.as_str()) {
                return Err(Error::InvalidGroups(format!(
                    "duplicate group name `{}`",
                    group.name
                )));
            }
            if group.cell_count() == 0 {
                return Err(Error::InvalidGroups(format!(
                    "group `{}` has no cells",
                    group.name
                )));
            }
            for &i in &group.rows {
                for &j in &group.features {
                    if i >= rows || j >= cols {
                        return Err(Error::InvalidGroups(format!(
                            "group `{}` refers to cell ({i}, {j}) outside a {rows}x{cols} sample",
                            group.name
                        )));
                    }
                    let slot = &mut owner[[i, j]];
                    if *slot != UNOWNED {
                        return Err(Error::InvalidGroups(format!(
                            "groups `{}` and `{}` overlap at cell ({i}, {j})",
                            groups[*slot].name, group.name
                        )));
                    }
                    *slot = g;
                }
            }
        }
        if let Some(((i, j), _)) = owner.indexed_iter().find(|(_, &o)| o == UNOWNED) {
            return Err(Error::InvalidGroups(format!(
                "cell ({i}, {j}) is not covered by any group"
            )));
        }
        Ok(Self {
            groups,
            shape: (rows, cols),
            cell_owner: owner,
        })
    }

    /// One group per feature, spanning all rows.
    pub fn per_feature(rows: usize, feature_names: &[String]) -> Result<Self> {
        let groups = feature_names
            .iter()
            .enumerate()
            .map(|(j, name)| Group::new(name.clone(), 0..rows, [j]))
            .collect();
        Self::new(groups, rows, feature_names.len())
    }

    /// One group per distinct row label (first-seen order), spanning all features.
    pub fn by_row_labels(column: &str, labels: &[String], cols: usize) -> Result<Self> {
        let groups = label_partition(labels)
            .into_iter()
            .map(|(label, rows)| Group::new(format!("{column}={label}"), rows, 0..cols))
            .collect();
        Self::new(groups, labels.len(), cols)
    }

    /// The cross product of features and row labels, features outermost.
    pub fn features_by_row_labels(
        column: &str,
        labels: &[String],
        feature_names: &[String],
    ) -> Result<Self> {
        let parts = label_partition(labels);
        let mut groups = Vec::with_capacity(parts.len() * feature_names.len());
        for (j, feature) in feature_names.iter().enumerate() {
            for (label, rows) in &parts {
                groups.push(Group::new(
                    format!("{feature}:{column}={label}"),
                    rows.iter().copied(),
                    [j],
                ));
            }
        }
        Self::new(groups, labels.len(), feature_names.len())
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn owner(&self, row: usize, col: usize) -> usize {
        self.cell_owner[[row, col]]
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }
}

/// Distinct labels in first-seen order with the rows carrying each.
fn label_partition(labels: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut parts: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match parts.iter_mut().find(|(l, _)| l == label) {
            Some((_, rows)) => rows.push(i),
            None => parts.push((label.clone(), vec![i])),
        }
    }
    parts
}

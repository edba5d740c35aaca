//! Channel montages: ordered subsets of the electrode superset.

use std::collections::BTreeMap;

use crate::groups::GroupTable;
use crate::{Result, SignalError};

#[derive(Clone, Debug)]
pub struct Montage {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Montage {
    /// Build from channel names; every name must be unique and resolve in
    /// the superset of `table`.
    pub fn new(names: &[String], table: &GroupTable) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, n) in names.iter().enumerate() {
            if table.superset_index(n).is_none() {
                return Err(SignalError::UnknownChannel(n.clone()));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(SignalError::DuplicateChannel(n.clone()));
            }
        }
        Ok(Self { names: names.to_vec(), index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Positions of each montage channel inside the superset ordering
    /// (used to gather rows of the channel embedding table).
    pub fn superset_rows(&self, table: &GroupTable) -> Result<Vec<usize>> {
        self.names
            .iter()
            .map(|n| {
                table
                    .superset_index(n)
                    .ok_or_else(|| SignalError::UnknownChannel(n.clone()))
            })
            .collect()
    }

    /// A 19-channel montage covering frontal, central, temporal, parietal
    /// and occipital sites; the workspace default for synthetic data.
    pub fn standard_19(table: &GroupTable) -> Result<Self> {
        let names = [
            "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T7", "C3", "CZ", "C4", "T8", "P7",
            "P3", "PZ", "P4", "P8", "O1", "O2",
        ];
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        Self::new(&names, table)
    }
}

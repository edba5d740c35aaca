//! The 16 static channel groups (8 anatomical regions + 8 functional
//! networks) and the electrode superset derived from them.

use std::collections::BTreeSet;

use serde::Deserialize;

use crate::{Result, SignalError};

const GROUPS_JSON: &str = include_str!("../assets/groups.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, Deserialize)]
pub enum GroupKind {
    Region,
    Network,
}

#[derive(Clone, Debug)]
pub struct Group {
    pub name: String,
    pub kind: GroupKind,
    pub members: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct GroupTable {
    groups: Vec<Group>,
    superset: Vec<String>,
}

#[derive(Deserialize)]
struct RawTable {
    regions: Vec<RawGroup>,
    networks: Vec<RawGroup>,
}

#[derive(Deserialize)]
struct RawGroup {
    name: String,
    members: Vec<String>,
}

impl GroupTable {
    /// The built-in table (shipped JSON asset).
    pub fn load_default() -> Result<Self> {
        Self::from_json(GROUPS_JSON)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let raw: RawTable = serde_json::from_str(json)?;
        let mut groups = Vec::new();
        for g in raw.regions {
            groups.push(Group { name: g.name, kind: GroupKind::Region, members: g.members });
        }
        for g in raw.networks {
            groups.push(Group { name: g.name, kind: GroupKind::Network, members: g.members });
        }
        if groups.len() != 16 {
            return Err(SignalError::BadGroupTable(format!(
                "expected 16 groups (8 regions + 8 networks), got {}",
                groups.len()
            )));
        }
        let mut names = BTreeSet::new();
        for g in &groups {
            if !names.insert(g.name.clone()) {
                return Err(SignalError::BadGroupTable(format!("duplicate group {:?}", g.name)));
            }
            if g.members.is_empty() {
                return Err(SignalError::BadGroupTable(format!("group {:?} empty", g.name)));
            }
        }
        // The electrode superset is the sorted union of all group members.
        let mut superset: Vec<String> = groups
            .iter()
            .flat_map(|g| g.members.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        superset.sort();
        Ok(Self { groups, superset })
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

    pub fn get(&self, name: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Sorted electrode superset (union over all groups).
    pub fn superset(&self) -> &[String] {
        &self.superset
    }

    pub fn superset_index(&self, channel: &str) -> Option<usize> {
        self.superset.binary_search_by(|s| s.as_str().cmp(channel)).ok()
    }

    /// Per-group member indices resolved against a montage's channel order;
    /// members absent from the montage are skipped.
    pub fn membership(&self, montage: &crate::Montage) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| {
                g.members
                    .iter()
                    .filter_map(|m| montage.index_of(m))
                    .collect::<BTreeSet<usize>>()
                    .into_iter()
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_sixteen_groups_with_resolvable_members() {
        let t = GroupTable::load_default().unwrap();
        assert_eq!(t.len(), 16);
        assert_eq!(t.groups().iter().filter(|g| g.kind == GroupKind::Region).count(), 8);
        assert_eq!(t.groups().iter().filter(|g| g.kind == GroupKind::Network).count(), 8);
        for g in t.groups() {
            for m in &g.members {
                assert!(t.superset_index(m).is_some(), "{m} missing from superset");
            }
        }
    }

    #[test]
    fn overlapping_membership_is_allowed_and_present() {
        let t = GroupTable::load_default().unwrap();
        // FCZ sits in Frontal, Central and Midline among others.
        let holders: Vec<&str> = t
            .groups()
            .iter()
            .filter(|g| g.members.iter().any(|m| m == "FCZ"))
            .map(|g| g.name.as_str())
            .collect();
        assert!(holders.len() >= 3, "{holders:?}");
    }
}

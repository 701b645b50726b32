use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InteractionDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    User,
    Item,
}

/// One line of the profile JSONL file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub kind: ProfileKind,
    /// Raw (un-reindexed) identifier.
    pub id: String,
    #[serde(rename = "profile")]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl Profile {
    pub fn new(kind: ProfileKind, id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            kind,
            id: id.into(),
            text: text.into(),
            provenance: None,
        }
    }
}

/// User and item profiles keyed by dataset index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProfileStore {
    pub user_profiles: BTreeMap<usize, Profile>,
    pub item_profiles: BTreeMap<usize, Profile>,
}

impl ProfileStore {
    pub fn user(&self, u: usize) -> Option<&Profile> {
        self.user_profiles.get(&u)
    }

    pub fn item(&self, v: usize) -> Option<&Profile> {
        self.item_profiles.get(&v)
    }

    pub fn insert(&mut self, ds: &InteractionDataset, profile: Profile) -> Result<()> {
        let (map, index) = match profile.kind {
            ProfileKind::User => (&mut self.user_profiles, ds.users().get(&profile.id)),
            ProfileKind::Item => (&mut self.item_profiles, ds.items().get(&profile.id)),
        };
        let index = index.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "profile for unknown {:?} id {:?}",
                profile.kind, profile.id
            ))
        })?;
        map.insert(index, profile);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.user_profiles.len() + self.item_profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items first, then users, both in index order.
    pub fn iter(&self) -> impl Iterator<Item = &Profile> {
        self.item_profiles
            .values()
            .chain(self.user_profiles.values())
    }
}

pub fn read_profiles(path: &Path, ds: &InteractionDataset) -> Result<ProfileStore> {
    let file = File::open(path).map_err(|_| Error::MissingFile(path.display().to_string()))?;
    let mut store = ProfileStore::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let profile: Profile = serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: i as u64 + 1,
            msg: e.to_string(),
        })?;
        store.insert(ds, profile)?;
    }
    Ok(store)
}

/// Writes profiles as JSON Lines; with `append` the lines are added to an
/// existing file.
pub fn write_profiles<'a>(
    path: &Path,
    profiles: impl IntoIterator<Item = &'a Profile>,
    append: bool,
) -> Result<usize> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for p in profiles {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_schema() {
        let p = Profile::new(ProfileKind::Item, "i9", "likes jazz");
        let line = serde_json::to_string(&p).unwrap();
        assert_eq!(line, r#"{"kind":"item","id":"i9","profile":"likes jazz"}"#);
    }

    #[test]
    fn write_read_round_trip() {
        let ds = InteractionDataset::from_pairs(2, 2, vec![(0, 0), (1, 1)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let a = Profile::new(ProfileKind::User, "1", "u one");
        let b = Profile::new(ProfileKind::Item, "0", "i zero");
        write_profiles(&path, [&a], false).unwrap();
        write_profiles(&path, [&b], true).unwrap();
        let store = read_profiles(&path, &ds).unwrap();
        assert_eq!(store.user(1), Some(&a));
        assert_eq!(store.item(0), Some(&b));
        assert_eq!(store.len(), 2);
    }
}

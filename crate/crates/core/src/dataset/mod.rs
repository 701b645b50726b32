//! Implicit-feedback interaction data: reindexed user/item universe, the
//! train/test partition, popularity counts and derived views.

mod io;
mod profiles;
pub mod synthetic;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{export_csv, ingest, ingest_reader, load_split, save_split, InputFormat};
pub use profiles::{read_profiles, write_profiles, Profile, ProfileKind, ProfileStore};

/// Bidirectional mapping between raw string identifiers and contiguous indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_raw(raw: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(raw.len());
        for (i, id) in raw.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate raw id {id:?}")));
            }
        }
        Ok(Self { raw, index })
    }

    /// Sequential ids `"0" .. "n-1"`.
    pub fn sequential(n: usize) -> Self {
        Self::from_raw((0..n).map(|i| i.to_string()).collect()).expect("unique")
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn raw(&self, index: usize) -> &str {
        &self.raw[index]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }
}

/// The observed interaction matrix plus its train/test partition.
///
/// Immutable after construction; every derived view (split, subsample) is a
/// new dataset. Train and test pair lists are sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDataset {
    users: IdMap,
    items: IdMap,
    train: Vec<(usize, usize)>,
    test: Vec<(usize, usize)>,
    train_by_user: Vec<Vec<usize>>,
    test_by_user: Vec<Vec<usize>>,
    item_popularity: Vec<u32>,
}

impl InteractionDataset {
    pub fn new(
        users: IdMap,
        items: IdMap,
        mut train: Vec<(usize, usize)>,
        mut test: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let (m, n) = (users.len(), items.len());
        train.sort_unstable();
        train.dedup();
        test.sort_unstable();
        test.dedup();
        for &(u, v) in train.iter().chain(&test) {
            if u >= m || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {v}) outside {m} users x {n} items"
                )));
            }
        }
        let mut train_by_user = vec![Vec::new(); m];
        let mut item_popularity = vec![0u32; n];
        for &(u, v) in &train {
            train_by_user[u].push(v);
            item_popularity[v] += 1;
        }
        let mut test_by_user = vec![Vec::new(); m];
        for &(u, v) in &test {
            if train_by_user[u].binary_search(&v).is_ok() {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {v}) in both train and test"
                )));
            }
            test_by_user[u].push(v);
        }
        Ok(Self {
            users,
            items,
            train,
            test,
            train_by_user,
            test_by_user,
            item_popularity,
        })
    }

    /// Dataset with sequential raw ids, all pairs in train.
    pub fn from_pairs(
        num_users: usize,
        num_items: usize,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        Self::new(
            IdMap::sequential(num_users),
            IdMap::sequential(num_items),
            pairs,
            Vec::new(),
        )
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn train(&self) -> &[(usize, usize)] {
        &self.train
    }

    pub fn test(&self) -> &[(usize, usize)] {
        &self.test
    }

    /// All observed pairs (train ∪ test), sorted.
    pub fn positives(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<_> = self.train.iter().chain(&self.test).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_by_user[user]
    }

    pub fn test_items(&self, user: usize) -> &[usize] {
        &self.test_by_user[user]
    }

    pub fn is_train_positive(&self, user: usize, item: usize) -> bool {
        self.train_by_user[user].binary_search(&item).is_ok()
    }

    /// Train-pair count per item.
    pub fn item_popularity(&self) -> &[u32] {
        &self.item_popularity
    }

    pub fn with_split(
        &self,
        train: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
    ) -> Result<Self> {
        Self::new(self.users.clone(), self.items.clone(), train, test)
    }

    /// Per-user stratified holdout. Users with a single positive keep it in
    /// train; every other user keeps at least one train pair.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let mut by_user = vec![Vec::new(); self.num_users()];
        for (u, v) in self.positives() {
            by_user[u].push(v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (u, mut items) in by_user.into_iter().enumerate() {
            items.shuffle(&mut rng);
            let n = items.len();
            let n_test = if n < 2 {
                0
            } else {
                ((test_fraction * n as f64).round() as usize).min(n - 1)
            };
            for (i, v) in items.into_iter().enumerate() {
                if i < n_test {
                    test.push((u, v));
                } else {
                    train.push((u, v));
                }
            }
        }
        self.with_split(train, test)
    }

    /// Uniform subsample of the train pairs; test is untouched. A user whose
    /// train set would become empty keeps one (randomly chosen) pair.
    pub fn subsample_train(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fraction must lie in (0, 1], got {fraction}"
            )));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let mut pairs = self.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pairs.shuffle(&mut rng);
        let keep = (fraction * pairs.len() as f64).round() as usize;
        let mut kept_user = vec![false; self.num_users()];
        let mut kept = Vec::with_capacity(keep);
        for &(u, v) in &pairs[..keep] {
            kept_user[u] = true;
            kept.push((u, v));
        }
        for &(u, v) in &pairs[keep..] {
            if !kept_user[u] {
                kept_user[u] = true;
                kept.push((u, v));
            }
        }
        self.with_split(kept, self.test.clone())
    }

    /// Users with at least one test item.
    pub fn test_users(&self) -> Vec<usize> {
        (0..self.num_users())
            .filter(|&u| !self.test_by_user[u].is_empty())
            .collect()
    }
}

/// Item partition by train popularity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityStrata {
    pub popular: Vec<usize>,
    pub normal: Vec<usize>,
    pub unpopular: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Popular,
    Normal,
    Unpopular,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Popular, Stratum::Normal, Stratum::Unpopular];

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Popular => "popular",
            Stratum::Normal => "normal",
            Stratum::Unpopular => "unpopular",
        }
    }
}

impl PopularityStrata {
    pub fn items(&self, stratum: Stratum) -> &[usize] {
        match stratum {
            Stratum::Popular => &self.popular,
            Stratum::Normal => &self.normal,
            Stratum::Unpopular => &self.unpopular,
        }
    }

    /// Stratum of every item, indexed by item.
    pub fn assignment(&self, num_items: usize) -> Vec<Stratum> {
        let mut out = vec![Stratum::Normal; num_items];
        for &v in &self.popular {
            out[v] = Stratum::Popular;
        }
        for &v in &self.unpopular {
            out[v] = Stratum::Unpopular;
        }
        out
    }
}

/// Top 5% of items by train count are popular, the bottom 80% unpopular,
/// the rest normal. Equal counts are ordered by ascending item index.
pub fn stratify_popularity(ds: &InteractionDataset) -> PopularityStrata {
    let n = ds.num_items();
    if n < 20 {
        log::warn!("stratifying only {n} items; strata sizes are coarse");
    }
    let pop = ds.item_popularity();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pop[b].cmp(&pop[a]).then(a.cmp(&b)));
    let n_popular = (0.05 * n as f64).ceil() as usize;
    let n_unpopular = (0.80 * n as f64).floor() as usize;
    // ceil(0.05 n) + floor(0.8 n) <= n for every n >= 1
    let n_normal = n - n_popular - n_unpopular;
    let mut popular = order[..n_popular].to_vec();
    let mut normal = order[n_popular..n_popular + n_normal].to_vec();
    let mut unpopular = order[n_popular + n_normal..].to_vec();
    popular.sort_unstable();
    normal.sort_unstable();
    unpopular.sort_unstable();
    PopularityStrata {
        popular,
        normal,
        unpopular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user_with(n: usize) -> InteractionDataset {
        InteractionDataset::from_pairs(1, n, (0..n).map(|v| (0, v)).collect()).unwrap()
    }

    #[test]
    fn split_is_proportional_per_user() {
        let ds = user_with(10).split(0.2, 7).unwrap();
        assert_eq!(ds.test().len(), 2);
        assert_eq!(ds.train().len(), 8);
    }

    #[test]
    fn single_interaction_user_stays_in_train() {
        let ds = user_with(1).split(0.5, 7).unwrap();
        assert_eq!(ds.test().len(), 0);
        assert_eq!(ds.train().len(), 1);
    }

    #[test]
    fn split_is_deterministic() {
        let base = user_with(30);
        assert_eq!(base.split(0.3, 11).unwrap(), base.split(0.3, 11).unwrap());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(user_with(3).split(1.5, 0).is_err());
        assert!(user_with(3).split(0.0, 0).is_err());
    }

    #[test]
    fn popularity_counts_train_only() {
        let ds = InteractionDataset::new(
            IdMap::sequential(2),
            IdMap::sequential(2),
            vec![(0, 0), (1, 0)],
            vec![(0, 1)],
        )
        .unwrap();
        assert_eq!(ds.item_popularity(), &[2, 0]);
    }

    #[test]
    fn rejects_overlap_between_train_and_test() {
        let err = InteractionDataset::new(
            IdMap::sequential(1),
            IdMap::sequential(1),
            vec![(0, 0)],
            vec![(0, 0)],
        );
        assert!(err.is_err());
    }

    fn counts_dataset(counts: &[usize]) -> InteractionDataset {
        let users = counts.iter().copied().max().unwrap_or(0).max(1);
        let mut pairs = Vec::new();
        for (v, &c) in counts.iter().enumerate() {
            for u in 0..c {
                pairs.push((u, v));
            }
        }
        InteractionDataset::from_pairs(users, counts.len(), pairs).unwrap()
    }

    #[test]
    fn strata_sizes_for_hundred_items() {
        let counts: Vec<usize> = (1..=100).collect();
        let s = stratify_popularity(&counts_dataset(&counts));
        assert_eq!(
            (s.popular.len(), s.unpopular.len(), s.normal.len()),
            (5, 80, 15)
        );
        // the five most-clicked items are the last five indices
        assert_eq!(s.popular, vec![95, 96, 97, 98, 99]);
        assert_eq!(s.unpopular, (0..80).collect::<Vec<_>>());
    }

    #[test]
    fn strata_sizes_for_twenty_items() {
        let counts: Vec<usize> = (1..=20).collect();
        let s = stratify_popularity(&counts_dataset(&counts));
        // ceil(0.05 * 20) = 1, floor(0.8 * 20) = 16
        assert_eq!(
            (s.popular.len(), s.unpopular.len(), s.normal.len()),
            (1, 16, 3)
        );
    }

    #[test]
    fn equal_counts_break_ties_by_index() {
        let s = stratify_popularity(&counts_dataset(&[3; 40]));
        assert_eq!(s.popular, vec![0, 1]);
        assert_eq!(s.normal, (2..8).collect::<Vec<_>>());
        assert_eq!(s.unpopular, (8..40).collect::<Vec<_>>());
    }

    #[test]
    fn subsample_identity_and_floor() {
        let ds = InteractionDataset::from_pairs(
            50,
            40,
            (0..50)
                .flat_map(|u| (0..20).map(move |v| (u, (u + v) % 40)))
                .collect(),
        )
        .unwrap();
        assert_eq!(ds.subsample_train(1.0, 3).unwrap(), ds);
        let sub = ds.subsample_train(0.3, 3).unwrap();
        assert!(sub.train().len() >= 300);
        assert!(sub.train().len() <= 300 + 50);
        assert!(sub
            .train()
            .iter()
            .all(|p| ds.train().binary_search(p).is_ok()));
        assert_eq!(sub, ds.subsample_train(0.3, 3).unwrap());
    }

    #[test]
    fn subsample_keeps_one_pair_per_user() {
        let ds =
            InteractionDataset::from_pairs(20, 5, (0..20).map(|u| (u, u % 5)).collect()).unwrap();
        let sub = ds.subsample_train(0.05, 1).unwrap();
        assert!((0..20).all(|u| sub.train_items(u).len() == 1));
    }
}

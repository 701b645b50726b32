//! Top-K ranking metrics, popularity-stratified reports, the false hard
//! negative probe and the training-data sparsity sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backbone::EmbeddingTable;
use crate::dataset::{InteractionDataset, PopularityStrata, Stratum};
use crate::error::{Error, Result};
use crate::linalg::{cosine, dot};

/// Cosine above which a drawn negative counts as a held-out positive.
pub const FHNS_THRESHOLD: f64 = 0.99;

/// Hits in the top `k` over the number of held-out items; `None` when the
/// user has no held-out items.
pub fn recall_at_k(ranked: &[usize], test_items: &[usize], k: usize) -> Option<f64> {
    if test_items.is_empty() {
        return None;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|v| test_items.contains(v))
        .count();
    Some(hits as f64 / test_items.len() as f64)
}

/// Binary-relevance NDCG with gain `1/log2(rank + 1)`.
pub fn ndcg_at_k(ranked: &[usize], test_items: &[usize], k: usize) -> Option<f64> {
    if test_items.is_empty() {
        return None;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, v)| test_items.contains(v))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(test_items.len()))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Some(dcg / ideal)
}

/// The `depth` best non-train items for `user`, by descending score with
/// ties broken by ascending item index.
pub fn rank_items(
    user: usize,
    emb: &EmbeddingTable,
    ds: &InteractionDataset,
    depth: usize,
) -> Vec<usize> {
    let eu = emb.user(user);
    let mut scored: Vec<(f64, usize)> = (0..ds.num_items())
        .filter(|&v| !ds.is_train_positive(user, v))
        // `+ 0.0` folds -0.0 into 0.0 so equal scores tie by index
        .map(|v| (dot(eu, emb.item(v)) + 0.0, v))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let depth = depth.min(scored.len());
    if depth == 0 {
        return Vec::new();
    }
    if depth < scored.len() {
        scored.select_nth_unstable_by(depth - 1, order);
        scored.truncate(depth);
    }
    scored.sort_unstable_by(order);
    scored.into_iter().map(|(_, v)| v).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_stratum: Option<BTreeMap<Stratum, MetricReport>>,
    pub num_evaluated_users: usize,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> f64 {
        self.recall.get(&k).copied().unwrap_or(0.0)
    }

    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.ndcg.get(&k).copied().unwrap_or(0.0)
    }

    /// Long-format rows `metric,k,stratum,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,k,stratum,value\n");
        self.write_rows("all", &mut out);
        if let Some(strata) = &self.per_stratum {
            for (s, r) in strata {
                r.write_rows(s.as_str(), &mut out);
            }
        }
        out
    }

    fn write_rows(&self, stratum: &str, out: &mut String) {
        for (&k, v) in &self.recall {
            let _ = writeln!(out, "recall,{k},{stratum},{v}");
            let _ = writeln!(out, "ndcg,{k},{stratum},{}", self.ndcg_at(k));
        }
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv())?;
        std::fs::write(json_path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

struct Accumulator {
    recall: BTreeMap<usize, f64>,
    ndcg: BTreeMap<usize, f64>,
    users: usize,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            recall: BTreeMap::new(),
            ndcg: BTreeMap::new(),
            users: 0,
        }
    }

    fn add(&mut self, ranked: &[usize], test: &[usize], ks: &[usize]) {
        if test.is_empty() {
            return;
        }
        self.users += 1;
        for &k in ks {
            *self.recall.entry(k).or_default() += recall_at_k(ranked, test, k).unwrap_or(0.0);
            *self.ndcg.entry(k).or_default() += ndcg_at_k(ranked, test, k).unwrap_or(0.0);
        }
    }

    fn finish(self, ks: &[usize]) -> MetricReport {
        let n = self.users.max(1) as f64;
        let get = |m: &BTreeMap<usize, f64>, k| m.get(&k).copied().unwrap_or(0.0) / n;
        MetricReport {
            recall: ks.iter().map(|&k| (k, get(&self.recall, k))).collect(),
            ndcg: ks.iter().map(|&k| (k, get(&self.ndcg, k))).collect(),
            per_stratum: None,
            num_evaluated_users: self.users,
        }
    }
}

/// Full-ranking evaluation, macro-averaged over users with held-out items.
/// With strata, each sub-report keeps only the held-out items of that
/// stratum (users without any are skipped in that sub-report).
pub fn evaluate(
    emb: &EmbeddingTable,
    ds: &InteractionDataset,
    ks: &[usize],
    strata: Option<&PopularityStrata>,
) -> Result<MetricReport> {
    if emb.num_users() != ds.num_users() || emb.num_items() != ds.num_items() {
        return Err(Error::InvalidArgument(
            "embedding snapshot does not match the dataset".into(),
        ));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(
            "eval.ks must be a non-empty list of positive integers".into(),
        ));
    }
    let depth = ks.iter().copied().max().unwrap_or(0);
    let assignment = strata.map(|s| s.assignment(ds.num_items()));
    let mut all = Accumulator::new();
    let mut per: BTreeMap<Stratum, Accumulator> = BTreeMap::new();
    if strata.is_some() {
        for s in Stratum::ALL {
            per.insert(s, Accumulator::new());
        }
    }
    for u in 0..ds.num_users() {
        let test = ds.test_items(u);
        if test.is_empty() {
            continue;
        }
        let ranked = rank_items(u, emb, ds, depth);
        debug_assert!(ranked.iter().all(|&v| !ds.is_train_positive(u, v)));
        all.add(&ranked, test, ks);
        if let Some(assign) = &assignment {
            for (s, acc) in per.iter_mut() {
                let sub: Vec<usize> = test.iter().copied().filter(|&v| assign[v] == *s).collect();
                acc.add(&ranked, &sub, ks);
            }
        }
    }
    let mut report = all.finish(ks);
    if strata.is_some() {
        report.per_stratum = Some(per.into_iter().map(|(s, a)| (s, a.finish(ks))).collect());
    }
    Ok(report)
}

/// (flagged, considered) counts for [`fhns_probe`].
pub fn fhns_counts(drawn: &[Vec<f64>], test_vectors: &[Vec<f64>]) -> (usize, usize) {
    let mut flagged = 0;
    let mut considered = 0;
    for neg in drawn {
        if neg.iter().all(|&x| x == 0.0) {
            log::warn!("fhns probe: skipping a zero-norm negative");
            continue;
        }
        considered += 1;
        let hit = test_vectors
            .iter()
            .filter_map(|t| cosine(neg, t))
            .any(|c| c > FHNS_THRESHOLD);
        if hit {
            flagged += 1;
        }
    }
    (flagged, considered)
}

/// Fraction of drawn negatives whose cosine to some held-out item vector
/// exceeds [`FHNS_THRESHOLD`].
pub fn fhns_probe(drawn: &[Vec<f64>], test_vectors: &[Vec<f64>]) -> Result<f64> {
    if drawn.is_empty() {
        return Err(Error::Empty("no drawn negatives to probe".into()));
    }
    let (flagged, considered) = fhns_counts(drawn, test_vectors);
    if considered == 0 {
        return Err(Error::Degenerate(
            "every drawn negative has zero norm".into(),
        ));
    }
    Ok(flagged as f64 / considered as f64)
}

/// FHNS fraction over a user panel: each user's drawn negatives are checked
/// against that user's own test-item vectors.
pub fn fhns_panel(
    ds: &InteractionDataset,
    drawn: &[(usize, Vec<Vec<f64>>)],
    mut test_vector: impl FnMut(usize) -> Option<Vec<f64>>,
) -> Result<f64> {
    let (mut flagged, mut considered, mut total) = (0, 0, 0);
    for (user, negs) in drawn {
        let tests: Vec<Vec<f64>> = ds
            .test_items(*user)
            .iter()
            .filter_map(|&v| test_vector(v))
            .collect();
        let (f, c) = fhns_counts(negs, &tests);
        flagged += f;
        considered += c;
        total += negs.len();
    }
    if total == 0 {
        return Err(Error::Empty("no drawn negatives to probe".into()));
    }
    if considered == 0 {
        return Err(Error::Degenerate(
            "every drawn negative has zero norm".into(),
        ));
    }
    Ok(flagged as f64 / considered as f64)
}

/// `n` users with held-out items, chosen by seed, in ascending order.
pub fn probe_panel(ds: &InteractionDataset, n: usize, seed: u64) -> Vec<usize> {
    let mut users = ds.test_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    users.truncate(n);
    users.sort_unstable();
    users
}

/// Per-epoch false-hard-negative fractions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FhnsTrace {
    pub points: Vec<(usize, f64)>,
}

impl FhnsTrace {
    pub fn push(&mut self, epoch: usize, fraction: f64) {
        self.points.push((epoch, fraction));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,fraction\n");
        for (e, f) in &self.points {
            let _ = writeln!(out, "{e},{f}");
        }
        out
    }
}

/// Metrics as a function of the share of training pairs kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<(f64, MetricReport)>,
}

impl SweepTable {
    /// Wide format: `fraction,recall@K,ndcg@K,...`.
    pub fn to_csv(&self) -> String {
        let ks: Vec<usize> = self
            .rows
            .first()
            .map(|(_, r)| r.recall.keys().copied().collect())
            .unwrap_or_default();
        let mut out = String::from("fraction");
        for k in &ks {
            let _ = write!(out, ",recall@{k},ndcg@{k}");
        }
        out.push('\n');
        for (f, r) in &self.rows {
            let _ = write!(out, "{f}");
            for &k in &ks {
                let _ = write!(out, ",{},{}", r.recall_at(k), r.ndcg_at(k));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains and evaluates once per fraction. Every run sees the same held-out
/// split; the kept training pairs are drawn with `seed`.
pub fn sparsity_sweep(
    ds: &InteractionDataset,
    fractions: &[f64],
    seed: u64,
    mut run: impl FnMut(&InteractionDataset) -> Result<MetricReport>,
) -> Result<SweepTable> {
    if fractions.is_empty() {
        return Err(Error::Config("sweep needs at least one fraction".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!(
            "sweep fractions must lie in (0, 1], got {f}"
        )));
    }
    let mut table = SweepTable::default();
    for &f in fractions {
        let sub = ds.subsample_train(f, seed)?;
        table.rows.push((f, run(&sub)?));
    }
    Ok(table)
}

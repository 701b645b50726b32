//! ID-based negative samplers: uniform random (RNS), dynamic hardest-of-pool
//! (DNS), MixGCF positive/hop mixing, and adaptive score-proximity (AHNS).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::backbone::EmbeddingTable;
use crate::dataset::InteractionDataset;
use crate::error::{check_dims, Error, Result};
use crate::linalg::{axpy, dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Rns,
    Dns,
    MixGcf,
    Ahns,
    /// In-batch random negative mixed with a projected semantic negative.
    Semantic,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Rns => "rns",
            SamplerKind::Dns => "dns",
            SamplerKind::MixGcf => "mixgcf",
            SamplerKind::Ahns => "ahns",
            SamplerKind::Semantic => "semantic",
        }
    }

    pub fn default_pool(self) -> usize {
        match self {
            SamplerKind::MixGcf => 32,
            _ => 16,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rns" => Ok(SamplerKind::Rns),
            "dns" => Ok(SamplerKind::Dns),
            "mixgcf" => Ok(SamplerKind::MixGcf),
            "ahns" => Ok(SamplerKind::Ahns),
            "semantic" => Ok(SamplerKind::Semantic),
            other => Err(Error::Config(format!(
                "unknown sampler {other:?} (expected rns|dns|mixgcf|ahns|semantic)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Candidate pool size `K`.
    pub pool: usize,
    pub ahns_beta: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind) -> Self {
        Self {
            kind,
            pool: kind.default_pool(),
            ahns_beta: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool == 0 {
            return Err(Error::Config("sampler.pool must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ahns_beta) {
            return Err(Error::Config(format!(
                "sampler.ahns_beta must lie in [0, 1], got {}",
                self.ahns_beta
            )));
        }
        Ok(())
    }
}

/// Uniform draw over items the user has no train interaction with.
pub fn rns_sample<R: Rng + ?Sized>(
    user: usize,
    ds: &InteractionDataset,
    rng: &mut R,
) -> Result<usize> {
    let positives = ds.train_items(user);
    let available = ds.num_items() - positives.len();
    if available == 0 {
        return Err(Error::Degenerate(format!(
            "user {user} interacted with every item"
        )));
    }
    // map the r-th free slot onto the r-th non-positive item
    let mut item = rng.random_range(0..available);
    for &p in positives {
        if p <= item {
            item += 1;
        } else {
            break;
        }
    }
    Ok(item)
}

/// `k` distinct non-interacted items (all of them when fewer exist), drawn
/// uniformly without replacement.
pub fn draw_candidates<R: Rng + ?Sized>(
    user: usize,
    ds: &InteractionDataset,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let available = ds.num_items() - ds.train_items(user).len();
    if available == 0 {
        return Err(Error::Degenerate(format!(
            "user {user} interacted with every item"
        )));
    }
    let k = k.min(available);
    let mut out = Vec::with_capacity(k);
    if k * 4 >= available {
        let mut free: Vec<usize> = (0..ds.num_items())
            .filter(|&v| !ds.is_train_positive(user, v))
            .collect();
        for i in 0..k {
            let j = rng.random_range(i..free.len());
            free.swap(i, j);
            out.push(free[i]);
        }
    } else {
        while out.len() < k {
            let v = rns_sample(user, ds, rng)?;
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn ensure_candidates(candidates: &[usize]) -> Result<()> {
    if candidates.is_empty() {
        Err(Error::Empty("candidate pool".into()))
    } else {
        Ok(())
    }
}

/// Selects the candidate minimizing `key`; equal keys resolve to the lowest
/// item index.
fn select_min(candidates: &[usize], mut key: impl FnMut(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_key = key(best);
    for &c in &candidates[1..] {
        let k = key(c);
        if k < best_key || (k == best_key && c < best) {
            best = c;
            best_key = k;
        }
    }
    best
}

/// Highest-scoring candidate for the user.
pub fn dns_select(user: usize, candidates: &[usize], emb: &EmbeddingTable) -> Result<usize> {
    ensure_candidates(candidates)?;
    let eu = emb.user(user);
    Ok(select_min(candidates, |v| -dot(eu, emb.item(v))))
}

/// Candidate whose score is closest to `beta` times the positive score.
pub fn ahns_select(
    user: usize,
    v_pos: usize,
    candidates: &[usize],
    emb: &EmbeddingTable,
    beta: f64,
) -> Result<usize> {
    ensure_candidates(candidates)?;
    let eu = emb.user(user);
    let target = beta * dot(eu, emb.item(v_pos));
    Ok(select_min(candidates, |v| {
        (dot(eu, emb.item(v)) - target).abs()
    }))
}

/// Output of [`mixgcf_synthesize`], with the choices needed to route
/// gradients back to the mixed embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct MixgcfSample {
    pub vector: Vec<f64>,
    /// Chosen candidate per layer.
    pub selected: Vec<usize>,
    /// Mixing weight of the positive for the chosen candidate, per layer.
    pub betas: Vec<f64>,
}

/// MixGCF synthesis over per-layer node embeddings (`layers[l]` is
/// `Â^l E_0`, users first then items).
///
/// Positive mixing draws one `β ~ beta()` per layer, shared by that layer's
/// candidates; hop mixing keeps, per layer, the mixed candidate with
/// the largest inner product with the user's layer embedding. The result is
/// the layer-mean of the kept vectors.
pub fn mixgcf_synthesize(
    user: usize,
    v_pos: usize,
    candidates: &[usize],
    layers: &[Matrix],
    num_users: usize,
    mut beta: impl FnMut() -> f64,
) -> Result<MixgcfSample> {
    ensure_candidates(candidates)?;
    let first = layers
        .first()
        .ok_or_else(|| Error::Empty("layers".into()))?;
    let d = first.cols();
    let mut vector = vec![0.0; d];
    let mut selected = Vec::with_capacity(layers.len());
    let mut betas = Vec::with_capacity(layers.len());
    let mut mixed = vec![0.0; d];
    for layer in layers {
        check_dims(d, layer.cols())?;
        let eu = layer.row(user);
        let epos = layer.row(num_users + v_pos);
        let mut best: Option<(f64, usize, f64, Vec<f64>)> = None;
        let b = beta();
        for &c in candidates {
            let eneg = layer.row(num_users + c);
            for ((m, p), n) in mixed.iter_mut().zip(epos).zip(eneg) {
                *m = b * p + (1.0 - b) * n;
            }
            let s = dot(eu, &mixed);
            let better = match &best {
                None => true,
                Some((bs, bc, _, _)) => s > *bs || (s == *bs && c < *bc),
            };
            if better {
                best = Some((s, c, b, mixed.clone()));
            }
        }
        let (_, c, b, v) = best.expect("non-empty candidates");
        axpy(1.0, &v, &mut vector);
        selected.push(c);
        betas.push(b);
    }
    let inv = 1.0 / layers.len() as f64;
    vector.iter_mut().for_each(|x| *x *= inv);
    Ok(MixgcfSample {
        vector,
        selected,
        betas,
    })
}

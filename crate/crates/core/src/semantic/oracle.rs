//! A provider that knows the planted ground truth.
//!
//! Item texts embed to a fixed linear lift of the true item factors plus a
//! little noise. Hard-negative prompts embed to the positive item's true
//! factor with the component along the user's true preference removed (or
//! reflected), so the result looks like the positive in every direction the
//! user does not care about. A configurable share of pairs instead receives
//! the exact vector of one of the user's held-out items, which is what the
//! false-hard-negative probe is meant to detect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use super::prompt::{PromptBundle, PromptKind};
use super::provider::{check_text, hashed_unit_vector, sha256, Provider};
use crate::dataset::synthetic::PlantedWorld;
use crate::dataset::{IdMap, InteractionDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

const ITEM_PREFIX: &str = "planted item ";
const USER_PREFIX: &str = "planted user ";

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    /// Provider-space dimension.
    pub dim: usize,
    /// Factor-space noise added to each negative.
    pub negative_noise: f64,
    /// Provider-space noise added to anchors and negatives.
    pub embedding_noise: f64,
    /// 1 removes the user-relevant component of the positive, 2 reflects it.
    pub reflection: f64,
    /// Share of pairs answered with an exact held-out item vector.
    pub exact_test_rate: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            negative_noise: 0.3,
            embedding_noise: 0.05,
            reflection: 1.0,
            exact_test_rate: 0.0,
            seed: 0,
        }
    }
}

pub struct PlantedOracle {
    cfg: OracleConfig,
    users: IdMap,
    items: IdMap,
    user_factors: Matrix,
    item_factors: Matrix,
    lift: Matrix,
    test_items: Vec<Vec<usize>>,
}

impl PlantedOracle {
    /// `split` supplies the held-out items used for exact answers; it must
    /// share the world's id space.
    pub fn new(
        world: &PlantedWorld,
        split: &InteractionDataset,
        cfg: OracleConfig,
    ) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::InvalidArgument("oracle dim must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&cfg.exact_test_rate) {
            return Err(Error::InvalidArgument(
                "exact_test_rate must lie in [0, 1]".into(),
            ));
        }
        if split.num_users() != world.dataset.num_users()
            || split.num_items() != world.dataset.num_items()
        {
            return Err(Error::InvalidArgument(
                "split does not match the planted world".into(),
            ));
        }
        let rank = world.rank();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6f72_6163_6c65);
        let s = 1.0 / (rank as f64).sqrt();
        let lift = Matrix::from_fn(cfg.dim, rank, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        });
        Ok(Self {
            users: split.users().clone(),
            items: split.items().clone(),
            user_factors: world.user_factors.clone(),
            item_factors: world.item_factors.clone(),
            lift,
            test_items: (0..split.num_users())
                .map(|u| split.test_items(u).to_vec())
                .collect(),
            cfg,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    fn noise_rng(&self, tag: &[u8], a: usize, b: usize) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(sha256(&[
            tag,
            &self.cfg.seed.to_le_bytes(),
            &(a as u64).to_le_bytes(),
            &(b as u64).to_le_bytes(),
        ]))
    }

    fn lifted(&self, factor: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = self.lift.mul_vec(factor).expect("lift shape");
        for x in &mut out {
            let z: f64 = StandardNormal.sample(rng);
            *x += self.cfg.embedding_noise * z;
        }
        // roughly unit norm, like hosted text embeddings
        let s = 1.0 / (self.cfg.dim as f64).sqrt();
        out.iter_mut().for_each(|x| *x *= s);
        out
    }

    /// Provider-space vector of an item's profile.
    pub fn anchor(&self, item: usize) -> Vec<f64> {
        let mut rng = self.noise_rng(b"anchor", item, 0);
        self.lifted(self.item_factors.row(item), &mut rng)
    }

    /// Whether the pair is answered with an exact held-out item vector.
    pub fn is_exact(&self, user: usize, item: usize) -> bool {
        if self.test_items[user].is_empty() || self.cfg.exact_test_rate == 0.0 {
            return false;
        }
        let mut rng = self.noise_rng(b"exact", user, item);
        rng.random::<f64>() < self.cfg.exact_test_rate
    }

    /// Provider-space hard negative for a training pair.
    pub fn negative(&self, user: usize, item: usize) -> Vec<f64> {
        if self.is_exact(user, item) {
            let tests = &self.test_items[user];
            let mut rng = self.noise_rng(b"exact-pick", user, item);
            return self.anchor(tests[rng.random_range(0..tests.len())]);
        }
        let p = self.user_factors.row(user);
        let q = self.item_factors.row(item);
        let pn = norm(p);
        let along = if pn > 0.0 { dot(q, p) / (pn * pn) } else { 0.0 };
        let mut rng = self.noise_rng(b"negative", user, item);
        let h: Vec<f64> = q
            .iter()
            .zip(p)
            .map(|(&qi, &pi)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                qi - self.cfg.reflection * along * pi + self.cfg.negative_noise * z
            })
            .collect();
        self.lifted(&h, &mut rng)
    }

    fn user_index(&self, raw: &str) -> Result<usize> {
        self.users
            .get(raw)
            .ok_or_else(|| Error::InvalidArgument(format!("oracle: unknown user {raw:?}")))
    }

    fn item_index(&self, raw: &str) -> Result<usize> {
        self.items
            .get(raw)
            .ok_or_else(|| Error::InvalidArgument(format!("oracle: unknown item {raw:?}")))
    }

    /// Recovers the (user, item) pair from a hard-negative or hybrid payload.
    fn pair_of(&self, prompt: &PromptBundle) -> Result<(usize, usize)> {
        let v = prompt.payload_json()?;
        let field = |ptr: &str| v.pointer(ptr).and_then(Value::as_str).map(str::to_string);
        let (u, i) = match (field("/pair/user"), field("/pair/item")) {
            (Some(u), Some(i)) => (u, i),
            _ => {
                let u = field("/user_profile")
                    .and_then(|t| t.strip_prefix(USER_PREFIX).map(str::to_string));
                let i = field("/item_profile")
                    .and_then(|t| t.strip_prefix(ITEM_PREFIX).map(str::to_string));
                match (u, i) {
                    (Some(u), Some(i)) => (u, i),
                    _ => {
                        return Err(Error::InvalidArgument(
                            "oracle: cannot identify the pair".into(),
                        ))
                    }
                }
            }
        };
        Ok((self.user_index(&u)?, self.item_index(&i)?))
    }
}

impl Provider for PlantedOracle {
    fn name(&self) -> String {
        format!("planted-oracle:seed={}:dim={}", self.cfg.seed, self.cfg.dim)
    }

    fn generate(&self, prompt: &PromptBundle, _sample: u32) -> Result<String> {
        let text = match prompt.kind {
            PromptKind::ItemProfile => {
                let v = prompt.payload_json()?;
                let title = v.get("title").and_then(Value::as_str).unwrap_or("None");
                json!({"summarization": format!("{ITEM_PREFIX}{title}"), "reasoning": "planted"})
            }
            PromptKind::UserProfile => {
                let v = prompt.payload_json()?;
                let id = v
                    .pointer("/reviews/0")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown")
                    .to_string();
                json!({"summarization": format!("{USER_PREFIX}{id}"), "reasoning": "planted"})
            }
            PromptKind::HardNegative | PromptKind::Hybrid => {
                let (u, v) = self.pair_of(prompt)?;
                json!({
                    "hard negative item": format!("planted negative for {}/{}", self.users.raw(u), self.items.raw(v)),
                    "reasoning": "planted",
                })
            }
        };
        Ok(text.to_string())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        check_text(text)?;
        if let Some(v) = text
            .strip_prefix(ITEM_PREFIX)
            .and_then(|raw| self.items.get(raw))
        {
            return Ok(self.anchor(v));
        }
        Ok(hashed_unit_vector(
            &[
                b"oracle-embed",
                &self.cfg.seed.to_le_bytes(),
                text.as_bytes(),
            ],
            self.cfg.dim,
        ))
    }

    fn embed_prompt(&self, prompt: &PromptBundle) -> Result<Option<Vec<f64>>> {
        match prompt.kind {
            PromptKind::HardNegative | PromptKind::Hybrid => {
                let (u, v) = self.pair_of(prompt)?;
                Ok(Some(self.negative(u, v)))
            }
            _ => Ok(None),
        }
    }
}

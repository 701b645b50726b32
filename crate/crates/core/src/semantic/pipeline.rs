//! Batch drivers: profile generation, semantic negative sampling and item
//! anchor embedding, with a bounded number of provider calls in flight.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::pool_negatives;
use super::prompt::{
    build_hard_negative_prompt, build_hybrid_prompt, build_item_prompt, build_user_prompt,
    parse_hard_negative_response, profile_text, PromptBundle,
};
use super::provider::Provider;
use super::records::SemanticNegativeRecord;
use crate::backbone::EmbeddingTable;
use crate::dataset::{InteractionDataset, Profile, ProfileKind, ProfileStore};
use crate::error::{Error, Result};

/// Optional side information for an item or user profile prompt.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, alias = "attributes")]
    pub description: Option<String>,
    #[serde(default)]
    pub reviews: Vec<String>,
}

#[derive(Deserialize)]
struct MetaLine {
    #[serde(default)]
    item: Option<String>,
    #[serde(default)]
    user: Option<String>,
    #[serde(flatten)]
    meta: ItemMeta,
}

/// Side information as JSON Lines, one object per line carrying either an
/// `"item"` or a `"user"` raw id next to the [`ItemMeta`] fields. Ids not in
/// the dataset are skipped with a warning.
pub fn read_meta(
    path: &Path,
    ds: &InteractionDataset,
) -> Result<(HashMap<usize, ItemMeta>, HashMap<usize, ItemMeta>)> {
    let file = File::open(path).map_err(|_| Error::MissingFile(path.display().to_string()))?;
    let (mut items, mut users) = (HashMap::new(), HashMap::new());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            source_name: path.display().to_string(),
            line: i as u64 + 1,
            msg,
        };
        let m: MetaLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        match (m.item, m.user) {
            (Some(id), None) => match ds.items().get(&id) {
                Some(v) => drop(items.insert(v, m.meta)),
                None => log::warn!("{}:{}: unknown item {id:?}", path.display(), i + 1),
            },
            (None, Some(id)) => match ds.users().get(&id) {
                Some(u) => drop(users.insert(u, m.meta)),
                None => log::warn!("{}:{}: unknown user {id:?}", path.display(), i + 1),
            },
            _ => return Err(bad("expected exactly one of \"item\" or \"user\"".into())),
        }
    }
    Ok((items, users))
}

/// Runs `f` over `inputs` on at most `max_inflight` threads and returns the
/// results in input order. The first error wins.
pub(crate) fn bounded_map<T: Sync, R: Send>(
    inputs: &[T],
    max_inflight: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let workers = max_inflight.max(1).min(inputs.len().max(1));
    if workers == 1 {
        return inputs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> =
        Mutex::new((0..inputs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                let r = f(&inputs[i]);
                let failed = r.is_err();
                slots.lock().expect("result slots poisoned")[i] = Some(r);
                if failed {
                    next.store(inputs.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let slots = slots.into_inner().expect("result slots poisoned");
    let mut out = Vec::with_capacity(inputs.len());
    for slot in slots {
        match slot {
            Some(Ok(r)) => out.push(r),
            Some(Err(e)) => return Err(e),
            // Skipped after another input failed.
            None => {}
        }
    }
    if out.len() != inputs.len() {
        return Err(Error::Provider("batch aborted".into()));
    }
    Ok(out)
}

/// Counts from one profile generation run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProfileRun {
    pub generated_items: usize,
    pub generated_users: usize,
    pub skipped: usize,
}

/// Most item profiles folded into a single user prompt.
const MAX_ITEMS_PER_USER_PROMPT: usize = 10;

/// Generates every profile missing from `existing`. Item profiles come
/// first because user prompts include the profiles of interacted items.
/// Returns only the newly generated profiles.
pub fn generate_profiles(
    provider: &dyn Provider,
    ds: &InteractionDataset,
    item_meta: &HashMap<usize, ItemMeta>,
    user_meta: &HashMap<usize, ItemMeta>,
    existing: &ProfileStore,
    max_inflight: usize,
) -> Result<(Vec<Profile>, ProfileRun)> {
    let mut run = ProfileRun::default();
    let missing_items: Vec<usize> = (0..ds.num_items())
        .filter(|v| existing.item(*v).is_none())
        .collect();
    run.skipped += ds.num_items() - missing_items.len();
    let new_items = bounded_map(&missing_items, max_inflight, |&v| {
        let raw = ds.items().raw(v);
        let meta = item_meta.get(&v);
        let title = meta.and_then(|m| m.title.as_deref()).unwrap_or(raw);
        let prompt = build_item_prompt(
            Some(title),
            meta.and_then(|m| m.description.as_deref()),
            meta.map(|m| m.reviews.as_slice()).unwrap_or(&[]),
        );
        let text = profile_text(&provider.generate(&prompt, 0)?);
        Ok(Profile::new(ProfileKind::Item, raw, text))
    })?;
    run.generated_items = new_items.len();

    let mut item_profiles: BTreeMap<usize, &Profile> = existing
        .item_profiles
        .iter()
        .map(|(&v, p)| (v, p))
        .collect();
    for (v, p) in missing_items.iter().zip(&new_items) {
        item_profiles.insert(*v, p);
    }

    let missing_users: Vec<usize> = (0..ds.num_users())
        .filter(|u| existing.user(*u).is_none())
        .collect();
    run.skipped += ds.num_users() - missing_users.len();
    let new_users = bounded_map(&missing_users, max_inflight, |&u| {
        let raw = ds.users().raw(u);
        let profiles: Vec<&Profile> = ds
            .train_items(u)
            .iter()
            .take(MAX_ITEMS_PER_USER_PROMPT)
            .filter_map(|v| item_profiles.get(v).copied())
            .collect();
        let reviews = user_meta
            .get(&u)
            .map(|m| m.reviews.clone())
            .unwrap_or_default();
        let prompt = build_user_prompt(&reviews, &profiles);
        let text = profile_text(&provider.generate(&prompt, 0)?);
        Ok(Profile::new(ProfileKind::User, raw, text))
    })?;
    run.generated_users = new_users.len();

    let mut out = new_items;
    out.extend(new_users);
    Ok((out, run))
}

/// Options for [`sample_semantic_negatives`].
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSampling {
    /// Negatives requested per pair; more than one are mean-pooled.
    pub negatives: usize,
    /// Instruction for hybrid prompts; `None` uses the plain hard-negative
    /// prompt.
    pub hybrid_instruction: Option<String>,
    pub max_inflight: usize,
}

impl Default for NegativeSampling {
    fn default() -> Self {
        Self {
            negatives: 1,
            hybrid_instruction: None,
            max_inflight: 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SamplingSummary {
    pub pairs: usize,
    /// Records with a usable vector.
    pub with_vector: usize,
    /// Individual responses that answered "None".
    pub none_responses: usize,
    /// Records left without any vector.
    pub declined: usize,
}

fn pair_prompt(
    ds: &InteractionDataset,
    profiles: &ProfileStore,
    opts: &NegativeSampling,
    snapshot: Option<&EmbeddingTable>,
    (u, v): (usize, usize),
) -> Result<PromptBundle> {
    match &opts.hybrid_instruction {
        None => build_hard_negative_prompt(
            (ds.users().raw(u), ds.items().raw(v)),
            profiles.user(u),
            profiles.item(v),
        ),
        Some(instruction) => {
            let emb = snapshot.ok_or_else(|| {
                Error::Config("hybrid prompts need a pre-trained embedding snapshot".into())
            })?;
            let pu = profiles.user(u).ok_or_else(|| {
                Error::InvalidArgument(format!("missing profile for user {:?}", ds.users().raw(u)))
            })?;
            let pv = profiles.item(v).ok_or_else(|| {
                Error::InvalidArgument(format!("missing profile for item {:?}", ds.items().raw(v)))
            })?;
            Ok(build_hybrid_prompt(
                instruction,
                emb.user(u),
                pu,
                emb.item(v),
                pv,
            ))
        }
    }
}

/// Asks the provider for hard negatives for every training pair, in
/// ascending (user, item) order.
pub fn sample_semantic_negatives(
    provider: &dyn Provider,
    ds: &InteractionDataset,
    profiles: &ProfileStore,
    opts: &NegativeSampling,
    snapshot: Option<&EmbeddingTable>,
) -> Result<(Vec<SemanticNegativeRecord>, SamplingSummary)> {
    if opts.negatives == 0 {
        return Err(Error::Config("negatives per pair must be >= 1".into()));
    }
    if let Some(emb) = snapshot {
        if emb.num_users() != ds.num_users() || emb.num_items() != ds.num_items() {
            return Err(Error::InvalidArgument(
                "embedding snapshot does not match the dataset".into(),
            ));
        }
    }
    let pairs = ds.train();
    let results = bounded_map(pairs, opts.max_inflight, |&pair| {
        let prompt = pair_prompt(ds, profiles, opts, snapshot, pair)?;
        let mut texts = Vec::new();
        let mut reasons = Vec::new();
        let mut vectors = Vec::new();
        let mut nones = 0;
        for s in 0..opts.negatives as u32 {
            let raw = provider.generate(&prompt, s)?;
            let parsed = parse_hard_negative_response(&raw)?;
            reasons.push(parsed.reasoning);
            match parsed.item {
                None => nones += 1,
                Some(text) => {
                    let direct = if s == 0 {
                        provider.embed_prompt(&prompt)?
                    } else {
                        None
                    };
                    let vector = match direct {
                        Some(v) => v,
                        None => provider.embed(&text)?,
                    };
                    texts.push(text);
                    vectors.push(vector);
                }
            }
        }
        let raw_vector = if vectors.is_empty() {
            None
        } else {
            Some(pool_negatives(&vectors)?)
        };
        let record = SemanticNegativeRecord {
            user: pair.0,
            item: pair.1,
            negative_text: (!texts.is_empty()).then(|| texts.join("\n")),
            reasoning: reasons.join("\n"),
            raw_vector,
            projected: None,
        };
        Ok((record, nones))
    })?;
    let mut summary = SamplingSummary {
        pairs: pairs.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(results.len());
    for (r, nones) in results {
        summary.none_responses += nones;
        if r.raw_vector.is_some() {
            summary.with_vector += 1;
        } else {
            summary.declined += 1;
        }
        records.push(r);
    }
    Ok((records, summary))
}

/// Provider-space embedding of every item profile.
pub fn embed_item_anchors(
    provider: &dyn Provider,
    profiles: &ProfileStore,
    max_inflight: usize,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let items: Vec<(usize, &Profile)> = profiles
        .item_profiles
        .iter()
        .map(|(&v, p)| (v, p))
        .collect();
    let vectors = bounded_map(&items, max_inflight, |(_, p)| provider.embed(&p.text))?;
    Ok(items.iter().map(|(v, _)| *v).zip(vectors).collect())
}

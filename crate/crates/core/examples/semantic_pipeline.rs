//! Profiles, hard negatives and semantic training with the offline mock
//! provider, on a small random interaction log.

use std::collections::HashMap;

use negrec::dataset::{InteractionDataset, ProfileStore};
use negrec::eval::evaluate;
use negrec::objective::{LossWeights, TrainConfig, Trainer};
use negrec::sampling::{SamplerConfig, SamplerKind};
use negrec::semantic::{
    embed_item_anchors, generate_profiles, sample_semantic_negatives, CachedProvider, MockProvider,
    NegativeSampling, SemanticStore,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> negrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(usize, usize)> = (0..40)
        .flat_map(|u| (0..8).map(move |_| u))
        .map(|u| (u, rng.random_range(0..60)))
        .collect();
    let ds = InteractionDataset::from_pairs(40, 60, pairs)?.split(0.2, 1)?;

    let provider = CachedProvider::in_memory(MockProvider::new(7, 32).with_none_rate(0.1));
    let (new, run) = generate_profiles(
        &provider,
        &ds,
        &HashMap::new(),
        &HashMap::new(),
        &ProfileStore::default(),
        4,
    )?;
    println!(
        "profiles: {} items, {} users",
        run.generated_items, run.generated_users
    );
    let mut profiles = ProfileStore::default();
    for p in new {
        profiles.insert(&ds, p)?;
    }
    if let Some(p) = profiles.user(0) {
        println!("user 0: {}", p.text);
    }

    let opts = NegativeSampling {
        negatives: 2,
        ..NegativeSampling::default()
    };
    let (records, summary) = sample_semantic_negatives(&provider, &ds, &profiles, &opts, None)?;
    println!(
        "{} pairs, {} with a vector, {} \"None\" responses, {} fall back to uniform",
        summary.pairs, summary.with_vector, summary.none_responses, summary.declined
    );
    if let Some(r) = records.iter().find(|r| r.negative_text.is_some()) {
        println!(
            "({}, {}) -> {:?}",
            r.user,
            r.item,
            r.negative_text.as_deref().unwrap_or("")
        );
    }

    let anchors = embed_item_anchors(&provider, &profiles, 4)?;
    let store = SemanticStore::from_records(&records)?.with_anchors(anchors)?;
    let cfg = TrainConfig {
        dim: 16,
        hidden: 32,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let trainer = Trainer::new(
        &ds,
        cfg,
        SamplerConfig::new(SamplerKind::Semantic),
        LossWeights {
            lambda_sft: 1.0,
            ..LossWeights::default()
        },
        Some(&store),
    )?;
    let mut state = trainer.init_state()?;
    for r in trainer.fit(&mut state, 5, |_, _| Ok(()))? {
        println!(
            "epoch {} bpr {:.4} align {:.4} sft {:.4}",
            r.epoch, r.loss_bpr, r.loss_align, r.loss_sft
        );
    }
    let m = evaluate(&trainer.snapshot(&state)?, &ds, &[10, 20], None)?;
    println!(
        "recall@20 {:.4}, provider cache {} hits / {} misses",
        m.recall_at(20),
        provider.hits(),
        provider.misses()
    );
    Ok(())
}

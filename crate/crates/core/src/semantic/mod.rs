//! The language-model-facing half of the pipeline: prompts, providers,
//! caching, semantic negative records, projection and mixing.

mod cache;
pub mod oracle;
mod pipeline;
mod projection;
mod prompt;
mod provider;
mod records;

pub use cache::{CachedProvider, CompletionCache, EmbeddingCache};
pub use pipeline::{
    embed_item_anchors, generate_profiles, read_meta, sample_semantic_negatives, ItemMeta,
    NegativeSampling, ProfileRun, SamplingSummary,
};
pub use projection::{project, ProjectionGrad, ProjectionHead};
pub use prompt::{
    build_hard_negative_prompt, build_hybrid_prompt, build_item_prompt, build_user_prompt,
    parse_hard_negative_response, serialize_embedding, HardNegativeResponse, PromptBundle,
    PromptKind, HARD_NEGATIVE_SYSTEM, ITEM_PROFILE_SYSTEM, USER_PROFILE_SYSTEM,
};
pub use provider::{
    build_provider, HttpProvider, MockProvider, Provider, ProviderKind, ProviderSettings,
    RetryPolicy,
};
pub use records::{
    read_anchors, read_records, write_anchors, write_records, SemanticNegativeRecord, SemanticStore,
};

use crate::error::{check_dims, Error, Result};

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Element-wise mean of several negative embeddings.
pub fn pool_negatives(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Empty("no negative vectors to pool".into()))?;
    if vectors.len() == 1 {
        return Ok(first.clone());
    }
    let mut out = vec![0.0; first.len()];
    for v in vectors {
        check_dims(first.len(), v.len())?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

/// `(1 - alpha) · e_rand + alpha · e_hard`.
pub fn mix(e_rand: &[f64], e_hard: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dims(e_rand.len(), e_hard.len())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(e_rand
        .iter()
        .zip(e_hard)
        .map(|(r, h)| (1.0 - alpha) * r + alpha * h)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_examples() {
        assert_eq!(pool_negatives(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            pool_negatives(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.5, 0.5]
        );
        let v = vec![0.3, -0.7, 2.5];
        let pooled = pool_negatives(&vec![v.clone(); 5]).unwrap();
        for (a, b) in pooled.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(pool_negatives(&[]).is_err());
        assert!(pool_negatives(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mixing_examples() {
        let r = [0.0, 2.0];
        let h = [2.0, 0.0];
        assert_eq!(mix(&r, &h, 0.0).unwrap(), r.to_vec());
        assert_eq!(mix(&r, &h, 1.0).unwrap(), h.to_vec());
        assert_eq!(mix(&r, &h, 0.5).unwrap(), vec![1.0, 1.0]);
        assert!(mix(&r, &h, 1.5).is_err());
        assert!(mix(&r, &h, -0.1).is_err());
    }
}

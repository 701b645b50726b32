//! End-to-end runs on planted data: generate a world, split it, ask the
//! oracle provider for profiles and hard negatives through the regular
//! semantic pipeline, then train and evaluate any sampler.

use std::collections::HashMap;

use crate::dataset::synthetic::{PlantedConfig, PlantedWorld};
use crate::dataset::{InteractionDataset, ProfileStore};
use crate::error::Result;
use crate::eval::{evaluate, MetricReport};
use crate::objective::{EpochReport, LossWeights, TrainConfig, TrainState, Trainer};
use crate::sampling::{SamplerConfig, SamplerKind};
use crate::semantic::oracle::{OracleConfig, PlantedOracle};
use crate::semantic::{
    embed_item_anchors, generate_profiles, sample_semantic_negatives, NegativeSampling,
    SemanticNegativeRecord, SemanticStore,
};

/// Everything derived from one planted seed.
pub struct PlantedSetup {
    pub world: PlantedWorld,
    pub split: InteractionDataset,
    pub oracle: PlantedOracle,
    pub profiles: ProfileStore,
    pub records: Vec<SemanticNegativeRecord>,
    pub store: SemanticStore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedExperiment {
    pub world: PlantedConfig,
    pub test_fraction: f64,
    pub oracle: OracleConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub epochs: usize,
    pub ks: Vec<usize>,
}

impl Default for PlantedExperiment {
    fn default() -> Self {
        Self {
            world: PlantedConfig {
                temperature: 0.25,
                ..PlantedConfig::default()
            },
            test_fraction: 0.2,
            oracle: OracleConfig::default(),
            train: TrainConfig {
                dim: 16,
                layers: 2,
                learning_rate: 2.0,
                batch_size: 64,
                hidden: 64,
                head_lr_scale: 0.1,
                ..TrainConfig::default()
            },
            loss: LossWeights {
                lambda_sft: 1.0,
                ..LossWeights::default()
            },
            epochs: 250,
            ks: vec![10, 20],
        }
    }
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: TrainState,
    pub reports: Vec<EpochReport>,
    /// Recall at the largest K after every epoch.
    pub recall_curve: Vec<f64>,
    pub metrics: MetricReport,
}

impl RunOutcome {
    pub fn recall(&self, k: usize) -> f64 {
        self.metrics.recall_at(k)
    }
}

/// First epoch (1-based) whose value reaches `share` of the last value.
pub fn epochs_to_reach(curve: &[f64], share: f64) -> Option<usize> {
    let last = *curve.last()?;
    curve.iter().position(|&r| r >= share * last).map(|i| i + 1)
}

impl PlantedExperiment {
    /// Builds the world for `seed` and runs the semantic pipeline against the
    /// oracle provider.
    pub fn setup(&self, seed: u64) -> Result<PlantedSetup> {
        let world = PlantedWorld::generate(&PlantedConfig {
            seed,
            ..self.world.clone()
        })?;
        let split = world.dataset.split(self.test_fraction, seed ^ 0x5eed)?;
        let oracle = PlantedOracle::new(
            &world,
            &split,
            OracleConfig {
                seed,
                ..self.oracle.clone()
            },
        )?;
        let (new, _) = generate_profiles(
            &oracle,
            &split,
            &HashMap::new(),
            &HashMap::new(),
            &ProfileStore::default(),
            1,
        )?;
        let mut profiles = ProfileStore::default();
        for p in new {
            profiles.insert(&split, p)?;
        }
        let opts = NegativeSampling {
            max_inflight: 1,
            ..NegativeSampling::default()
        };
        let (records, _) = sample_semantic_negatives(&oracle, &split, &profiles, &opts, None)?;
        let anchors = embed_item_anchors(&oracle, &profiles, 1)?;
        let store = SemanticStore::from_records(&records)?.with_anchors(anchors)?;
        Ok(PlantedSetup {
            world,
            split,
            oracle,
            profiles,
            records,
            store,
        })
    }

    pub fn sampler(&self, kind: SamplerKind, seed: u64) -> SamplerConfig {
        SamplerConfig {
            seed,
            ..SamplerConfig::new(kind)
        }
    }

    /// Trains one sampler with the given weights and evaluates after every
    /// epoch.
    pub fn run_with(
        &self,
        setup: &PlantedSetup,
        kind: SamplerKind,
        loss: &LossWeights,
        seed: u64,
    ) -> Result<RunOutcome> {
        let train = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let semantic = (kind == SamplerKind::Semantic).then_some(&setup.store);
        let trainer = Trainer::new(
            &setup.split,
            train,
            self.sampler(kind, seed),
            loss.clone(),
            semantic,
        )?;
        let mut state = trainer.init_state()?;
        let k = self.ks.iter().copied().max().unwrap_or(20);
        let mut curve = Vec::with_capacity(self.epochs);
        let reports = trainer.fit(&mut state, self.epochs, |s, _| {
            let m = evaluate(&trainer.snapshot(s)?, &setup.split, &[k], None)?;
            curve.push(m.recall_at(k));
            Ok(())
        })?;
        let metrics = evaluate(&trainer.snapshot(&state)?, &setup.split, &self.ks, None)?;
        Ok(RunOutcome {
            state,
            reports,
            recall_curve: curve,
            metrics,
        })
    }

    pub fn run(&self, setup: &PlantedSetup, kind: SamplerKind, seed: u64) -> Result<RunOutcome> {
        self.run_with(setup, kind, &self.loss, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_to_reach_basics() {
        assert_eq!(epochs_to_reach(&[0.1, 0.5, 0.95, 1.0], 0.9), Some(3));
        assert_eq!(epochs_to_reach(&[], 0.9), None);
        assert_eq!(epochs_to_reach(&[0.0, 0.0], 0.9), Some(1));
    }
}

//! Losses with analytic gradients and the SGD trainer.

mod loss;
mod trainer;

pub use loss::{
    bpr_gradients, bpr_loss, infonce_align, infonce_align_grad, sft_infonce, sft_infonce_grad,
    sigmoid, softplus, total_loss, AlignGrad, BatchTerms, LossWeights,
};
pub use trainer::{append_run_log, EpochReport, TrainConfig, TrainState, Trainer, RUN_LOG_HEADER};

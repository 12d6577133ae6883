//! Classification head, optimizer, masked-autoencoder pretraining, tuning,
//! evaluation and few-shot episodes.

mod eval;
mod fewshot;
mod head;
mod mae;
mod optim;
mod tune;

pub use eval::{argmax, evaluate, predict_logits, prefix_cache, EvalReport, Labeled, PrefixCache};
pub use fewshot::{few_shot_run, FewShotConfig, FewShotReport};
pub use head::{Head, HeadConfig};
pub use mae::{chamfer_loss, mae_loss, mask_indices, pretrain_mae, MaeConfig, MaeHead, MaeReport};
pub use optim::{AdamWConfig, CosineSchedule, OptimState};
pub use tune::{tune, EpochMetrics, RunMetrics, TuneConfig};

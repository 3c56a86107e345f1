//! Least-squares adversarial training with a spectral regularizer and TTUR
//! Adam, plus the regression-only baseline.

mod adam;
mod batch;
mod losses;
mod run;
mod step;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::{make_batch, BatchTriplet, ChunkPool, ShuffleMode};
pub use losses::{d_loss, d_loss_terms, g_adv_loss, g_total_loss, spectral_reg_loss, DLossTerms, SpectralLoss};
pub use run::{
    checkpoint_records, load_discriminator, load_generator, save_checkpoint, train, train_regression, MetricsLog, RunDir,
    TrainMode, METRICS_HEADER,
};
pub use step::{regression_step, train_step, LossReport, TrainState, TrainingConfig};

//! Noise schedules, training examples, the training loop, samplers and
//! ensemble recovery for observation sets of any size.

mod method;
mod recover;
mod sample;
mod schedule;
mod train;

pub use method::Method;
pub use recover::{observation_seed, recover_ensemble, Provenance, RecoveredEnsemble, SampleRequest, Strategy};
pub use sample::{ddpm_sample, euler_steps, fm_sample, sample_rows, schedule_for};
pub use schedule::{ddpm_training_example, fm_training_example, make_linear_schedule, NoiseSchedule};
pub use train::{train, train_with, TrainConfig, TrainOutput};

//! Feature distillation from a frozen teacher into a mirror generator.

mod loss;
mod train;

pub use loss::{
    diverse_stage1_loss, diverse_stage2_loss, feature_loss_per_item, image_loss,
    image_loss_per_item, image_only_loss, loss_value, stage1_loss, stage2_loss, DiverseParts,
    LossParts, RealTarget, TapWeights, Target,
};
pub use train::{
    train, train_on, EpochLog, LossMode, Phase, TrainConfig, TrainReport, TrainingSet,
};

//! Image quality, classifier-based scoring, feature retrieval and
//! embedding interpolation.

mod fsim;
mod inception;
mod interpolate;
mod report;
mod retrieval;
mod ssim;

pub use fsim::{
    fsim, fsim_downsample_factor, gradient_magnitude, luminance, phase_congruency, Grid,
    FSIM_T1, FSIM_T2,
};
pub use inception::{inception_score_from_probs, surrogate_inception_score};
pub use interpolate::interpolate;
pub use report::{EvalReport, InceptionSummary, PairScore};
pub use retrieval::{deep_features, retrieve_topk, FeatureIndex, Hit};
pub use ssim::{ssim, SSIM_C1, SSIM_C2, SSIM_WINDOW};

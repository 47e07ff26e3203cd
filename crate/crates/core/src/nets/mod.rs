//! Teacher and generator networks.
//!
//! A [`NetSpec`] describes a VGG-style teacher. [`GeneratorNet`] is built
//! from the same spec by running it backwards, so that every teacher tap
//! has a generator activation of identical shape.

mod checkpoint;
mod generator;
mod layers;
mod pretrain;
mod spec;
mod taps;
mod teacher;

pub(crate) use spec::key_values;

pub use checkpoint::{
    generator_from_bytes, generator_to_bytes, load_generator, load_teacher, save_generator,
    save_teacher, stored_checksum, teacher_from_bytes, teacher_to_bytes,
};
pub use generator::{
    mirror_name, GenStep, Generated, GeneratorLayout, GeneratorNet, GeneratorPass, GeneratorVars,
    MirrorTap,
};
pub use layers::param_checksum;
pub use pretrain::{pretrain_on, pretrain_teacher, PretrainConfig, PretrainReport};
pub use spec::{conv_name, ConvLayerSpec, NetSpec, ShapeReport};
pub use taps::FeatureTaps;
pub use teacher::{TeacherNet, TeacherPass, TeacherVars};

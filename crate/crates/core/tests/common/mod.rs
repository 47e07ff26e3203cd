#![allow(dead_code)]

pub mod criteria;
pub mod gradcheck;
pub mod metric_corpus;
pub mod reference;

pub mod cli;
pub mod data;
pub mod grad;
pub mod harness;
pub mod importance;
pub mod masking;
pub mod metrics;
pub mod models;

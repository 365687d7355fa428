pub mod datagen;
pub mod error;
pub mod experiment;
pub mod inner;
pub mod lgssm;
pub mod linalg;
pub mod metrics;
pub mod proxops;
pub mod solver;

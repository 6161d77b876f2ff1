//! Datasets, weighted empirical distributions and parametric model families.

mod dataset;
mod empirical;
mod model;
pub mod special;

pub use dataset::{CovariateKind, Dataset};
pub use empirical::{build_empirical, uniform_weights, Group, WeightedEmpirical, WeightedRow};
pub use model::{model_mean, model_pmf, ConditionalPmf, Family, ModelSpec};

pub(crate) use model::{head_covers_support, tail_mass};

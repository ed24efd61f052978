//! Citation-network topic model: a hierarchical Pitman-Yor topic model with
//! author and citation structure, trained by collapsed Gibbs sampling.

pub mod corpus;
pub mod eval;
pub mod model;
pub mod pyp;
pub mod report;
pub mod sampler;
pub mod stirling;
pub mod synthetic;

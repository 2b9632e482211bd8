//! Metapopulation epidemic simulation with graph neural network surrogates.

pub mod autodiff;
pub mod epi;
pub mod eval;
pub mod metapop;
pub mod scenario;
pub mod sparse;
pub mod surrogate;

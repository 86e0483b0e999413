pub mod baselines;
pub mod cli;
pub mod commonsense;
pub mod dataio;
pub mod domain;
pub mod embedding;
pub mod evaluation;
pub mod neuralnet;
pub mod personalization;

pub mod aligner;
pub mod casestudy;
pub mod config;
pub mod embedding;
pub mod evalkit;
pub mod gateway;
pub mod graph;
pub mod optim;
pub mod pipeline;
pub mod refine;
pub mod retrieval;
pub mod synthetic;
pub mod tensor;
pub mod toy;
pub mod transport;

pub mod analysis;
pub mod blade;
pub mod critic;
pub mod digest;
pub mod engine;
pub mod eval;
pub mod gateway;
pub mod kg;
pub mod kgagent;
pub mod kgbuild;
pub mod query;
pub mod router;
pub mod service;
pub mod session;

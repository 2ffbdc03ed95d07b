pub mod corpus;
pub mod extraction;
pub mod gateway;
pub mod metrics;
pub mod orchestrator;
pub mod retrieval;
pub mod toolchain;

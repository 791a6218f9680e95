pub mod dedup;
pub mod ingest;
pub mod manipulate;
pub mod plan;
pub mod sample;
pub mod stats;
pub mod verify;

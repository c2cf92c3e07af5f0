//! Visual news-bias toolkit: gather a story's photos, cluster them by
//! appearance, compose an exposure collage, and run a supervised bot campaign
//! whose every step is recorded in an append-only event log.

pub mod bot;
pub mod campaign;
pub mod cluster;
pub mod compose;
pub mod features;
pub mod ingest;
pub mod synth;

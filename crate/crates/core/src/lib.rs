//! Alien-game search experiments on NK landscapes.
//!
//! The crate covers landscape generation, the trial protocol, scripted and
//! LLM-backed agents, think-aloud annotation, the two-step selection
//! regression and the experiment runner that ties them together.

pub mod agents;
pub mod annotate;
pub mod experiment;
pub mod game;
pub mod landscape;
pub mod llm_client;
pub mod plot;
pub mod rng;
pub mod stats;
pub mod text;

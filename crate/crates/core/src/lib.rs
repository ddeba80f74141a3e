//! Infer another agent's behavior as an executable program.
//!
//! Candidate programs are proposed by a [`synth::Synthesizer`], weighed
//! against an observed history by [`infer::fit_posterior`], and run forward
//! as a weighted mixture to predict actions. [`infer::Rote`] ties these
//! together with rejuvenation of candidates that stop explaining the data.
//! The guide in `book/` walks through each piece.

pub mod agents;
pub mod codec;
pub mod grid;
pub mod trajectory;
pub mod dsl;
pub mod synth;
pub mod infer;
pub mod eval;
pub mod config;
pub mod session;

/// The guide's chapters, compiled so every snippet in them is tested.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/gridworld.md")]
    pub struct Gridworld;
    #[doc = include_str!("../../../book/src/programs.md")]
    pub struct Programs;
    #[doc = include_str!("../../../book/src/agents.md")]
    pub struct Agents;
    #[doc = include_str!("../../../book/src/inference.md")]
    pub struct Inference;
    #[doc = include_str!("../../../book/src/rejuvenation.md")]
    pub struct Rejuvenation;
    #[doc = include_str!("../../../book/src/prediction.md")]
    pub struct Prediction;
    #[doc = include_str!("../../../book/src/synthesis.md")]
    pub struct Synthesis;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/service.md")]
    pub struct Service;
}

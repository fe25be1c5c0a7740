//! Just-in-time defect prediction with model fusion.
//!
//! The crate covers the full path from a commit stream to a fused defect
//! score: hand-crafted change metrics and a random forest over them
//! ([`features`], [`sim`]), a hierarchical textCNN over commit messages and
//! code changes ([`text`], [`nn`], [`com`]), early and late fusion of the two
//! families ([`fusion`]), and evaluation ([`eval`], [`explain`]).

pub mod com;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod fusion;
pub mod nn;
pub mod pipeline;
pub mod sim;
pub mod text;
pub mod util;

pub use error::{Error, Result};

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/commit-streams.md")]
    mod commit_streams {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/explanations.md")]
    mod explanations {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

//! # shufflebreak
//!
//! A black-box red-teaming harness for multimodal chat models built around a
//! simple observation: models that comprehend shuffled inputs often fail to
//! refuse them. The harness shuffles a harmful instruction's text word-wise
//! and its image patch-wise, queries the target, scores the response with an
//! LLM judge, and keeps iterating until the score crosses a success
//! threshold or the query budget runs out. Campaigns fan the loop out over a
//! dataset and report mean toxic score and attack success rate per category.
//!
//! The pieces:
//!
//! - [`text`] / [`img`]: deterministic, seeded mutation of the two halves of
//!   an instruction.
//! - [`gateway`]: OpenAI-compatible HTTP clients plus fully scripted mocks,
//!   behind one backend trait with shared concurrency, pacing and retry
//!   handling.
//! - [`judge`]: toxic-score prompt construction and 1–5 verdict parsing.
//! - [`engine`]: the shuffle–query–judge loop, its ablation modes, and the
//!   perplexity-gated adaptive variant.
//! - [`campaign`]: manifest ingestion, parallel execution, metric
//!   aggregation and report rendering.
//! - [`synthetic`]: a deterministic toy world for demos and verification.
//!
//! This tool exists for authorized safety evaluation of models you own or
//! have permission to test.

pub mod archive;
pub mod campaign;
pub mod cli;
pub mod engine;
pub mod gateway;
pub mod img;
pub mod judge;
pub mod perm;
pub mod synthetic;
pub mod text;

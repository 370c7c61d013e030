//! Disk-chain ("text snake") representation of arbitrary-shape text regions.
//!
//! The crate covers the geometry downstream of a dense text detector:
//! ground-truth label maps from polygon annotations, reconstruction of text
//! instances from predicted maps by striding along the center line,
//! rectification into straight strips, training objectives with analytic
//! gradients, and detection scoring.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod annotations;
pub mod bench;
pub mod evalkit;
pub mod geometry;
pub mod labelgen;
pub mod maps;
pub mod objectives;
pub mod pipeline;
pub mod postproc;
pub mod records;
pub mod rectify;
pub mod render;
pub mod synth;

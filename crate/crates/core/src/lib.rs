//! Design workbench for spatially-coupled LDPC codes whose memory grows
//! stage by stage while the earlier stages stay in hardware.
//!
//! The crate covers the whole design flow: expected short-cycle counts of a
//! partitioned protograph as functions of edge distributions ([`cyclecalc`]),
//! gradient-descent search for locally optimal distributions ([`grade`]),
//! Markov-chain Monte-Carlo finalization of partitioning and lifting matrices
//! ([`mc2`]), and validation by exact cycle counting and frame-error-rate
//! simulation ([`simlab`]).

pub mod cli;
pub mod cyclecalc;
pub mod error;
pub mod grade;
pub mod io;
pub mod matrix;
pub mod mc2;
pub mod pipeline;
pub mod protomatrix;
pub mod simlab;

pub use error::{Error, Result};

//! Lattice hashing and nested-lattice secret key generation from correlated
//! Gaussian sources.
//!
//! The crate covers lattice arithmetic ([`lattice`]), theta series and the
//! flatness factor ([`theta`]), the Gaussian source model ([`source`]), the
//! mod-lattice randomness extractor ([`extractor`]), the one-way key
//! agreement protocol ([`protocol`]), closed-form rate analysis ([`rates`])
//! and the experiment harness behind the command line tool ([`harness`]).

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod extractor;
pub mod harness;
pub mod lattice;
pub mod protocol;
pub mod rates;
pub mod rng;
pub mod source;
pub mod stats;
pub mod theta;

pub use error::{Error, Result};
pub use lattice::{Decoder, Family, FundamentalRegion, LatticeBasis, NestedChain};

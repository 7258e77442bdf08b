//! Probabilistic schedule-transformation language over loop-nest tensor
//! programs, with trace record/replay, composable search-space modules, an
//! analytic machine model, a learned cost model and evolutionary search.
//!
//! The crate is `no_std` (with `alloc`); enable the `std` feature for
//! `std::error::Error` impls.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod cost_model;
pub mod interp;
pub mod ir;
pub mod machine;
pub mod modules;
pub mod schedule;
pub mod search;
pub mod trace;
pub mod workloads;

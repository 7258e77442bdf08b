//! File formats, workload registry and command implementations behind the
//! `schedspace` binary.

pub mod commands;
pub mod formats;
pub mod measure;
pub mod registry;

//! Simulation and numerical verification of two AIMD networks that share a
//! set of agents and synchronize after every `N` capacity events.
//!
//! * [`aimd`]: AIMD matrices, simplex states, inter-event times.
//! * [`policy`]: drop policies and pattern sampling.
//! * [`engine`]: the single-resource chain and the synchronized two-resource
//!   event loop.
//! * [`lifted`]: the lifted chain of windowed partial averages and its
//!   block transition matrices.
//! * [`verify`]: contraction and Barnsley-condition checks, Perron oracle.
//! * [`experiment`], [`config`], [`output`]: Monte Carlo orchestration,
//!   configuration files and CSV/JSON/SVG outputs.
//!
//! Runnable walkthroughs live in `examples/`; the `aimd` binary wraps the
//! same entry points for command-line use.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod aimd;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod lifted;
pub mod output;
pub mod policy;
pub mod verify;

pub use aimd::{
    apply_aimd, build_aimd_matrix, contraction_factor, inter_event_time, is_column_stochastic, AgentParams,
    DropPattern, ResourceParams, ShareVector,
};
pub use error::{Error, Result};

/// One of the two coupled resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    A,
    B,
}

impl Resource {
    pub const BOTH: [Resource; 2] = [Resource::A, Resource::B];

    pub fn other(self) -> Resource {
        match self {
            Resource::A => Resource::B,
            Resource::B => Resource::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Resource::A => 0,
            Resource::B => 1,
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::A => "a",
            Resource::B => "b",
        })
    }
}

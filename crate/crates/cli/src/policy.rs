use std::fmt;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

/// A worker assignment and load allocation strategy that the harness can run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Even block split, every worker's rows needed.
    Uncoded,
    /// Even block split with optimal coded loads.
    CodedUniform,
    GreedySimple,
    GreedyIterated,
    /// Exhaustive max-min search, only for small instances.
    BruteForce,
    /// Probabilistic assignment by successive convex approximation.
    Sca,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::Uncoded,
        Policy::CodedUniform,
        Policy::GreedySimple,
        Policy::GreedyIterated,
        Policy::BruteForce,
        Policy::Sca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Uncoded => "uncoded",
            Policy::CodedUniform => "coded-uniform",
            Policy::GreedySimple => "greedy-simple",
            Policy::GreedyIterated => "greedy-iterated",
            Policy::BruteForce => "brute-force",
            Policy::Sca => "sca",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

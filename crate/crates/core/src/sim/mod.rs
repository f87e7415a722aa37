//! Agent-based loan-application society.
//!
//! Entities are spawned with group-conditioned attributes, may join a
//! trust-gated peer network, trade along its edges and eventually apply
//! for a loan once. The application is scored, biased by group and
//! labeled with measurement noise; each application becomes one
//! [`DatasetRow`](crate::dataset::DatasetRow).

mod attributes;
mod engine;
mod network;
mod scoring;

use serde::{Deserialize, Serialize};

pub use attributes::{derive_finlit, derive_trust, spawn_entity, WealthScale};
pub use engine::{run_simulation, SimStats, Simulation};
pub use network::{maybe_join_network, maybe_transact, update_trust, PeerNetwork, Transfer, MAX_PEERS};
pub use scoring::{apply_label_bias, assign_label, score_applicant, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupId {
    /// Privileged group.
    A,
    /// Protected group.
    B,
}

impl GroupId {
    pub const ALL: [GroupId; 2] = [GroupId::A, GroupId::B];

    pub fn index(self) -> usize {
        match self {
            GroupId::A => 0,
            GroupId::B => 1,
        }
    }

    pub fn other(self) -> GroupId {
        match self {
            GroupId::A => GroupId::B,
            GroupId::B => GroupId::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupId::A => "A",
            GroupId::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<GroupId> {
        match s {
            "A" | "a" => Some(GroupId::A),
            "B" | "b" => Some(GroupId::B),
            _ => None,
        }
    }
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifecycle of an entity. Transitions are monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityState {
    Active,
    Applied,
    Processed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u64,
    pub group: GroupId,
    pub wealth: f64,
    /// Ordinal level in 0..=4.
    pub education: u8,
    pub trust: f64,
    pub fin_lit: f64,
    pub has_job: bool,
    pub has_car: bool,
    pub has_house: bool,
    pub loan_hist: u32,
    pub credit_score: f64,
    pub loan_amount: f64,
    state: EntityState,
}

impl Entity {
    pub fn state(&self) -> EntityState {
        self.state
    }

    /// Moves the entity forward in its lifecycle. Backward moves are refused.
    pub fn advance(&mut self, next: EntityState) -> bool {
        if next > self.state {
            self.state = next;
            true
        } else {
            false
        }
    }
}

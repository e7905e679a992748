use std::fmt;
use std::str::FromStr;

use super::Scenario;
use crate::error::Error;
use crate::types::{AgentId, FrameIndex, HorizonConfig};

/// Agents farther than this from the ego are outside perception range.
pub const PERCEPTION_RANGE_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Motion {
    Moving,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Visibility {
    Visible,
    Occluded,
}

/// One cell of the moving/static x visible/occluded breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset {
    pub motion: Motion,
    pub visibility: Visibility,
}

impl Subset {
    pub const ALL: [Subset; 4] = [
        Subset { motion: Motion::Moving, visibility: Visibility::Visible },
        Subset { motion: Motion::Moving, visibility: Visibility::Occluded },
        Subset { motion: Motion::Static, visibility: Visibility::Visible },
        Subset { motion: Motion::Static, visibility: Visibility::Occluded },
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|s| s == self).expect("all subsets enumerated")
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.motion {
            Motion::Moving => "moving",
            Motion::Static => "static",
        };
        let v = match self.visibility {
            Visibility::Visible => "visible",
            Visibility::Occluded => "occluded",
        };
        write!(f, "{m}-{v}")
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Subset::ALL
            .into_iter()
            .find(|sub| sub.to_string() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown subset '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Query {
    pub frame: FrameIndex,
    pub agent_id: AgentId,
    pub subset: Subset,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuerySchedule {
    pub queries: Vec<Query>,
}

impl QuerySchedule {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn contains(&self, frame: FrameIndex, agent: AgentId) -> bool {
        self.queries
            .binary_search_by(|q| (q.frame, q.agent_id).cmp(&(frame, agent)))
            .is_ok()
    }

    pub fn get(&self, frame: FrameIndex, agent: AgentId) -> Option<&Query> {
        self.queries
            .binary_search_by(|q| (q.frame, q.agent_id).cmp(&(frame, agent)))
            .ok()
            .map(|i| &self.queries[i])
    }
}

pub fn build_schedule(scenario: &Scenario, horizon: &HorizonConfig) -> QuerySchedule {
    build_schedule_with_range(scenario, horizon, PERCEPTION_RANGE_M)
}

/// Queries every active agent at every frame from `tau_h` on, occluded ones
/// included, as long as its last known position is within `range` of the
/// ego and inside the map's region of interest.
pub fn build_schedule_with_range(scenario: &Scenario, horizon: &HorizonConfig, range: f64) -> QuerySchedule {
    let motion: Vec<Motion> = scenario
        .tracks
        .iter()
        .map(|t| if t.is_moving() { Motion::Moving } else { Motion::Static })
        .collect();
    let mut queries = Vec::new();
    for frame in horizon.tau_h..scenario.duration {
        let ego = scenario.ego_position(frame);
        for (track, &motion) in scenario.tracks.iter().zip(&motion) {
            let Some(entry) = track.entry(frame) else { continue };
            let Some(anchor) = track.last_seen(frame) else { continue };
            if anchor.distance(&ego) > range || !scenario.lane_map.in_roi(anchor) {
                continue;
            }
            let visibility = if entry.is_some() { Visibility::Visible } else { Visibility::Occluded };
            queries.push(Query { frame, agent_id: track.agent_id, subset: Subset { motion, visibility } });
        }
    }
    queries.sort();
    QuerySchedule { queries }
}

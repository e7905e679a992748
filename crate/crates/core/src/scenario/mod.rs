//! Agent-trajectory logs: the scenario container, synthetic generation,
//! log I/O and benchmark query scheduling.

mod generate;
mod log;
mod schedule;

pub use generate::{generate_scenario, generate_scenario_detailed, GeneratedScenario, GeneratorConfig, LaneLayout, OcclusionCause};
pub use log::{parse_log, read_log, render_log, write_log};
pub use schedule::{build_schedule, build_schedule_with_range, Motion, Query, QuerySchedule, Subset, Visibility, PERCEPTION_RANGE_M};

use crate::error::{Error, Result};
use crate::types::{AgentId, FrameIndex, LaneMap, Observation, ObservationSet, Position2};

/// Travel distance separating moving from static agents, in meters.
pub const MOVING_TRAVEL_THRESHOLD_M: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentClass {
    Automobile,
}

/// Ground-truth life of one agent: one entry per frame from its first
/// to its last record. `None` marks an invisible frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub agent_id: AgentId,
    pub class: AgentClass,
    pub start_frame: FrameIndex,
    pub positions: Vec<Option<Position2>>,
}

impl AgentTrack {
    pub fn new(agent_id: AgentId, start_frame: FrameIndex, positions: Vec<Option<Position2>>) -> Self {
        Self { agent_id, class: AgentClass::Automobile, start_frame, positions }
    }

    /// Last frame covered by the track (inclusive).
    pub fn end_frame(&self) -> FrameIndex {
        self.start_frame + self.positions.len().saturating_sub(1)
    }

    pub fn is_active(&self, frame: FrameIndex) -> bool {
        !self.positions.is_empty() && frame >= self.start_frame && frame <= self.end_frame()
    }

    /// `Some(entry)` when the track covers `frame`.
    pub fn entry(&self, frame: FrameIndex) -> Option<Option<Position2>> {
        if self.is_active(frame) {
            Some(self.positions[frame - self.start_frame])
        } else {
            None
        }
    }

    pub fn position_at(&self, frame: FrameIndex) -> Option<Position2> {
        self.entry(frame).flatten()
    }

    pub fn visible_at(&self, frame: FrameIndex) -> bool {
        self.position_at(frame).is_some()
    }

    /// Most recent visible position at or before `frame`.
    pub fn last_seen(&self, frame: FrameIndex) -> Option<Position2> {
        if frame < self.start_frame || self.positions.is_empty() {
            return None;
        }
        let hi = (frame - self.start_frame).min(self.positions.len() - 1);
        self.positions[..=hi].iter().rev().find_map(|p| *p)
    }

    /// Path length over consecutive visible positions.
    pub fn total_travel(&self) -> f64 {
        let mut prev: Option<Position2> = None;
        let mut total = 0.0;
        for p in self.positions.iter().flatten() {
            if let Some(q) = prev {
                total += q.distance(p);
            }
            prev = Some(*p);
        }
        total
    }

    pub fn is_moving(&self) -> bool {
        self.total_travel() >= MOVING_TRAVEL_THRESHOLD_M
    }

    pub fn observation(&self, frame: FrameIndex) -> Option<Observation> {
        self.entry(frame).map(|e| match e {
            Some(p) => Observation::visible(self.agent_id, p).expect("track positions are finite"),
            None => Observation::occluded(self.agent_id),
        })
    }
}

/// One replayable log: map, agent tracks and the data-collecting ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: usize,
    pub lane_map: LaneMap,
    pub tracks: Vec<AgentTrack>,
    pub ego_track: AgentTrack,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let check = |t: &AgentTrack| -> Result<()> {
            if t.positions.is_empty() {
                return Err(Error::InvalidInput(format!("agent {} has an empty track", t.agent_id)));
            }
            if t.end_frame() >= self.duration {
                return Err(Error::InvalidInput(format!(
                    "agent {} extends to frame {} beyond duration {}",
                    t.agent_id,
                    t.end_frame(),
                    self.duration
                )));
            }
            Ok(())
        };
        check(&self.ego_track)?;
        if self.ego_track.start_frame != 0
            || self.ego_track.positions.len() != self.duration
            || self.ego_track.positions.iter().any(Option::is_none)
        {
            return Err(Error::InvalidInput("ego must be visible at every frame".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        ids.insert(self.ego_track.agent_id);
        for t in &self.tracks {
            check(t)?;
            if !ids.insert(t.agent_id) {
                return Err(Error::InvalidInput(format!("duplicate agent id {}", t.agent_id)));
            }
        }
        Ok(())
    }

    pub fn track(&self, id: AgentId) -> Option<&AgentTrack> {
        self.tracks.iter().find(|t| t.agent_id == id)
    }

    pub fn ego_position(&self, frame: FrameIndex) -> Position2 {
        self.ego_track.position_at(frame).expect("ego visible at every frame")
    }

    /// The input at `frame`: every agent whose track covers the frame.
    pub fn observation_set(&self, frame: FrameIndex) -> ObservationSet {
        let mut set = ObservationSet::new(frame);
        for t in &self.tracks {
            if let Some(obs) = t.observation(frame) {
                set.insert(obs);
            }
        }
        set
    }
}

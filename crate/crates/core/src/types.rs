//! Domain types shared by every stage of the streaming pipeline.
//!
//! Frames tick at 10 Hz. All positions are world-frame ground-plane
//! coordinates in meters; trajectories are stored as per-frame movements
//! (displacements) rather than absolute positions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds between consecutive frames.
pub const FRAME_PERIOD_S: f64 = 0.1;

/// Frame index within a scenario.
pub type FrameIndex = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ground-plane point. A `z` coordinate, when a source carries one, is
/// dropped on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2 {
    pub x: f64,
    pub y: f64,
}

impl Position2 {
    pub const ORIGIN: Position2 = Position2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Position2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(&self, dx: f64, dy: f64) -> Position2 {
        Position2::new(self.x + dx, self.y + dy)
    }

    /// Vector from `self` to `other`.
    pub fn delta_to(&self, other: &Position2) -> (f64, f64) {
        (other.x - self.x, other.y - self.y)
    }
}

/// One agent's input at one frame. `position` is `None` exactly when the
/// agent is invisible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    agent_id: AgentId,
    position: Option<Position2>,
}

impl Observation {
    pub fn visible(agent_id: AgentId, position: Position2) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::InvalidInput(format!(
                "agent {agent_id}: non-finite position ({}, {})",
                position.x, position.y
            )));
        }
        Ok(Self { agent_id, position: Some(position) })
    }

    pub fn occluded(agent_id: AgentId) -> Self {
        Self { agent_id, position: None }
    }

    /// Builds an observation from a raw `(visible, position)` pair, rejecting
    /// pairs that break the visibility/position coupling.
    pub fn from_parts(agent_id: AgentId, visible: bool, position: Option<Position2>) -> Result<Self> {
        match (visible, position) {
            (true, Some(p)) => Self::visible(agent_id, p),
            (false, None) => Ok(Self::occluded(agent_id)),
            (true, None) => Err(Error::InvalidInput(format!(
                "agent {agent_id}: visible observation without a position"
            ))),
            (false, Some(_)) => Err(Error::InvalidInput(format!(
                "agent {agent_id}: invisible observation carries a position"
            ))),
        }
    }

    pub fn agent_id(&self) -> AgentId {
        self.agent_id
    }

    pub fn position(&self) -> Option<Position2> {
        self.position
    }

    pub fn is_visible(&self) -> bool {
        self.position.is_some()
    }
}

/// All inputs at one frame, keyed by the active agent set.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub frame: FrameIndex,
    pub observations: BTreeMap<AgentId, Observation>,
}

impl ObservationSet {
    pub fn new(frame: FrameIndex) -> Self {
        Self { frame, observations: BTreeMap::new() }
    }

    pub fn insert(&mut self, obs: Observation) {
        self.observations.insert(obs.agent_id(), obs);
    }

    pub fn active_agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.observations.keys().copied()
    }
}

/// A future trajectory expressed as per-frame movements `(dx, dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementTrajectory {
    steps: Vec<[f64; 2]>,
}

impl MovementTrajectory {
    pub fn new(steps: Vec<[f64; 2]>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidInput("empty movement trajectory".into()));
        }
        if steps.iter().any(|s| !s[0].is_finite() || !s[1].is_finite()) {
            return Err(Error::InvalidInput("non-finite movement step".into()));
        }
        Ok(Self { steps })
    }

    /// Builds from separate x and y movement sequences of equal length.
    pub fn from_axes(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidInput(format!(
                "axis length mismatch: {} vs {}",
                xs.len(),
                ys.len()
            )));
        }
        Self::new(xs.iter().zip(ys).map(|(&x, &y)| [x, y]).collect())
    }

    pub fn constant(dx: f64, dy: f64, len: usize) -> Result<Self> {
        Self::new(vec![[dx, dy]; len])
    }

    pub fn steps(&self) -> &[[f64; 2]] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s[axis]).collect()
    }

    pub fn to_absolute(&self, origin: Position2) -> Vec<Position2> {
        to_absolute(origin, self)
    }
}

/// Converts movements into absolute positions: `out[j] = origin + sum(steps[0..=j])`.
pub fn to_absolute(origin: Position2, traj: &MovementTrajectory) -> Vec<Position2> {
    let mut cur = origin;
    traj.steps
        .iter()
        .map(|s| {
            cur = cur.offset(s[0], s[1]);
            cur
        })
        .collect()
}

/// K candidate futures for one agent at one query frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalPrediction {
    pub agent_id: AgentId,
    pub query_frame: FrameIndex,
    modes: Vec<MovementTrajectory>,
    confidences: Vec<f64>,
}

impl MultiModalPrediction {
    /// Confidences are normalized to sum to one; all must be non-negative
    /// with a positive total.
    pub fn new(
        agent_id: AgentId,
        query_frame: FrameIndex,
        modes: Vec<MovementTrajectory>,
        confidences: Vec<f64>,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidInput("prediction without modes".into()));
        }
        if modes.len() != confidences.len() {
            return Err(Error::InvalidInput(format!(
                "{} modes but {} confidences",
                modes.len(),
                confidences.len()
            )));
        }
        let horizon = modes[0].len();
        if modes.iter().any(|m| m.len() != horizon) {
            return Err(Error::InvalidInput("modes differ in horizon".into()));
        }
        if confidences.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput("confidences must be finite and non-negative".into()));
        }
        let total: f64 = confidences.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("confidences sum to zero".into()));
        }
        let confidences = confidences.into_iter().map(|c| c / total).collect();
        Ok(Self { agent_id, query_frame, modes, confidences })
    }

    /// Keeps already-normalized confidences bit for bit (e.g. when reading
    /// a log back).
    pub fn from_normalized(
        agent_id: AgentId,
        query_frame: FrameIndex,
        modes: Vec<MovementTrajectory>,
        confidences: Vec<f64>,
    ) -> Result<Self> {
        let checked = Self::new(agent_id, query_frame, modes, confidences.clone())?;
        if (confidences.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("confidences are not normalized".into()));
        }
        Ok(Self { confidences, ..checked })
    }

    pub fn modes(&self) -> &[MovementTrajectory] {
        &self.modes
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn horizon(&self) -> usize {
        self.modes[0].len()
    }

    /// Index of the highest-confidence mode; ties resolve to the lowest index.
    pub fn most_confident(&self) -> usize {
        let mut best = 0;
        for (k, &c) in self.confidences.iter().enumerate() {
            if c > self.confidences[best] {
                best = k;
            }
        }
        best
    }

    /// Mode indices sorted by descending confidence (stable on ties).
    pub fn ranked_modes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.modes.len()).collect();
        idx.sort_by(|&a, &b| {
            self.confidences[b]
                .partial_cmp(&self.confidences[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }

    /// Same confidences, new trajectories (used by refiners).
    pub fn with_modes(&self, modes: Vec<MovementTrajectory>) -> Result<Self> {
        Self::new(self.agent_id, self.query_frame, modes, self.confidences.clone())
    }
}

/// Vectorized map: lane centerlines plus the lateral half-width of the
/// region of interest around them.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneMap {
    pub centerlines: Vec<Vec<Position2>>,
    pub roi_halfwidth: f64,
}

/// Closest point on a lane centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneProjection {
    pub lane: usize,
    pub segment: usize,
    /// Arc length from the start of the polyline to the projected point.
    pub arc_length: f64,
    pub point: Position2,
    /// Unit tangent of the segment.
    pub tangent: (f64, f64),
    /// Signed lateral offset (left of travel direction is positive).
    pub lateral: f64,
    pub distance: f64,
}

impl LaneMap {
    pub fn new(centerlines: Vec<Vec<Position2>>, roi_halfwidth: f64) -> Result<Self> {
        for (i, line) in centerlines.iter().enumerate() {
            if line.len() < 2 {
                return Err(Error::InvalidInput(format!("lane {i} has fewer than 2 points")));
            }
            if line.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidInput(format!("lane {i} has a non-finite point")));
            }
            if line.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidInput(format!("lane {i} repeats a point")));
            }
        }
        if !(roi_halfwidth.is_finite() && roi_halfwidth >= 0.0) {
            return Err(Error::InvalidInput("roi half-width must be non-negative".into()));
        }
        Ok(Self { centerlines, roi_halfwidth })
    }

    pub fn empty(roi_halfwidth: f64) -> Self {
        Self { centerlines: Vec::new(), roi_halfwidth }
    }

    pub fn project_onto(&self, lane: usize, p: Position2) -> LaneProjection {
        let line = &self.centerlines[lane];
        let mut best: Option<LaneProjection> = None;
        let mut s0 = 0.0;
        for (seg, w) in line.windows(2).enumerate() {
            let (ax, ay) = (w[0].x, w[0].y);
            let (dx, dy) = (w[1].x - ax, w[1].y - ay);
            let len = dx.hypot(dy);
            let u = (((p.x - ax) * dx + (p.y - ay) * dy) / (len * len)).clamp(0.0, 1.0);
            let q = Position2::new(ax + u * dx, ay + u * dy);
            let d = p.distance(&q);
            if best.is_none_or(|b| d < b.distance) {
                let t = (dx / len, dy / len);
                let lateral = t.0 * (p.y - q.y) - t.1 * (p.x - q.x);
                best = Some(LaneProjection {
                    lane,
                    segment: seg,
                    arc_length: s0 + u * len,
                    point: q,
                    tangent: t,
                    lateral,
                    distance: d,
                });
            }
            s0 += len;
        }
        best.expect("lane has at least one segment")
    }

    /// Nearest centerline to `p`. When `heading` is given, lanes whose
    /// tangent opposes it are skipped unless nothing else is available.
    pub fn nearest_lane(&self, p: Position2, heading: Option<(f64, f64)>) -> Option<LaneProjection> {
        let mut best: Option<LaneProjection> = None;
        let mut fallback: Option<LaneProjection> = None;
        for lane in 0..self.centerlines.len() {
            let proj = self.project_onto(lane, p);
            if fallback.is_none_or(|b| proj.distance < b.distance) {
                fallback = Some(proj);
            }
            let aligned = heading.is_none_or(|h| h.0 * proj.tangent.0 + h.1 * proj.tangent.1 > 0.0);
            if aligned && best.is_none_or(|b| proj.distance < b.distance - 1e-9) {
                best = Some(proj);
            }
        }
        best.or(fallback)
    }

    /// Point and unit tangent at arc length `s` along a lane (clamped to its ends).
    pub fn point_at(&self, lane: usize, s: f64) -> (Position2, (f64, f64)) {
        let line = &self.centerlines[lane];
        let mut remaining = s.max(0.0);
        for w in line.windows(2) {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            let len = dx.hypot(dy);
            if remaining <= len {
                let u = remaining / len;
                return (Position2::new(w[0].x + u * dx, w[0].y + u * dy), (dx / len, dy / len));
            }
            remaining -= len;
        }
        let n = line.len();
        let (a, b) = (line[n - 2], line[n - 1]);
        let len = a.distance(&b);
        (b, ((b.x - a.x) / len, (b.y - a.y) / len))
    }

    pub fn lane_length(&self, lane: usize) -> f64 {
        self.centerlines[lane].windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Inside the region of interest: within `roi_halfwidth` of some centerline.
    pub fn in_roi(&self, p: Position2) -> bool {
        (0..self.centerlines.len()).any(|lane| self.project_onto(lane, p).distance <= self.roi_halfwidth)
    }
}

/// History length, forecast horizon and number of modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub tau_h: usize,
    pub tau_f: usize,
    pub k: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { tau_h: 20, tau_f: 30, k: 6 }
    }
}

impl HorizonConfig {
    pub fn new(tau_h: usize, tau_f: usize, k: usize) -> Result<Self> {
        let cfg = Self { tau_h, tau_f, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_h < 2 || self.tau_f < 2 || self.k < 1 {
            return Err(Error::InvalidInput(format!(
                "invalid horizon tau_h={} tau_f={} K={} (need tau_h>=2, tau_f>=2, K>=1)",
                self.tau_h, self.tau_f, self.k
            )));
        }
        Ok(())
    }
}

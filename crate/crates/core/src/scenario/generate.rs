//! Synthetic scenario generator.
//!
//! Agents drive along lane routes (straight roads, curves, or a four-way
//! intersection with turning routes), parked agents sit near the road, and
//! an ego vehicle drives through the middle of the map. Occlusions come from
//! scripted windows and from ray shadowing by other agents' disks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentTrack, Scenario, MOVING_TRAVEL_THRESHOLD_M};
use crate::error::{Error, Result};
use crate::types::{AgentId, FrameIndex, LaneMap, Position2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneLayout {
    Straight,
    Curve,
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub version: u32,
    pub agents_min: usize,
    pub agents_max: usize,
    pub duration_min: usize,
    pub duration_max: usize,
    pub layouts: Vec<LaneLayout>,
    /// Fraction of agents that are parked.
    pub static_fraction: f64,
    /// Fraction of parked agents placed outside the region of interest.
    pub offroad_fraction: f64,
    /// Fraction of moving agents routed through turns (intersection layout).
    pub turn_fraction: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub occlusion: bool,
    pub scripted_occlusion_prob: f64,
    pub occlusion_len_min: usize,
    pub occlusion_len_max: usize,
    pub geometric_occlusion: bool,
    pub occluder_radius: f64,
    /// Amplitude of the uniform position noise applied to parked agents.
    pub static_jitter: f64,
    pub roi_halfwidth: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            version: 1,
            agents_min: 8,
            agents_max: 16,
            duration_min: 150,
            duration_max: 300,
            layouts: vec![LaneLayout::Straight, LaneLayout::Curve, LaneLayout::Intersection],
            static_fraction: 0.3,
            offroad_fraction: 0.1,
            turn_fraction: 0.6,
            speed_min_mps: 3.0,
            speed_max_mps: 14.0,
            occlusion: true,
            scripted_occlusion_prob: 0.5,
            occlusion_len_min: 3,
            occlusion_len_max: 10,
            geometric_occlusion: true,
            occluder_radius: 1.5,
            static_jitter: 0.002,
            roi_halfwidth: 15.0,
        }
    }
}

impl GeneratorConfig {
    /// Curves and intersections only, every moving agent turning and every
    /// agent given a scripted occlusion window.
    pub fn turning() -> Self {
        Self {
            layouts: vec![LaneLayout::Intersection, LaneLayout::Curve],
            turn_fraction: 1.0,
            scripted_occlusion_prob: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.version != 1 {
            return bad(format!("unsupported generator config version {}", self.version));
        }
        if self.agents_min < 5 || self.agents_max > 40 || self.agents_min > self.agents_max {
            return bad(format!(
                "agent count range {}..={} must lie within 5..=40",
                self.agents_min, self.agents_max
            ));
        }
        if self.duration_min < 150 || self.duration_max > 300 || self.duration_min > self.duration_max {
            return bad(format!(
                "duration range {}..={} must lie within 150..=300 frames",
                self.duration_min, self.duration_max
            ));
        }
        if self.layouts.is_empty() {
            return bad("at least one lane layout is required".into());
        }
        for (name, v) in [
            ("static_fraction", self.static_fraction),
            ("offroad_fraction", self.offroad_fraction),
            ("turn_fraction", self.turn_fraction),
            ("scripted_occlusion_prob", self.scripted_occlusion_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name}={v} must be in [0, 1]"));
            }
        }
        if !(self.speed_min_mps > 0.0 && self.speed_min_mps <= self.speed_max_mps && self.speed_max_mps < 40.0) {
            return bad(format!(
                "speed range {}..{} m/s must be positive, ordered and below 40",
                self.speed_min_mps, self.speed_max_mps
            ));
        }
        if self.occlusion_len_min == 0 || self.occlusion_len_min > self.occlusion_len_max {
            return bad("occlusion window lengths must satisfy 1 <= min <= max".into());
        }
        if !(self.occluder_radius > 0.0) {
            return bad("occluder radius must be positive".into());
        }
        // Worst-case path length of a jittering parked agent must stay below
        // the moving threshold.
        let worst = 2.0 * std::f64::consts::SQRT_2 * self.static_jitter * self.duration_max as f64;
        if !(self.static_jitter >= 0.0) || worst >= MOVING_TRAVEL_THRESHOLD_M {
            return bad(format!("static_jitter={} can accumulate {worst:.2} m of travel", self.static_jitter));
        }
        if !(self.roi_halfwidth > 0.0) {
            return bad("roi_halfwidth must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionCause {
    Scripted,
    Shadowed { blocker: AgentId },
}

/// Physical trajectory of an agent, including frames where it is hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub agent_id: AgentId,
    pub start_frame: FrameIndex,
    pub positions: Vec<Position2>,
}

impl TruthTrack {
    pub fn at(&self, frame: FrameIndex) -> Option<Position2> {
        frame.checked_sub(self.start_frame).and_then(|i| self.positions.get(i).copied())
    }
}

/// A scenario plus the hidden state that produced it.
#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub scenario: Scenario,
    pub truth: Vec<TruthTrack>,
    pub occlusions: BTreeMap<AgentId, Vec<(FrameIndex, OcclusionCause)>>,
}

pub fn generate_scenario(seed: u64, config: &GeneratorConfig) -> Result<Scenario> {
    generate_scenario_detailed(seed, config).map(|g| g.scenario)
}

const LANE_WIDTH: f64 = 3.5;
const ROUTE_HALF_LENGTH: f64 = 220.0;
const MIN_MOVING_LIFETIME: usize = 30;

fn round_mm(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

struct Layout {
    /// Routes agents can follow; every route is also a map centerline.
    routes: Vec<Vec<Position2>>,
    /// Routes that include a turn.
    turning: Vec<usize>,
    ego_route: usize,
}

fn line(a: (f64, f64), b: (f64, f64)) -> Vec<Position2> {
    vec![Position2::new(a.0, a.1), Position2::new(b.0, b.1)]
}

fn straight_layout() -> Layout {
    let l = ROUTE_HALF_LENGTH;
    let mut routes = Vec::new();
    for lane in 0..2 {
        let y = -(lane as f64 + 0.5) * LANE_WIDTH;
        routes.push(line((-l, y), (l, y)));
        routes.push(line((l, -y), (-l, -y)));
    }
    Layout { routes, turning: Vec::new(), ego_route: 0 }
}

fn curve_layout(rng: &mut ChaCha8Rng) -> Layout {
    let radius = rng.gen_range(35.0..80.0);
    let sweep = rng.gen_range(60.0f64..120.0).to_radians() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    // Reference path: straight approach along +x ending at the origin, an
    // arc, then a straight exit.
    let approach = ROUTE_HALF_LENGTH * 0.5;
    let mut reference: Vec<(f64, f64, f64)> = Vec::new(); // x, y, heading
    reference.push((-approach, 0.0, 0.0));
    let n_arc = ((sweep.abs() * radius) / 3.0).ceil() as usize;
    let center = (0.0, radius * sweep.signum());
    for i in 0..=n_arc {
        let phi = sweep * i as f64 / n_arc as f64;
        let x = center.0 + radius * phi.sin() * sweep.signum();
        let y = center.1 - radius * phi.cos() * sweep.signum();
        reference.push((x, y, phi));
    }
    let (ex, ey, eh) = *reference.last().unwrap();
    reference.push((ex + approach * eh.cos(), ey + approach * eh.sin(), eh));

    let offset_path = |off: f64, reverse: bool| -> Vec<Position2> {
        let mut pts: Vec<Position2> = reference
            .iter()
            .map(|&(x, y, h)| Position2::new(x - off * h.sin(), y + off * h.cos()))
            .collect();
        pts.dedup_by(|a, b| a.distance(b) < 1e-6);
        if reverse {
            pts.reverse();
        }
        pts
    };
    let mut routes = Vec::new();
    for lane in 0..2 {
        let off = (lane as f64 + 0.5) * LANE_WIDTH;
        routes.push(offset_path(-off, false));
        routes.push(offset_path(off, true));
    }
    let turning = (0..routes.len()).collect();
    Layout { routes, turning, ego_route: 0 }
}

fn intersection_layout() -> Layout {
    let l = ROUTE_HALF_LENGTH;
    let edge = 10.0;
    let half = LANE_WIDTH * 0.5;
    let dirs = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
    // Lane offset to the right of travel direction u.
    let off = |u: (f64, f64)| (half * u.1, -half * u.0);
    let mut routes = Vec::new();
    let mut turning = Vec::new();
    for &u in &dirs {
        let ou = off(u);
        let start = (ou.0 - l * u.0, ou.1 - l * u.1);
        let entry = (ou.0 - edge * u.0, ou.1 - edge * u.1);
        for &w in &dirs {
            if w == (-u.0, -u.1) {
                continue;
            }
            if w == u {
                routes.push(line(start, (ou.0 + l * u.0, ou.1 + l * u.1)));
                continue;
            }
            let ow = off(w);
            let exit = (ow.0 + edge * w.0, ow.1 + edge * w.1);
            let a = ow.0 * u.0 + ow.1 * u.1;
            let ctrl = (ou.0 + a * u.0, ou.1 + a * u.1);
            let mut pts = vec![Position2::new(start.0, start.1)];
            let n = 12;
            for i in 0..=n {
                let s = i as f64 / n as f64;
                let b0 = (1.0 - s) * (1.0 - s);
                let b1 = 2.0 * s * (1.0 - s);
                let b2 = s * s;
                pts.push(Position2::new(
                    b0 * entry.0 + b1 * ctrl.0 + b2 * exit.0,
                    b0 * entry.1 + b1 * ctrl.1 + b2 * exit.1,
                ));
            }
            pts.push(Position2::new(ow.0 + l * w.0, ow.1 + l * w.1));
            turning.push(routes.len());
            routes.push(pts);
        }
    }
    Layout { routes, turning, ego_route: 0 }
}

fn transform(routes: &mut [Vec<Position2>], theta: f64, tx: f64, ty: f64) {
    let (s, c) = theta.sin_cos();
    for r in routes.iter_mut() {
        for p in r.iter_mut() {
            *p = Position2::new(round_mm(c * p.x - s * p.y + tx), round_mm(s * p.x + c * p.y + ty));
        }
        r.dedup();
    }
}

/// Position at arc length `s` along `route` of `map`, shifted laterally.
fn route_point(map: &LaneMap, route: usize, s: f64, lateral: f64) -> Position2 {
    let (p, t) = map.point_at(route, s);
    Position2::new(p.x - lateral * t.1, p.y + lateral * t.0)
}

struct Body {
    id: AgentId,
    birth: FrameIndex,
    positions: Vec<Position2>,
    moving: bool,
}

pub fn generate_scenario_detailed(seed: u64, config: &GeneratorConfig) -> Result<GeneratedScenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = rng.gen_range(config.duration_min..=config.duration_max);
    let layout_kind = *config.layouts.choose(&mut rng).expect("validated non-empty");
    let mut layout = match layout_kind {
        LaneLayout::Straight => straight_layout(),
        LaneLayout::Curve => curve_layout(&mut rng),
        LaneLayout::Intersection => intersection_layout(),
    };
    let theta = rng.gen_range(0.0..2.0 * PI);
    let (tx, ty) = (rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
    transform(&mut layout.routes, theta, tx, ty);
    let map = LaneMap::new(layout.routes.clone(), config.roi_halfwidth)?;

    // Ego drives through the middle of its route at constant speed.
    let ego_len = map.lane_length(layout.ego_route);
    let ego_speed = rng.gen_range(4.0..8.0) * 0.1;
    let ego_s0 = (ego_len * 0.5 - ego_speed * duration as f64 * 0.5).max(0.0);
    let ego_positions: Vec<Position2> = (0..duration)
        .map(|t| {
            let p = route_point(&map, layout.ego_route, (ego_s0 + ego_speed * t as f64).min(ego_len), 0.0);
            Position2::new(round_mm(p.x), round_mm(p.y))
        })
        .collect();

    let n_agents = rng.gen_range(config.agents_min..=config.agents_max);
    let mut bodies: Vec<Body> = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let id = AgentId(i as u32 + 1);
        if rng.gen_bool(config.static_fraction) {
            let route = rng.gen_range(0..map.centerlines.len());
            let len = map.lane_length(route);
            let s = rng.gen_range((len * 0.5 - 90.0).max(0.0)..(len * 0.5 + 90.0).min(len));
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = if rng.gen_bool(config.offroad_fraction) {
                side * rng.gen_range(config.roi_halfwidth + 5.0..config.roi_halfwidth + 15.0)
            } else {
                side * rng.gen_range(2.5..6.0)
            };
            let anchor = route_point(&map, route, s, lateral);
            let birth = if rng.gen_bool(0.7) { 0 } else { rng.gen_range(0..duration / 2) };
            let end = if rng.gen_bool(0.7) { duration } else { rng.gen_range(birth + duration / 4..duration) };
            let j = config.static_jitter;
            let positions = (birth..end)
                .map(|_| {
                    let (dx, dy) = if j > 0.0 { (rng.gen_range(-j..=j), rng.gen_range(-j..=j)) } else { (0.0, 0.0) };
                    Position2::new(round_mm(anchor.x + dx), round_mm(anchor.y + dy))
                })
                .collect();
            bodies.push(Body { id, birth, positions, moving: false });
        } else {
            let route = if !layout.turning.is_empty() && rng.gen_bool(config.turn_fraction) {
                *layout.turning.choose(&mut rng).unwrap()
            } else {
                rng.gen_range(0..map.centerlines.len())
            };
            let len = map.lane_length(route);
            let v0 = rng.gen_range(config.speed_min_mps..=config.speed_max_mps) * 0.1;
            let amp = rng.gen_range(0.0..0.15);
            let period = rng.gen_range(40.0..120.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let lateral = rng.gen_range(-0.3..0.3);
            let birth = rng.gen_range(0..duration.saturating_sub(MIN_MOVING_LIFETIME + 1).max(1));
            // Start so that the agent crosses the map center while the ego is near it.
            let center_frame = duration as f64 * 0.5;
            let s0 = (len * 0.5 - v0 * (center_frame - birth as f64) + rng.gen_range(-60.0..60.0)).clamp(0.0, len * 0.8);
            let mut positions = Vec::new();
            let mut s = s0;
            for t in birth..duration {
                if s > len {
                    break;
                }
                let p = route_point(&map, route, s, lateral);
                positions.push(Position2::new(round_mm(p.x), round_mm(p.y)));
                s += v0 * (1.0 + amp * (2.0 * PI * t as f64 / period + phase).sin());
            }
            if positions.len() < MIN_MOVING_LIFETIME {
                continue;
            }
            bodies.push(Body { id, birth, positions, moving: true });
        }
    }

    // Visibility.
    let mut occlusions: BTreeMap<AgentId, Vec<(FrameIndex, OcclusionCause)>> = BTreeMap::new();
    let mut visible: Vec<Vec<bool>> = bodies.iter().map(|b| vec![true; b.positions.len()]).collect();
    if config.occlusion {
        for (bi, b) in bodies.iter().enumerate() {
            let life = b.positions.len();
            if life < config.occlusion_len_min + 4 || !rng.gen_bool(config.scripted_occlusion_prob) {
                continue;
            }
            let windows = rng.gen_range(1..=2);
            for _ in 0..windows {
                let len = rng.gen_range(config.occlusion_len_min..=config.occlusion_len_max).min(life - 3);
                let start = rng.gen_range(1..life - len - 1);
                for v in &mut visible[bi][start..start + len] {
                    *v = false;
                }
                for i in start..start + len {
                    occlusions.entry(b.id).or_default().push((b.birth + i, OcclusionCause::Scripted));
                }
            }
        }
        if config.geometric_occlusion {
            let r = config.occluder_radius;
            for t in 0..duration {
                let ego = ego_positions[t];
                for (ai, a) in bodies.iter().enumerate() {
                    let Some(target) = body_at(a, t) else { continue };
                    if !visible[ai][t - a.birth] {
                        continue;
                    }
                    let blocker = bodies.iter().find(|b| {
                        b.id != a.id && body_at(b, t).is_some_and(|c| blocks(ego, target, c, r))
                    });
                    if let Some(b) = blocker {
                        visible[ai][t - a.birth] = false;
                        occlusions.entry(a.id).or_default().push((t, OcclusionCause::Shadowed { blocker: b.id }));
                    }
                }
            }
        }
    }

    let mut tracks = Vec::new();
    let mut truth = Vec::new();
    for (b, vis) in bodies.iter().zip(&visible) {
        let (Some(first), Some(last)) = (vis.iter().position(|&v| v), vis.iter().rposition(|&v| v)) else {
            continue;
        };
        let positions: Vec<Option<Position2>> =
            (first..=last).map(|i| if vis[i] { Some(b.positions[i]) } else { None }).collect();
        let track = AgentTrack::new(b.id, b.birth + first, positions);
        if track.is_moving() != b.moving {
            continue;
        }
        tracks.push(track);
        truth.push(TruthTrack { agent_id: b.id, start_frame: b.birth, positions: b.positions.clone() });
    }
    let kept: std::collections::BTreeSet<AgentId> = tracks.iter().map(|t| t.agent_id).collect();
    occlusions.retain(|id, _| kept.contains(id));
    for v in occlusions.values_mut() {
        v.sort_by_key(|(f, _)| *f);
        v.dedup_by_key(|(f, _)| *f);
    }

    let scenario = Scenario {
        duration,
        lane_map: map,
        tracks,
        ego_track: AgentTrack::new(AgentId(0), 0, ego_positions.into_iter().map(Some).collect()),
    };
    scenario.validate()?;
    Ok(GeneratedScenario { scenario, truth, occlusions })
}

fn body_at(b: &Body, t: FrameIndex) -> Option<Position2> {
    t.checked_sub(b.birth).and_then(|i| b.positions.get(i).copied())
}

/// True when a disk of radius `r` at `c` cuts the segment from `ego` to
/// `target`, lies strictly between them and does not contain the target.
pub(crate) fn blocks(ego: Position2, target: Position2, c: Position2, r: f64) -> bool {
    let (dx, dy) = ego.delta_to(&target);
    let len2 = dx * dx + dy * dy;
    if len2 < 1e-12 || c.distance(&target) <= r || c.distance(&ego) <= r {
        return false;
    }
    let u = ((c.x - ego.x) * dx + (c.y - ego.y) * dy) / len2;
    if !(0.0..1.0).contains(&u) {
        return false;
    }
    let q = Position2::new(ego.x + u * dx, ego.y + u * dy);
    q.distance(&c) < r
}

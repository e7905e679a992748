//! Line-oriented prediction log.
//!
//! ```text
//! #predictions,tau_f=30
//! frame,agent_id,subset,tag,mode_index,confidence,origin_x,origin_y,dx0,dy0,...,dx29,dy29
//! ```
//!
//! One line per mode, `tag` is `raw` or `refined`. Records are sorted by
//! `(frame, agent_id)`; raw lines precede refined ones. Floats use the
//! shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::Subset;
use crate::types::{AgentId, FrameIndex, MovementTrajectory, MultiModalPrediction, Position2};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub frame: FrameIndex,
    pub agent_id: AgentId,
    pub subset: Subset,
    /// Position the trajectories start from (observed or filled in).
    pub origin: Position2,
    pub raw: MultiModalPrediction,
    pub refined: Option<MultiModalPrediction>,
}

impl PredictionRecord {
    pub fn final_prediction(&self) -> &MultiModalPrediction {
        self.refined.as_ref().unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    pub tau_f: usize,
    pub records: Vec<PredictionRecord>,
}

impl PredictionLog {
    pub fn new(tau_f: usize) -> Self {
        Self { tau_f, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, frame: FrameIndex, agent: AgentId) -> Option<&PredictionRecord> {
        self.records
            .binary_search_by(|r| (r.frame, r.agent_id).cmp(&(frame, agent)))
            .ok()
            .map(|i| &self.records[i])
    }
}

fn write_prediction(out: &mut String, r: &PredictionRecord, tag: &str, p: &MultiModalPrediction) {
    for (k, (mode, conf)) in p.modes().iter().zip(p.confidences()).enumerate() {
        let _ = write!(out, "{},{},{},{tag},{k},{conf},{},{}", r.frame, r.agent_id, r.subset, r.origin.x, r.origin.y);
        for s in mode.steps() {
            let _ = write!(out, ",{},{}", s[0], s[1]);
        }
        out.push('\n');
    }
}

pub fn render_prediction_log(log: &PredictionLog) -> String {
    let mut out = format!("#predictions,tau_f={}\n", log.tau_f);
    for r in &log.records {
        write_prediction(&mut out, r, "raw", &r.raw);
        if let Some(p) = &r.refined {
            write_prediction(&mut out, r, "refined", p);
        }
    }
    out
}

pub fn write_prediction_log(log: &PredictionLog, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_prediction_log(log))?;
    Ok(())
}

pub fn read_prediction_log(path: impl AsRef<Path>) -> Result<PredictionLog> {
    parse_prediction_log(&std::fs::read_to_string(path)?)
}

struct Pending {
    frame: FrameIndex,
    agent_id: AgentId,
    subset: Subset,
    origin: Position2,
    raw: Vec<(MovementTrajectory, f64)>,
    refined: Vec<(MovementTrajectory, f64)>,
}

fn assemble(p: Pending, line: usize) -> Result<PredictionRecord> {
    let build = |modes: Vec<(MovementTrajectory, f64)>| {
        let (m, c): (Vec<_>, Vec<_>) = modes.into_iter().unzip();
        MultiModalPrediction::from_normalized(p.agent_id, p.frame, m, c).map_err(|e| Error::Parse { line, message: e.to_string() })
    };
    let raw = build(p.raw)?;
    let refined = if p.refined.is_empty() { None } else { Some(build(p.refined)?) };
    Ok(PredictionRecord { frame: p.frame, agent_id: p.agent_id, subset: p.subset, origin: p.origin, raw, refined })
}

pub fn parse_prediction_log(text: &str) -> Result<PredictionLog> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, message: String| Error::Parse { line: line + 1, message };
    let (_, header) = lines.next().ok_or_else(|| err(0, "empty prediction log".into()))?;
    let tau_f: usize = header
        .strip_prefix("#predictions,tau_f=")
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .ok_or_else(|| err(0, format!("bad header '{header}'")))?;
    let mut log = PredictionLog::new(tau_f);
    let mut pending: Option<Pending> = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 + 2 * tau_f {
            return Err(err(i, format!("expected {} fields, found {}", 8 + 2 * tau_f, fields.len())));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j].parse::<f64>().map_err(|_| err(i, format!("field {} is not a number: '{}'", j + 1, fields[j])))
        };
        let frame: FrameIndex = fields[0].parse().map_err(|_| err(i, "bad frame".into()))?;
        let agent_id = AgentId(fields[1].parse().map_err(|_| err(i, "bad agent id".into()))?);
        let subset: Subset = fields[2].parse().map_err(|e: Error| err(i, e.to_string()))?;
        let tag = fields[3];
        let mode: usize = fields[4].parse().map_err(|_| err(i, "bad mode index".into()))?;
        let conf = num(5)?;
        let origin = Position2::new(num(6)?, num(7)?);
        let steps = (0..tau_f).map(|j| Ok([num(8 + 2 * j)?, num(9 + 2 * j)?])).collect::<Result<Vec<_>>>()?;
        let traj = MovementTrajectory::new(steps).map_err(|e| err(i, e.to_string()))?;
        let same = pending.as_ref().is_some_and(|p| p.frame == frame && p.agent_id == agent_id);
        if !same {
            if let Some(p) = pending.take() {
                if (p.frame, p.agent_id) >= (frame, agent_id) {
                    return Err(err(i, "records out of order".into()));
                }
                log.records.push(assemble(p, i)?);
            }
            pending = Some(Pending { frame, agent_id, subset, origin, raw: Vec::new(), refined: Vec::new() });
        }
        let p = pending.as_mut().expect("set above");
        if p.subset != subset || p.origin != origin {
            return Err(err(i, "subset or origin differs within one record".into()));
        }
        let bucket = match tag {
            "raw" if p.refined.is_empty() => &mut p.raw,
            "refined" => &mut p.refined,
            _ => return Err(err(i, format!("unexpected tag '{tag}'"))),
        };
        if bucket.len() != mode {
            return Err(err(i, format!("mode index {mode} out of sequence")));
        }
        bucket.push((traj, conf));
    }
    if let Some(p) = pending {
        log.records.push(assemble(p, text.lines().count())?);
    }
    Ok(log)
}

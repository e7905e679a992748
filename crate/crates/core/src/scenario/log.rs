//! Line-oriented scenario log.
//!
//! ```text
//! #meta,duration=<n>,ego=<id>[,roi_halfwidth=<m>]
//! #lane,<id>,x0,y0,x1,y1,...
//! frame,agent_id,visible,x,y
//! ```
//!
//! `visible` is `0` or `1`; `x` and `y` are empty when `visible=0`. Numbers
//! are written with the shortest representation that parses back to the
//! same `f64`, so write/read is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{AgentTrack, Scenario};
use crate::error::{Error, Result};
use crate::types::{AgentId, FrameIndex, LaneMap, Position2};

const DEFAULT_ROI_HALFWIDTH: f64 = 15.0;

pub fn render_log(scenario: &Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "#meta,duration={},ego={},roi_halfwidth={}",
        scenario.duration, scenario.ego_track.agent_id, scenario.lane_map.roi_halfwidth
    );
    for (i, lane) in scenario.lane_map.centerlines.iter().enumerate() {
        let _ = write!(out, "#lane,{i}");
        for p in lane {
            let _ = write!(out, ",{},{}", p.x, p.y);
        }
        out.push('\n');
    }
    let mut rows: Vec<(FrameIndex, AgentId, Option<Position2>)> = Vec::new();
    for track in std::iter::once(&scenario.ego_track).chain(&scenario.tracks) {
        for (i, p) in track.positions.iter().enumerate() {
            rows.push((track.start_frame + i, track.agent_id, *p));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    for (frame, id, p) in rows {
        match p {
            Some(p) => {
                let _ = writeln!(out, "{frame},{id},1,{},{}", p.x, p.y);
            }
            None => {
                let _ = writeln!(out, "{frame},{id},0,,");
            }
        }
    }
    out
}

pub fn write_log(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_log(scenario))?;
    Ok(())
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Scenario> {
    parse_log(&std::fs::read_to_string(path)?)
}

fn parse_num<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse { line, message: format!("invalid {what} '{field}'") })
}

pub fn parse_log(text: &str) -> Result<Scenario> {
    let mut duration: Option<usize> = None;
    let mut ego: Option<AgentId> = None;
    let mut roi = DEFAULT_ROI_HALFWIDTH;
    let mut lanes: BTreeMap<usize, (usize, Vec<Position2>)> = BTreeMap::new();
    // agent -> (first line, entries)
    let mut records: BTreeMap<AgentId, Vec<(usize, FrameIndex, Option<Position2>)>> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix("#meta,") {
            for kv in rest.split(',') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { line, message: format!("meta field '{kv}' is not key=value") })?;
                match k.trim() {
                    "duration" => duration = Some(parse_num(v, "duration", line)?),
                    "ego" => ego = Some(AgentId(parse_num(v, "ego id", line)?)),
                    "roi_halfwidth" => roi = parse_num(v, "roi_halfwidth", line)?,
                    other => {
                        return Err(Error::Parse { line, message: format!("unknown meta key '{other}'") });
                    }
                }
            }
            continue;
        }
        if let Some(rest) = l.strip_prefix("#lane,") {
            let fields: Vec<&str> = rest.split(',').collect();
            let id: usize = parse_num(fields[0], "lane id", line)?;
            let coords = &fields[1..];
            if coords.len() < 4 || !coords.len().is_multiple_of(2) {
                return Err(Error::Parse { line, message: "lane needs at least two x,y pairs".into() });
            }
            let pts = coords
                .chunks(2)
                .map(|c| Ok(Position2::new(parse_num(c[0], "lane x", line)?, parse_num(c[1], "lane y", line)?)))
                .collect::<Result<Vec<_>>>()?;
            if lanes.insert(id, (line, pts)).is_some() {
                return Err(Error::Parse { line, message: format!("duplicate lane id {id}") });
            }
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse { line, message: format!("expected 5 fields, found {}", fields.len()) });
        }
        let frame: FrameIndex = parse_num(fields[0], "frame", line)?;
        let agent = AgentId(parse_num(fields[1], "agent id", line)?);
        let position = match fields[2].trim() {
            "1" => {
                if fields[3].trim().is_empty() || fields[4].trim().is_empty() {
                    return Err(Error::Parse { line, message: "visible record is missing x,y".into() });
                }
                let p = Position2::new(parse_num(fields[3], "x", line)?, parse_num(fields[4], "y", line)?);
                if !p.is_finite() {
                    return Err(Error::Parse { line, message: "non-finite position".into() });
                }
                Some(p)
            }
            "0" => {
                if !fields[3].trim().is_empty() || !fields[4].trim().is_empty() {
                    return Err(Error::Parse { line, message: "invisible record carries x,y".into() });
                }
                None
            }
            other => return Err(Error::Parse { line, message: format!("visible must be 0 or 1, got '{other}'") }),
        };
        records.entry(agent).or_default().push((line, frame, position));
    }

    let duration = duration.ok_or(Error::Parse { line: 0, message: "missing #meta duration".into() })?;
    let ego = ego.ok_or(Error::Parse { line: 0, message: "missing #meta ego".into() })?;

    let mut centerlines = Vec::with_capacity(lanes.len());
    for (expected, (id, (line, pts))) in lanes.into_iter().enumerate() {
        if id != expected {
            return Err(Error::Parse { line, message: format!("lane ids must be 0..n in order, got {id}") });
        }
        centerlines.push(pts);
    }
    let lane_map = LaneMap::new(centerlines, roi).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;

    let mut ego_track = None;
    let mut tracks = Vec::new();
    for (agent, mut recs) in records {
        recs.sort_by_key(|r| r.1);
        let start = recs[0].1;
        for (i, r) in recs.iter().enumerate() {
            if r.1 != start + i {
                return Err(Error::Parse {
                    line: r.0,
                    message: format!("agent {agent}: frame {} breaks the contiguous track starting at {start}", r.1),
                });
            }
            if r.1 >= duration {
                return Err(Error::Parse { line: r.0, message: format!("frame {} beyond duration {duration}", r.1) });
            }
        }
        let track = AgentTrack::new(agent, start, recs.iter().map(|r| r.2).collect());
        if agent == ego {
            ego_track = Some(track);
        } else {
            tracks.push(track);
        }
    }
    let ego_track = ego_track.ok_or(Error::Parse { line: 0, message: format!("no records for ego {ego}") })?;
    let scenario = Scenario { duration, lane_map, tracks, ego_track };
    scenario.validate().map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GeneratorConfig};

    #[test]
    fn generated_round_trip() {
        for seed in 0..4 {
            let s = generate_scenario(seed, &GeneratorConfig::default()).unwrap();
            let back = parse_log(&render_log(&s)).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn visible_without_coordinates_names_line() {
        let text = "#meta,duration=3,ego=0\n#lane,0,0,0,10,0\n0,0,1,0,0\n1,0,1,1,0\n1,5,1,,\n2,0,1,2,0\n";
        match parse_log(text).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("missing x,y"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_meta_rejected() {
        assert!(parse_log("0,0,1,0,0\n").is_err());
        assert!(parse_log("#meta,duration=1\n0,0,1,0,0\n").is_err());
    }

    #[test]
    fn hand_written_fixture() {
        let text = "\
#meta,duration=3,ego=0
#lane,0,0,0,100,0
0,0,1,0,0
0,7,1,10.5,1.25
1,0,1,1,0
1,7,0,,
2,0,1,2,0
2,7,1,12.5,1.5
";
        let s = parse_log(text).unwrap();
        assert_eq!(s.duration, 3);
        assert_eq!(s.ego_track.agent_id, AgentId(0));
        assert_eq!(s.lane_map.centerlines, vec![vec![Position2::new(0.0, 0.0), Position2::new(100.0, 0.0)]]);
        assert_eq!(s.lane_map.roi_halfwidth, 15.0);
        assert_eq!(s.tracks.len(), 1);
        let t = &s.tracks[0];
        assert_eq!(t.agent_id, AgentId(7));
        assert_eq!(t.start_frame, 0);
        assert_eq!(
            t.positions,
            vec![Some(Position2::new(10.5, 1.25)), None, Some(Position2::new(12.5, 1.5))]
        );
    }

    #[test]
    fn gap_in_track_rejected() {
        let text = "#meta,duration=3,ego=0\n0,0,1,0,0\n1,0,1,0,0\n2,0,1,0,0\n0,4,1,0,0\n2,4,1,0,0\n";
        assert!(matches!(parse_log(text), Err(Error::Parse { line: 6, .. })));
    }
}

//! Plain-text checkpoint container for a forecaster and, optionally, the
//! covariance net of a differentiable filter.
//!
//! Layout, one item per line, fields separated by single spaces:
//!
//! ```text
//! streamcast-checkpoint 1
//! stage <pretrain|finetune|stream>
//! horizon <tau_h> <tau_f> <K>
//! model learned <input_dim> <hidden> <feature_dim>
//!   | model analytic <velocity_frames> <turn_delta> <max_turn_rate>
//! params <n>
//! <n lines, one parameter each>
//! filter <hidden> <q> <sigma0> <init_r> <index|greedy>      (optional)
//! filter-params <m>                                         (with filter)
//! <m lines>
//! end
//! ```
//!
//! Numbers use Rust's shortest round-trip float formatting, so writing and
//! reading a checkpoint reproduces every parameter bit for bit. Learned
//! parameters are stored in the flat order of `LearnedModel::params`:
//! encoder, regression head, confidence head, single-mode head, each as
//! layer-wise row-major weights followed by biases.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::{AnalyticModel, ForecastModel, LearnedArch, LearnedModel};
use crate::dfilter::{CovarianceNet, DfConfig, DifferentiableFilter, ModeAssociation};
use crate::error::{Error, Result};
use crate::types::HorizonConfig;

pub const CHECKPOINT_MAGIC: &str = "streamcast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Last training stage a checkpoint went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckpointStage {
    Pretrain,
    Finetune,
    Stream,
}

impl fmt::Display for CheckpointStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckpointStage::Pretrain => "pretrain",
            CheckpointStage::Finetune => "finetune",
            CheckpointStage::Stream => "stream",
        })
    }
}

impl FromStr for CheckpointStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(CheckpointStage::Pretrain),
            "finetune" => Ok(CheckpointStage::Finetune),
            "stream" => Ok(CheckpointStage::Stream),
            other => Err(Error::InvalidConfig(format!("unknown stage '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: CheckpointStage,
    pub model: ForecastModel,
    pub filter: Option<DifferentiableFilter>,
}

fn push_floats(out: &mut String, values: &[f64]) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::Checkpoint(format!("non-finite parameter {v}")));
        }
        let _ = writeln!(out, "{v}");
    }
    Ok(())
}

fn association_name(a: ModeAssociation) -> &'static str {
    match a {
        ModeAssociation::Index => "index",
        ModeAssociation::Greedy => "greedy",
    }
}

impl Checkpoint {
    pub fn render(&self) -> Result<String> {
        let h = self.model.horizon();
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nstage {}\nhorizon {} {} {}\n", self.stage, h.tau_h, h.tau_f, h.k);
        match &self.model {
            ForecastModel::Analytic(m) => {
                let _ = writeln!(out, "model analytic {} {} {}\nparams 0", m.velocity_frames, m.turn_delta, m.max_turn_rate);
            }
            ForecastModel::Learned(m) => {
                let a = m.arch();
                let _ = writeln!(out, "model learned {} {} {}\nparams {}", a.input_dim, a.hidden, a.feature_dim, m.params().len());
                push_floats(&mut out, m.params())?;
            }
        }
        if let Some(df) = &self.filter {
            if df.tau_f() != h.tau_f || df.net.feature_dim() != self.model.feature_dim() {
                return Err(Error::Checkpoint("filter does not match the forecaster".into()));
            }
            let c = &df.config;
            let _ = writeln!(
                out,
                "filter {} {} {} {} {}\nfilter-params {}",
                df.net.hidden(),
                c.q,
                c.sigma0,
                c.init_r,
                association_name(c.association),
                df.net.params().len()
            );
            push_floats(&mut out, df.net.params())?;
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader { lines: text.lines().enumerate(), last: 0 };
        let head = r.fields()?;
        if head.first() != Some(&CHECKPOINT_MAGIC) {
            return Err(r.err("not a checkpoint"));
        }
        if head.get(1).and_then(|v| v.parse::<u32>().ok()) != Some(CHECKPOINT_VERSION) {
            return Err(r.err("unsupported checkpoint version"));
        }
        let stage = r.keyed("stage", 1)?[0].parse::<CheckpointStage>()?;
        let hz = r.keyed("horizon", 3)?;
        let horizon = HorizonConfig::new(r.num(hz[0])?, r.num(hz[1])?, r.num(hz[2])?)?;
        let m = r.keyed("model", 4)?;
        let kind = m[0].to_string();
        let (a, b, c) = (m[1].to_string(), m[2].to_string(), m[3].to_string());
        let count = r.keyed("params", 1)?[0];
        let n: usize = r.num(count)?;
        let params = r.floats(n)?;
        let model = match kind.as_str() {
            "learned" => {
                let arch = LearnedArch { input_dim: r.num(&a)?, hidden: r.num(&b)?, feature_dim: r.num(&c)? };
                ForecastModel::Learned(
                    LearnedModel::from_params(horizon, arch, params)
                        .ok_or_else(|| r.err("parameter count does not match the architecture"))?,
                )
            }
            "analytic" => {
                if n != 0 {
                    return Err(r.err("analytic model has no parameters"));
                }
                let mut model = AnalyticModel::new(horizon);
                model.velocity_frames = r.num(&a)?;
                model.turn_delta = r.num(&b)?;
                model.max_turn_rate = r.num(&c)?;
                ForecastModel::Analytic(model)
            }
            other => return Err(r.err(&format!("unknown model kind '{other}'"))),
        };
        let next = r.fields()?;
        let filter = match next.first() {
            Some(&"end") => None,
            Some(&"filter") if next.len() == 6 => {
                let hidden: usize = r.num(next[1])?;
                let association = match next[5] {
                    "index" => ModeAssociation::Index,
                    "greedy" => ModeAssociation::Greedy,
                    other => return Err(r.err(&format!("unknown association '{other}'"))),
                };
                let config = DfConfig { q: r.num(next[2])?, sigma0: r.num(next[3])?, hidden, init_r: r.num(next[4])?, association };
                let count = r.keyed("filter-params", 1)?[0];
                let m: usize = r.num(count)?;
                let fp = r.floats(m)?;
                let net = CovarianceNet::from_params(model.feature_dim(), horizon.tau_f, hidden, fp)
                    .ok_or_else(|| r.err("filter parameter count does not match"))?;
                r.keyed("end", 0)?;
                Some(DifferentiableFilter::with_net(net, config))
            }
            _ => return Err(r.err("expected 'filter' or 'end'")),
        };
        if let Some((i, l)) = r.lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Parse { line: i + 1, message: format!("trailing content '{l}'") });
        }
        Ok(Self { stage, model, filter })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

struct Reader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: I,
    last: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn err(&self, message: &str) -> Error {
        Error::Parse { line: self.last, message: message.to_string() }
    }

    fn fields(&mut self) -> Result<Vec<&'a str>> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.split(' ').collect())
            }
            None => {
                self.last += 1;
                Err(self.err("unexpected end of checkpoint"))
            }
        }
    }

    fn keyed(&mut self, key: &str, n: usize) -> Result<Vec<&'a str>> {
        let f = self.fields()?;
        if f.first() != Some(&key) || f.len() != n + 1 {
            return Err(self.err(&format!("expected '{key}' with {n} fields")));
        }
        Ok(f[1..].to_vec())
    }

    fn num<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse::<T>().map_err(|_| self.err(&format!("bad number '{s}'")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let f = self.fields()?;
            if f.len() != 1 {
                return Err(self.err("expected one value per line"));
            }
            let v: f64 = self.num(f[0])?;
            if !v.is_finite() {
                return Err(self.err("non-finite parameter"));
            }
            out.push(v);
        }
        Ok(out)
    }
}

//! Capacity traces: constant levels, Bernoulli ON/OFF channels and recorded files.
//!
//! Each (device, resource) pair draws from its own ChaCha stream keyed on the
//! run seed, so adding a device never changes the traces of the others.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resource {
    Compute,
    Bandwidth,
}

impl Resource {
    pub fn name(self) -> &'static str {
        match self {
            Resource::Compute => "cpu",
            Resource::Bandwidth => "bw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Constant,
    Bernoulli,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// ON level (GHz or Mbps). Unused for file channels.
    #[serde(default)]
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_on: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Overrides the run seed for this channel only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChannelConfig {
    pub fn constant(level: f64) -> Self {
        ChannelConfig {
            kind: ChannelKind::Constant,
            level,
            p_on: None,
            path: None,
            seed: None,
        }
    }

    pub fn bernoulli(level: f64, p_on: f64) -> Self {
        ChannelConfig {
            kind: ChannelKind::Bernoulli,
            level,
            p_on: Some(p_on),
            path: None,
            seed: None,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(Error::config(
                format!("{field}.level"),
                format!("must be finite and >= 0, got {}", self.level),
            ));
        }
        match self.kind {
            ChannelKind::Constant => Ok(()),
            ChannelKind::Bernoulli => match self.p_on {
                Some(p) if (0.0..=1.0).contains(&p) => Ok(()),
                Some(p) => Err(Error::config(
                    format!("{field}.p_on"),
                    format!("must lie in [0, 1], got {p}"),
                )),
                None => Err(Error::config(
                    format!("{field}.p_on"),
                    "required for bernoulli channels",
                )),
            },
            ChannelKind::File => match self.path {
                Some(_) => Ok(()),
                None => Err(Error::config(format!("{field}.path"), "required for file channels")),
            },
        }
    }

    /// Produces the length-`horizon` trace for `device`'s `resource` and the
    /// metadata the average estimator needs.
    pub fn realize(
        &self,
        device: usize,
        resource: Resource,
        horizon: usize,
        run_seed: u64,
        base_dir: &Path,
    ) -> Result<(Trace, ChannelMeta)> {
        match self.kind {
            ChannelKind::Constant => Ok((
                constant_trace(self.level, horizon),
                ChannelMeta::Constant { level: self.level },
            )),
            ChannelKind::Bernoulli => {
                let p_on = self.p_on.unwrap_or(1.0);
                let mut rng = stream_rng(self.seed.unwrap_or(run_seed), device, resource);
                Ok((
                    sample_bernoulli_trace(self.level, p_on, horizon, &mut rng),
                    ChannelMeta::Bernoulli {
                        level: self.level,
                        p_on,
                    },
                ))
            }
            ChannelKind::File => {
                let rel = self.path.as_deref().unwrap_or(Path::new(""));
                let trace = load_trace(&base_dir.join(rel), horizon)?;
                let mean = trace.mean();
                Ok((trace, ChannelMeta::Recorded { mean }))
            }
        }
    }
}

/// What the average estimator knows about a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelMeta {
    Constant { level: f64 },
    Bernoulli { level: f64, p_on: f64 },
    /// Empirical mean of a recorded trace.
    Recorded { mean: f64 },
}

impl ChannelMeta {
    pub fn expected(&self) -> f64 {
        match *self {
            ChannelMeta::Constant { level } => level,
            ChannelMeta::Bernoulli { level, p_on } => p_on * level,
            ChannelMeta::Recorded { mean } => mean,
        }
    }
}

/// Realized compute and bandwidth traces of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTraces {
    pub cpu: Trace,
    pub bw: Trace,
    pub cpu_meta: Option<ChannelMeta>,
    pub bw_meta: Option<ChannelMeta>,
}

impl DeviceTraces {
    /// Traces with no channel metadata; the average estimator falls back to
    /// nothing and reports an error for these.
    pub fn new(cpu: Trace, bw: Trace) -> Self {
        DeviceTraces {
            cpu,
            bw,
            cpu_meta: None,
            bw_meta: None,
        }
    }

    /// Constant traces, with metadata taken from their first entry.
    pub fn constant(cpu: Trace, bw: Trace) -> Self {
        let meta = |t: &Trace| {
            Some(ChannelMeta::Constant {
                level: t.values().first().copied().unwrap_or(0.0),
            })
        };
        DeviceTraces {
            cpu_meta: meta(&cpu),
            bw_meta: meta(&bw),
            cpu,
            bw,
        }
    }

    pub fn get(&self, resource: Resource) -> (&Trace, Option<&ChannelMeta>) {
        match resource {
            Resource::Compute => (&self.cpu, self.cpu_meta.as_ref()),
            Resource::Bandwidth => (&self.bw, self.bw_meta.as_ref()),
        }
    }

    pub fn horizon(&self) -> usize {
        self.cpu.len().min(self.bw.len())
    }
}

pub(crate) fn stream_rng(seed: u64, device: usize, resource: Resource) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match resource {
        Resource::Compute => 0,
        Resource::Bandwidth => 1,
    };
    // Stream 0 of every seed is left for non-channel consumers.
    rng.set_stream(1 + 2 * device as u64 + tag);
    rng
}

pub fn constant_trace(level: f64, horizon: usize) -> Trace {
    Trace::new(vec![level; horizon]).expect("constant trace level must be >= 0")
}

/// Each slot is independently `level` with probability `p_on`, else 0.
pub fn sample_bernoulli_trace<R: Rng + ?Sized>(level: f64, p_on: f64, horizon: usize, rng: &mut R) -> Trace {
    let values = (0..horizon)
        .map(|_| if rng.gen_bool(p_on) { level } else { 0.0 })
        .collect();
    Trace::new(values).expect("bernoulli level must be >= 0")
}

/// Reads one non-negative decimal per line and keeps the first `horizon` entries.
pub fn load_trace(path: &Path, horizon: usize) -> Result<Trace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::with_capacity(horizon);
    for (k, line) in text.lines().enumerate() {
        if values.len() == horizon {
            break;
        }
        let line_no = k + 1;
        let v: f64 = line.trim().parse().map_err(|e| Error::TraceParse {
            path: path.to_path_buf(),
            line: line_no,
            msg: format!("cannot parse {:?} as a number: {e}", line.trim()),
        })?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::TraceParse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("capacity must be finite and >= 0, got {v}"),
            });
        }
        values.push(v);
    }
    if values.len() < horizon {
        return Err(Error::ShortTrace {
            path: path.to_path_buf(),
            got: values.len(),
            need: horizon,
        });
    }
    Trace::new(values)
}

//! Sampled time series with hold or linear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::poly::PolySegment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Piecewise constant: the value holds until the next sample.
    Hold,
    /// Piecewise linear: first-order segments between samples.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub samples: Vec<(f64, f64)>,
    pub interpolation: Interpolation,
}

impl TimeSeries {
    pub fn new(samples: Vec<(f64, f64)>, interpolation: Interpolation) -> Result<Self, ConfigError> {
        if samples.is_empty() {
            return Err(ConfigError::Invalid("time series needs at least one sample".into()));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ConfigError::Invalid(format!(
                    "time series samples must be strictly increasing (t={} then t={})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(TimeSeries { samples, interpolation })
    }

    pub fn constant(v: f64) -> Self {
        TimeSeries { samples: vec![(0.0, v)], interpolation: Interpolation::Hold }
    }

    /// Parse CSV with header `time_s,value`.
    pub fn parse_csv(text: &str, path: &str, interpolation: Interpolation) -> Result<Self, ConfigError> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                if line != "time_s,value" {
                    return Err(ConfigError::Parse {
                        path: path.to_string(),
                        line: 1,
                        msg: format!("expected header `time_s,value`, got `{line}`"),
                    });
                }
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let parse = |s: Option<&str>, what: &str| -> Result<f64, ConfigError> {
                s.map(str::trim)
                    .filter(|s| !s.is_empty())
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| ConfigError::Parse {
                        path: path.to_string(),
                        line: lineno + 1,
                        msg: format!("invalid {what}"),
                    })
            };
            let t = parse(parts.next(), "time")?;
            let v = parse(parts.next(), "value")?;
            samples.push((t, v));
        }
        if samples.is_empty() {
            return Err(ConfigError::Parse {
                path: path.to_string(),
                line: 1,
                msg: "no samples".to_string(),
            });
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(ConfigError::Parse {
                    path: path.to_string(),
                    line: i + 3,
                    msg: format!("timestamps must be strictly increasing ({} then {})", w[0].0, w[1].0),
                });
            }
        }
        Ok(TimeSeries { samples, interpolation })
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.segment_at(t).eval(t)
    }

    /// The polynomial segment in force at `t`: constant before the first
    /// sample and after the last, first-order between samples in linear mode.
    pub fn segment_at(&self, t: f64) -> PolySegment {
        let s = &self.samples;
        let idx = s.partition_point(|&(ts, _)| ts <= t);
        if idx == 0 {
            return PolySegment::constant(s[0].1);
        }
        let (t0, v0) = s[idx - 1];
        if idx == s.len() {
            return PolySegment::constant(v0);
        }
        match self.interpolation {
            Interpolation::Hold => PolySegment::constant(v0),
            Interpolation::Linear => {
                let (t1, v1) = s[idx];
                PolySegment::new(t0, vec![v0, (v1 - v0) / (t1 - t0)])
            }
        }
    }

    /// Sample times after `t` (segment breakpoints a source must emit at).
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let idx = self.samples.partition_point(|&(ts, _)| ts <= t);
        self.samples.get(idx).map(|&(ts, _)| ts)
    }
}

//! Run artifacts: the structured event log and per-signal traces.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// One processed event. Serialized as one JSON object per line.
///
/// Kinds: `output` (a port published a value), `deliver` (a message landed
/// on an input), `requantize` (a solver renewed a quantized model), `sample`
/// (a sampler forwarded a value), `inject` (a channel accepted a message,
/// with its computed delay), `decision` (a controller acted), and `apply`
/// (a building put a shed request into force). Scalar deliveries are not
/// logged separately; they mirror the producing `output` record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t_s: f64,
    pub microstep: u32,
    pub source: String,
    pub kind: String,
    pub value: serde_json::Value,
}

#[derive(Clone, Debug, Default)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, rec: LogRecord) {
        self.records.push(rec);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Sampled signal traces, one series per `module.signal` name. At most one
/// sample per second count is kept: later microsteps overwrite earlier ones,
/// so traces are insensitive to same-instant event ordering.
#[derive(Clone, Debug, Default)]
pub struct TraceStore {
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
}

impl TraceStore {
    pub fn record(&mut self, name: &str, t: f64, v: f64) {
        let series = self.series.entry(name.to_string()).or_default();
        match series.last_mut() {
            Some(last) if last.0 == t => last.1 = v,
            Some(last) if last.0 > t => {}
            _ => series.push((t, v)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[(f64, f64)]> {
        self.series.get(name).map(|v| v.as_slice())
    }

    /// Last value at or before `t`.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let s = self.series.get(name)?;
        let idx = s.partition_point(|&(ts, _)| ts <= t);
        if idx == 0 {
            None
        } else {
            Some(s[idx - 1].1)
        }
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub t_end: f64,
    pub traces: TraceStore,
    pub events: EventLog,
}

impl RunOutput {
    /// Write one CSV per signal (`<name>.csv`, header `time_s,value`, time
    /// with nine decimal digits).
    pub fn write_traces(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, series) in &self.traces.series {
            let path = dir.join(format!("{name}.csv"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(f, "time_s,value")?;
            for (t, v) in series {
                writeln!(f, "{t:.9},{v}")?;
            }
        }
        Ok(())
    }

    pub fn write_events(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.events.to_jsonl())
    }
}

//! Training logs: one `key=value ...` record per optimizer step.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grpo::GrpoStepReport;

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TrainLog {
    lines: Vec<String>,
}

impl TrainLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, fields: &[(&str, String)]) {
        let mut line = String::new();
        for (i, (k, v)) in fields.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{k}={v}");
        }
        self.lines.push(line);
    }

    pub fn record_sft(&mut self, stage: &str, step: usize, epoch: usize, loss: f64) {
        self.record(&[
            ("stage", stage.to_string()),
            ("step", step.to_string()),
            ("epoch", epoch.to_string()),
            ("loss", format!("{loss:.9}")),
        ]);
    }

    pub fn record_grpo(&mut self, stage: &str, step: usize, epoch: usize, r: &GrpoStepReport) {
        self.record(&[
            ("stage", stage.to_string()),
            ("step", step.to_string()),
            ("epoch", epoch.to_string()),
            ("objective", format!("{:.9}", r.objective)),
            ("mean_reward", format!("{:.6}", r.mean_reward)),
            ("groups", r.groups.to_string()),
            ("skipped", r.skipped_groups.to_string()),
            ("mean_kl", format!("{:.9}", r.mean_kl)),
            ("clip_fraction", format!("{:.6}", r.clip_fraction)),
            ("grad_norm", format!("{:.9}", r.grad_norm)),
            ("kl_clamped", r.kl_clamped.to_string()),
        ]);
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.lines.extend(other.lines);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Reads one field back out of a record.
pub fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split(' ')
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

use std::fmt;

use super::config::PipelineConfig;
use crate::metrics::RougeTable;

/// Provenance of a run: enough to reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    /// Optimizer steps taken, per trained model.
    pub steps: Vec<(String, u64)>,
}

impl RunMeta {
    pub fn new(cfg: &PipelineConfig) -> Self {
        RunMeta { config_hash: cfg.hash(), seed: cfg.seed, steps: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub table: RougeTable,
    pub meta: RunMeta,
    /// Extra `key=value` facts (losses, counts).
    pub notes: Vec<(String, String)>,
}

impl Report {
    pub fn new(table: RougeTable, meta: RunMeta) -> Self {
        Report { table, meta, notes: Vec::new() }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    /// Machine-readable form, one `key=value` record per line.
    pub fn records(&self) -> Vec<String> {
        let mut out = vec![
            format!("report={}", self.table.title.replace(' ', "_")),
            format!("config_hash={}", self.meta.config_hash),
            format!("seed={}", self.meta.seed),
        ];
        out.extend(self.meta.steps.iter().map(|(name, n)| format!("steps.{}={n}", name.replace(' ', "_"))));
        out.extend(self.table.records());
        out.extend(self.notes.iter().map(|(k, v)| format!("{k}={v}")));
        out
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table)?;
        writeln!(f, "config {} seed {}", &self.meta.config_hash[..12.min(self.meta.config_hash.len())], self.meta.seed)?;
        for (name, n) in &self.meta.steps {
            writeln!(f, "{name}: {n} steps")?;
        }
        for (k, v) in &self.notes {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

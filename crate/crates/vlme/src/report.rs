//! Report envelope and renderers.
//!
//! Every report records the kit version, the command line that produced it,
//! the seeds, a digest of every manifest read and the effective
//! configuration. The thread count and output path are left out of the
//! recorded command since they cannot change the result.

use std::io::{self, Write};

use serde::Serialize;
use vlme_core::protocols::{EvalReport, MetricBlock, ProtocolKind};

use crate::manifest::LoadedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Serialize)]
pub struct Kit {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for Kit {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestDigest {
    pub path: String,
    pub dataset: String,
    pub sha256: String,
}

impl From<&LoadedDataset> for ManifestDigest {
    fn from(d: &LoadedDataset) -> Self {
        Self {
            path: d.path.display().to_string(),
            dataset: d.manifest.dataset_name.clone(),
            sha256: d.digest.clone(),
        }
    }
}

/// Plain rows for the text and csv renderers.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub kit: Kit,
    pub command: Vec<String>,
    pub seeds: Vec<u64>,
    pub manifests: Vec<ManifestDigest>,
    pub config: serde_json::Value,
    pub result: serde_json::Value,
    #[serde(skip)]
    pub table: Table,
}

const DROPPED_FLAGS: [&str; 3] = ["--threads", "-j", "--out"];

/// The command line as recorded in reports.
pub fn recorded_command(args: &[String]) -> Vec<String> {
    let mut out = vec![String::from("vlme")];
    let mut skip_next = false;
    for a in args.iter().skip(1) {
        if skip_next {
            skip_next = false;
            continue;
        }
        if DROPPED_FLAGS.contains(&a.as_str()) {
            skip_next = true;
            continue;
        }
        if DROPPED_FLAGS.iter().any(|f| a.starts_with(&format!("{f}="))) {
            continue;
        }
        out.push(a.clone());
    }
    out
}

pub fn pct(v: f64) -> String {
    format!("{v:.2}")
}

fn metric_cells(protocol: ProtocolKind, m: &MetricBlock) -> Vec<String> {
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), pct);
    match protocol {
        ProtocolKind::BaseToNew => vec![show(m.base_acc), show(m.new_acc), show(m.hm)],
        _ => vec![show(m.acc)],
    }
}

/// One row per dataset and seed, a mean row per dataset and an overall average.
pub fn eval_table(r: &EvalReport) -> Table {
    let mut t = match r.protocol {
        ProtocolKind::BaseToNew => Table::new(&["dataset", "seed", "base", "new", "hm"]),
        _ => Table::new(&["dataset", "seed", "acc"]),
    };
    for d in &r.datasets {
        if d.per_seed.len() > 1 || !r.seeds.is_empty() {
            for (seed, block) in r.seeds.iter().zip(&d.per_seed) {
                let mut row = vec![d.dataset.clone(), seed.to_string()];
                row.extend(metric_cells(r.protocol, block));
                t.push(row);
            }
        }
        let mut row = vec![d.dataset.clone(), "mean".into()];
        row.extend(metric_cells(r.protocol, &d.averaged));
        t.push(row);
    }
    if r.datasets.len() > 1 {
        let mut row = vec!["average".into(), "mean".into()];
        row.extend(metric_cells(r.protocol, &r.average));
        t.push(row);
    }
    t
}

impl Report {
    pub fn render(&self, format: OutputFormat, out: &mut dyn Write) -> io::Result<()> {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut *out, self)?;
                writeln!(out)
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.table.headers)?;
                for row in &self.table.rows {
                    w.write_record(row)?;
                }
                w.flush()
            }
            OutputFormat::Text => self.render_text(out),
        }
    }

    fn render_text(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "# {} {}", self.kit.name, self.kit.version)?;
        writeln!(out, "# command: {}", self.command.join(" "))?;
        if !self.seeds.is_empty() {
            let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            writeln!(out, "# seeds: {}", seeds.join(", "))?;
        }
        for m in &self.manifests {
            writeln!(out, "# manifest: {} ({}) sha256 {}", m.path, m.dataset, m.sha256)?;
        }
        let t = &self.table;
        let mut widths: Vec<usize> = t.headers.iter().map(String::len).collect();
        for row in &t.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        writeln!(out, "{}", line(&t.headers))?;
        for row in &t.rows {
            writeln!(out, "{}", line(row))?;
        }
        Ok(())
    }
}

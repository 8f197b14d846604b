//! Result files: CSV tables plus one JSON metadata sidecar per run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use coarse_osc::continuation::{Branch, Termination};

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Column documentation, echoed into the sidecar.
    pub doc: String,
}

impl Table {
    pub fn new(name: &str, header: &[&str], doc: &str) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            doc: doc.into(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-tripping decimal form, so identical runs write identical
/// bytes.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per branch point; `params` fixes the parameter columns. The
/// termination reason goes into the last column of the final row.
pub fn branch_table(name: &str, branch: &Branch, extra_doc: &str) -> Table {
    let dim = branch.points.first().map_or(0, |p| p.z.len());
    let half = dim / 2;
    let mut header: Vec<String> = branch.free.iter().map(|p| p.name().to_string()).collect();
    header.extend((0..half).map(|k| format!("a{k}")));
    header.extend((0..half).map(|k| format!("b{k}")));
    for k in 0..2 {
        header.push(format!("ev{k}_re"));
        header.push(format!("ev{k}_im"));
    }
    for h in ["stable", "fold_test", "hopf_test", "theta", "termination"] {
        header.push(h.into());
    }
    let mut t = Table {
        name: name.into(),
        header,
        rows: Vec::new(),
        doc: format!(
            "one row per accepted point: continued parameters, coarse fixed point (a_k, b_k), \
             two leading eigenvalues, stability, det(J-I), Hopf test, theta; termination reason on the last row. {extra_doc}"
        ),
    };
    for (i, p) in branch.points.iter().enumerate() {
        let mut row: Vec<String> = p.params.iter().map(|(_, v)| num(*v)).collect();
        row.extend(p.z.iter().map(|v| num(*v)));
        for k in 0..2 {
            match p.eigenvalues.get(k) {
                Some(l) => {
                    row.push(num(l.re));
                    row.push(num(l.im));
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        row.push(p.stable.to_string());
        row.push(num(p.fold_test));
        row.push(opt(p.hopf_test));
        row.push(opt(p.theta));
        row.push(if i + 1 == branch.points.len() {
            branch.termination.to_string()
        } else {
            String::new()
        });
        t.push(row);
    }
    t
}

pub fn termination_json(t: &Termination) -> Value {
    let mut v = json!({ "kind": t.tag(), "detail": t.to_string() });
    match t {
        Termination::PhysicsBreakdown {
            desync_fraction,
            params,
        } => {
            v["desync_fraction"] = json!(desync_fraction);
            v["params"] = params
                .iter()
                .map(|(p, x)| (p.name().to_string(), json!(x)))
                .collect::<Map<_, _>>()
                .into();
        }
        Termination::Resonance { theta } => v["theta"] = json!(theta),
        _ => {}
    }
    v
}

/// Collects the tables and facts of one run, then writes them.
pub struct Report {
    pub task: String,
    pub tables: Vec<Table>,
    pub terminations: Vec<(String, Termination)>,
    pub summary: Map<String, Value>,
    pub seeds: Vec<u64>,
    started: Instant,
}

impl Report {
    pub fn new(task: &str) -> Self {
        Self {
            task: task.into(),
            tables: Vec::new(),
            terminations: Vec::new(),
            summary: Map::new(),
            seeds: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    pub fn write(&self, dir: &Path, config: &Value) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut files = Map::new();
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&t.header)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
            files.insert(
                format!("{}.csv", t.name),
                json!({ "columns": t.header, "description": t.doc }),
            );
            written.push(path);
        }
        let meta = json!({
            "library": "coarse-osc",
            "version": env!("CARGO_PKG_VERSION"),
            "task": self.task,
            "config": config,
            "realization_seeds": self.seeds,
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
            "terminations": self
                .terminations
                .iter()
                .map(|(what, t)| { let mut v = termination_json(t); v["curve"] = json!(what); v })
                .collect::<Vec<_>>(),
            "summary": self.summary,
            "files": files,
        });
        let path = dir.join(format!("{}.meta.json", self.task));
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
        written.push(path);
        Ok(written)
    }
}

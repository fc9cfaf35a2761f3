use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use fpseg::data::Domain;
use fpseg::metrics::percent;
use fpseg::training::{evaluate, Checkpoint, DEFAULT_THRESHOLD};

use super::eval::eval_samples;
use crate::data::{select, DataArgs};
use crate::run::{self, RunManifest};

/// Summarize finished runs; with a dataset, also tabulate target Dice.
#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories, or parents of them (e.g. a sweep directory).
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, env = "FPSEG_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory for `runs.csv`/`runs.md` and, with data, `dice.csv`/`dice.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Summary {
    dir: PathBuf,
    manifest: RunManifest,
    steps: usize,
    last: Option<serde_json::Value>,
}

fn run_dirs(roots: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for root in roots {
        if root.join(run::MANIFEST).is_file() {
            out.push(root.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(root)
            .with_context(|| format!("reading {}", root.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(run::MANIFEST).is_file())
            .collect();
        if children.is_empty() {
            anyhow::bail!("{} holds no run", root.display());
        }
        children.sort();
        out.extend(children);
    }
    Ok(out)
}

fn summarize(dir: &Path) -> Result<Summary> {
    let manifest = RunManifest::read(dir)?;
    let log = std::fs::read_to_string(dir.join(run::LOG)).unwrap_or_default();
    let lines: Vec<&str> = log.lines().filter(|l| !l.trim().is_empty()).collect();
    let last = match lines.last() {
        Some(l) => Some(
            serde_json::from_str(l)
                .with_context(|| format!("parsing {}", dir.join(run::LOG).display()))?,
        ),
        None => None,
    };
    Ok(Summary {
        dir: dir.to_path_buf(),
        manifest,
        steps: lines.len(),
        last,
    })
}

fn field(v: &Option<serde_json::Value>, key: &str) -> String {
    let Some(v) = v.as_ref().and_then(|v| v.get(key)) else {
        return String::new();
    };
    let last = match v {
        serde_json::Value::Array(a) => a.last(),
        other => Some(other),
    };
    last.and_then(serde_json::Value::as_f64)
        .map(|x| format!("{x:.4}"))
        .unwrap_or_default()
}

fn runs_table(runs: &[Summary]) -> (String, String) {
    let mut csv = String::from("run,variant,alpha,seed,steps,seg,adv,total,seconds\n");
    let mut md = String::from("| Run | Variant | α | Seed | Steps | Seg | Adv | Total | Seconds |\n|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in runs {
        let m = &r.manifest;
        let secs = m
            .finished_unix
            .map(|f| f.saturating_sub(m.started_unix).to_string())
            .unwrap_or_else(|| "running".into());
        let cells = [
            r.dir.display().to_string(),
            m.variant.clone(),
            m.config.alpha.to_string(),
            m.seed.to_string(),
            r.steps.to_string(),
            field(&r.last, "seg"),
            field(&r.last, "adv"),
            field(&r.last, "total"),
            secs,
        ];
        writeln!(csv, "{}", cells.join(",")).unwrap();
        writeln!(md, "| {} |", cells.join(" | ")).unwrap();
    }
    (csv, md)
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let runs = run_dirs(&args.runs)?
        .iter()
        .map(|d| summarize(d))
        .collect::<Result<Vec<_>>>()?;
    let (csv, md) = runs_table(&runs);
    print!("{md}");
    let mut files = vec![("runs.csv", csv), ("runs.md", md)];

    if let Some(root) = &args.data_root {
        let data = DataArgs {
            data_root: root.clone(),
            manifest: args.manifest.clone(),
        };
        let catalog = data.catalog()?;
        let all_targets = select(&catalog, Domain::Target, &[])?;
        let mut table: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
        for r in &runs {
            let path = r.dir.join(run::FINAL_CHECKPOINT);
            if !path.is_file() {
                log::warn!("{} has no final checkpoint; skipped", r.dir.display());
                continue;
            }
            let ckpt = Checkpoint::load(&path)?;
            let names = if r.manifest.target_databases.is_empty() {
                all_targets.clone()
            } else {
                r.manifest.target_databases.clone()
            };
            let samples = eval_samples(&catalog, &names, ckpt.config.target_protocol)?;
            let report = evaluate(&ckpt, &samples, DEFAULT_THRESHOLD)?;
            let label = format!("{} α={}", r.manifest.variant, r.manifest.config.alpha);
            table.push((
                label,
                report
                    .rows
                    .into_iter()
                    .map(|s| (s.database, s.dice))
                    .collect(),
            ));
        }
        let dbs: Vec<String> = {
            let mut v: Vec<String> = table.iter().flat_map(|(_, m)| m.keys().cloned()).collect();
            v.sort();
            v.dedup();
            v
        };
        let mut csv = format!("run,{}\n", dbs.join(","));
        let mut md = format!(
            "| Run | {} |\n|---|{}\n",
            dbs.join(" | "),
            "---:|".repeat(dbs.len())
        );
        for (label, scores) in &table {
            let cells: Vec<String> = dbs
                .iter()
                .map(|d| scores.get(d).map(|&v| percent(v)).unwrap_or_default())
                .collect();
            writeln!(csv, "{label},{}", cells.join(",")).unwrap();
            writeln!(md, "| {label} | {} |", cells.join(" | ")).unwrap();
        }
        println!();
        print!("{md}");
        files.push(("dice.csv", csv));
        files.push(("dice.md", md));
    }

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, body) in files {
            std::fs::write(dir.join(name), body)?;
        }
    }
    Ok(())
}

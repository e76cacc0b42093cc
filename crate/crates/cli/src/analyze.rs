//! Reports computed from cache CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mfabc::cache_io::load_caches;
use mfabc::{compute_ess, ParticleCache};

/// Metrics of one generation, or of a whole run when `generation` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub generation: Option<usize>,
    pub proposals: f64,
    pub hi_runs: f64,
    pub ess: f64,
    pub sim_time_s: f64,
    pub means: Vec<f64>,
}

impl Metrics {
    pub fn time_per_proposal(&self) -> f64 {
        self.sim_time_s / self.proposals
    }

    pub fn efficiency(&self) -> f64 {
        self.ess / self.sim_time_s
    }

    fn key(&self) -> String {
        self.generation.map_or_else(|| "all".to_string(), |g| g.to_string())
    }
}

fn weighted_means(cache: &ParticleCache) -> Vec<f64> {
    let dim = cache.entries.first().map_or(0, |e| e.theta.dim());
    let total: f64 = cache.entries.iter().map(|e| e.weight).sum();
    (0..dim)
        .map(|k| cache.entries.iter().map(|e| e.weight * e.theta[k]).sum::<f64>() / total)
        .collect()
}

pub fn generation_metrics(cache: &ParticleCache) -> Metrics {
    Metrics {
        generation: Some(cache.generation),
        proposals: cache.len() as f64,
        hi_runs: cache.hi_count() as f64,
        ess: compute_ess(cache.entries.iter().map(|e| e.weight)).unwrap_or(0.0),
        sim_time_s: cache.total_sim_time(),
        means: weighted_means(cache),
    }
}

/// Per-generation rows followed by the whole-run row: final ESS and means
/// over total simulation time.
pub fn run_metrics(caches: &[ParticleCache]) -> Vec<Metrics> {
    let mut rows: Vec<Metrics> = caches.iter().map(generation_metrics).collect();
    if let Some(last) = rows.last().cloned() {
        rows.push(Metrics {
            generation: None,
            proposals: rows.iter().map(|m| m.proposals).sum(),
            hi_runs: rows.iter().map(|m| m.hi_runs).sum(),
            ess: last.ess,
            sim_time_s: rows.iter().map(|m| m.sim_time_s).sum(),
            means: last.means,
        });
    }
    rows
}

/// A run on disk: its label and cache files.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub label: String,
    pub files: Vec<PathBuf>,
}

fn generation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(g) = name.strip_prefix("generation_").and_then(|r| r.strip_suffix(".csv")) {
            if let Ok(g) = g.parse() {
                found.push((g, path));
            }
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Resolve a path to runs: a cache CSV, a run directory, or a directory of
/// replicate run directories.
pub fn discover(path: &Path) -> Result<Vec<RunFiles>> {
    let label = path.display().to_string();
    if path.is_file() {
        return Ok(vec![RunFiles {
            label,
            files: vec![path.to_path_buf()],
        }]);
    }
    if !path.is_dir() {
        bail!("{} does not exist", path.display());
    }
    let files = generation_files(path)?;
    if !files.is_empty() {
        return Ok(vec![RunFiles { label, files }]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let mut runs = Vec::new();
    for dir in subdirs {
        let files = generation_files(&dir)?;
        if !files.is_empty() {
            runs.push(RunFiles {
                label: dir.display().to_string(),
                files,
            });
        }
    }
    if runs.is_empty() {
        bail!("no cache files found under {}", path.display());
    }
    Ok(runs)
}

pub fn load_run(run: &RunFiles) -> Result<Vec<ParticleCache>> {
    let mut caches = Vec::new();
    for f in &run.files {
        caches.extend(load_caches(f).with_context(|| format!("reading {}", f.display()))?);
    }
    if caches.is_empty() {
        bail!("{} holds no particles", run.label);
    }
    caches.sort_by_key(|c| c.generation);
    Ok(caches)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Replicate mean and standard deviation of each metric, per generation key.
pub fn aggregate(runs: &[Vec<Metrics>]) -> Vec<(Metrics, Metrics)> {
    let mut keyed: BTreeMap<(bool, usize), Vec<&Metrics>> = BTreeMap::new();
    for m in runs.iter().flatten() {
        keyed
            .entry((m.generation.is_none(), m.generation.unwrap_or(0)))
            .or_default()
            .push(m);
    }
    keyed
        .into_values()
        .map(|group| {
            let stat = |f: &dyn Fn(&Metrics) -> f64| mean_sd(&group.iter().map(|m| f(m)).collect::<Vec<_>>());
            let dim = group[0].means.len();
            let (pm, ps) = stat(&|m| m.proposals);
            let (hm, hs) = stat(&|m| m.hi_runs);
            let (em, es) = stat(&|m| m.ess);
            let (tm, ts) = stat(&|m| m.sim_time_s);
            let (mm, ms): (Vec<f64>, Vec<f64>) = (0..dim)
                .map(|k| stat(&|m| m.means.get(k).copied().unwrap_or(f64::NAN)))
                .unzip();
            let generation = group[0].generation;
            (
                Metrics {
                    generation,
                    proposals: pm,
                    hi_runs: hm,
                    ess: em,
                    sim_time_s: tm,
                    means: mm,
                },
                Metrics {
                    generation,
                    proposals: ps,
                    hi_runs: hs,
                    ess: es,
                    sim_time_s: ts,
                    means: ms,
                },
            )
        })
        .collect()
}

fn metric_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "run",
        "generation",
        "proposals",
        "hi_runs",
        "ess",
        "sim_time_s",
        "time_per_proposal_s",
        "efficiency_per_s",
        "efficiency_per_min",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=dim).map(|k| format!("mean_theta_{k}")));
    h
}

fn metric_row(label: &str, m: &Metrics) -> Vec<String> {
    let mut row = vec![
        label.to_string(),
        m.key(),
        m.proposals.to_string(),
        m.hi_runs.to_string(),
        m.ess.to_string(),
        m.sim_time_s.to_string(),
        m.time_per_proposal().to_string(),
        m.efficiency().to_string(),
        (60.0 * m.efficiency()).to_string(),
    ];
    row.extend(m.means.iter().map(f64::to_string));
    row
}

/// Standard-deviation rows carry the spread of each derived column as
/// well, so they are written from replicate values.
fn sd_row(label: &str, mean: &Metrics, sd: &Metrics, runs: &[Vec<Metrics>]) -> Vec<String> {
    let per_run: Vec<&Metrics> = runs
        .iter()
        .flatten()
        .filter(|m| m.generation == mean.generation)
        .collect();
    let tpp = mean_sd(&per_run.iter().map(|m| m.time_per_proposal()).collect::<Vec<_>>()).1;
    let eff = mean_sd(&per_run.iter().map(|m| m.efficiency()).collect::<Vec<_>>()).1;
    let mut row = vec![
        label.to_string(),
        sd.key(),
        sd.proposals.to_string(),
        sd.hi_runs.to_string(),
        sd.ess.to_string(),
        sd.sim_time_s.to_string(),
        tpp.to_string(),
        eff.to_string(),
        (60.0 * eff).to_string(),
    ];
    row.extend(sd.means.iter().map(f64::to_string));
    row
}

/// Per-run rows, plus replicate mean and standard deviation rows when
/// there is more than one run.
pub fn write_report<W: Write>(out: W, runs: &[(String, Vec<Metrics>)]) -> Result<()> {
    let dim = runs
        .iter()
        .flat_map(|(_, r)| r.first())
        .map(|m| m.means.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metric_header(dim))?;
    for (label, rows) in runs {
        for m in rows {
            w.write_record(metric_row(label, m))?;
        }
    }
    if runs.len() > 1 {
        let all: Vec<Vec<Metrics>> = runs.iter().map(|(_, r)| r.clone()).collect();
        for (mean, sd) in aggregate(&all) {
            w.write_record(metric_row("mean", &mean))?;
            w.write_record(sd_row("sd", &mean, &sd, &all))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean metrics of two groups side by side, with the relative changes in
/// simulation time and the efficiency ratio `other / base`.
pub fn write_comparison<W: Write>(out: W, base: &[Vec<Metrics>], other: &[Vec<Metrics>]) -> Result<()> {
    let a = aggregate(base);
    let b = aggregate(other);
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "generation",
        "base_time_per_proposal_s",
        "other_time_per_proposal_s",
        "time_per_proposal_change_pct",
        "base_sim_time_s",
        "other_sim_time_s",
        "sim_time_change_pct",
        "base_efficiency_per_s",
        "other_efficiency_per_s",
        "efficiency_ratio",
    ])?;
    let mean_eff = |runs: &[Vec<Metrics>], g: Option<usize>| {
        mean_sd(
            &runs
                .iter()
                .flatten()
                .filter(|m| m.generation == g)
                .map(Metrics::efficiency)
                .collect::<Vec<_>>(),
        )
        .0
    };
    let mean_tpp = |runs: &[Vec<Metrics>], g: Option<usize>| {
        mean_sd(
            &runs
                .iter()
                .flatten()
                .filter(|m| m.generation == g)
                .map(Metrics::time_per_proposal)
                .collect::<Vec<_>>(),
        )
        .0
    };
    let change = |from: f64, to: f64| 100.0 * (to - from) / from;
    for (ma, _) in &a {
        let Some((mb, _)) = b.iter().find(|(m, _)| m.generation == ma.generation) else {
            continue;
        };
        let g = ma.generation;
        let (ta, tb) = (mean_tpp(base, g), mean_tpp(other, g));
        let (ea, eb) = (mean_eff(base, g), mean_eff(other, g));
        w.write_record([
            ma.key(),
            ta.to_string(),
            tb.to_string(),
            change(ta, tb).to_string(),
            ma.sim_time_s.to_string(),
            mb.sim_time_s.to_string(),
            change(ma.sim_time_s, mb.sim_time_s).to_string(),
            ea.to_string(),
            eb.to_string(),
            (eb / ea).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

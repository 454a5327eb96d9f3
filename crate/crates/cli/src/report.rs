//! Multi-seed runs and the files they leave in the output directory.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::experiment::{Method, SeedRun, Stages, SummaryRow, derive_seed, mean_counts, pool_summaries, run_seed};
use crate::output;
use crate::plot::{self, Series};

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    /// Also write every per-point error.
    pub raw: bool,
    pub svg: bool,
}

/// Seed-pooled results of a run.
#[derive(Debug, Clone)]
pub struct Report {
    pub seeds: Vec<u64>,
    pub onestep: Vec<SummaryRow>,
    pub nstep: Vec<SummaryRow>,
    /// `(method, dictionary size, seed-averaged count above threshold)`.
    pub counts: Vec<(Method, usize, f64)>,
}

impl Report {
    pub fn mean_of(rows: &[SummaryRow], key: usize, method: Method) -> Option<f64> {
        rows.iter().find(|r| r.key == key && r.method == method).map(|r| r.mean)
    }

    pub fn count_of(&self, method: Method) -> Option<f64> {
        self.counts.iter().find(|c| c.0 == method).map(|c| c.2)
    }
}

/// Seeds `cfg.seed, cfg.seed + 1, ...`.
pub fn seed_list(cfg: &ExperimentConfig, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| cfg.seed + i).collect()
}

/// Runs every seed, then writes per-seed files under `seed_<s>/` and pooled
/// summaries at the top of `out`.
pub fn run(
    cfg: &ExperimentConfig,
    seed_count: usize,
    stages: Stages,
    out: &Path,
    opts: ReportOptions,
) -> anyhow::Result<Report> {
    anyhow::ensure!(seed_count >= 1, "need at least one seed");
    let seed_matrix = derive_seed(cfg)?;
    let seeds = seed_list(cfg, seed_count);
    let mut runs: Vec<SeedRun> = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let run = run_seed(cfg, &seed_matrix, s, stages)?;
        write_seed(cfg, &run, &out.join(format!("seed_{s}")), stages, opts)?;
        runs.push(run);
    }
    let onestep = pool_summaries(&runs.iter().map(|r| r.onestep.summary.as_slice()).collect::<Vec<_>>());
    let nstep = pool_summaries(&runs.iter().map(|r| r.nstep.summary.as_slice()).collect::<Vec<_>>());
    let counts = if stages.spectrum { mean_counts(&runs) } else { Vec::new() };
    if stages.onestep {
        output::save_summary(&out.join("onestep_summary.csv"), &onestep)?;
    }
    if stages.nstep {
        output::save_summary(&out.join("nstep_summary.csv"), &nstep)?;
    }
    if stages.spectrum {
        output::save_counts(&out.join("spectrum_counts.csv"), cfg.spectrum_threshold, &counts)?;
    }
    if opts.svg {
        let title = format!("{} ({} seed{})", cfg.name, seeds.len(), if seeds.len() == 1 { "" } else { "s" });
        if stages.onestep {
            std::fs::write(
                out.join("onestep.svg"),
                plot::line_plot(&format!("one-step error, {title}"), "snapshot pairs", "mean relative error", &series(&onestep)),
            )?;
        }
        if stages.nstep {
            std::fs::write(
                out.join("nstep.svg"),
                plot::line_plot(&format!("n-step error, {title}"), "n", "mean relative error", &series(&nstep)),
            )?;
        }
    }
    Ok(Report {
        seeds,
        onestep,
        nstep,
        counts,
    })
}

fn series(rows: &[SummaryRow]) -> Vec<Series<'static>> {
    Method::ALL
        .iter()
        .map(|&m| Series {
            label: m.name(),
            points: rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.key as f64, r.mean))
                .collect(),
        })
        .collect()
}

fn write_seed(cfg: &ExperimentConfig, run: &SeedRun, dir: &Path, stages: Stages, opts: ReportOptions) -> anyhow::Result<()> {
    if stages.onestep {
        output::save_summary(&dir.join("onestep_summary.csv"), &run.onestep.summary)?;
        output::save_diagnostics(&dir.join("onestep_diagnostics.csv"), &run.onestep.diagnostics)?;
        if opts.raw {
            output::save_raw(&dir.join("onestep_raw.csv"), &run.onestep.raw)?;
        }
    }
    if stages.nstep {
        output::save_summary(&dir.join("nstep_summary.csv"), &run.nstep.summary)?;
        output::save_diagnostics(&dir.join("nstep_diagnostics.csv"), &run.nstep.diagnostics)?;
        if opts.raw {
            output::save_raw(&dir.join("nstep_raw.csv"), &run.nstep.raw)?;
        }
    }
    if stages.spectrum {
        output::save_eigenvalues(&dir.join("eigenvalues.csv"), &run.spectra)?;
        if opts.svg {
            let s: Vec<Series> = run
                .spectra
                .iter()
                .map(|sp| Series {
                    label: sp.method.name(),
                    points: sp.eigenvalues.iter().map(|z| (z.re, z.im)).collect(),
                })
                .collect();
            std::fs::write(
                dir.join("spectrum.svg"),
                plot::spectrum_plot(&format!("{} eigenvalues, {} pairs", cfg.name, cfg.spectrum_pairs), &s),
            )?;
        }
    }
    Ok(())
}

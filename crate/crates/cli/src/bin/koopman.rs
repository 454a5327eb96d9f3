use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use koopman_cli::config::ExperimentConfig;
use koopman_cli::experiment::{Stages, derive_seed, generate_dataset, global_dictionary, train_batch, train_online};
use koopman_cli::output::{self, MatrixMeta};
use koopman_cli::report::{self, ReportOptions};

/// Equation-seeded online Koopman learning for coupled oscillators.
#[derive(Parser)]
#[command(name = "koopman", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset instead of a config file.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of RNG seeds, starting at the config's `seed`.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    checkpoint_stride: Option<usize>,
    /// Write per-point errors next to the summaries.
    #[arg(long)]
    raw: bool,
    /// Write SVG plots next to the CSV files.
    #[arg(long)]
    svg: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Duffing,
    Vdp,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Duffing => "duffing",
            Preset::Vdp => "vdp",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the equation-derived global seed matrix.
    Derive(Common),
    /// Write the training and test trajectories of each seed.
    Simulate(Common),
    /// Online EDMD from the derived seed; writes the final matrix.
    TrainOnline {
        #[command(flatten)]
        common: Common,
        /// Pairs to absorb (default: all training pairs).
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Batch EDMD; writes the matrix.
    TrainBatch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// One-step error of both methods at every checkpoint.
    EvalOnestep(Common),
    /// n-step error of both methods.
    EvalNstep(Common),
    /// Eigenvalues of both methods' matrices.
    Spectrum(Common),
    /// Full reproduction run for a bundled preset.
    Reproduce {
        #[arg(value_enum, id = "system")]
        system: Preset,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, fallback: Option<Preset>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&common.config, common.preset.or(fallback)) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(p)) => ExperimentConfig::preset(p.name())?,
        (None, None) => bail!("pass --config <path> or --preset <name>"),
    };
    if let Some(s) = common.sigma {
        cfg.sigma = s;
    }
    if let Some(d) = common.degree {
        cfg.degree = d;
    }
    if let Some(c) = common.checkpoint_stride {
        cfg.checkpoint_stride = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_report(common: &Common, cfg: &ExperimentConfig, stages: Stages) -> anyhow::Result<()> {
    let opts = ReportOptions {
        raw: common.raw,
        svg: common.svg,
    };
    let rep = report::run(cfg, common.seeds, stages, &common.out, opts)?;
    if stages.onestep {
        println!("one-step mean relative error ({} seed(s)):", rep.seeds.len());
        print_pairs(&rep.onestep);
    }
    if stages.nstep {
        println!("n-step mean relative error at {} pairs:", cfg.nstep_pairs);
        let last = cfg.horizon as usize;
        let keys: Vec<usize> = [1, 10, 50, last].into_iter().filter(|&n| n <= last).collect();
        print_pairs(&rep.nstep.iter().filter(|r| keys.contains(&r.key)).cloned().collect::<Vec<_>>());
    }
    for (m, total, count) in &rep.counts {
        println!(
            "{}: {count} of {total} eigenvalues with |mu| > {} at {} pairs",
            m.name(),
            cfg.spectrum_threshold,
            cfg.spectrum_pairs
        );
    }
    println!("wrote {}", common.out.display());
    Ok(())
}

fn print_pairs(rows: &[koopman_cli::SummaryRow]) {
    for pair in rows.chunks(2) {
        let cells: Vec<String> = pair.iter().map(|r| format!("{} {:.4e}", r.method.name(), r.mean)).collect();
        println!("  {:>5}  {}", pair[0].key, cells.join("  "));
    }
}

fn save_model(path: &Path, meta: &MatrixMeta, matrix: &nalgebra::DMatrix<f64>) -> anyhow::Result<()> {
    output::save_matrix(path, meta, matrix)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Derive(common) => {
            let cfg = load(&common, None)?;
            let seed = derive_seed(&cfg)?;
            let mut meta = MatrixMeta::new("seed", seed.global_dict());
            meta.pairs = Some(0);
            save_model(&common.out.join("seed_matrix.csv"), &meta, seed.matrix())?;
        }
        Command::Simulate(common) => {
            let cfg = load(&common, None)?;
            let layout = cfg.layout()?;
            for s in report::seed_list(&cfg, common.seeds) {
                let data = generate_dataset(&cfg, s)?;
                let dir = common.out.join(format!("seed_{s}"));
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                data.train.write_csv(&layout, BufWriter::new(File::create(dir.join("train.csv"))?))?;
                for (i, t) in data.tests.iter().enumerate() {
                    t.write_csv(&layout, BufWriter::new(File::create(dir.join(format!("test_{i:03}.csv")))?))?;
                }
                println!("wrote {} ({} test trajectories)", dir.display(), data.tests.len());
            }
        }
        Command::TrainOnline { common, pairs } => {
            let cfg = load(&common, None)?;
            let seed = derive_seed(&cfg)?;
            for s in report::seed_list(&cfg, common.seeds) {
                let all = generate_dataset(&cfg, s)?.pairs()?;
                let m = pairs.unwrap_or(all.len());
                let model = train_online(seed.to_model(), cfg.sigma, &all, &[m])?.remove(0);
                let mut meta = MatrixMeta::new("online", model.dict());
                meta.pairs = Some(m);
                meta.sigma = Some(cfg.sigma);
                save_model(&common.out.join(format!("seed_{s}/online_matrix.csv")), &meta, model.matrix())?;
            }
        }
        Command::TrainBatch { common, pairs } => {
            let cfg = load(&common, None)?;
            let dict = global_dictionary(&cfg)?;
            for s in report::seed_list(&cfg, common.seeds) {
                let all = generate_dataset(&cfg, s)?.pairs()?;
                let m = pairs.unwrap_or(all.len());
                let model = train_batch(&dict, &all, m)?;
                let mut meta = MatrixMeta::new("edmd", model.dict());
                meta.pairs = Some(m);
                save_model(&common.out.join(format!("seed_{s}/edmd_matrix.csv")), &meta, model.matrix())?;
            }
        }
        Command::EvalOnestep(common) => {
            let cfg = load(&common, None)?;
            let stages = Stages {
                onestep: true,
                nstep: false,
                spectrum: false,
            };
            run_report(&common, &cfg, stages)?;
        }
        Command::EvalNstep(common) => {
            let cfg = load(&common, None)?;
            let stages = Stages {
                onestep: false,
                nstep: true,
                spectrum: false,
            };
            run_report(&common, &cfg, stages)?;
        }
        Command::Spectrum(common) => {
            let cfg = load(&common, None)?;
            let stages = Stages {
                onestep: false,
                nstep: false,
                spectrum: true,
            };
            run_report(&common, &cfg, stages)?;
        }
        Command::Reproduce { system, common } => {
            let cfg = load(&common, Some(system))?;
            run_report(&common, &cfg, Stages::ALL)?;
        }
    }
    Ok(())
}

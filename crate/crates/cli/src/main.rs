use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dgmix::divergediag::{bound_terms_report, BoundInputs, ProbeSpec};
use dgmix::harness::{
    ablation_sweep, emit_report, resolve_tasks, run_experiment, sweep_csv, train_seed, write_bytes,
    GradMode, ReportFormat, RunConfig, SweepAxis,
};
use dgmix::objectives::Method;
use dgmix::selection::Policy;

#[derive(Parser)]
#[command(name = "dgmix", version, about = "Mixup-guided Pareto training and model selection for domain generalization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a configuration and write the result files.
    Run(Overrides),
    /// Run an ablation along one axis.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; the axis defaults are used when absent.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train, then estimate source and validation-to-target divergences.
    Diverge(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// JSON configuration; built-in defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, conflicts_with = "no_pareto")]
    pareto: bool,
    #[arg(long)]
    no_pareto: bool,
    #[arg(long)]
    selection: Option<Policy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "B")]
    refresh_every: Option<usize>,
    #[arg(long)]
    grad_mode: Option<GradMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    diag: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if self.pareto {
            cfg.pareto = true;
        }
        if self.no_pareto {
            cfg.pareto = false;
        }
        if let Some(p) = self.selection {
            cfg.selection = p;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(b) = self.refresh_every {
            cfg.refresh_every = b;
        }
        if let Some(g) = self.grad_mode {
            cfg.grad_mode = g;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if self.diag {
            cfg.diag = true;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(o: &Overrides) -> Result<()> {
    let cfg = o.resolve()?;
    let out = run_experiment(&cfg)?;
    emit_report(std::slice::from_ref(&out.result), &cfg.out_dir, &ReportFormat::ALL)?;
    for t in &out.result.targets {
        for s in &t.seeds {
            println!(
                "{} target={} seed={} acc={:.4}{}",
                out.result.variant,
                t.target,
                s.seed,
                s.selected_target_acc,
                s.aborted.as_deref().map(|m| format!(" aborted: {m}")).unwrap_or_default()
            );
        }
    }
    eprintln!("wrote {} in {:.1}s", cfg.out_dir.display(), out.wall_clock_secs);
    Ok(())
}

fn sweep(axis: SweepAxis, values: &[String], o: &Overrides) -> Result<()> {
    let cfg = o.resolve()?;
    let start = Instant::now();
    let res = ablation_sweep(&cfg, axis, values)?;
    emit_report(&res.results, &cfg.out_dir, &ReportFormat::ALL)?;
    let path = cfg.out_dir.join("sweep.csv");
    write_bytes(&path, &sweep_csv(&res)?)?;
    println!("{}", dgmix::harness::render_markdown(&dgmix::harness::summary_table(&res.results)));
    eprintln!("wrote {} in {:.1}s", cfg.out_dir.display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn diverge(o: &Overrides) -> Result<()> {
    let cfg = o.resolve()?;
    let mut report = serde_json::Map::new();
    for &seed in &cfg.seeds {
        for task in resolve_tasks(&cfg, seed)? {
            let art = train_seed(&cfg, &task, seed)?;
            let inputs = BoundInputs {
                sources: &task.sources,
                trainsplit_val: &art.val,
                vald: &art.vald,
                target: &task.target,
            };
            let terms = bound_terms_report(&inputs, &art.selected, &ProbeSpec::with_seed(seed))?;
            println!(
                "seed={seed} target={} max_source={:.3} trainsplit->target={:.3} vald->target={:.3}",
                task.target_label,
                terms.divergence.max_source_divergence,
                terms.trainsplit_to_target.proxy_a_distance,
                terms.vald_to_target.proxy_a_distance
            );
            report.insert(format!("seed{seed}/{}", task.target_label), serde_json::to_value(&terms)?);
        }
    }
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join("diverge.json");
    write_bytes(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(o) => run(o),
        Command::Sweep { axis, values, overrides } => sweep(*axis, values, overrides),
        Command::Diverge(o) => diverge(o),
    }
}

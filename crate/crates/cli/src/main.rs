use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use widenet_core::bound_engine::{
    collect_stats, evaluate, BoundContext, BoundId, BoundReport, Constants, Mode, StatsOptions,
};
use widenet_core::distance_lab::{DistanceKind, DistanceOptions, DistanceRegistry};
use widenet_core::experiment::{emit_report, run_sweep_with, ReportFormat, SweepResult, SweepSpec};
use widenet_core::limit_kernel::{compute_kernel, InitialMode, KernelOptions, KernelSequence};
use widenet_core::net_model::{forward_sample_streams, NetConfig, SampleBatch};
use widenet_core::quadrature::QuadratureSpec;
use widenet_core::rng::DEFAULT_STREAMS;

/// Random wide networks at initialization: limit kernels, distances to the
/// Gaussian limit and explicit bounds.
#[derive(Parser)]
#[command(name = "widenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the limit covariances K^(2), ..., K^(L+1) for a config.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Quadrature rule name.
        #[arg(long, default_value = "panel-legendre")]
        rule: String,
        /// Nodes per panel (or per axis).
        #[arg(long, default_value_t = 16)]
        order: usize,
    },
    /// Draw the first neuron of a layer at every input.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Layer to sample; defaults to the output layer L+1.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        m: usize,
    },
    /// Compare a stored sample batch to the Gaussian given by a kernel file.
    Distance {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        /// Distance kinds; all applicable ones by default.
        #[arg(long = "kind")]
        kinds: Vec<String>,
        /// Input used by one-dimensional distances.
        #[arg(long, default_value_t = 0)]
        component: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate bounds with a full factor breakdown.
    Bound {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bound: BoundArgs,
        /// Bound ids; every registered bound by default.
        #[arg(long = "id")]
        ids: Vec<String>,
        /// Input used by one-dimensional bounds.
        #[arg(long, default_value_t = 0)]
        input: usize,
        /// Draws for the empirical plug-ins.
        #[arg(long, default_value_t = 20_000)]
        stats_m: usize,
    },
    /// Run a width/depth sweep from a config file with a [sweep] table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bound: BoundArgs,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Exit with status 3 if a bound falls below a distance it controls.
        #[arg(long)]
        check: bool,
        /// Lift the desk-scale caps.
        #[arg(long)]
        allow_large: bool,
    },
    /// Re-emit CSV/JSON/SVG from a stored sweep JSON.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "format")]
        formats: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// empirical | theoretical
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k_rosenthal: Option<f64>,
    #[arg(long)]
    c_universal: Option<f64>,
}

impl BoundArgs {
    fn constants(&self, base: Constants) -> Constants {
        Constants {
            k_rosenthal: self.k_rosenthal.unwrap_or(base.k_rosenthal),
            c_universal: self.c_universal.unwrap_or(base.c_universal),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// A net config from TOML or JSON; a `[sweep]` table is ignored.
fn load_config(path: &Path) -> Result<NetConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(NetConfig::from_json_str(&text)?);
    }
    let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    table.remove("sweep");
    Ok(NetConfig::from_toml_str(&toml::to_string(&table)?)?)
}

fn kernel_options(seed: Option<u64>, q: QuadratureSpec) -> KernelOptions {
    let mut o = KernelOptions { quadrature: q, ..KernelOptions::default() };
    if let (Some(s), InitialMode::Auto { m, .. }) = (seed, o.initial) {
        o.initial = InitialMode::Auto { m, seed: s };
    }
    o
}

fn emit(out: &Option<PathBuf>, name: &str, body: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Kernel { common, rule, order } => {
            let cfg = load_config(&common.config)?;
            let k = compute_kernel(&cfg, &kernel_options(common.seed, QuadratureSpec::new(&rule, order)))?;
            emit(&common.out, "kernel.json", &k.to_json()?)?;
        }
        Command::Sample { common, layer, m } => {
            let cfg = load_config(&common.config)?;
            let layer = layer.unwrap_or(cfg.depth() + 1);
            let batch = forward_sample_streams(&cfg, layer, m, common.seed.unwrap_or(0), DEFAULT_STREAMS)?;
            emit(&common.out, "batch.json", &serde_json::to_string(&batch)?)?;
        }
        Command::Distance { batch, kernel, kinds, component, seed, out } => {
            let batch = SampleBatch::load(&batch)?;
            let k = KernelSequence::from_json(&std::fs::read_to_string(&kernel)?)?;
            let cov = k.get(batch.layer).with_context(|| format!("kernel file has no K^({})", batch.layer))?;
            let kinds: Vec<DistanceKind> = if kinds.is_empty() {
                DistanceKind::ALL.into_iter().filter(|k| !k.is_multivariate() || batch.d >= 2).collect()
            } else {
                kinds.iter().map(|s| DistanceKind::parse(s)).collect::<widenet_core::Result<_>>()?
            };
            let mut o = DistanceOptions::default();
            if let Some(s) = seed {
                o.seed = s;
            }
            let reg = DistanceRegistry::with_builtins();
            let est = kinds
                .iter()
                .map(|&kind| reg.get(kind)?.estimate(&batch, cov, component, &o))
                .collect::<widenet_core::Result<Vec<_>>>()?;
            emit(&out, "distances.json", &serde_json::to_string_pretty(&est)?)?;
        }
        Command::Bound { common, bound, ids, input, stats_m } => {
            let cfg = load_config(&common.config)?;
            let kernel = compute_kernel(&cfg, &kernel_options(common.seed, QuadratureSpec::default()))?;
            let mode = bound.mode.as_deref().map(Mode::parse).transpose()?.unwrap_or(Mode::Theoretical);
            let ids: Vec<BoundId> = if ids.is_empty() {
                BoundId::ALL.to_vec()
            } else {
                ids.iter().map(|s| BoundId::parse(s)).collect::<widenet_core::Result<_>>()?
            };
            let stats = if mode == Mode::Empirical {
                let o = StatsOptions {
                    m: stats_m,
                    seed: common.seed.unwrap_or(StatsOptions::default().seed),
                    multi: cfg.dims() >= 2,
                    ..StatsOptions::default()
                };
                Some(collect_stats(&cfg, &kernel, &o)?)
            } else {
                None
            };
            let mut ctx = BoundContext::new(&cfg, &kernel)
                .with_mode(mode)
                .with_constants(bound.constants(Constants::default()))
                .with_input(input);
            if let Some(s) = &stats {
                ctx = ctx.with_stats(s);
            }
            let reports: Vec<BoundReport> = ids.iter().map(|&id| evaluate(id, &ctx)).collect();
            for r in &reports {
                eprintln!(
                    "{:<18} {:>14e}  ln {:>12.6}  {}",
                    r.bound_id.label(),
                    r.value,
                    r.ln_value,
                    r.reasons.join("; ")
                );
            }
            emit(&common.out, "bounds.json", &serde_json::to_string_pretty(&reports)?)?;
            if reports.iter().all(|r| !r.is_finite()) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep { common, bound, workers, check, allow_large } => {
            let mut spec = SweepSpec::load(&common.config)?;
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            if let Some(m) = &bound.mode {
                spec.mode = Mode::parse(m)?;
            }
            spec.constants = bound.constants(spec.constants);
            spec.allow_large |= allow_large;
            let total = spec.width_grid.len() * spec.replicates;
            let done = std::sync::atomic::AtomicUsize::new(0);
            let result = run_sweep_with(&spec, workers, &|row| {
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                eprintln!("[{k}/{total}] n = {} L = {} replicate {}", row.n, row.depth, row.replicate);
            })?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("."));
            for f in ReportFormat::ALL {
                eprintln!("wrote {}", emit_report(&result, f, &out)?.display());
            }
            for fit in &result.rate_fits {
                eprintln!("{}: slope {:.4} (r2 {:.4})", fit.distance.label(), fit.slope, fit.r2);
            }
            for note in &result.notes {
                eprintln!("note: {note}");
            }
            if check {
                let v = result.dominance_violations();
                for line in &v {
                    eprintln!("violation: {line}");
                }
                if !v.is_empty() {
                    return Ok(ExitCode::from(3));
                }
            }
            if result.all_bounds_infinite() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { input, out, formats } => {
            let result = SweepResult::from_json(&std::fs::read_to_string(&input)?)?;
            let formats: Vec<ReportFormat> = if formats.is_empty() {
                ReportFormat::ALL.to_vec()
            } else {
                formats.iter().map(|s| ReportFormat::parse(s)).collect::<widenet_core::Result<_>>()?
            };
            if result.rows.is_empty() {
                bail!("{} holds no rows", input.display());
            }
            for f in formats {
                eprintln!("wrote {}", emit_report(&result, f, &out)?.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Width and depth sweeps, convergence-rate fits and report emission.
//!
//! A sweep runs one cell per `(n, replicate)`: equal hidden widths `n`, depth
//! from the [`DepthRule`], a fresh output sample compared to the limiting
//! Gaussian with every requested distance, and every requested bound
//! evaluated on the same configuration. Seeds are derived from the master
//! seed and `(n, replicate)` only, so adding replicates never changes the
//! existing rows.

mod fit;
mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound_engine::{
    collect_stats, depth_schedule, evaluate, BoundContext, BoundId, BoundReport, Constants, Mode, StatsOptions,
};
use crate::distance_lab::{DistanceEstimate, DistanceKind, DistanceOptions, DistanceRegistry};
use crate::error::{Error, Result};
use crate::limit_kernel::{compute_kernel, InitialMode, KernelOptions, KernelSequence};
use crate::net_model::{forward_sample_streams, NetConfig};
use crate::quadrature::QuadratureSpec;
use crate::rng::{derive_seed, DEFAULT_STREAMS};

pub use fit::{fit_rate, ols, LinearFit, RateFit};
pub use report::{emit_report, to_csv_string, to_svg_string, ReportFormat};

/// Desk-scale limits, lifted by `allow_large`.
pub const MAX_WIDTH: usize = 8192;
pub const MAX_DEPTH: usize = 6;
pub const MAX_SAMPLES: usize = 1_000_000;
pub const MAX_INPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthRule {
    Fixed(usize),
    /// `L = floor(((1/2 - eps) log2 n)^{1/3})`.
    Schedule(f64),
}

impl DepthRule {
    pub fn depth(&self, n: usize) -> Result<usize> {
        match *self {
            DepthRule::Fixed(l) if l >= 1 => Ok(l),
            DepthRule::Fixed(l) => Err(Error::Config(format!("fixed depth must be at least 1, got {l}"))),
            DepthRule::Schedule(eps) => depth_schedule(n as u64, eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Base network; its widths are replaced by `[n; L]` in every cell.
    pub base_cfg: NetConfig,
    pub width_grid: Vec<usize>,
    pub depth_rule: DepthRule,
    pub distances: Vec<DistanceKind>,
    pub bounds: Vec<BoundId>,
    pub m: usize,
    pub seed: u64,
    pub replicates: usize,
    pub mode: Mode,
    pub constants: Constants,
    /// Draws for the empirical plug-ins of semi-empirical bounds.
    pub stats_m: usize,
    /// Record wall time per row (makes output nondeterministic).
    pub timing: bool,
    pub allow_large: bool,
}

/// The `[sweep]` table of a config file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepKeys {
    width_grid: Vec<usize>,
    depth: DepthRule,
    #[serde(default)]
    distances: Vec<String>,
    #[serde(default)]
    bounds: Vec<String>,
    m: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    replicates: usize,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    k_rosenthal: Option<f64>,
    #[serde(default)]
    c_universal: Option<f64>,
    #[serde(default = "default_stats_m")]
    stats_m: usize,
    #[serde(default)]
    timing: bool,
    #[serde(default)]
    allow_large: bool,
}

fn one() -> usize {
    1
}

fn default_stats_m() -> usize {
    20_000
}

impl SweepSpec {
    /// Net config keys plus a `[sweep]` table.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let sweep = table.remove("sweep").ok_or_else(|| Error::Config("missing [sweep] table".into()))?;
        let keys: SweepKeys = sweep.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let base_cfg: NetConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let defaults = Constants::default();
        let spec = Self {
            base_cfg,
            width_grid: keys.width_grid,
            depth_rule: keys.depth,
            distances: keys.distances.iter().map(|s| DistanceKind::parse(s)).collect::<Result<_>>()?,
            bounds: keys.bounds.iter().map(|s| BoundId::parse(s)).collect::<Result<_>>()?,
            m: keys.m,
            seed: keys.seed,
            replicates: keys.replicates,
            mode: keys.mode.as_deref().map(Mode::parse).transpose()?.unwrap_or_default(),
            constants: Constants {
                k_rosenthal: keys.k_rosenthal.unwrap_or(defaults.k_rosenthal),
                c_universal: keys.c_universal.unwrap_or(defaults.c_universal),
            },
            stats_m: keys.stats_m,
            timing: keys.timing,
            allow_large: keys.allow_large,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width_grid.is_empty() {
            return bad("width_grid is empty".into());
        }
        if self.width_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("width_grid must be strictly increasing".into());
        }
        if self.width_grid[0] == 0 {
            return bad("widths must be positive".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.distances.is_empty() && self.bounds.is_empty() {
            return bad("nothing to compute: no distances and no bounds".into());
        }
        if !self.distances.is_empty() && self.m < 100 {
            return bad(format!("m must be at least 100, got {}", self.m));
        }
        self.constants.validate()?;
        let depths: Vec<usize> = self.width_grid.iter().map(|&n| self.depth_rule.depth(n)).collect::<Result<_>>()?;
        if !self.allow_large {
            let cap = |what: &str, v: usize, max: usize| {
                if v > max {
                    Err(Error::Config(format!("{what} = {v} exceeds the desk cap {max}; set allow_large to override")))
                } else {
                    Ok(())
                }
            };
            cap("width", *self.width_grid.last().unwrap(), MAX_WIDTH)?;
            cap("depth", depths.iter().copied().max().unwrap_or(1), MAX_DEPTH)?;
            cap("m", self.m, MAX_SAMPLES)?;
            cap("d", self.base_cfg.dims(), MAX_INPUTS)?;
        }
        Ok(())
    }

    /// Configuration of the cell with width `n`.
    pub fn cell_config(&self, n: usize) -> Result<NetConfig> {
        let l = self.depth_rule.depth(n)?;
        self.base_cfg.with_widths(vec![n; l])
    }

    fn needs_stats(&self) -> bool {
        self.mode == Mode::Empirical
            && self.bounds.iter().any(|b| matches!(b, BoundId::KdistSemi | BoundId::WdistSemi | BoundId::ModKG))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub depth: usize,
    pub replicate: usize,
    pub seed: u64,
    pub distances: Vec<DistanceEstimate>,
    pub bounds: Vec<BoundReport>,
    pub wall_time: Option<f64>,
    /// Distances or plug-ins that could not be computed.
    pub errors: Vec<String>,
}

impl SweepRow {
    pub fn distance(&self, kind: DistanceKind) -> Option<&DistanceEstimate> {
        self.distances.iter().find(|d| d.kind == kind)
    }

    pub fn bound(&self, id: BoundId) -> Option<&BoundReport> {
        self.bounds.iter().find(|b| b.bound_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Sorted by `n`, then replicate.
    pub rows: Vec<SweepRow>,
    pub rate_fits: Vec<RateFit>,
    /// Why a requested rate fit is missing.
    pub notes: Vec<String>,
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn rate_fit(&self, kind: DistanceKind) -> Option<&RateFit> {
        self.rate_fits.iter().find(|f| f.distance == kind)
    }

    /// Rows where a finite bound falls below a distance it controls by more
    /// than three statistical errors.
    pub fn dominance_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for row in &self.rows {
            for b in row.bounds.iter().filter(|b| b.is_finite()) {
                for kind in b.bound_id.controls() {
                    if let Some(e) = row.distance(*kind) {
                        if b.value < e.value - 3.0 * e.statistical_error {
                            out.push(format!(
                                "n = {}, replicate {}: {} = {:e} below {} = {:e} (error {:e})",
                                row.n,
                                row.replicate,
                                b.bound_id.label(),
                                b.value,
                                kind.label(),
                                e.value,
                                e.statistical_error
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Every bound of every row is infinite (nothing applicable).
    pub fn all_bounds_infinite(&self) -> bool {
        let mut any = false;
        for b in self.rows.iter().flat_map(|r| &r.bounds) {
            any = true;
            if b.is_finite() {
                return false;
            }
        }
        any
    }
}

const KERNEL_TAG: u64 = 0x6b65_726e;
const STATS_TAG: u64 = 0x7374_6174;
const DIST_TAG: u64 = 0x6469_7374;

pub(crate) fn kernel_for(cfg: &NetConfig, seed: u64) -> Result<KernelSequence> {
    let opts = KernelOptions {
        quadrature: QuadratureSpec::default(),
        initial: InitialMode::Auto { m: 200_000, seed: derive_seed(seed, &[KERNEL_TAG]) },
    };
    compute_kernel(cfg, &opts)
}

fn run_cell(spec: &SweepSpec, kernel: &KernelSequence, n: usize, replicate: usize) -> Result<SweepRow> {
    let start = Instant::now();
    let cfg = spec.cell_config(n)?;
    let l = cfg.depth();
    let seed = derive_seed(spec.seed, &[n as u64, replicate as u64]);
    let mut errors = Vec::new();
    let mut distances = Vec::new();
    if !spec.distances.is_empty() {
        let batch = forward_sample_streams(&cfg, l + 1, spec.m, seed, DEFAULT_STREAMS)?;
        let registry = DistanceRegistry::with_builtins();
        let opts = DistanceOptions { seed: derive_seed(seed, &[DIST_TAG]), ..DistanceOptions::default() };
        let cov = kernel.k(l + 1);
        for &kind in &spec.distances {
            match registry.get(kind).and_then(|e| e.estimate(&batch, cov, 0, &opts)) {
                Ok(e) => distances.push(e),
                Err(e) => errors.push(format!("{}: {e}", kind.label())),
            }
        }
    }
    let stats = if spec.needs_stats() {
        let o = StatsOptions {
            m: spec.stats_m,
            seed: derive_seed(seed, &[STATS_TAG]),
            multi: cfg.dims() >= 2 && spec.bounds.contains(&BoundId::ModKG),
            ..StatsOptions::default()
        };
        match collect_stats(&cfg, kernel, &o) {
            Ok(s) => Some(s),
            Err(e @ Error::MemoryGuard(_)) => return Err(e),
            Err(e) => {
                errors.push(format!("empirical statistics: {e}"));
                None
            }
        }
    } else {
        None
    };
    let mut ctx = BoundContext::new(&cfg, kernel).with_mode(spec.mode).with_constants(spec.constants);
    if let Some(s) = &stats {
        ctx = ctx.with_stats(s);
    }
    let bounds = spec.bounds.iter().map(|&id| evaluate(id, &ctx)).collect();
    Ok(SweepRow {
        n,
        depth: l,
        replicate,
        seed,
        distances,
        bounds,
        wall_time: spec.timing.then(|| start.elapsed().as_secs_f64()),
        errors,
    })
}

/// Run every `(n, replicate)` cell on `workers` threads; `progress` sees each
/// finished row (in completion order). Output is canonical regardless.
pub fn run_sweep_with(spec: &SweepSpec, workers: usize, progress: &(dyn Fn(&SweepRow) + Sync)) -> Result<SweepResult> {
    spec.validate()?;
    // The limit kernel depends on the depth, not on the widths.
    let mut kernels: BTreeMap<usize, KernelSequence> = BTreeMap::new();
    for &n in &spec.width_grid {
        let cfg = spec.cell_config(n)?;
        if let std::collections::btree_map::Entry::Vacant(e) = kernels.entry(cfg.depth()) {
            e.insert(kernel_for(&cfg, spec.seed)?);
        }
    }
    let cells: Vec<(usize, usize)> =
        spec.width_grid.iter().flat_map(|&n| (0..spec.replicates).map(move |r| (n, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, r)| {
                let depth = spec.depth_rule.depth(n)?;
                let row = run_cell(spec, &kernels[&depth], n, r)?;
                progress(&row);
                Ok(row)
            })
            .collect::<Result<_>>()
    })?;
    rows.sort_by_key(|r| (r.n, r.replicate));
    let mut rate_fits = Vec::new();
    let mut notes = Vec::new();
    for &kind in &spec.distances {
        match fit_rate(&rows, kind) {
            Ok(f) => rate_fits.push(f),
            Err(e) => notes.push(format!("{} rate fit: {e}", kind.label())),
        }
    }
    Ok(SweepResult { spec: spec.clone(), rows, rate_fits, notes })
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, rayon::current_num_threads(), &|_| {})
}

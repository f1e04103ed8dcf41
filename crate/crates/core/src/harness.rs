//! Experiment drivers behind the `peelkit` CLI.
//!
//! Every command returns typed rows and has a CSV renderer. Trial `t` of an
//! experiment uses seed `base_seed + t`; trials run on a rayon pool capped by
//! `PEELKIT_THREADS` (0 or unset means one thread per core) and are reduced in
//! trial order, so output depends only on the configuration.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::{
    edge_count_for_density, generate_partitioned, generate_uniform, EdgeMode, Hypergraph,
};
use crate::iblt::{Iblt, KeyWidth};
use crate::peeler::{peel_parallel, peel_subtables, PeelTrace};
use crate::recursion::{iterate_plain, iterate_subtable, threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    RoundsVsN,
    RecursionCheck,
    SubtableCheck,
    ThresholdTable,
    IbltBench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RoundsVsN => "rounds-vs-n",
            Command::RecursionCheck => "recursion-check",
            Command::SubtableCheck => "subtable-check",
            Command::ThresholdTable => "threshold-table",
            Command::IbltBench => "iblt-bench",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Uniform model, synchronous rounds.
    #[default]
    Uniform,
    /// Partitioned model, subtable subrounds.
    Partitioned,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Uniform => "uniform",
            Variant::Partitioned => "partitioned",
        }
    }
}

pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub n: Vec<usize>,
    pub c: Vec<f64>,
    pub r: Vec<usize>,
    pub k: Vec<u32>,
    pub trials: usize,
    pub seed: u64,
    pub variant: Variant,
    pub edge_mode: EdgeMode,
    pub tol: f64,
    pub load: Vec<f64>,
    pub cells: usize,
    pub dump_graph: Option<PathBuf>,
    pub load_graph: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            n: vec![10_000],
            c: vec![0.7],
            r: vec![4],
            k: vec![2],
            trials: DEFAULT_TRIALS,
            seed: 1,
            variant: Variant::Uniform,
            edge_mode: EdgeMode::WithReplacement,
            tol: 1e-6,
            load: vec![0.75],
            cells: 1 << 16,
            dump_graph: None,
            load_graph: None,
        }
    }

    fn single_r(&self) -> Result<usize> {
        match self.r[..] {
            [r] => Ok(r),
            _ => Err(Error::InvalidParameter(format!(
                "{} takes a single --r value",
                self.command.name()
            ))),
        }
    }

    fn single_k(&self) -> Result<u32> {
        match self.k[..] {
            [k] => Ok(k),
            _ => Err(Error::InvalidParameter(format!(
                "{} takes a single --k value",
                self.command.name()
            ))),
        }
    }

    fn single<T: Copy>(&self, values: &[T], flag: &str) -> Result<T> {
        match values {
            [v] => Ok(*v),
            _ => Err(Error::InvalidParameter(format!(
                "{} takes a single {flag} value",
                self.command.name()
            ))),
        }
    }

    /// Checks parameter combinations for the chosen command.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.trials == 0 {
            return bad("--trials must be at least 1".into());
        }
        if self.r.is_empty() || self.k.is_empty() {
            return bad("--r and --k need at least one value".into());
        }
        if self.r.iter().any(|&r| r < 2) {
            return bad("--r values must be at least 2".into());
        }
        if self.k.iter().any(|&k| k < 1) {
            return bad("--k values must be at least 1".into());
        }
        match self.command {
            Command::ThresholdTable => {
                if !(self.tol > 0.0) {
                    return bad("--tol must be positive".into());
                }
                if self.r.iter().any(|&r| r < 3) || self.k.iter().any(|&k| k < 2) {
                    return bad("threshold-table needs r >= 3 and k >= 2".into());
                }
            }
            Command::IbltBench => {
                let r = self.single_r()?;
                if self.cells == 0 || self.cells % r != 0 {
                    return bad(format!("--cells {} is not divisible by r = {r}", self.cells));
                }
                if self.load.is_empty() || self.load.iter().any(|&l| !(0.0..=1.0e3).contains(&l)) {
                    return bad("--load values must be non-negative".into());
                }
            }
            Command::RoundsVsN | Command::RecursionCheck | Command::SubtableCheck => {
                let r = self.single_r()?;
                let k = self.single_k()?;
                if self.load_graph.is_none() {
                    if self.n.is_empty() || self.c.is_empty() {
                        return bad("--n and --c need at least one value".into());
                    }
                    if self.c.iter().any(|&c| !(c >= 0.0)) {
                        return bad("--c values must be non-negative".into());
                    }
                    if self.n.iter().any(|&n| n < r) {
                        return bad(format!("--n values must be at least r = {r}"));
                    }
                    let partitioned = self.variant == Variant::Partitioned
                        || self.command == Command::SubtableCheck;
                    if partitioned && self.n.iter().any(|&n| n % r != 0) {
                        return bad(format!("partitioned graphs need n divisible by r = {r}"));
                    }
                }
                if self.command != Command::RoundsVsN {
                    self.single(&self.n, "--n")?;
                    let c = self.single(&self.c, "--c")?;
                    if !(c > 0.0) || k < 2 {
                        return bad("recursion checks need c > 0 and k >= 2".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// One-line `#` comment recording the full configuration.
    pub fn comment(&self) -> String {
        let mut s = format!(
            "# peelkit {} command={}",
            env!("CARGO_PKG_VERSION"),
            self.command.name()
        );
        match self.command {
            Command::ThresholdTable => {
                let _ = write!(s, " r={} k={} tol={}", csv(&self.r), csv(&self.k), self.tol);
            }
            Command::IbltBench => {
                let _ = write!(
                    s,
                    " load={} cells={} r={} trials={} seed={}",
                    csv(&self.load),
                    self.cells,
                    csv(&self.r),
                    self.trials,
                    self.seed
                );
            }
            _ => {
                let edges = match self.edge_mode {
                    EdgeMode::WithReplacement => "with-replacement",
                    EdgeMode::DistinctEdges => "distinct",
                };
                let _ = write!(
                    s,
                    " n={} c={} r={} k={} trials={} seed={} variant={} edges={edges}",
                    csv(&self.n),
                    csv(&self.c),
                    csv(&self.r),
                    csv(&self.k),
                    self.trials,
                    self.seed,
                    self.variant.name(),
                );
                if let Some(p) = &self.load_graph {
                    let _ = write!(s, " load-graph={}", p.display());
                }
            }
        }
        s
    }
}

fn csv<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Formats a float with 6 significant digits, `%g` style.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if !(-5..6).contains(&exp) {
        let (mant, _) = sci.split_at(sci.find('e').unwrap());
        return format!("{}e{exp}", trim_zeros(mant));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Runs `f(t)` for every trial index on the configured pool; results come
/// back in trial order.
pub fn run_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let threads = std::env::var("PEELKIT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

fn generate(cfg: &ExperimentConfig, partitioned: bool, n: usize, c: f64, r: usize, seed: u64) -> Result<Hypergraph> {
    let m = edge_count_for_density(n, c);
    if partitioned {
        generate_partitioned(n, m, r, seed)
    } else {
        generate_uniform(n, m, r, cfg.edge_mode, seed)
    }
}

fn peel_trial(h: &Hypergraph, k: u32, partitioned: bool) -> Result<PeelTrace> {
    if partitioned {
        peel_subtables(h, k)
    } else {
        peel_parallel(h, k)
    }
}

fn load_graph(cfg: &ExperimentConfig) -> Result<Option<Hypergraph>> {
    let Some(path) = &cfg.load_graph else {
        return Ok(None);
    };
    let file = std::fs::File::open(path)?;
    Ok(Some(Hypergraph::read_edge_list(std::io::BufReader::new(file))?))
}

fn dump_graph(cfg: &ExperimentConfig, h: &Hypergraph) -> Result<()> {
    if let Some(path) = &cfg.dump_graph {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        h.write_edge_list(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundsRow {
    pub n: usize,
    pub c: f64,
    pub failed: usize,
    /// Rounds (uniform) or subrounds (partitioned) per trial.
    pub steps: Vec<usize>,
    /// Plain-round count per trial (for subtables: rounds containing a
    /// productive subround).
    pub rounds: Vec<usize>,
}

impl RoundsRow {
    pub fn mean_steps(&self) -> f64 {
        mean(&self.steps)
    }
}

fn mean(xs: &[usize]) -> f64 {
    xs.iter().sum::<usize>() as f64 / xs.len().max(1) as f64
}

/// Mean rounds (or subrounds) and failure count for every `(n, c)` pair.
pub fn rounds_vs_n(cfg: &ExperimentConfig) -> Result<Vec<RoundsRow>> {
    cfg.validate()?;
    let r = cfg.single_r()?;
    let k = cfg.single_k()?;
    let partitioned = cfg.variant == Variant::Partitioned;
    if let Some(h) = load_graph(cfg)? {
        if partitioned && !h.is_partitioned() {
            return Err(Error::MissingPartition);
        }
        let trace = peel_trial(&h, k, partitioned)?;
        return Ok(vec![RoundsRow {
            n: h.n(),
            c: h.edge_count() as f64 / h.n() as f64,
            failed: usize::from(trace.failed()),
            steps: vec![if partitioned { trace.subrounds } else { trace.rounds }],
            rounds: vec![trace.rounds],
        }]);
    }
    let mut rows = Vec::new();
    for &n in &cfg.n {
        for &c in &cfg.c {
            if rows.is_empty() && cfg.dump_graph.is_some() {
                dump_graph(cfg, &generate(cfg, partitioned, n, c, r, trial_seed(cfg.seed, 0))?)?;
            }
            let results = run_trials(cfg.trials, |t| {
                let h = generate(cfg, partitioned, n, c, r, trial_seed(cfg.seed, t))?;
                let trace = peel_trial(&h, k, partitioned)?;
                let steps = if partitioned { trace.subrounds } else { trace.rounds };
                Ok((trace.failed(), steps, trace.rounds))
            })?;
            rows.push(RoundsRow {
                n,
                c,
                failed: results.iter().filter(|r| r.0).count(),
                steps: results.iter().map(|r| r.1).collect(),
                rounds: results.iter().map(|r| r.2).collect(),
            });
        }
    }
    Ok(rows)
}

/// Survivors after step `s` (1-based); after termination the count stays
/// at the final residual size.
fn survivors_at(trace: &PeelTrace, n: usize, step: usize) -> usize {
    match trace.per_step_survivors.get(step - 1) {
        Some(&v) => v,
        None => trace.per_step_survivors.last().copied().unwrap_or(n),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionRow {
    /// Round `i`.
    pub round: usize,
    /// Subtable `j` (1-based) for the subtable check, `None` otherwise.
    pub subtable: Option<usize>,
    pub predicted: f64,
    pub observed: f64,
}

const MIN_RECURSION_ROWS: usize = 20;

/// Predicted `round(lambda_t n)` against survivors averaged over trials.
pub fn recursion_check(cfg: &ExperimentConfig) -> Result<Vec<RecursionRow>> {
    cfg.validate()?;
    let (n, c, r, k) = (cfg.n[0], cfg.c[0], cfg.single_r()?, cfg.single_k()?);
    let traces = run_trials(cfg.trials, |t| {
        let h = generate(cfg, false, n, c, r, trial_seed(cfg.seed, t))?;
        peel_parallel(&h, k)
    })?;
    let horizon = traces
        .iter()
        .map(|t| t.rounds)
        .max()
        .unwrap_or(0)
        .max(MIN_RECURSION_ROWS);
    let rec = iterate_plain(c, r, k, horizon, 0.0)?;
    let mut rows = Vec::new();
    for t in 1..=horizon {
        let predicted = rec.lambda.get(t).map_or(0.0, |&l| (l * n as f64).round());
        let observed = traces.iter().map(|tr| survivors_at(tr, n, t)).sum::<usize>() as f64
            / traces.len() as f64;
        rows.push(RecursionRow {
            round: t,
            subtable: None,
            predicted,
            observed,
        });
        if predicted == 0.0 && observed == 0.0 {
            break;
        }
    }
    Ok(rows)
}

/// Subtable analogue of [`recursion_check`]: `round(lambda'_{i,j} n)` per
/// subround against partitioned-graph survivors.
pub fn subtable_check(cfg: &ExperimentConfig) -> Result<Vec<RecursionRow>> {
    cfg.validate()?;
    let (n, c, r, k) = (cfg.n[0], cfg.c[0], cfg.single_r()?, cfg.single_k()?);
    let traces = run_trials(cfg.trials, |t| {
        let h = generate(cfg, true, n, c, r, trial_seed(cfg.seed, t))?;
        peel_subtables(&h, k)
    })?;
    let horizon = traces.iter().map(|t| t.rounds).max().unwrap_or(0).max(1);
    let rec = iterate_subtable(c, r, k, horizon, 0.0)?;
    let mut rows = Vec::new();
    'outer: for i in 1..=horizon {
        for j in 1..=r {
            let step = (i - 1) * r + j;
            let predicted = rec
                .lambda_prime
                .get(i)
                .map_or(0.0, |row| (row[j - 1] * n as f64).round());
            let observed = traces
                .iter()
                .map(|tr| survivors_at(tr, n, step))
                .sum::<usize>() as f64
                / traces.len() as f64;
            rows.push(RecursionRow {
                round: i,
                subtable: Some(j),
                predicted,
                observed,
            });
            if predicted == 0.0 && observed == 0.0 {
                break 'outer;
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub r: usize,
    pub k: u32,
    pub c_star: f64,
}

pub fn threshold_table(r_list: &[usize], k_list: &[u32], tol: f64) -> Result<Vec<ThresholdRow>> {
    let mut rows = Vec::with_capacity(r_list.len() * k_list.len());
    for &r in r_list {
        for &k in k_list {
            rows.push(ThresholdRow {
                r,
                k,
                c_star: threshold(r, k, tol)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbltTrial {
    pub items: usize,
    pub recovered: usize,
    pub complete: bool,
    pub rounds: usize,
    pub serial_ms: f64,
    pub parallel_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbltRow {
    pub load: f64,
    pub m: usize,
    pub trials: Vec<IbltTrial>,
}

impl IbltRow {
    pub fn fraction_recovered(&self) -> f64 {
        self.trials
            .iter()
            .map(|t| {
                if t.items == 0 {
                    1.0
                } else {
                    t.recovered as f64 / t.items as f64
                }
            })
            .sum::<f64>()
            / self.trials.len() as f64
    }

    pub fn complete_trials(&self) -> usize {
        self.trials.iter().filter(|t| t.complete).count()
    }

    pub fn mean_rounds(&self) -> f64 {
        mean(&self.trials.iter().map(|t| t.rounds).collect::<Vec<_>>())
    }
}

/// `count` distinct non-zero random keys.
pub fn random_keys(count: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut keys = Vec::with_capacity(count);
    while keys.len() < count {
        let k: u64 = rng.random();
        if k != 0 && seen.insert(k) {
            keys.push(k);
        }
    }
    keys
}

/// One IBLT trial: fill a table with `ceil(load * m)` keys, then time serial
/// and round-based recovery. The two recoveries must agree.
pub fn iblt_trial(m: usize, r: usize, load: f64, seed: u64) -> Result<IbltTrial> {
    let items = edge_count_for_density(m, load);
    let keys = random_keys(items, seed);
    let mut table = Iblt::new(m, r, seed, KeyWidth::Bits64)?;
    table.insert_all(&keys)?;

    let start = Instant::now();
    let serial = table.recover();
    let serial_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let parallel = table.recover_parallel();
    let parallel_ms = start.elapsed().as_secs_f64() * 1e3;

    let truth: HashSet<u64> = keys.iter().copied().collect();
    let genuine = serial.recovered.iter().filter(|k| truth.contains(k)).count();
    if genuine != serial.recovered.len()
        || serial.recovered_sorted() != parallel.recovered_sorted()
        || serial.complete != parallel.complete
    {
        return Err(Error::InvalidParameter(format!(
            "serial and parallel recovery disagree (seed {seed})"
        )));
    }
    Ok(IbltTrial {
        items,
        recovered: genuine,
        complete: serial.complete,
        rounds: parallel.rounds_used,
        serial_ms,
        parallel_ms,
    })
}

pub fn iblt_bench(cfg: &ExperimentConfig) -> Result<Vec<IbltRow>> {
    cfg.validate()?;
    let r = cfg.single_r()?;
    cfg.load
        .iter()
        .map(|&load| {
            let trials = run_trials(cfg.trials, |t| {
                iblt_trial(cfg.cells, r, load, trial_seed(cfg.seed, t))
            })?;
            Ok(IbltRow {
                load,
                m: cfg.cells,
                trials,
            })
        })
        .collect()
}

fn write_rows<W: Write>(out: &mut W, comment: &str, header: &str, rows: &[String]) -> Result<()> {
    writeln!(out, "{comment}")?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Runs the configured command and writes its CSV to `out`.
pub fn run<W: Write>(cfg: &ExperimentConfig, out: &mut W) -> Result<()> {
    cfg.validate()?;
    let comment = cfg.comment();
    match cfg.command {
        Command::RoundsVsN => {
            let rows = rounds_vs_n(cfg)?;
            let header = if cfg.variant == Variant::Partitioned {
                "n,c,failed_count,mean_subrounds"
            } else {
                "n,c,failed_count,mean_rounds"
            };
            let lines: Vec<String> = rows
                .iter()
                .map(|row| {
                    format!(
                        "{},{},{},{}",
                        row.n,
                        fmt_sig6(row.c),
                        row.failed,
                        fmt_sig6(row.mean_steps())
                    )
                })
                .collect();
            write_rows(out, &comment, header, &lines)
        }
        Command::RecursionCheck => {
            let lines: Vec<String> = recursion_check(cfg)?
                .iter()
                .map(|row| {
                    format!(
                        "{},{},{}",
                        row.round,
                        fmt_sig6(row.predicted),
                        fmt_sig6(row.observed)
                    )
                })
                .collect();
            write_rows(out, &comment, "t,predicted_count,mean_observed_count", &lines)
        }
        Command::SubtableCheck => {
            let lines: Vec<String> = subtable_check(cfg)?
                .iter()
                .map(|row| {
                    format!(
                        "{},{},{},{}",
                        row.round,
                        row.subtable.unwrap_or(0),
                        fmt_sig6(row.predicted),
                        fmt_sig6(row.observed)
                    )
                })
                .collect();
            write_rows(out, &comment, "i,j,predicted_count,mean_observed_count", &lines)
        }
        Command::ThresholdTable => {
            let lines: Vec<String> = threshold_table(&cfg.r, &cfg.k, cfg.tol)?
                .iter()
                .map(|row| format!("{},{},{}", row.r, row.k, fmt_sig6(row.c_star)))
                .collect();
            write_rows(out, &comment, "r,k,c_star", &lines)
        }
        Command::IbltBench => {
            let lines: Vec<String> = iblt_bench(cfg)?
                .iter()
                .map(|row| {
                    let serial: f64 = row.trials.iter().map(|t| t.serial_ms).sum::<f64>()
                        / row.trials.len() as f64;
                    let parallel: f64 = row.trials.iter().map(|t| t.parallel_ms).sum::<f64>()
                        / row.trials.len() as f64;
                    format!(
                        "{},{},{},{},{},{}",
                        fmt_sig6(row.load),
                        row.m,
                        fmt_sig6(row.fraction_recovered()),
                        fmt_sig6(serial),
                        fmt_sig6(parallel),
                        fmt_sig6(row.mean_rounds())
                    )
                })
                .collect();
            write_rows(
                out,
                &comment,
                "load,m,fraction_recovered,serial_ms,parallel_ms,rounds",
                &lines,
            )
        }
    }
}

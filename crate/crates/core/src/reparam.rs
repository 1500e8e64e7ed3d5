//! Shared-knot linearization of traced paths.
//!
//! A knot vector `t_1 < ... < t_n` places polyline vertices at the same times
//! on every path. Single paths minimize `E_dev = d_max²`; path sets minimize
//! `E_ass`, the mean squared `d_max` over the paths at least one standard
//! deviation above the mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collapse::{NodeRef, TraceSet};
use crate::error::{Error, Result};
use crate::geometry::{max_deviation, max_deviation_full, TimedPath, Vec3};

/// Minimum spacing between knots and from the implicit end knots.
pub const EPS_GAP: f64 = 1e-3;

/// Slack on the gap constraint absorbing round-off of the projection.
const GAP_SLACK: f64 = 1e-12;

/// Interior knot times; 0 and 1 are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector {
    knots: Vec<f64>,
}

impl ParamVector {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n == 0 {
            return Err(Error::invalid("a knot vector needs at least one interior knot"));
        }
        if (n + 1) as f64 * EPS_GAP > 1.0 {
            return Err(Error::invalid(format!("{n} knots cannot be separated by {EPS_GAP}")));
        }
        let mut prev = 0.0;
        for (i, &t) in knots.iter().chain(std::iter::once(&1.0)).enumerate() {
            if !t.is_finite() || t - prev < EPS_GAP - GAP_SLACK {
                return Err(Error::invalid(format!(
                    "knot vector violates the {EPS_GAP} gap at position {i} ({prev} -> {t})"
                )));
            }
            prev = t;
        }
        Ok(Self { knots })
    }

    /// `t_i = i / (n + 1)`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| i as f64 / (n + 1) as f64).collect())
    }

    /// Nearest feasible knot vector to an arbitrary genome: sorted, then
    /// projected onto the gap constraints in the least-squares sense.
    pub fn repaired(genome: &[f64]) -> Result<Self> {
        let n = genome.len();
        if n == 0 || (n + 1) as f64 * EPS_GAP > 1.0 {
            return Err(Error::invalid(format!("cannot repair a genome of length {n}")));
        }
        let mut t: Vec<f64> = genome.iter().map(|v| if v.is_finite() { *v } else { 0.5 }).collect();
        t.sort_by(f64::total_cmp);
        if let Ok(feasible) = Self::new(t.clone()) {
            return Ok(feasible);
        }
        // s_i = t_i - i·ε turns the gap constraints into 0 ≤ s_1 ≤ ... ≤ s_n ≤ 1 - (n+1)ε
        let s: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, v)| v - (i + 1) as f64 * EPS_GAP)
            .collect();
        let upper = 1.0 - (n + 1) as f64 * EPS_GAP;
        let knots = isotonic(&s)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.clamp(0.0, upper) + (i + 1) as f64 * EPS_GAP)
            .collect();
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n(&self) -> usize {
        self.knots.len()
    }

    /// Knots including the end values 0 and 1.
    pub fn full(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.knots.len() + 2);
        v.push(0.0);
        v.extend_from_slice(&self.knots);
        v.push(1.0);
        v
    }

    /// Copy with an extra knot halfway through full segment `segment`.
    pub fn with_midpoint(&self, segment: usize) -> Result<Self> {
        let full = self.full();
        let mid = 0.5 * (full[segment] + full[segment + 1]);
        let mut knots = self.knots.clone();
        knots.insert(segment, mid);
        Self::repaired(&knots)
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.knots
    }
}

/// Pool-adjacent-violators least-squares non-decreasing fit.
fn isotonic(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let total = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / total as f64, total);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

/// Per-path worst deviations and the selection of punished paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub d_max: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `d_max`.
    pub std_dev: f64,
    pub flagged: Vec<bool>,
    pub k: usize,
    pub energy: f64,
}

impl DeviationReport {
    /// Selects paths with `d − μ ≥ σ` (the argmax alone if none qualifies)
    /// and averages their squared deviations.
    pub fn from_deviations(d_max: Vec<f64>) -> Result<Self> {
        if d_max.is_empty() {
            return Err(Error::invalid("no paths to evaluate"));
        }
        if d_max.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("deviations must be finite and >= 0"));
        }
        // running means over sorted values: independent of path order and exact for identical values
        let mut sorted = d_max.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = running_mean(sorted.iter().copied());
        let std_dev = running_mean(sorted.iter().map(|d| (d - mean) * (d - mean))).sqrt();
        let mut flagged: Vec<bool> = d_max.iter().map(|d| d - mean >= std_dev).collect();
        if !flagged.iter().any(|&b| b) {
            let worst = d_max
                .iter()
                .enumerate()
                .fold(0, |best, (i, d)| if *d > d_max[best] { i } else { best });
            flagged[worst] = true;
        }
        let mut selected: Vec<f64> = d_max
            .iter()
            .zip(&flagged)
            .filter(|(_, &b)| b)
            .map(|(d, _)| *d)
            .collect();
        selected.sort_by(f64::total_cmp);
        let k = selected.len();
        let energy = running_mean(selected.iter().map(|d| d * d));
        Ok(Self {
            d_max,
            mean,
            std_dev,
            flagged,
            k,
            energy,
        })
    }

    pub fn worst(&self) -> f64 {
        self.d_max.iter().copied().fold(0.0, f64::max)
    }
}

fn running_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (i, v) in values.enumerate() {
        mean += (v - mean) / (i + 1) as f64;
    }
    mean
}

/// `E_dev = d_max²` of one path.
pub fn eval_e_dev(path: &TimedPath, knots: &ParamVector) -> Result<(f64, DeviationReport)> {
    let d = max_deviation(path, knots.knots())?;
    let report = DeviationReport::from_deviations(vec![d.max])?;
    Ok((report.energy, report))
}

/// `E_ass` of a synchronized path set.
pub fn eval_e_ass(paths: &[TimedPath], knots: &ParamVector) -> Result<(f64, DeviationReport)> {
    check_shared_grid(paths)?;
    let full = knots.full();
    let d = paths.iter().map(|p| max_deviation_full(p, &full)).collect();
    let report = DeviationReport::from_deviations(d)?;
    Ok((report.energy, report))
}

fn check_shared_grid(paths: &[TimedPath]) -> Result<()> {
    let Some(first) = paths.first() else {
        return Err(Error::invalid("no paths to evaluate"));
    };
    if paths.iter().any(|p| p.times() != first.times()) {
        return Err(Error::invalid("paths do not share one time grid"));
    }
    Ok(())
}

fn e_ass_value(paths: &[TimedPath], full: &[f64]) -> f64 {
    let d = paths.iter().map(|p| max_deviation_full(p, full)).collect();
    DeviationReport::from_deviations(d)
        .map(|r| r.energy)
        .unwrap_or(f64::INFINITY)
}

/// Real-valued genetic algorithm settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Initial standard deviation of Gaussian mutation; decays linearly to 10%.
    pub mutation_scale: f64,
    pub elite: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 60,
            generations: 150,
            crossover_rate: 0.9,
            mutation_scale: 0.1,
            elite: 2,
            seed: 0,
            restarts: 3,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || self.generations < 1 || self.restarts < 1 {
            return Err(Error::invalid(
                "GA needs population >= 4, generations >= 1, restarts >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_scale) {
            return Err(Error::invalid("GA rates must lie in [0, 1]"));
        }
        if self.elite >= self.population {
            return Err(Error::invalid("elite count must be below the population size"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: ParamVector,
    pub fitness: f64,
    /// Best fitness of each restart.
    pub restart_fitness: Vec<f64>,
    /// The best restart saw no improvement during its last 20% of generations.
    pub converged: bool,
    pub evaluations: usize,
}

/// Minimizes `fitness` over feasible knot vectors of length `n`.
///
/// Each restart is seeded from `config.seed` and the restart index. The
/// initial population holds the uniform knots and any `warm` genomes.
pub fn ga_minimize<F>(fitness: F, n: usize, config: &GaConfig, warm: &[ParamVector]) -> Result<GaResult>
where
    F: Fn(&ParamVector) -> f64 + Sync,
{
    config.validate()?;
    if warm.iter().any(|w| w.n() != n) {
        return Err(Error::invalid("warm-start genomes must have n knots"));
    }
    let uniform = ParamVector::uniform(n)?;
    let mut best: Option<(ParamVector, f64, bool)> = None;
    let mut restart_fitness = Vec::with_capacity(config.restarts);
    let mut evaluations = 0;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (genome, value, converged, evals) = ga_run(&fitness, n, config, &uniform, warm, &mut rng)?;
        evaluations += evals;
        restart_fitness.push(value);
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((genome, value, converged));
        }
    }
    let (best, fitness, converged) = best.unwrap();
    Ok(GaResult {
        best,
        fitness,
        restart_fitness,
        converged,
        evaluations,
    })
}

fn ga_run<F>(
    fitness: &F,
    n: usize,
    config: &GaConfig,
    uniform: &ParamVector,
    warm: &[ParamVector],
    rng: &mut ChaCha8Rng,
) -> Result<(ParamVector, f64, bool, usize)>
where
    F: Fn(&ParamVector) -> f64 + Sync,
{
    let evaluate = |pop: &[ParamVector]| -> Vec<f64> {
        pop.par_iter()
            .map(|g| {
                let f = fitness(g);
                if f.is_nan() {
                    f64::INFINITY
                } else {
                    f
                }
            })
            .collect()
    };
    let mut pop: Vec<ParamVector> = Vec::with_capacity(config.population);
    pop.push(uniform.clone());
    pop.extend(warm.iter().take(config.population - 1).cloned());
    while pop.len() < config.population {
        let genome: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        pop.push(ParamVector::repaired(&genome)?);
    }
    let mut fit = evaluate(&pop);
    let mut evaluations = pop.len();
    let (mut best_i, mut best_f) = argmin(&fit);
    let mut best = pop[best_i].clone();
    let mut last_improvement = 0;

    for generation in 1..=config.generations {
        let progress = generation as f64 / config.generations as f64;
        let sigma = config.mutation_scale * (1.0 - 0.9 * progress);
        let normal = Normal::new(0.0, sigma.max(1e-12)).expect("finite sigma");
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let mut next: Vec<ParamVector> = order[..config.elite].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < config.population {
            let a = tournament(&fit, rng);
            let b = tournament(&fit, rng);
            let mut child: Vec<f64> = if rng.random::<f64>() < config.crossover_rate {
                pop[a]
                    .knots()
                    .iter()
                    .zip(pop[b].knots())
                    .map(|(x, y)| {
                        let (lo, hi) = (x.min(*y), x.max(*y));
                        let d = 0.5 * (hi - lo);
                        lo - d + rng.random::<f64>() * (hi - lo + 2.0 * d)
                    })
                    .collect()
            } else {
                pop[a].knots().to_vec()
            };
            let rate = 1.0 / n as f64;
            for c in &mut child {
                if rng.random::<f64>() < rate.max(0.25) {
                    *c += normal.sample(rng);
                }
            }
            next.push(ParamVector::repaired(&child)?);
        }
        pop = next;
        fit = evaluate(&pop);
        evaluations += pop.len();
        let (i, f) = argmin(&fit);
        if f < best_f {
            best_f = f;
            best_i = i;
            best = pop[best_i].clone();
            last_improvement = generation;
        }
    }
    let window = (config.generations as f64 * 0.2).ceil() as usize;
    let converged = config.generations - last_improvement >= window;
    Ok((best, best_f, converged, evaluations))
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bf), (i, &f)| if f < bf { (i, f) } else { (bi, bf) },
    )
}

fn tournament(fit: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 0..2 {
        let c = rng.random_range(0..fit.len());
        if fit[c] < fit[best] || (fit[c] == fit[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Outcome of a knot optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub knots: ParamVector,
    pub energy: f64,
    pub report: DeviationReport,
    pub converged: bool,
    pub restart_energy: Vec<f64>,
}

/// Knots minimizing `E_dev` of one path.
pub fn optimize_single(path: &TimedPath, n: usize, config: &GaConfig) -> Result<Optimized> {
    optimize_synchronized(std::slice::from_ref(path), n, config)
}

/// Shared knots minimizing `E_ass` of a synchronized path set.
pub fn optimize_synchronized(paths: &[TimedPath], n: usize, config: &GaConfig) -> Result<Optimized> {
    optimize_synchronized_warm(paths, n, config, &[])
}

/// [`optimize_synchronized`] with extra genomes in the initial population.
pub fn optimize_synchronized_warm(
    paths: &[TimedPath],
    n: usize,
    config: &GaConfig,
    warm: &[ParamVector],
) -> Result<Optimized> {
    check_shared_grid(paths)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let result = ga_minimize(|k| e_ass_value(paths, &k.full()), n, config, warm)?;
    let (energy, report) = eval_e_ass(paths, &result.best)?;
    Ok(Optimized {
        knots: result.best,
        energy,
        report,
        converged: result.converged,
        restart_energy: result.restart_fitness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub n: usize,
    pub result: Optimized,
    pub seconds: f64,
}

/// Optimizes `n = 1..=n_max` in turn, seeding each run with the previous
/// optimum plus one midpoint knot in every segment.
pub fn sweep(paths: &[TimedPath], n_max: usize, config: &GaConfig) -> Result<Vec<SweepEntry>> {
    sweep_until(paths, n_max, config, |_| false)
}

fn sweep_until(
    paths: &[TimedPath],
    n_max: usize,
    config: &GaConfig,
    stop: impl Fn(&Optimized) -> bool,
) -> Result<Vec<SweepEntry>> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be >= 1"));
    }
    let mut entries: Vec<SweepEntry> = Vec::new();
    for n in 1..=n_max {
        let warm: Vec<ParamVector> = match entries.last() {
            Some(prev) => (0..n)
                .map(|seg| prev.result.knots.with_midpoint(seg))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let started = std::time::Instant::now();
        let result = optimize_synchronized_warm(paths, n, config, &warm)?;
        let done = stop(&result);
        entries.push(SweepEntry {
            n,
            result,
            seconds: started.elapsed().as_secs_f64(),
        });
        if done {
            break;
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub n: usize,
    pub result: Optimized,
    /// `√E_ass < r` was reached.
    pub met: bool,
    pub sweep: Vec<SweepEntry>,
}

/// Smallest `n ≤ n_max` with `√E_ass < r`, or the best sweep entry when none passes.
pub fn select_n(paths: &[TimedPath], r: f64, n_max: usize, config: &GaConfig) -> Result<Selection> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid("threshold r must be > 0"));
    }
    let passes = |o: &Optimized| o.energy.sqrt() < r;
    let entries = sweep_until(paths, n_max, config, passes)?;
    let chosen = entries
        .iter()
        .find(|e| passes(&e.result))
        .or_else(|| {
            entries
                .iter()
                .min_by(|a, b| a.result.energy.total_cmp(&b.result.energy))
        })
        .unwrap();
    Ok(Selection {
        n: chosen.n,
        result: chosen.result.clone(),
        met: passes(&chosen.result),
        sweep: entries,
    })
}

/// How a knot vector was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub ga: GaConfig,
    pub converged: bool,
    /// Threshold used by automatic `n` selection, if any.
    pub threshold: Option<f64>,
    pub threshold_met: Option<bool>,
}

/// Traced paths sampled at shared knots.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedPathSet {
    /// Knot times including 0 and 1.
    pub knots: Vec<f64>,
    pub nodes: Vec<NodeRef>,
    /// `positions[j][i]`: path `j` at knot `i`.
    pub positions: Vec<Vec<Vec3>>,
    pub report: DeviationReport,
    pub optimizer: Option<OptimizerInfo>,
    /// The trace the knots were placed on.
    pub source: TraceSet,
}

impl LinearizedPathSet {
    pub fn n(&self) -> usize {
        self.knots.len() - 2
    }

    /// Position of path `j` at time `t` along its linear segments.
    pub fn position_at(&self, j: usize, t: f64) -> Vec3 {
        let k = &self.knots;
        let i = k.partition_point(|&x| x <= t).clamp(1, k.len() - 1) - 1;
        let a = (t - k[i]) / (k[i + 1] - k[i]);
        let p = &self.positions[j];
        p[i] + (p[i + 1] - p[i]) * a.clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.nodes.len();
        if self.knots.len() < 2 || self.knots[0] != 0.0 || *self.knots.last().unwrap() != 1.0 {
            return Err(Error::invalid("knots must start at 0 and end at 1"));
        }
        if self.knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        if self.positions.len() != m || self.positions.iter().any(|p| p.len() != self.knots.len()) {
            return Err(Error::invalid("every path needs one position per knot"));
        }
        if self.source.nodes != self.nodes {
            return Err(Error::invalid("linearized nodes do not match the source trace"));
        }
        Ok(())
    }
}

/// Samples every trace path at `c(0), c(t_1), ..., c(t_n), c(1)`.
pub fn linearize(trace: &TraceSet, knots: &ParamVector, optimizer: Option<OptimizerInfo>) -> Result<LinearizedPathSet> {
    trace.validate()?;
    let (_, report) = eval_e_ass(&trace.paths, knots)?;
    let full = knots.full();
    let positions = trace
        .paths
        .iter()
        .map(|p| full.iter().map(|&t| p.position_at(t)).collect())
        .collect();
    Ok(LinearizedPathSet {
        knots: full,
        nodes: trace.nodes.clone(),
        positions,
        report,
        optimizer,
        source: trace.clone(),
    })
}

//! Multiple-proposal Metropolis sampler with parallel target evaluation.
//!
//! Each step draws an auxiliary point `z ~ N(x, Σ/2)` and `K` proposals
//! `y_k ~ N(z, Σ/2)`. Given `z`, the current state and the proposals are
//! exchangeable, so the next state is chosen among the `K + 1` candidates by a
//! Metropolized Gibbs move on weights proportional to the target. For `K = 1`
//! this is random-walk Metropolis with proposal `N(x, Σ)`.
//!
//! All random numbers of a step are drawn from the chain's own stream before
//! the targets are evaluated, so results do not depend on thread scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_INIT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_proposals: usize,
    pub n_steps: usize,
    pub burn_in: usize,
    pub scales: Vec<f64>,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_proposals: rayon::current_num_threads().clamp(1, 8),
            n_steps: 20_000,
            burn_in: 2_000,
            scales: vec![0.05, 0.05, 1.0, 0.15],
            seed: 1,
            n_chains: 4,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_proposals == 0 {
            return Err(Error::config("n_proposals", "must be >= 1"));
        }
        if self.n_steps <= self.burn_in {
            return Err(Error::config("n_steps", "must exceed burn_in"));
        }
        if self.n_chains == 0 {
            return Err(Error::config("n_chains", "must be >= 1"));
        }
        if self.scales.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::config("scales", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Post-burn-in states of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorChain {
    pub samples: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    /// Steps (burn-in included) on which the state changed.
    pub accepted: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chain_index: usize,
}

impl PosteriorChain {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.steps as f64
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }

    /// CSV with a `step` column, one column per coordinate and `logdensity`.
    pub fn write_csv(&self, names: &[&str], w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        header.push("logdensity".into());
        wtr.write_record(&header)?;
        for (i, (s, l)) in self.samples.iter().zip(&self.log_density).enumerate() {
            let mut rec = vec![(self.burn_in + i).to_string()];
            rec.extend(s.iter().map(|v| format!("{v:.17e}")));
            rec.push(format!("{l:.17e}"));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs one chain from `init`.
pub fn run<F>(cfg: &SamplerConfig, target: &F, init: &[f64]) -> Result<PosteriorChain>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    run_with_rng(cfg, target, init, chain_rng(cfg.seed, 0), 0)
}

fn run_with_rng<F>(
    cfg: &SamplerConfig,
    target: &F,
    init: &[f64],
    mut rng: ChaCha20Rng,
    chain_index: usize,
) -> Result<PosteriorChain>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dim = init.len();
    if cfg.scales.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: cfg.scales.len(),
        });
    }
    let mut x = init.to_vec();
    let mut lx = target(&x);
    if !lx.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "initial state {x:?} is outside the target support"
        )));
    }
    let k = cfg.n_proposals;
    let half: Vec<f64> = cfg.scales.iter().map(|s| s * std::f64::consts::FRAC_1_SQRT_2).collect();
    let keep = cfg.n_steps - cfg.burn_in;
    let mut samples = Vec::with_capacity(keep);
    let mut log_density = Vec::with_capacity(keep);
    let mut accepted = 0;

    for step in 0..cfg.n_steps {
        let z: Vec<f64> = (0..dim)
            .map(|i| x[i] + half[i] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let props: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..dim)
                    .map(|i| z[i] + half[i] * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let u_pick: f64 = rng.gen();
        let u_acc: f64 = rng.gen();

        let lp: Vec<f64> = if k == 1 {
            vec![target(&props[0])]
        } else {
            props.par_iter().map(|y| target(y)).collect()
        };

        if let Some(j) = choose(lx, &lp, u_pick, u_acc) {
            if props[j] != x {
                accepted += 1;
            }
            x.clone_from(&props[j]);
            lx = lp[j];
        }
        if step >= cfg.burn_in {
            samples.push(x.clone());
            log_density.push(lx);
        }
    }
    Ok(PosteriorChain {
        samples,
        log_density,
        accepted,
        steps: cfg.n_steps,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        chain_index,
    })
}

/// Metropolized Gibbs move from the current state (log density `lx`) among
/// proposals with log densities `lp`. Returns the chosen proposal, or `None`
/// to stay.
fn choose(lx: f64, lp: &[f64], u_pick: f64, u_acc: f64) -> Option<usize> {
    let max = lp.iter().copied().fold(lx, f64::max);
    let wx = (lx - max).exp();
    let wp: Vec<f64> = lp
        .iter()
        .map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 })
        .collect();
    let others: f64 = wp.iter().sum();
    if !(others > 0.0) {
        return None;
    }
    let total = wx + others;
    let pi_x = wx / total;
    // pick j != current with probability w_j / (1 - w_x)
    let mut acc = 0.0;
    let mut pick = wp.len() - 1;
    for (j, w) in wp.iter().enumerate() {
        acc += w / others;
        if u_pick < acc {
            pick = j;
            break;
        }
    }
    if wp[pick] == 0.0 {
        return None;
    }
    let pi_j = wp[pick] / total;
    let ratio = (1.0 - pi_x) / (1.0 - pi_j);
    (u_acc < ratio).then_some(pick)
}

/// Runs `cfg.n_chains` independent chains in parallel. Chain `i` uses stream
/// `i` of the configured seed and starts from `inits[i]`.
pub fn run_chains<F>(cfg: &SamplerConfig, target: &F, inits: &[Vec<f64>]) -> Result<Vec<PosteriorChain>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if inits.len() != cfg.n_chains {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_chains,
            got: inits.len(),
        });
    }
    (0..cfg.n_chains)
        .into_par_iter()
        .map(|i| run_with_rng(cfg, target, &inits[i], chain_rng(cfg.seed, i), i))
        .collect()
}

/// Uniform draw from `bounds`, redrawn until the target is finite.
pub fn draw_init<F>(bounds: &[[f64; 2]], target: &F, seed: u64, chain: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    draw_init_best(bounds, target, seed, chain, 1)
}

/// Highest-density point among `candidates` in-support uniform draws from
/// `bounds`. Draws outside the support do not count towards `candidates`.
pub fn draw_init_best<F>(
    bounds: &[[f64; 2]],
    target: &F,
    seed: u64,
    chain: usize,
    candidates: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    // separate stream family from the chains themselves
    let mut rng = chain_rng(seed ^ 0x5eed_1417_u64, chain);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut found = 0;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x: Vec<f64> = bounds.iter().map(|b| rng.gen_range(b[0]..=b[1])).collect();
        let l = target(&x);
        if !l.is_finite() {
            continue;
        }
        found += 1;
        if best.as_ref().map_or(true, |(bl, _)| l > *bl) {
            best = Some((l, x));
        }
        if found >= candidates.max(1) {
            break;
        }
    }
    best.map(|(_, x)| x).ok_or(Error::EmptySupport)
}

/// Density histogram over `[lo, hi]`; samples outside the range are ignored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.density.len())
            .map(|i| self.lo + (i as f64 + 0.5) * w)
            .collect()
    }

    /// Bin probabilities (density times width).
    pub fn mass(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.density.iter().map(|d| d * w).collect()
    }

    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        self.centers()[i]
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bin_center", "density"])?;
        for (c, d) in self.centers().iter().zip(&self.density) {
            wtr.write_record([format!("{c:.17e}"), format!("{d:.17e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn marginal_histogram(values: &[f64], bins: usize, range: [f64; 2]) -> Result<Histogram> {
    if bins == 0 || !(range[0] < range[1]) {
        return Err(Error::InvalidArgument(format!(
            "bad histogram spec: {bins} bins over {range:?}"
        )));
    }
    let width = (range[1] - range[0]) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= range[0] && v <= range[1] {
            let i = (((v - range[0]) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidArgument("no samples inside histogram range".into()));
    }
    Ok(Histogram {
        lo: range[0],
        hi: range[1],
        density: counts
            .iter()
            .map(|&c| c as f64 / (n as f64 * width))
            .collect(),
    })
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| {
        x[..n - lag]
            .iter()
            .zip(&x[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while 2 * t + 1 < n {
        let pair = acf(2 * t) + acf(2 * t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

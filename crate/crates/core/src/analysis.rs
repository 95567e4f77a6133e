//! Post-processing of posterior chains: marginals, summaries, the tightening
//! report across discretization settings and the fixed-C comparison.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{marginal_histogram, Histogram, PosteriorChain};

/// Coordinate names in sampler order.
pub const COORDS: [&str; 4] = ["a", "b", "d", "log10C"];

/// Default histogram resolution for marginals and modes.
pub const DEFAULT_BINS: usize = 64;

/// Per-run summary statistics over pooled chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub n_stations: usize,
    pub p: usize,
    pub noise_rel: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub mode: Vec<f64>,
    /// Per-coordinate standard deviation of the chain means.
    pub between_chain_std: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub n_samples: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn pooled(chains: &[PosteriorChain], k: usize) -> Vec<f64> {
    chains.iter().flat_map(|c| c.coordinate(k)).collect()
}

/// Histograms of each coordinate over `bounds`, pooled over chains.
pub fn marginals(chains: &[PosteriorChain], bounds: &[[f64; 2]], bins: usize) -> Result<Vec<Histogram>> {
    if chains.iter().all(|c| c.samples.is_empty()) {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    (0..bounds.len())
        .map(|k| marginal_histogram(&pooled(chains, k), bins, bounds[k]))
        .collect()
}

pub fn summarize(
    label: &str,
    n_stations: usize,
    p: usize,
    noise_rel: f64,
    chains: &[PosteriorChain],
    bounds: &[[f64; 2]],
    bins: usize,
) -> Result<RunSummary> {
    let hists = marginals(chains, bounds, bins)?;
    let dim = bounds.len();
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    let mut between = Vec::with_capacity(dim);
    for k in 0..dim {
        let (m, s) = mean_std(&pooled(chains, k));
        mean.push(m);
        std.push(s);
        let chain_means: Vec<f64> = chains.iter().map(|c| mean_std(&c.coordinate(k)).0).collect();
        between.push(mean_std(&chain_means).1);
    }
    Ok(RunSummary {
        label: label.to_string(),
        n_stations,
        p,
        noise_rel,
        mean,
        std,
        mode: hists.iter().map(Histogram::mode).collect(),
        between_chain_std: between,
        acceptance: chains.iter().map(PosteriorChain::acceptance_rate).collect(),
        n_samples: chains.iter().map(|c| c.samples.len()).sum(),
    })
}

/// Total-variation distance between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "tv_distance needs equal lengths");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical quantile by linear interpolation of the sorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Central interval holding `level` of the sample.
pub fn central_interval(values: &[f64], level: f64) -> [f64; 2] {
    let tail = 0.5 * (1.0 - level);
    [quantile(values, tail), quantile(values, 1.0 - tail)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TighteningReport {
    pub m_true: [f64; 3],
    pub settings: Vec<RunSummary>,
    /// `std` of a, b, d per setting, in setting order.
    pub stds: Vec<[f64; 3]>,
    /// `|mode - m_true|` per setting.
    pub mode_errors: Vec<[f64; 3]>,
    /// Strictly decreasing std across settings, per coordinate.
    pub monotone: [bool; 3],
    /// Mode error at the last setting within `mode_tolerance` of the box width.
    pub mode_ok: [bool; 3],
    pub mode_tolerance: f64,
    /// All settings report identical spreads, so nothing tightened.
    pub degenerate: bool,
}

impl TighteningReport {
    pub fn passed(&self) -> bool {
        !self.degenerate && self.monotone.iter().all(|&b| b) && self.mode_ok.iter().all(|&b| b)
    }
}

/// Compares posterior spreads across settings ordered by increasing size.
pub fn tightening_report(
    settings: &[RunSummary],
    m_true: [f64; 3],
    box_widths: [f64; 3],
    mode_tolerance: f64,
) -> Result<TighteningReport> {
    if settings.is_empty() {
        return Err(Error::InvalidArgument("no runs to compare".into()));
    }
    let stds: Vec<[f64; 3]> = settings.iter().map(|s| [s.std[0], s.std[1], s.std[2]]).collect();
    let mode_errors: Vec<[f64; 3]> = settings
        .iter()
        .map(|s| [0, 1, 2].map(|k| (s.mode[k] - m_true[k]).abs()))
        .collect();
    let monotone = [0, 1, 2].map(|k| stds.windows(2).all(|w| w[1][k] < w[0][k]));
    let last = mode_errors[mode_errors.len() - 1];
    let mode_ok = [0, 1, 2].map(|k| last[k] <= mode_tolerance * box_widths[k]);
    let degenerate = settings.len() > 1 && stds.windows(2).all(|w| w[0] == w[1]);
    Ok(TighteningReport {
        m_true,
        settings: settings.to_vec(),
        stds,
        mode_errors,
        monotone,
        mode_ok,
        mode_tolerance,
        degenerate,
    })
}

/// Marginals of `(a, b, d)` at one frozen regularization constant.
#[derive(Clone, Debug, Serialize)]
pub struct FixedCRun {
    pub log10_c: f64,
    pub summary: RunSummary,
    pub marginals: Vec<Histogram>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedCReport {
    pub runs: Vec<FixedCRun>,
    /// Range of the modes across the fixed values, per coordinate.
    pub mode_spread: [f64; 3],
    /// Largest pairwise total-variation distance between marginals, per
    /// coordinate.
    pub max_tv: [f64; 3],
}

pub fn fixed_c_report(runs: Vec<FixedCRun>) -> Result<FixedCReport> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no fixed-C runs".into()));
    }
    let mut mode_spread = [0.0; 3];
    let mut max_tv = [0.0f64; 3];
    for k in 0..3 {
        let modes: Vec<f64> = runs.iter().map(|r| r.summary.mode[k]).collect();
        let lo = modes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = modes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mode_spread[k] = hi - lo;
        for i in 0..runs.len() {
            for j in 0..i {
                let tv = tv_distance(&runs[i].marginals[k].mass(), &runs[j].marginals[k].mass());
                max_tv[k] = max_tv[k].max(tv);
            }
        }
    }
    Ok(FixedCReport {
        runs,
        mode_spread,
        max_tv,
    })
}

/// Writes `marginal_<coord>.csv` for each histogram into `dir`.
pub fn write_marginals(dir: &Path, hists: &[Histogram]) -> Result<()> {
    for (name, h) in COORDS.iter().zip(hists) {
        let f = File::create(dir.join(format!("marginal_{name}.csv")))?;
        h.write_csv(BufWriter::new(f))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

//! Drivers wiring a [`RunConfig`] to the numerical modules. Shared by the
//! command-line tool and the experiment tests.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::analysis::{
    self, central_interval, fixed_c_report, pooled, summarize, tightening_report, FixedCReport,
    FixedCRun, RunSummary, TighteningReport, COORDS,
};
use crate::config::{RunConfig, SamplingConfig, StationConfig};
use crate::error::{Error, Result};
use crate::posterior::PosteriorModel;
use crate::quadrature::{
    gauss_stations, read_layout_csv, station_weights_from_layout, FaultQuadrature, Rect,
    StationMode, StationSet,
};
use crate::geometry::SlipBasis;
use crate::sampler::{draw_init_best, run_chains, PosteriorChain, SamplerConfig};
use crate::synth::{self, SynthData, SynthScenario};

pub fn build_stations(sc: &StationConfig, window: Rect) -> Result<StationSet> {
    let set = match sc.mode {
        StationMode::GaussTensor => gauss_stations(sc.n_per_axis, window)?,
        StationMode::FixedStations => {
            let path = sc
                .layout
                .as_ref()
                .ok_or_else(|| Error::config("stations.layout", "missing layout path"))?;
            let pts = read_layout_csv(path)
                .map_err(|e| Error::config("stations.layout", format!("{}: {e}", path.display())))?;
            station_weights_from_layout(&pts, window)?
        }
    };
    set.validate(sc.strict_weights)?;
    Ok(set)
}

pub fn fault_rule(p: usize, order: Option<usize>, rect: Rect) -> Result<FaultQuadrature> {
    FaultQuadrature::gauss(order.unwrap_or_else(|| FaultQuadrature::default_order(p)), rect)
}

pub fn synthesize(cfg: &RunConfig, scn: &SynthScenario, stations: &StationSet) -> Result<SynthData> {
    synth::generate(scn, cfg.geometry.fault_rect, stations, &cfg.geometry.elastic)
}

/// Posterior for basis size `p` on `stations` given unweighted data.
pub fn build_model(
    cfg: &RunConfig,
    p: usize,
    fault_order: Option<usize>,
    stations: StationSet,
    data: &[[f64; 3]],
) -> Result<PosteriorModel> {
    let rect = cfg.geometry.fault_rect;
    let mut model = PosteriorModel::new(
        cfg.admissible(),
        cfg.prior.log10_c_range,
        SlipBasis::new(p, rect)?,
        stations,
        fault_rule(p, fault_order, rect)?,
        cfg.geometry.elastic,
        data,
    )?;
    model.c_prior = cfg.prior.c_prior;
    model.sigma_rule = cfg.prior.sigma_rule;
    model.slip_fallback = cfg.geometry.slip_fallback;
    Ok(model)
}

/// Chains over `(a, b, d, log10 C)`.
pub fn sample_posterior(model: &PosteriorModel, s: &SamplingConfig) -> Result<Vec<PosteriorChain>> {
    let target = |x: &[f64]| model.log_density(x);
    let bounds = model.bounds();
    sample_target(&target, &bounds, &s.chain, s.init_candidates)
}

/// Chains over `(a, b, d)` with `log10 C` frozen.
pub fn sample_fixed_c(
    model: &PosteriorModel,
    s: &SamplingConfig,
    log10_c: f64,
) -> Result<Vec<PosteriorChain>> {
    let target = |x: &[f64]| model.log_density_fixed_c(x, log10_c);
    let b = model.bounds();
    let chain = SamplerConfig {
        scales: s.chain.scales[..3].to_vec(),
        ..s.chain.clone()
    };
    sample_target(&target, &b[..3], &chain, s.init_candidates)
}

fn sample_target<F>(
    target: &F,
    bounds: &[[f64; 2]],
    chain: &SamplerConfig,
    candidates: usize,
) -> Result<Vec<PosteriorChain>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let inits = (0..chain.n_chains)
        .map(|i| draw_init_best(bounds, target, chain.seed, i, candidates))
        .collect::<Result<Vec<_>>>()?;
    run_chains(chain, target, &inits)
}

fn with_scales(base: &SamplingConfig, scales: Option<&Vec<f64>>) -> SamplingConfig {
    let mut s = base.clone();
    if let Some(sc) = scales {
        s.chain.scales = sc.clone();
    }
    s
}

pub fn prior_bounds(cfg: &RunConfig) -> [[f64; 2]; 4] {
    [
        cfg.prior.a_range,
        cfg.prior.b_range,
        cfg.prior.d_range,
        cfg.prior.log10_c_range,
    ]
}

pub fn write_stations_csv(stations: &StationSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["x1", "x2", "weight"])?;
    for (p, wt) in stations.points.iter().zip(&stations.weights) {
        w.write_record([p[0], p[1], *wt].map(|x| format!("{x:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_synth(dir: &Path, stations: &StationSet, data: &SynthData) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_stations_csv(stations, &dir.join("stations.csv"))?;
    synth::write_data_csv(stations, &data.clean, BufWriter::new(File::create(dir.join("data_clean.csv"))?))?;
    synth::write_data_csv(stations, &data.noisy, BufWriter::new(File::create(dir.join("data_noisy.csv"))?))?;
    Ok(())
}

pub fn write_chains(dir: &Path, chains: &[PosteriorChain], names: &[&str]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for c in chains {
        let f = File::create(dir.join(format!("chain_{}.csv", c.chain_index)))?;
        c.write_csv(names, BufWriter::new(f))?;
    }
    Ok(())
}

/// Summary, marginals and chains of one sampling run.
#[derive(Clone, Debug, Serialize)]
pub struct SampleOutput {
    pub summary: RunSummary,
    pub sigma: f64,
    pub relative_noise: f64,
    pub central_90: Vec<[f64; 2]>,
}

/// Synthesizes data for one setting, samples and optionally writes outputs.
#[allow(clippy::too_many_arguments)]
pub fn run_setting(
    cfg: &RunConfig,
    sampling: &SamplingConfig,
    stations_cfg: &StationConfig,
    p: usize,
    noise_rel: f64,
    label: &str,
    out: Option<&Path>,
) -> Result<SampleOutput> {
    let stations = build_stations(stations_cfg, cfg.geometry.window)?;
    let scn = SynthScenario {
        noise_rel,
        ..cfg.scenario.clone()
    };
    let data = synthesize(cfg, &scn, &stations)?;
    let order = if p == cfg.basis.p { cfg.basis.fault_order } else { None };
    let model = build_model(cfg, p, order, stations.clone(), &data.noisy)?;
    let chains = sample_posterior(&model, sampling)?;
    let bounds = prior_bounds(cfg);
    let summary = summarize(label, stations.len(), p, noise_rel, &chains, &bounds, cfg.sampler.bins)?;
    let central_90 = (0..4).map(|k| central_interval(&pooled(&chains, k), 0.9)).collect();
    let output = SampleOutput {
        summary,
        sigma: data.sigma,
        relative_noise: data.relative_error(),
        central_90,
    };
    if let Some(dir) = out {
        write_synth(dir, &stations, &data)?;
        write_chains(dir, &chains, &COORDS)?;
        analysis::write_marginals(dir, &analysis::marginals(&chains, &bounds, cfg.sampler.bins)?)?;
        analysis::write_json(&dir.join("summary.json"), &output)?;
    }
    Ok(output)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentsOutput {
    pub reports: Vec<(f64, TighteningReport)>,
    /// For each setting, whether the larger noise level gave larger spreads in
    /// all of a, b, d than the smaller one.
    pub noise_ordering: Vec<bool>,
}

/// Runs every `(stations, p)` setting at every noise level.
pub fn run_experiments(cfg: &RunConfig, out: Option<&Path>) -> Result<ExperimentsOutput> {
    let e = &cfg.experiments;
    let m = cfg.m_true().to_array();
    let widths = [0, 1, 2].map(|k| prior_bounds(cfg)[k][1] - prior_bounds(cfg)[k][0]);
    let mut reports = Vec::new();
    for (level, &noise) in e.noise_levels.iter().enumerate() {
        let sampling = with_scales(&cfg.sampler, e.scales.get(level));
        let mut runs = Vec::new();
        for s in &e.settings {
            let n = match s.stations.mode {
                StationMode::GaussTensor => s.stations.n_per_axis.pow(2).to_string(),
                StationMode::FixedStations => "layout".into(),
            };
            let label = format!("noise{noise}_M{n}_p{}", s.p);
            log::info!("experiment {label}");
            let dir = out.map(|o| o.join(&label));
            runs.push(run_setting(cfg, &sampling, &s.stations, s.p, noise, &label, dir.as_deref())?.summary);
        }
        reports.push((noise, tightening_report(&runs, m, widths, e.mode_tolerance)?));
    }
    let mut noise_ordering = Vec::new();
    if reports.len() >= 2 {
        let lo = &reports[0].1;
        let hi = &reports[reports.len() - 1].1;
        for (a, b) in lo.stds.iter().zip(&hi.stds) {
            noise_ordering.push((0..3).all(|k| b[k] > a[k]));
        }
    }
    let output = ExperimentsOutput {
        reports,
        noise_ordering,
    };
    if let Some(dir) = out {
        analysis::write_json(&dir.join("tightening.json"), &output)?;
    }
    Ok(output)
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedCOutput {
    pub report: FixedCReport,
    pub random_c: RunSummary,
    pub random_c_central_90: Vec<[f64; 2]>,
    /// Whether each of a, b, d of the truth lies in the random-C 90% interval.
    pub truth_covered: [bool; 3],
}

/// Fixed-C marginals at each configured value plus the random-C reference,
/// on the configured stations and basis.
pub fn run_fixed_c(cfg: &RunConfig, out: Option<&Path>) -> Result<FixedCOutput> {
    let sampling = with_scales(&cfg.sampler, cfg.fixed_c.scales.as_ref());
    let stations = build_stations(&cfg.stations, cfg.geometry.window)?;
    let data = synthesize(cfg, &cfg.scenario, &stations)?;
    let model = build_model(cfg, cfg.basis.p, cfg.basis.fault_order, stations.clone(), &data.noisy)?;
    let bounds = prior_bounds(cfg);
    let bins = cfg.sampler.bins;
    let mut runs = Vec::new();
    for &lc in &cfg.fixed_c.log10_c_values {
        log::info!("fixed C = 1e{lc}");
        let chains = sample_fixed_c(&model, &sampling, lc)?;
        let label = format!("fixedC_{lc}");
        let summary = summarize(&label, stations.len(), cfg.basis.p, cfg.scenario.noise_rel, &chains, &bounds[..3], bins)?;
        let marginals = analysis::marginals(&chains, &bounds[..3], bins)?;
        if let Some(o) = out {
            let dir = o.join(&label);
            write_chains(&dir, &chains, &COORDS[..3])?;
            analysis::write_marginals(&dir, &marginals)?;
        }
        runs.push(FixedCRun {
            log10_c: lc,
            summary,
            marginals,
        });
    }
    let chains = sample_posterior(&model, &sampling)?;
    let random_c = summarize("randomC", stations.len(), cfg.basis.p, cfg.scenario.noise_rel, &chains, &bounds, bins)?;
    let central: Vec<[f64; 2]> = (0..4).map(|k| central_interval(&pooled(&chains, k), 0.9)).collect();
    let m = cfg.m_true().to_array();
    let truth_covered = [0, 1, 2].map(|k| central[k][0] <= m[k] && m[k] <= central[k][1]);
    if let Some(o) = out {
        let dir = o.join("randomC");
        write_synth(o, &stations, &data)?;
        write_chains(&dir, &chains, &COORDS)?;
        analysis::write_marginals(&dir, &analysis::marginals(&chains, &bounds, bins)?)?;
    }
    let output = FixedCOutput {
        report: fixed_c_report(runs)?,
        random_c,
        random_c_central_90: central,
        truth_covered,
    };
    if let Some(o) = out {
        analysis::write_json(&o.join("fixed_c.json"), &output)?;
    }
    Ok(output)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use faultinv::analysis::{self, write_json, COORDS};
use faultinv::config::RunConfig;
use faultinv::error::Error;
use faultinv::forward::{self, predict};
use faultinv::geometry::FaultGeometry;
use faultinv::pipeline::{self, build_model, build_stations, prior_bounds, synthesize};
use faultinv::posterior::{posterior_grid, GRID_LIMIT};
use faultinv::synth::read_data_csv;
use faultinv::tikhonov::{sigma_max2, solve_gmin};

#[derive(Parser)]
#[command(name = "faultinv", version, about = "Stochastic fault-plane inversion from surface displacements")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON config file (a manifest.json from a previous run also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set scenario.noise_rel=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the config and print the resolved parameters.
    Validate,
    /// Generate clean and noisy synthetic station data.
    Synth,
    /// Diagnostics of the regularized solve at one (m, C).
    Invert {
        /// Fault parameters `a,b,d`; defaults to the scenario's true fault.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        m: Option<Vec<f64>>,
        #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
        log10c: f64,
        /// Station data CSV (`x1,x2,u1,u2,u3`); synthesized when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample the posterior of (a, b, d, log10 C).
    Sample {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate the normalized posterior on the configured lattice.
    Grid {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the tightening suite over all settings and noise levels.
    Experiments,
    /// Compare marginals at fixed regularization constants.
    FixedC,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let code = match e.kind() {
                DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::LatticeTooLarge { .. } => 1,
        _ => 2,
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    command: &'static str,
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("--threads", e.to_string()))?;
    }
    let mut cfg = RunConfig::load(cli.common.config.as_deref(), &cli.common.set)?;
    if let Some(o) = &cli.common.out {
        cfg.output_dir = o.clone();
    }
    let out = cfg.output_dir.clone();
    let ctx = |command| Ctx {
        cfg: cfg.clone(),
        out: out.clone(),
        command,
    };
    match cli.cmd {
        Cmd::Validate => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(())
        }
        Cmd::Synth => synth_cmd(&ctx("synth")),
        Cmd::Invert { m, log10c, data } => invert_cmd(&ctx("invert"), m, log10c, data.as_deref()),
        Cmd::Sample { data } => sample_cmd(&ctx("sample"), data.as_deref()),
        Cmd::Grid { data } => grid_cmd(&ctx("grid"), data.as_deref()),
        Cmd::Experiments => {
            let c = ctx("experiments");
            fs::create_dir_all(&c.out)?;
            let res = pipeline::run_experiments(&c.cfg, Some(&c.out))?;
            for (noise, r) in &res.reports {
                println!(
                    "noise {noise}: stds {:?} monotone {:?} mode_ok {:?}",
                    r.stds, r.monotone, r.mode_ok
                );
            }
            write_manifest(&c)
        }
        Cmd::FixedC => {
            let c = ctx("fixed-c");
            fs::create_dir_all(&c.out)?;
            let res = pipeline::run_fixed_c(&c.cfg, Some(&c.out))?;
            println!(
                "max TV between fixed-C marginals (a, b, d): {:?}; truth in random-C 90% interval: {:?}",
                res.report.max_tv, res.truth_covered
            );
            write_manifest(&c)
        }
    }
}

/// Station set of the run and its data: loaded from CSV, or synthesized.
fn load_data(
    c: &Ctx,
    data: Option<&Path>,
) -> Result<(faultinv::quadrature::StationSet, Vec<[f64; 3]>), Error> {
    let stations = build_stations(&c.cfg.stations, c.cfg.geometry.window)?;
    match data {
        Some(path) => {
            let (pts, u) = read_data_csv(path)?;
            let same = pts.len() == stations.len()
                && pts
                    .iter()
                    .zip(&stations.points)
                    .all(|(a, b)| (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            if !same {
                return Err(Error::config(
                    "--data",
                    "station coordinates differ from the configured stations",
                ));
            }
            Ok((stations, u))
        }
        None => {
            let d = synthesize(&c.cfg, &c.cfg.scenario, &stations)?;
            Ok((stations, d.noisy))
        }
    }
}

fn synth_cmd(c: &Ctx) -> Result<(), Error> {
    let stations = build_stations(&c.cfg.stations, c.cfg.geometry.window)?;
    let data = synthesize(&c.cfg, &c.cfg.scenario, &stations)?;
    pipeline::write_synth(&c.out, &stations, &data)?;
    println!(
        "{} stations, sigma = {:.6e} m, realized relative noise = {:.4}",
        stations.len(),
        data.sigma,
        data.relative_error()
    );
    write_manifest(c)
}

fn invert_cmd(c: &Ctx, m: Option<Vec<f64>>, log10c: f64, data: Option<&Path>) -> Result<(), Error> {
    let m = match m {
        Some(v) if v.len() == 3 => FaultGeometry::new(v[0], v[1], v[2]),
        Some(_) => return Err(Error::config("--m", "expected three values a,b,d")),
        None => c.cfg.m_true(),
    };
    let (stations, u) = load_data(c, data)?;
    let model = build_model(&c.cfg, c.cfg.basis.p, c.cfg.basis.fault_order, stations.clone(), &u)?;
    c.cfg
        .admissible()
        .check(&m)
        .map_err(|e| Error::config("--m", e.to_string()))?;
    let cval = 10f64.powf(log10c);
    let fwd = model.forward(&m)?;
    let sol = solve_gmin(&fwd.matrix, &model.data, cval)?;
    let eval = model.terms(&sol);
    let t = m.slip_direction_or(model.slip_fallback)?;
    let rule_check = forward::self_check(&m, &model.basis, &stations, &model.rule, &model.elastic, &t)?;
    let pred = predict(&m, &model.basis, sol.coeffs.as_slice(), &stations, &model.rule, &model.elastic, &t)?;
    fs::create_dir_all(&c.out)?;
    faultinv::synth::write_data_csv(
        &stations,
        &pred,
        std::io::BufWriter::new(fs::File::create(c.out.join("predicted.csv"))?),
    )?;
    let mut w = csv::Writer::from_path(c.out.join("coeffs.csv"))?;
    w.write_record(["k", "l", "coeff"])?;
    for (i, v) in sol.coeffs.iter().enumerate() {
        let (k, l) = model.basis.modes(i);
        w.write_record([k.to_string(), l.to_string(), format!("{v:.17e}")])?;
    }
    w.flush()?;
    let mut f = fs::File::create(c.out.join("forward_matrix.bin"))?;
    fwd.write_binary(&mut f)?;
    let report = json!({
        "m": m,
        "log10C": log10c,
        "log_density": eval.log_density,
        "logdet_term": eval.logdet_term,
        "likelihood_term": eval.likelihood_term,
        "misfit": sol.misfit,
        "reg_norm2": sol.reg_norm2,
        "objective": sol.objective,
        "sigma_max2": sigma_max2(&sol, stations.len(), model.sigma_rule),
        "normal_residual": sol.normal_residual,
        "fault_rule_order": model.rule.order,
        "fault_rule_doubling_discrepancy": rule_check,
        "weight_bound_violations": stations.weight_violations().len(),
    });
    write_json(&c.out.join("invert.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_manifest(c)
}

fn sample_cmd(c: &Ctx, data: Option<&Path>) -> Result<(), Error> {
    let (stations, u) = load_data(c, data)?;
    let model = build_model(&c.cfg, c.cfg.basis.p, c.cfg.basis.fault_order, stations.clone(), &u)?;
    let chains = pipeline::sample_posterior(&model, &c.cfg.sampler)?;
    let bounds = prior_bounds(&c.cfg);
    let bins = c.cfg.sampler.bins;
    if data.is_none() {
        let d = synthesize(&c.cfg, &c.cfg.scenario, &stations)?;
        pipeline::write_synth(&c.out, &stations, &d)?;
    }
    pipeline::write_chains(&c.out, &chains, &COORDS)?;
    analysis::write_marginals(&c.out, &analysis::marginals(&chains, &bounds, bins)?)?;
    let summary = analysis::summarize(
        "sample",
        stations.len(),
        c.cfg.basis.p,
        c.cfg.scenario.noise_rel,
        &chains,
        &bounds,
        bins,
    )?;
    write_json(&c.out.join("summary.json"), &summary)?;
    println!(
        "mean {:?}\nstd  {:?}\nmode {:?}\nacceptance {:?}",
        summary.mean, summary.std, summary.mode, summary.acceptance
    );
    write_manifest(c)
}

fn grid_cmd(c: &Ctx, data: Option<&Path>) -> Result<(), Error> {
    let nodes = c.cfg.grid.n_nodes();
    if nodes > GRID_LIMIT {
        return Err(Error::LatticeTooLarge {
            nodes,
            limit: GRID_LIMIT,
        });
    }
    let (stations, u) = load_data(c, data)?;
    let model = build_model(&c.cfg, c.cfg.basis.p, c.cfg.basis.fault_order, stations, &u)?;
    let grid = posterior_grid(&model, c.cfg.grid.axes())?;
    fs::create_dir_all(&c.out)?;
    for (k, name) in COORDS.iter().enumerate() {
        let mut w = csv::Writer::from_path(c.out.join(format!("grid_marginal_{name}.csv")))?;
        w.write_record(["node", "probability"])?;
        for (x, p) in grid.axes[k].iter().zip(grid.marginal(k)) {
            w.write_record([format!("{x:.17e}"), format!("{p:.17e}")])?;
        }
        w.flush()?;
    }
    println!("{nodes} lattice nodes evaluated");
    write_manifest(c)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `manifest.json`: the resolved config, its hash, the seeds and the
/// hash of every output file.
fn write_manifest(c: &Ctx) -> Result<(), Error> {
    let config = serde_json::to_value(&c.cfg)?;
    let canonical = serde_json::to_vec(&config)?;
    let mut files = Vec::new();
    collect_files(&c.out, &c.out, &mut files)?;
    files.sort();
    let outputs: Vec<_> = files
        .iter()
        .map(|rel| -> Result<_, Error> {
            let bytes = fs::read(c.out.join(rel))?;
            Ok(json!({"file": rel, "sha256": sha256_hex(&bytes)}))
        })
        .collect::<Result<_, _>>()?;
    let manifest = json!({
        "manifest_version": 1,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": c.command,
        "config_sha256": sha256_hex(&canonical),
        "seeds": {
            "noise_seed": c.cfg.scenario.noise_seed,
            "sampler_seed": c.cfg.sampler.chain.seed,
        },
        "config": config,
        "outputs": outputs,
    });
    write_json(&c.out.join("manifest.json"), &manifest)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), Error> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != "manifest.json") {
            let rel = path.strip_prefix(root).expect("inside root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

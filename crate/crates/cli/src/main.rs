//! Command-line front end: channel dumps, feasibility/convergence/SEE
//! experiments, single-scenario optimization, and the entropy-chain check.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 infeasible scenario.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use lumos_core::experiment::{
    self, records, Algorithm, InitStrategy, ScenarioConfig, SweepAxis, SweepSpec,
};
use lumos_core::power::DrivePolicy;
use lumos_core::secrecy::SymbolDistribution;
use lumos_core::{entropy, geometry, zf};

#[derive(Parser)]
#[command(name = "lumos", version, about = "Secrecy-energy-efficient precoding for multi-user visible-light channels")]
struct Cli {
    /// Scenario config file (flat key=value with sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured algorithm (cccp, cccp_sdr, zf, random_zf).
    #[arg(long, global = true)]
    algo: Option<String>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured realization count.
    #[arg(long, global = true)]
    realizations: Option<usize>,

    /// Output directory for CSV tables and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the channel matrix and effective noise for realization 0.
    Channel,
    /// Feasibility probability over the configured sweep.
    Feasibility,
    /// Averaged convergence traces, normalized by the converged CCCP value.
    Convergence {
        /// Initialization of the iterative designs (zf, random).
        #[arg(long, default_value = "zf")]
        init: String,
    },
    /// Mean SEE (with quartiles) over the configured sweep.
    Sweep,
    /// Run the configured algorithm over all realizations.
    Optimize,
    /// Verify the secrecy-rate entropy inequalities numerically.
    VerifyAppendix {
        /// Number of users in the small verification scene (≤ 3).
        #[arg(long, default_value_t = 2)]
        users: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Infeasible(msg)) => {
            eprintln!("infeasible scenario: {msg}");
            ExitCode::from(3)
        }
        Err(AppError::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum AppError {
    Config(String),
    Infeasible(String),
    Io(String),
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, AppError> {
    let mut cfg = match &cli.config {
        None => ScenarioConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
            ScenarioConfig::parse(&text).map_err(|e| AppError::Config(e.to_string()))?
        }
    };
    if let Some(algo) = &cli.algo {
        cfg.algorithm = Algorithm::from_str(algo).map_err(AppError::Config)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.realizations {
        cfg.n_realizations = n;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, AppError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| AppError::Config(format!("--threads: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    std::fs::create_dir_all(&cli.out_dir)?;
    let started = std::time::Instant::now();

    let totals = match &cli.command {
        Command::Channel => cmd_channel(&cfg, &cli.out_dir)?,
        Command::Feasibility => cmd_feasibility(&cfg, &cli.out_dir)?,
        Command::Convergence { init } => {
            let init = InitStrategy::from_str(init).map_err(AppError::Config)?;
            cmd_convergence(&cfg, init, &cli.out_dir)?
        }
        Command::Sweep => cmd_sweep(&cfg, &cli.out_dir)?,
        Command::Optimize => cmd_optimize(&cfg, &cli.out_dir)?,
        Command::VerifyAppendix { users } => {
            return cmd_verify_appendix(&cfg, *users, &cli.out_dir, started)
        }
    };

    records::write_manifest(
        &cli.out_dir.join("manifest.json"),
        &cfg,
        &totals,
        Some(started.elapsed().as_millis()),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn sweep_or_config_default(cfg: &ScenarioConfig) -> SweepSpec {
    cfg.sweep.clone().unwrap_or(SweepSpec {
        axis: SweepAxis::Threshold,
        values: vec![cfg.lambda[0]],
        layouts: vec![],
    })
}

fn cmd_channel(cfg: &ScenarioConfig, out: &Path) -> Result<records::ManifestTotals, AppError> {
    let real = experiment::build_realization(cfg, 0)
        .ok_or_else(|| AppError::Infeasible("realization 0 has a blocked user".into()))?;
    let mut w = csv::Writer::from_path(out.join("channel.csv"))?;
    let n_leds = real.channel.n_luminaries();
    let mut header = vec![
        "user".to_string(),
        "x".to_string(),
        "y".to_string(),
        "z".to_string(),
        "noise_var_effective".to_string(),
    ];
    header.extend((0..n_leds).map(|n| format!("h{n}")));
    w.write_record(&header)?;
    for k in 0..real.channel.n_users() {
        let pos = real.scene.users[k].position;
        let mut row = vec![
            k.to_string(),
            format!("{:.9e}", pos.x),
            format!("{:.9e}", pos.y),
            format!("{:.9e}", pos.z),
            format!("{:.9e}", real.channel.noise_vars_effective[k]),
        ];
        row.extend((0..n_leds).map(|n| format!("{:.9e}", real.channel.gains[(k, n)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(records::ManifestTotals {
        realizations: 1,
        feasible: 1,
        records: real.channel.n_users(),
    })
}

fn cmd_feasibility(cfg: &ScenarioConfig, out: &Path) -> Result<records::ManifestTotals, AppError> {
    let sweep = sweep_or_config_default(cfg);
    let rows = experiment::feasibility_probability(cfg, &sweep);
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(["label", "feasible", "total", "probability", "ci_low", "ci_high"])?;
    let mut feasible = 0;
    for r in &rows {
        feasible += r.feasible;
        w.write_record([
            r.label.clone(),
            r.feasible.to_string(),
            r.total.to_string(),
            format!("{:.6}", r.probability),
            format!("{:.6}", r.ci_low),
            format!("{:.6}", r.ci_high),
        ])?;
        println!(
            "{}: {}/{} feasible (p = {:.3}, 95% CI [{:.3}, {:.3}])",
            r.label, r.feasible, r.total, r.probability, r.ci_low, r.ci_high
        );
    }
    w.flush()?;
    Ok(records::ManifestTotals {
        realizations: rows.iter().map(|r| r.total).sum(),
        feasible,
        records: rows.len(),
    })
}

fn cmd_convergence(
    cfg: &ScenarioConfig,
    init: InitStrategy,
    out: &Path,
) -> Result<records::ManifestTotals, AppError> {
    let data = experiment::convergence_trace(cfg, init);
    if data.is_empty() {
        return Err(AppError::Infeasible("no feasible realizations".into()));
    }
    let horizon = cfg.tolerances.lmax2.min(100);
    let rows = experiment::convergence_rows(&data, horizon);
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(["algorithm", "init", "iteration", "mean_normalized_see", "n"])?;
    for r in &rows {
        w.write_record([
            r.algorithm.clone(),
            init.to_string(),
            r.iteration.to_string(),
            format!("{:.9}", r.mean_normalized),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    for algo in [Algorithm::Cccp, Algorithm::CccpSdr, Algorithm::Zf] {
        if let Some(m) = experiment::mean_iterations_to_fraction(&data, algo, 0.95) {
            println!("{algo}: mean inner iterations to 95% of converged value = {m:.2}");
        }
    }
    Ok(records::ManifestTotals {
        realizations: cfg.n_realizations,
        feasible: data.len(),
        records: rows.len(),
    })
}

fn cmd_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<records::ManifestTotals, AppError> {
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| AppError::Config("sweep needs a [sweep] section".into()))?;
    let rows = experiment::see_sweep(cfg, &sweep, &[cfg.algorithm]);
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record([
        "label",
        "algorithm",
        "mean_see",
        "q25",
        "median",
        "q75",
        "n_feasible",
        "n_total",
    ])?;
    let mut feasible = 0;
    for r in &rows {
        feasible += r.n_feasible;
        w.write_record([
            r.label.clone(),
            r.algorithm.clone(),
            format!("{:.9}", r.mean_see),
            format!("{:.9}", r.q25),
            format!("{:.9}", r.median),
            format!("{:.9}", r.q75),
            r.n_feasible.to_string(),
            r.n_total.to_string(),
        ])?;
        println!(
            "{} [{}]: mean SEE {:.4} over {}/{} feasible",
            r.label, r.algorithm, r.mean_see, r.n_feasible, r.n_total
        );
    }
    w.flush()?;
    Ok(records::ManifestTotals {
        realizations: rows.iter().map(|r| r.n_total).sum(),
        feasible,
        records: rows.len(),
    })
}

fn cmd_optimize(cfg: &ScenarioConfig, out: &Path) -> Result<records::ManifestTotals, AppError> {
    let (recs, summaries) = experiment::optimize_all(cfg);
    let feasible = summaries.iter().filter(|s| s.feasible).count();
    records::write_records(&out.join("records.csv"), &recs)?;
    records::write_summary(&out.join("summary.csv"), &summaries)?;
    println!(
        "{}: {feasible}/{} feasible realizations, {} record rows",
        cfg.algorithm,
        summaries.len(),
        recs.len()
    );
    if feasible == 0 {
        return Err(AppError::Infeasible(
            "every realization was infeasible".into(),
        ));
    }
    Ok(records::ManifestTotals {
        realizations: summaries.len(),
        feasible,
        records: recs.len(),
    })
}

fn cmd_verify_appendix(
    cfg: &ScenarioConfig,
    users: usize,
    out: &Path,
    started: std::time::Instant,
) -> Result<ExitCode, AppError> {
    use lumos_core::geometry::{LuminaryParams, NoiseParams, ReceiverParams, Scene};
    use nalgebra::{DVector, Vector3};

    if users == 0 || users > 3 {
        return Err(AppError::Config("--users must be 1..=3".into()));
    }
    let room = Vector3::new(cfg.room_dims[0], cfg.room_dims[1], cfg.room_dims[2]);
    // a small line of luminaries and a deterministic user drop
    let n_leds = users.max(2);
    let luminaries: Vec<LuminaryParams> = (0..n_leds)
        .map(|n| {
            let x = ((n + 1) as f64 / (n_leds + 1) as f64 - 0.5) * room.x;
            LuminaryParams::at(Vector3::new(x, 0.0, room.z))
        })
        .collect();
    let eta = luminaries[0].conversion_factor;
    let positions = geometry::sample_users(cfg.seed, users, &room, cfg.receiver_height);
    let scene = Scene::new(
        room,
        luminaries,
        positions.into_iter().map(ReceiverParams::at).collect(),
        NoiseParams::default(),
    )
    .map_err(|e| AppError::Config(e.to_string()))?;
    let i_dc = lumos_core::power::dc_bias_for_optical_power(cfg.power_dbm, eta);
    let policy = DrivePolicy::uniform_symmetric(n_leds, i_dc);
    let channel = geometry::build_channel(&scene, &policy.dc_bias)
        .map_err(|e| AppError::Infeasible(e.to_string()))?;
    let dist = SymbolDistribution::uniform();
    let coeffs = lumos_core::secrecy::link_coefficients(&channel, &dist);
    let w = zf::zf_initial_point(&channel, &coeffs, &policy, &DVector::zeros(users))
        .map_err(|e| AppError::Infeasible(e.to_string()))?
        .ok_or_else(|| AppError::Infeasible("no zero-forcing point".into()))?
        .w;

    let reports = entropy::verify_entropy_chain(
        &channel,
        &w,
        &dist,
        &entropy::EntropyVerifyConfig {
            n_samples: cfg.entropy_samples,
            rng_seed: cfg.seed,
        },
    )
    .map_err(|e| AppError::Config(e.to_string()))?;

    let mut writer = csv::Writer::from_path(out.join("summary.csv"))?;
    writer.write_record(["user", "check", "estimate_bits", "std_error", "bound_bits", "holds"])?;
    let mut all_hold = true;
    for r in &reports {
        for c in &r.checks {
            all_hold &= c.holds;
            writer.write_record([
                r.user.to_string(),
                c.name.to_string(),
                format!("{:.9}", c.estimate),
                format!("{:.3e}", c.std_error),
                format!("{:.9}", c.bound),
                c.holds.to_string(),
            ])?;
            println!(
                "user {} {:<28} estimate {:>12.6} bits  bound {:>12.6} bits  se {:.2e}  {}",
                r.user,
                c.name,
                c.estimate,
                c.bound,
                c.std_error,
                if c.holds { "ok" } else { "VIOLATED" }
            );
        }
    }
    writer.flush()?;
    records::write_manifest(
        &out.join("manifest.json"),
        cfg,
        &records::ManifestTotals {
            realizations: 1,
            feasible: 1,
            records: reports.len() * 4,
        },
        Some(started.elapsed().as_millis()),
    )?;
    Ok(if all_hold {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

//! Per-realization scene construction, feasibility detection, and the
//! nested Dinkelbach/inner-solver drivers for each algorithm.
//!
//! Every random quantity is drawn from a counter-based stream derived from
//! (seed, realization id, purpose), so results are independent of worker
//! thread count and realizations can run in any order.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cccp::{self, CccpConfig};
use crate::dinkelbach::{self, DinkelbachConfig, DinkelbachStatus, InnerError, InnerSolve};
use crate::geometry::{
    build_channel, led_layout, ChannelMatrix, LuminaryParams, NoiseParams, ReceiverParams, Scene,
};
use crate::power::{dc_bias_for_optical_power, DrivePolicy, PowerModel, Precoder};
use crate::secrecy::{
    link_coefficients, secrecy_rates, see, sum_secrecy_rate, LinkCoefficients, SymbolDistribution,
};
use crate::sdr::{self, SdrConfig};
use crate::trace::IterateStat;
use crate::zf::{self, ZfConfig};

use super::config::{Algorithm, InitStrategy, ScenarioConfig};
use super::records::{RunRecord, SummaryRecord};

/// Stream purposes inside one realization.
const STREAM_USERS: u64 = 0;
const STREAM_RANDOM_INIT: u64 = 2;
const STREAM_RANDOM_ZF: u64 = 3;

/// splitmix64; mixes (seed, realization, purpose) into one stream seed.
fn derive_seed(seed: u64, realization: u64, purpose: u64) -> u64 {
    let mut z = seed
        .wrapping_add(realization.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(purpose.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A fully instantiated channel draw.
#[derive(Debug, Clone)]
pub struct Realization {
    pub id: usize,
    pub scene: Scene,
    pub channel: ChannelMatrix,
    pub coeffs: LinkCoefficients,
    pub policy: DrivePolicy,
    pub model: PowerModel,
    pub lambda: DVector<f64>,
}

/// Builds realization `id` of the scenario: layout, random user drop, DC
/// bias from the per-luminary optical power, link coefficients.
pub fn build_realization(cfg: &ScenarioConfig, id: usize) -> Option<Realization> {
    let room = Vector3::new(cfg.room_dims[0], cfg.room_dims[1], cfg.room_dims[2]);
    let luminaries: Vec<LuminaryParams> = led_layout(cfg.layout, &room, room.z)
        .into_iter()
        .map(LuminaryParams::at)
        .collect();
    let eta = luminaries[0].conversion_factor;
    let users = crate::geometry::sample_users(
        derive_seed(cfg.seed, id as u64, STREAM_USERS),
        cfg.users,
        &room,
        cfg.receiver_height,
    )
    .into_iter()
    .map(ReceiverParams::at)
    .collect();
    let scene = Scene::new(room, luminaries, users, NoiseParams::default()).ok()?;

    let i_dc = dc_bias_for_optical_power(cfg.power_dbm, eta);
    let n_leds = scene.n_luminaries();
    let policy = match cfg.i_max {
        None => DrivePolicy::uniform_symmetric(n_leds, i_dc),
        Some(i_max) => DrivePolicy::new(DVector::from_element(n_leds, i_dc), i_max).ok()?,
    };
    let channel = build_channel(&scene, &policy.dc_bias).ok()?;
    let coeffs = link_coefficients(&channel, &SymbolDistribution::uniform());
    let lambda = cfg.lambda_vector(cfg.users);
    let model = PowerModel {
        circuitry_power: cfg.circuitry_power,
        led_forward_voltage: cfg.led_voltage,
        equiv_resistance: cfg.equiv_resistance,
    };
    Some(Realization {
        id,
        scene,
        channel,
        coeffs,
        policy,
        model,
        lambda,
    })
}

/// A random row-scaled precoder used as a fallback/feasibility start.
fn random_precoder(real: &Realization, stream_seed: u64) -> Precoder {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let n = real.policy.n_leds();
    let k = real.channel.n_users();
    let mut w = DMatrix::from_fn(n, k, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    for row in 0..n {
        let sum: f64 = w.row(row).iter().map(|v| v.abs()).sum();
        let target = real.policy.amplitude_bound(row) * (0.3 + 0.4 * rng.gen::<f64>());
        if sum > 0.0 {
            let s = target / sum;
            for col in 0..k {
                w[(row, col)] *= s;
            }
        }
    }
    Precoder { w }
}

/// Feasibility detector: the ZF max-min initializer, falling back to one
/// CCCP feasibility phase seeded at the best balanced ZF attempt (the
/// zero-threshold max-min point). Returns a threshold-feasible precoder
/// when the realization is deemed feasible.
pub fn detect_feasible(real: &Realization, cfg: &ScenarioConfig) -> Option<Precoder> {
    if let Ok(Some(init)) =
        zf::zf_initial_point(&real.channel, &real.coeffs, &real.policy, &real.lambda)
    {
        return Some(init.w);
    }
    let zero = DVector::zeros(real.channel.n_users());
    let start = zf::zf_initial_point(&real.channel, &real.coeffs, &real.policy, &zero)
        .ok()
        .flatten()?
        .w;
    cccp::feasibility_phase(
        &real.channel,
        &real.coeffs,
        &real.policy,
        &real.model,
        &real.lambda,
        &start,
        &CccpConfig {
            eps2: cfg.tolerances.eps2,
            lmax2: cfg.tolerances.lmax2,
            solver_tol: cfg.tolerances.solver_tol,
        },
    )
}

/// Outcome of one algorithm on one realization.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub feasible: bool,
    pub w: Option<Precoder>,
    pub see: Option<f64>,
    pub mu_star: Option<f64>,
    pub rates: Option<Vec<f64>>,
    pub status: String,
    pub records: Vec<RunRecord>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// SEE of each inner iterate, concatenated across outer loops.
    pub see_trace: Vec<f64>,
}

impl OptimizeOutcome {
    pub(crate) fn infeasible(real_id: usize, algorithm: Algorithm) -> Self {
        Self {
            feasible: false,
            w: None,
            see: None,
            mu_star: None,
            rates: None,
            status: "infeasible".into(),
            records: vec![RunRecord {
                realization: real_id,
                algorithm: algorithm.to_string(),
                outer_iter: 0,
                inner_iter: 0,
                mu: f64::NAN,
                objective: f64::NAN,
                see: f64::NAN,
                rates: Vec::new(),
                feasible: false,
                relax_gap: None,
            }],
            outer_iterations: 0,
            inner_iterations: 0,
            see_trace: Vec::new(),
        }
    }

    pub fn summary(&self, real_id: usize, algorithm: Algorithm) -> SummaryRecord {
        SummaryRecord {
            realization: real_id,
            algorithm: algorithm.to_string(),
            feasible: self.feasible,
            see: self.see,
            mu_star: self.mu_star,
            sum_rate: self.rates.as_ref().map(|r| r.iter().sum()),
            outer_iterations: self.outer_iterations,
            inner_iterations: self.inner_iterations,
            status: self.status.clone(),
        }
    }
}

/// Picks a starting precoder for the iterative designs.
fn initial_precoder(
    real: &Realization,
    cfg: &ScenarioConfig,
    init: InitStrategy,
) -> Option<Precoder> {
    match init {
        InitStrategy::Zf => detect_feasible(real, cfg),
        InitStrategy::Random => {
            // random starts need not meet the thresholds; the subproblem is
            // what must be solvable, and the first inner pass decides that
            Some(random_precoder(
                real,
                derive_seed(cfg.seed, real.id as u64, STREAM_RANDOM_INIT),
            ))
        }
    }
}

fn dinkelbach_cfg(cfg: &ScenarioConfig, mu0: f64) -> DinkelbachConfig {
    DinkelbachConfig {
        mu0,
        eps1: cfg.tolerances.eps1,
        lmax1: cfg.tolerances.lmax1,
    }
}

/// μ₀ = Φ(W₀) when the start meets the thresholds, else 0 so that the first
/// parameterized problem stays conservative.
fn initial_mu(real: &Realization, w0: &Precoder) -> f64 {
    let rates = secrecy_rates(w0, &real.channel, &real.coeffs);
    let ok = (0..rates.len()).all(|k| rates[k] >= real.lambda[k] - 1e-9);
    if ok {
        see(w0, &real.channel, &real.coeffs, &real.policy, &real.model).max(0.0)
    } else {
        0.0
    }
}

fn status_name(status: DinkelbachStatus) -> &'static str {
    match status {
        DinkelbachStatus::Optimal => "optimal",
        DinkelbachStatus::MaxIterations => "max_iterations",
        DinkelbachStatus::Infeasible => "infeasible",
        DinkelbachStatus::Degraded => "degraded",
    }
}

/// Runs one algorithm on one realization with the given initialization.
pub fn optimize_realization(
    real: &Realization,
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    init: InitStrategy,
) -> OptimizeOutcome {
    match algorithm {
        Algorithm::RandomZf => run_random_zf(real, cfg),
        Algorithm::Zf => run_zf(real, cfg),
        Algorithm::Cccp | Algorithm::CccpSdr => run_nested(real, cfg, algorithm, init),
    }
}

/// Shared driver for the two general-precoding designs: a Dinkelbach outer
/// loop around a warm-started inner CCCP (direct or SDR).
fn run_nested(
    real: &Realization,
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    init: InitStrategy,
) -> OptimizeOutcome {
    let mut w0 = match initial_precoder(real, cfg, init) {
        Some(w) => w,
        None => return OptimizeOutcome::infeasible(real.id, algorithm),
    };

    let mut records: Vec<RunRecord> = Vec::new();
    let mut see_trace: Vec<f64> = Vec::new();

    // up to 20 random redraws when a random start leaves the first
    // subproblem infeasible
    let mut attempt = 0usize;
    let outcome = loop {
        let mu0 = initial_mu(real, &w0);
        records.clear();
        see_trace.clear();
        let mut outer_count = 0usize;

        let mut current = w0.clone();
        let mut inner = |mu: f64| -> Result<InnerSolve<Precoder>, InnerError> {
            let steps: Vec<IterateStat>;
            let iterations;
            match algorithm {
                Algorithm::Cccp => {
                    let out = cccp::solve_parameterized(
                        &real.channel,
                        &real.coeffs,
                        &real.policy,
                        &real.model,
                        mu,
                        &real.lambda,
                        &current,
                        &CccpConfig {
                            eps2: cfg.tolerances.eps2,
                            lmax2: cfg.tolerances.lmax2,
                            solver_tol: cfg.tolerances.solver_tol,
                        },
                    )
                    .map_err(InnerError::from)?;
                    current = out.w.clone();
                    steps = out.steps;
                    iterations = out.iterations;
                }
                Algorithm::CccpSdr => {
                    let out = sdr::solve_parameterized_sdr(
                        &real.channel,
                        &real.coeffs,
                        &real.policy,
                        &real.model,
                        mu,
                        &real.lambda,
                        &current,
                        &SdrConfig {
                            eps3: cfg.tolerances.eps3,
                            lmax3: cfg.tolerances.lmax3,
                            solver_tol: cfg.tolerances.solver_tol,
                            ..SdrConfig::default()
                        },
                    )
                    .map_err(InnerError::from)?;
                    current = out.w.clone();
                    steps = out.steps;
                    iterations = out.iterations;
                }
                _ => unreachable!(),
            }
            for s in &steps {
                records.push(RunRecord {
                    realization: real.id,
                    algorithm: algorithm.to_string(),
                    outer_iter: outer_count,
                    inner_iter: s.inner_iter,
                    mu,
                    objective: s.objective,
                    see: s.see,
                    rates: s.rates.clone(),
                    feasible: true,
                    relax_gap: s.relax_gap,
                });
                see_trace.push(s.see);
            }
            outer_count += 1;
            Ok(InnerSolve {
                solution: current.clone(),
                inner_iterations: iterations,
            })
        };

        let out = dinkelbach::run(
            &mut inner,
            |w| sum_secrecy_rate(w, &real.channel, &real.coeffs),
            |w| crate::power::total_power(w, &real.policy, &real.model),
            &dinkelbach_cfg(cfg, mu0),
        );
        drop(inner);

        if out.status == DinkelbachStatus::Infeasible && init == InitStrategy::Random {
            attempt += 1;
            if attempt < 20 {
                w0 = random_precoder(
                    real,
                    derive_seed(
                        cfg.seed,
                        real.id as u64,
                        STREAM_RANDOM_INIT + 16 * attempt as u64,
                    ),
                );
                continue;
            }
            // last resort: the feasibility-phase precoder
            match detect_feasible(real, cfg) {
                Some(w) => {
                    w0 = w;
                    attempt += 1;
                    continue;
                }
                None => break out,
            }
        }
        break out;
    };

    match outcome.solution {
        None => OptimizeOutcome::infeasible(real.id, algorithm),
        Some(w) => {
            let rates = secrecy_rates(&w, &real.channel, &real.coeffs);
            let phi = see(&w, &real.channel, &real.coeffs, &real.policy, &real.model);
            let inner_total = outcome.trace.iter().map(|s| s.inner_iterations).sum();
            OptimizeOutcome {
                feasible: true,
                see: Some(phi),
                mu_star: Some(outcome.mu_star),
                rates: Some(rates.iter().cloned().collect()),
                status: status_name(outcome.status).into(),
                w: Some(w),
                records,
                outer_iterations: outcome.trace.len(),
                inner_iterations: inner_total,
                see_trace,
            }
        }
    }
}

fn run_zf(real: &Realization, cfg: &ScenarioConfig) -> OptimizeOutcome {
    let init = match zf::zf_initial_point(&real.channel, &real.coeffs, &real.policy, &real.lambda)
    {
        Ok(Some(i)) => i,
        _ => return OptimizeOutcome::infeasible(real.id, Algorithm::Zf),
    };
    let mu0 = initial_mu(real, &init.w);

    let mut records: Vec<RunRecord> = Vec::new();
    let mut see_trace: Vec<f64> = Vec::new();
    let mut outer_count = 0usize;
    let mut rho = init.rho.clone();
    let mut inner = |mu: f64| -> Result<InnerSolve<Precoder>, InnerError> {
        let out = zf::solve_parameterized_zf(
            &real.channel,
            &real.coeffs,
            &real.policy,
            &real.model,
            mu,
            &real.lambda,
            &rho,
            &ZfConfig {
                eps4: cfg.tolerances.eps4,
                lmax4: cfg.tolerances.lmax4,
                solver_tol: cfg.tolerances.solver_tol,
                ..ZfConfig::default()
            },
        )
        .map_err(InnerError::from)?;
        rho = out.state.rho.clone();
        for s in &out.steps {
            records.push(RunRecord {
                realization: real.id,
                algorithm: Algorithm::Zf.to_string(),
                outer_iter: outer_count,
                inner_iter: s.inner_iter,
                mu,
                objective: s.objective,
                see: s.see,
                rates: s.rates.clone(),
                feasible: true,
                relax_gap: None,
            });
            see_trace.push(s.see);
        }
        outer_count += 1;
        Ok(InnerSolve {
            solution: out.state.w,
            inner_iterations: out.iterations,
        })
    };
    let outcome = dinkelbach::run(
        &mut inner,
        |w| sum_secrecy_rate(w, &real.channel, &real.coeffs),
        |w| crate::power::total_power(w, &real.policy, &real.model),
        &dinkelbach_cfg(cfg, mu0),
    );
    drop(inner);

    match outcome.solution {
        None => OptimizeOutcome::infeasible(real.id, Algorithm::Zf),
        Some(w) => {
            let rates = secrecy_rates(&w, &real.channel, &real.coeffs);
            let phi = see(&w, &real.channel, &real.coeffs, &real.policy, &real.model);
            let inner_total = outcome.trace.iter().map(|s| s.inner_iterations).sum();
            OptimizeOutcome {
                feasible: true,
                see: Some(phi),
                mu_star: Some(outcome.mu_star),
                rates: Some(rates.iter().cloned().collect()),
                status: status_name(outcome.status).into(),
                w: Some(w),
                records,
                outer_iterations: outcome.trace.len(),
                inner_iterations: inner_total,
                see_trace,
            }
        }
    }
}

fn run_random_zf(real: &Realization, cfg: &ScenarioConfig) -> OptimizeOutcome {
    let seed = derive_seed(cfg.seed, real.id as u64, STREAM_RANDOM_ZF);
    let got = zf::random_zf_selection(
        &real.channel,
        &real.coeffs,
        &real.policy,
        &real.model,
        &real.lambda,
        cfg.random_zf_samples,
        seed,
    );
    match got {
        Ok(Some((w, phi))) => {
            let rates = secrecy_rates(&w, &real.channel, &real.coeffs);
            let record = RunRecord {
                realization: real.id,
                algorithm: Algorithm::RandomZf.to_string(),
                outer_iter: 0,
                inner_iter: 0,
                mu: f64::NAN,
                objective: rates.iter().sum(),
                see: phi,
                rates: rates.iter().cloned().collect(),
                feasible: true,
                relax_gap: None,
            };
            OptimizeOutcome {
                feasible: true,
                see: Some(phi),
                mu_star: Some(phi),
                rates: Some(rates.iter().cloned().collect()),
                status: "optimal".into(),
                w: Some(w),
                records: vec![record],
                outer_iterations: 1,
                inner_iterations: cfg.random_zf_samples,
                see_trace: vec![phi],
            }
        }
        _ => OptimizeOutcome::infeasible(real.id, Algorithm::RandomZf),
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

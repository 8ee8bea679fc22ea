//! Zero-forcing designs: the constrained SEE optimizer, the random-ZF
//! selection baseline, and the ZF initial point used by the other solvers.
//!
//! Under the constraint HW = diag{√ρ} all inter-user interference and
//! leakage vanish and user k's rate collapses to ½log₂(1+aₖρₖ). The design
//! problem keeps W free under the linearized diagonal constraint
//! √ρ ≈ √ρ⁽ᵐ⁻¹⁾ + (ρ−ρ⁽ᵐ⁻¹⁾)/(2√ρ⁽ᵐ⁻¹⁾); only the candidate sampler and the
//! initializer pin W to the minimum-norm pseudoinverse family H⁺·diag{√ρ}.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cccp::TaylorScalar;
use crate::conic::{ConicProgram, LinExpr, SolveStatus};
use crate::dinkelbach::InnerError;
use crate::geometry::ChannelMatrix;
use crate::power::{total_power, DrivePolicy, PowerModel, Precoder};
use crate::secrecy::{secrecy_rates, sum_secrecy_rate, LinkCoefficients, NormalizedLinks};
use crate::trace::{InnerStatus, IterateStat};

#[derive(Debug, Error, PartialEq)]
pub enum ZfError {
    #[error("channel matrix is (numerically) rank deficient")]
    RankDeficient,
    #[error("zero-forcing problem infeasible")]
    Infeasible,
    #[error("gain expansion point at or below the positivity floor")]
    RhoFloor,
    #[error("conic solver failed: {0}")]
    Solver(String),
}

impl From<ZfError> for InnerError {
    fn from(e: ZfError) -> Self {
        match e {
            ZfError::Infeasible | ZfError::RankDeficient => InnerError::Infeasible,
            other => InnerError::Solver(other.to_string()),
        }
    }
}

/// Configuration of the ZF inner loop.
#[derive(Debug, Clone)]
pub struct ZfConfig {
    pub eps4: f64,
    pub lmax4: usize,
    pub solver_tol: f64,
    /// Positivity floor for the ZF gains ρ.
    pub rho_floor: f64,
}

impl Default for ZfConfig {
    fn default() -> Self {
        Self {
            eps4: 1e-4,
            lmax4: 100,
            solver_tol: 1e-6,
            rho_floor: 1e-10,
        }
    }
}

/// A zero-forcing state: per-user channel gains and the precoder realizing
/// them, with HW = diag{√ρ} up to machine precision.
#[derive(Debug, Clone)]
pub struct ZfState {
    pub rho: DVector<f64>,
    pub w: Precoder,
}

/// Per-component first-order over-estimator of √ρ around `rho_prev`:
/// √ρ₀ + (ρ − ρ₀)/(2√ρ₀). Errors if any expansion gain is at the floor.
pub fn taylor_sqrt(rho_prev: &DVector<f64>, floor: f64) -> Result<Vec<TaylorScalar>, ZfError> {
    rho_prev
        .iter()
        .map(|&r| {
            if r <= floor {
                return Err(ZfError::RhoFloor);
            }
            let s = r.sqrt();
            Ok(TaylorScalar {
                constant: s / 2.0,
                slope: 1.0 / (2.0 * s),
            })
        })
        .collect()
}

/// Minimum-norm pseudoinverse of the normalized channel, rejecting
/// rank-deficient rows.
fn normalized_pinv(links: &NormalizedLinks) -> Result<DMatrix<f64>, ZfError> {
    let svd = links.h.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > smax * 1e-10) {
        return Err(ZfError::RankDeficient);
    }
    svd.pseudo_inverse(smax * 1e-12).map_err(|e| ZfError::Solver(e.to_string()))
}

/// Row-wise L1 load of a pseudoinverse ZF candidate: Lₙ(û) = Σₖ|Gₙₖ|·ûₖ.
fn row_loads(g: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(g.nrows(), |n, _| {
        (0..g.ncols()).map(|k| g[(n, k)].abs() * u[k]).sum()
    })
}

/// ZF initial point and feasibility detector.
///
/// Maximizes the minimum threshold slack over the pseudoinverse family
/// W = H⁺·diag{√ρ}: for a candidate slack t every user needs normalized
/// amplitude ûₖ(t) = √((2^{2(λₖ+t)} − 1)/âₖ), and the row-L1 bounds are
/// linear in û, so feasibility of t is a closed-form check and the max-min
/// slack is found by bisection. Returns the optimizer when the slack is
/// nonnegative, `None` when the ZF family cannot meet the thresholds.
pub fn zf_initial_point(
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    lambda: &DVector<f64>,
) -> Result<Option<ZfState>, ZfError> {
    let links = NormalizedLinks::new(channel, coeffs);
    let g = normalized_pinv(&links)?;
    let k_users = links.n_users();
    let bounds = policy.amplitude_bounds();

    let u_of = |t: f64| {
        DVector::from_fn(k_users, |k, _| {
            let need = 2f64.powf(2.0 * (lambda[k] + t)) - 1.0;
            (need.max(0.0) / links.a[k]).sqrt()
        })
    };
    let feasible = |t: f64| {
        let u = u_of(t);
        let loads = row_loads(&g, &u);
        (0..g.nrows()).all(|n| loads[n] <= bounds[n] + 1e-15)
    };

    let lambda_max = lambda.iter().cloned().fold(0.0, f64::max);
    let mut lo = -lambda_max - 1.0;
    if !feasible(lo) {
        // bounds themselves are degenerate (e.g. zero headroom)
        return Ok(None);
    }
    let mut hi = 1.0;
    while feasible(hi) {
        hi *= 2.0;
        if hi > 64.0 {
            break;
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = lo;
    if t_star < -1e-12 {
        return Ok(None);
    }
    let u = u_of(t_star);
    let w = Precoder {
        w: &g * DMatrix::from_diagonal(&u),
    };
    // original-unit gains: h_k' w_k = σ̄_k · û_k
    let rho = DVector::from_fn(k_users, |k, _| {
        let v = channel.noise_vars_effective[k].sqrt() * u[k];
        v * v
    });
    Ok(Some(ZfState { rho, w }))
}

/// Projects a near-ZF precoder onto the exact ZF manifold, keeping the
/// achieved diagonal: W ← W − H⁺(HW − diag(HW)).
fn project_zf(g_pinv: &DMatrix<f64>, h: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let hw = h * w;
    let mut off = hw.clone();
    for k in 0..off.nrows() {
        off[(k, k)] = 0.0;
    }
    w - g_pinv * off
}

/// Outcome of a parameterized ZF solve.
#[derive(Debug, Clone)]
pub struct ZfOutcome {
    pub state: ZfState,
    /// Exact N(W) − μ·D(W) at the returned precoder.
    pub objective: f64,
    pub iterations: usize,
    pub status: InnerStatus,
    pub steps: Vec<IterateStat>,
}

/// Solves the ZF-constrained design for a fixed μ by iterating the convex
/// program with the square-root constraint linearized at the previous gains.
pub fn solve_parameterized_zf(
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    model: &PowerModel,
    mu: f64,
    lambda: &DVector<f64>,
    rho_init: &DVector<f64>,
    cfg: &ZfConfig,
) -> Result<ZfOutcome, ZfError> {
    let links = NormalizedLinks::new(channel, coeffs);
    let g_pinv = normalized_pinv(&links)?;
    let k_users = links.n_users();

    // work in normalized gains ρ̂ = ρ/σ̄²
    let to_norm = |rho: &DVector<f64>| {
        DVector::from_fn(k_users, |k, _| rho[k] / channel.noise_vars_effective[k])
    };
    let from_norm = |rho_n: &DVector<f64>| {
        DVector::from_fn(k_users, |k, _| rho_n[k] * channel.noise_vars_effective[k])
    };

    let mut rho_n = to_norm(rho_init);
    let mut restarted = false;
    let mut w = Precoder {
        w: &g_pinv * DMatrix::from_diagonal(&rho_n.map(|r| r.max(0.0).sqrt())),
    };
    let exact =
        |w: &Precoder| sum_secrecy_rate(w, channel, coeffs) - mu * total_power(w, policy, model);
    let mut steps: Vec<IterateStat> = Vec::new();
    let mut stalled = false;

    let mut m = 0usize;
    while m < cfg.lmax4 {
        m += 1;
        if rho_n.iter().any(|&r| r <= cfg.rho_floor) {
            if restarted {
                return Err(ZfError::RhoFloor);
            }
            restarted = true;
            let mean = rho_n.mean().max(2.0 * cfg.rho_floor);
            rho_n = rho_n.map(|r| 0.5 * (r.max(cfg.rho_floor * 10.0) + mean));
        }
        let taylor = taylor_sqrt(&rho_n, cfg.rho_floor)?;

        let (prog, w_var, rho_var) = build_zf_subproblem(
            &links, policy, model, mu, lambda, &taylor,
        );
        let res = prog.solve(cfg.solver_tol);
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if m == 1 => return Err(ZfError::Infeasible),
            status => {
                if m == 1 {
                    return Err(ZfError::Solver(format!("status {status:?} at first pass")));
                }
                stalled = true;
                break;
            }
        }
        let flat = prog.vector_value(&res.x, w_var);
        let n_leds = links.n_leds();
        let w_mat =
            DMatrix::from_fn(n_leds, k_users, |n, k| flat[k * n_leds + n]);
        let w_mat = project_zf(&g_pinv, &links.h, &w_mat);
        let rho_new = prog.vector_value(&res.x, rho_var);

        let w_new = Precoder { w: w_mat };
        let rel = (&rho_new - &rho_n).norm() / rho_new.norm().max(1e-12);
        let obj = exact(&w_new);
        steps.push(IterateStat {
            inner_iter: m,
            objective: obj,
            see: sum_secrecy_rate(&w_new, channel, coeffs) / total_power(&w_new, policy, model),
            rates: secrecy_rates(&w_new, channel, coeffs).iter().cloned().collect(),
            w_rel_change: (&w_new.w - &w.w).norm() / w_new.w.norm().max(1e-12),
            surrogate: res.objective,
            solver_iterations: res.iterations,
            relax_gap: None,
            threshold_violation: None,
        });
        w = w_new;
        rho_n = rho_new;

        if rel <= cfg.eps4 {
            // exact achieved gains from the returned precoder
            let achieved = DVector::from_fn(k_users, |k, _| {
                let d = links.row(k).dot(&w.user_column(k));
                d * d
            });
            return Ok(ZfOutcome {
                objective: exact(&w),
                state: ZfState {
                    rho: from_norm(&achieved),
                    w,
                },
                iterations: m,
                status: InnerStatus::Converged,
                steps,
            });
        }
    }

    let achieved = DVector::from_fn(k_users, |k, _| {
        let d = links.row(k).dot(&w.user_column(k));
        d * d
    });
    Ok(ZfOutcome {
        objective: exact(&w),
        state: ZfState {
            rho: from_norm(&achieved),
            w,
        },
        iterations: m,
        status: if stalled {
            InnerStatus::SolverStall
        } else {
            InnerStatus::MaxIterations
        },
        steps,
    })
}

fn build_zf_subproblem(
    links: &NormalizedLinks,
    policy: &DrivePolicy,
    model: &PowerModel,
    mu: f64,
    lambda: &DVector<f64>,
    taylor: &[TaylorScalar],
) -> (ConicProgram, crate::conic::VarId, crate::conic::VarId) {
    let n_leds = links.n_leds();
    let k_users = links.n_users();
    let nk = n_leds * k_users;
    let mut prog = ConicProgram::new();
    let w = prog.add_vector("w", nk);
    let wp = prog.add_vector("wp", nk);
    let wm = prog.add_vector("wm", nk);
    let rho = prog.add_vector("rho", k_users);
    let r = prog.add_vector("r", k_users);
    let widx = |n: usize, k: usize| k * n_leds + n;

    for j in 0..nk {
        let (ew, ep, em) = (prog.vec_term(w, j), prog.vec_term(wp, j), prog.vec_term(wm, j));
        prog.eq_zero(ew - ep.clone() + em.clone());
        prog.nonneg(ep);
        prog.nonneg(em);
    }
    for n in 0..n_leds {
        let mut row = LinExpr::default();
        for k in 0..k_users {
            row = row + prog.vec_term(wp, widx(n, k)) + prog.vec_term(wm, widx(n, k));
        }
        prog.leq(row, LinExpr::constant(policy.amplitude_bound(n)));
    }

    let mut objective = LinExpr::constant(-mu * model.dc_power(policy));
    for k in 0..k_users {
        // rate epigraph on the closed-form ZF rate
        prog.add_log_epigraph(
            prog.vec_term(r, k),
            prog.vec_term(rho, k) * links.a[k],
            0.5,
        );
        objective = objective + prog.vec_term(r, k);

        // threshold: a_k rho_k >= 2^{2 λ_k} − 1  (linear)
        let need = 2f64.powf(2.0 * lambda[k]) - 1.0;
        prog.nonneg(prog.vec_term(rho, k) * links.a[k] - need.into());
        prog.nonneg(prog.vec_term(rho, k));

        // linearized diagonal: ĥ_k' w_k = √ρ̂ around the expansion point
        let hk = links.row(k);
        let mut diag = LinExpr::default();
        for n in 0..n_leds {
            diag = diag + prog.vec_term(w, widx(n, k)) * hk[n];
        }
        let lin = prog.vec_term(rho, k) * taylor[k].slope + taylor[k].constant;
        prog.eq_zero(diag - lin);

        // off-diagonal zero forcing
        for i in 0..k_users {
            if i == k {
                continue;
            }
            let hi = links.row(i);
            let mut od = LinExpr::default();
            for n in 0..n_leds {
                od = od + prog.vec_term(w, widx(n, k)) * hi[n];
            }
            prog.eq_zero(od);
        }
    }
    let mu_xi = mu * model.equiv_resistance;
    if mu_xi > 0.0 {
        for j in 0..nk {
            let s = prog.add_square_epigraph(prog.vec_term(w, j), &format!("tr_{j}"));
            objective = objective + s * (-mu_xi);
        }
    }
    prog.set_objective(objective);
    (prog, w, rho)
}

/// Picks the best of `n_samples` random pseudoinverse-family ZF candidates.
///
/// Each candidate draws normalized amplitudes ûₖ ~ U(0,1), scales the whole
/// precoder to the row-L1 frontier, and is kept only if every threshold
/// holds. Deterministic for a fixed seed and independent of thread count;
/// enlarging `n_samples` never lowers the returned SEE.
pub fn random_zf_selection(
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    model: &PowerModel,
    lambda: &DVector<f64>,
    n_samples: usize,
    rng_seed: u64,
) -> Result<Option<(Precoder, f64)>, ZfError> {
    let links = NormalizedLinks::new(channel, coeffs);
    let g = normalized_pinv(&links)?;
    let k_users = links.n_users();
    let bounds = policy.amplitude_bounds();

    let evaluate = |idx: usize| -> Option<(usize, f64, DVector<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(idx as u64 + 1);
        let dir = DVector::from_fn(k_users, |_, _| rng.gen::<f64>());
        let loads = row_loads(&g, &dir);
        let scale = (0..g.nrows())
            .map(|n| bounds[n] / loads[n].max(1e-300))
            .fold(f64::INFINITY, f64::min);
        if !scale.is_finite() || scale <= 0.0 {
            return None;
        }
        let u = dir * scale;
        // closed-form ZF rates and SEE
        let mut sum_rate = 0.0;
        for k in 0..k_users {
            let rate = 0.5 * (1.0 + links.a[k] * u[k] * u[k]).log2();
            if rate < lambda[k] {
                return None;
            }
            sum_rate += rate;
        }
        let norm_sq: f64 = {
            let w = &g * DMatrix::from_diagonal(&u);
            w.iter().map(|v| v * v).sum()
        };
        let p = model.dc_power(policy) + model.equiv_resistance * norm_sq;
        Some((idx, sum_rate / p, u))
    };

    let best = (0..n_samples)
        .into_par_iter()
        .filter_map(evaluate)
        .reduce_with(|x, y| {
            // maximize SEE; break ties toward the earlier candidate index
            if (y.1, x.0) > (x.1, y.0) {
                y
            } else {
                x
            }
        });

    match best {
        None => Ok(None),
        Some((_, see, u)) => {
            let w = Precoder {
                w: &g * DMatrix::from_diagonal(&u),
            };
            Ok(Some((w, see)))
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::row_l1_feasible;
    use crate::secrecy::{link_coefficients, secrecy_rate, see, SymbolDistribution};
    use approx::assert_relative_eq;

    fn small_instance(
        k_users: usize,
        n_leds: usize,
        seed: u64,
    ) -> (ChannelMatrix, LinkCoefficients, DrivePolicy, PowerModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gains = DMatrix::from_fn(k_users, n_leds, |_, _| 1e-5 * (0.3 + rng.gen::<f64>()));
        let channel = ChannelMatrix {
            gains,
            noise_vars_effective: DVector::from_fn(k_users, |_, _| {
                1e-14 * (0.5 + rng.gen::<f64>())
            }),
        };
        let coeffs = link_coefficients(&channel, &SymbolDistribution::uniform());
        (
            channel,
            coeffs,
            DrivePolicy::uniform_symmetric(n_leds, 0.5),
            PowerModel::default(),
        )
    }

    // -- taylor_sqrt -------------------------------------------------------------

    #[test]
    fn sqrt_taylor_exact_and_hand_values() {
        let t = taylor_sqrt(&DVector::from_vec(vec![1.0, 4.0]), 1e-10).unwrap();
        assert_relative_eq!(t[0].eval(1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(t[1].eval(4.0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(t[0].eval(4.0), 2.5, epsilon = 1e-12);
        assert_relative_eq!(t[1].eval(1.0), 1.25, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_taylor_over_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let r0 = rng.gen::<f64>() * 10.0 + 1e-6;
            let r = rng.gen::<f64>() * 10.0;
            let t = taylor_sqrt(&DVector::from_element(1, r0), 1e-10).unwrap();
            assert!(t[0].eval(r) >= r.sqrt() - 1e-12);
        }
    }

    #[test]
    fn sqrt_taylor_rejects_floor() {
        assert_eq!(
            taylor_sqrt(&DVector::from_vec(vec![1.0, 0.0]), 1e-10).unwrap_err(),
            ZfError::RhoFloor
        );
    }

    // -- initial point -----------------------------------------------------------

    #[test]
    fn initial_point_zero_thresholds_always_feasible() {
        let (channel, coeffs, policy, _) = small_instance(2, 3, 2);
        let lambda = DVector::zeros(2);
        let init = zf_initial_point(&channel, &coeffs, &policy, &lambda)
            .unwrap()
            .expect("full-rank channel with zero thresholds");
        assert!(row_l1_feasible(&init.w, &policy, 1e-9));
        // strictly positive max-min slack pushes the gains above zero
        assert!(init.rho.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn initial_point_meets_general_rate_formula() {
        let (channel, coeffs, policy, _) = small_instance(3, 4, 3);
        let lambda = DVector::from_element(3, 0.3);
        if let Some(init) = zf_initial_point(&channel, &coeffs, &policy, &lambda).unwrap() {
            for k in 0..3 {
                let general = secrecy_rate(&init.w, &channel, &coeffs, k);
                assert!(general >= lambda[k] - 1e-8, "user {k}: {general}");
                // interference-free: closed form matches the general formula
                let closed = 0.5 * (1.0 + coeffs.a[k] * init.rho[k]).log2();
                assert_relative_eq!(general, closed, epsilon = 1e-7);
            }
            // ZF residual
            let hw = &channel.gains * &init.w.w;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(hw[(i, j)].abs() <= 1e-8);
                    }
                }
            }
        } else {
            panic!("expected feasible instance");
        }
    }

    #[test]
    fn initial_point_single_user_threshold_boundary() {
        let (channel, coeffs, policy, _) = small_instance(1, 2, 4);
        // find the largest feasible rho from the L1 bound directly
        let links = NormalizedLinks::new(&channel, &coeffs);
        let g = normalized_pinv(&links).unwrap();
        let bounds = policy.amplitude_bounds();
        let u_max = (0..2)
            .map(|n| bounds[n] / g[(n, 0)].abs().max(1e-300))
            .fold(f64::INFINITY, f64::min);
        let max_rate = 0.5 * (1.0 + links.a[0] * u_max * u_max).log2();
        let ok = zf_initial_point(
            &channel,
            &coeffs,
            &policy,
            &DVector::from_element(1, max_rate - 1e-6),
        )
        .unwrap();
        assert!(ok.is_some());
        let no = zf_initial_point(
            &channel,
            &coeffs,
            &policy,
            &DVector::from_element(1, max_rate + 1e-3),
        )
        .unwrap();
        assert!(no.is_none());
    }

    // -- parameterized solve -------------------------------------------------------

    #[test]
    fn zf_solve_matches_brute_force_grid_square_channel() {
        let (channel, coeffs, policy, model) = small_instance(2, 2, 5);
        let lambda = DVector::from_element(2, 0.1);
        let mu = 0.05;
        let init = zf_initial_point(&channel, &coeffs, &policy, &lambda)
            .unwrap()
            .expect("feasible");
        let out = solve_parameterized_zf(
            &channel,
            &coeffs,
            &policy,
            &model,
            mu,
            &lambda,
            &init.rho,
            &ZfConfig::default(),
        )
        .unwrap();

        // for square H the ZF precoder is unique given rho: grid over rho
        let links = NormalizedLinks::new(&channel, &coeffs);
        let g = normalized_pinv(&links).unwrap();
        let bounds = policy.amplitude_bounds();
        // largest per-user normalized amplitude the L1 bounds allow alone
        let u_cap = |k: usize| {
            (0..2)
                .map(|n| bounds[n] / g[(n, k)].abs().max(1e-300))
                .fold(f64::INFINITY, f64::min)
        };
        let caps = [u_cap(0), u_cap(1)];
        let mut best = f64::NEG_INFINITY;
        let steps = 200;
        for i in 0..=steps {
            for j in 0..=steps {
                let u = DVector::from_vec(vec![
                    caps[0] * i as f64 / steps as f64,
                    caps[1] * j as f64 / steps as f64,
                ]);
                let loads = row_loads(&g, &u);
                if (0..2).any(|n| loads[n] > bounds[n]) {
                    continue;
                }
                let rates: Vec<f64> = (0..2)
                    .map(|k| 0.5 * (1.0 + links.a[k] * u[k] * u[k]).log2())
                    .collect();
                if rates.iter().zip(lambda.iter()).any(|(r, l)| r < l) {
                    continue;
                }
                let w = &g * DMatrix::from_diagonal(&u);
                let p = model.dc_power(&policy)
                    + model.equiv_resistance * w.iter().map(|v| v * v).sum::<f64>();
                best = best.max(rates.iter().sum::<f64>() - mu * p);
            }
        }
        let tol = best.abs() * 1e-2 + 1e-4;
        assert!(
            (out.objective - best).abs() <= tol,
            "solver {} vs grid {}",
            out.objective,
            best
        );
        // residual of the ZF constraint at the returned state
        let hw = &channel.gains * &out.state.w.w;
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    assert!(hw[(i, j)].abs() <= 1e-8);
                } else {
                    assert_relative_eq!(
                        hw[(i, i)].abs(),
                        out.state.rho[i].sqrt(),
                        max_relative = 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn threshold_tight_limit_under_heavy_power_penalty() {
        let (channel, coeffs, policy, model) = small_instance(2, 3, 6);
        let lambda = DVector::from_element(2, 0.4);
        let init = zf_initial_point(&channel, &coeffs, &policy, &lambda)
            .unwrap()
            .expect("feasible");
        let out = solve_parameterized_zf(
            &channel,
            &coeffs,
            &policy,
            &model,
            1e4,
            &lambda,
            &init.rho,
            &ZfConfig::default(),
        )
        .unwrap();
        // ρ_k → (2^{2λ} − 1)/a_k when the power term dominates
        for k in 0..2 {
            let target = (2f64.powf(2.0 * lambda[k]) - 1.0) / coeffs.a[k];
            assert_relative_eq!(out.state.rho[k], target, max_relative = 1e-2);
        }
    }

    #[test]
    fn general_rate_matches_closed_form_at_solution() {
        let (channel, coeffs, policy, model) = small_instance(3, 4, 7);
        let lambda = DVector::from_element(3, 0.2);
        let init = zf_initial_point(&channel, &coeffs, &policy, &lambda)
            .unwrap()
            .expect("feasible");
        let out = solve_parameterized_zf(
            &channel,
            &coeffs,
            &policy,
            &model,
            0.03,
            &lambda,
            &init.rho,
            &ZfConfig::default(),
        )
        .unwrap();
        for k in 0..3 {
            let closed = 0.5 * (1.0 + coeffs.a[k] * out.state.rho[k]).log2();
            let general = secrecy_rate(&out.state.w, &channel, &coeffs, k);
            assert_relative_eq!(closed, general, epsilon = 1e-6);
        }
    }

    // -- random selection ----------------------------------------------------------

    #[test]
    fn selection_is_deterministic_and_prefix_monotone() {
        let (channel, coeffs, policy, model) = small_instance(2, 3, 8);
        let lambda = DVector::from_element(2, 0.2);
        let a = random_zf_selection(&channel, &coeffs, &policy, &model, &lambda, 200, 7)
            .unwrap()
            .expect("some candidate feasible");
        let b = random_zf_selection(&channel, &coeffs, &policy, &model, &lambda, 200, 7)
            .unwrap()
            .unwrap();
        assert_eq!(a.0.w, b.0.w);
        assert_eq!(a.1, b.1);

        let bigger = random_zf_selection(&channel, &coeffs, &policy, &model, &lambda, 400, 7)
            .unwrap()
            .unwrap();
        assert!(bigger.1 >= a.1);

        // the winner is feasible and its SEE matches the general evaluator
        assert!(row_l1_feasible(&a.0, &policy, 1e-9));
        assert_relative_eq!(
            a.1,
            see(&a.0, &channel, &coeffs, &policy, &model),
            max_relative = 1e-8
        );
        for k in 0..2 {
            assert!(secrecy_rate(&a.0, &channel, &coeffs, k) >= lambda[k] - 1e-8);
        }
    }

    #[test]
    fn selection_infeasible_thresholds_give_none() {
        let (channel, coeffs, policy, model) = small_instance(2, 3, 9);
        let lambda = DVector::from_element(2, 50.0);
        let got =
            random_zf_selection(&channel, &coeffs, &policy, &model, &lambda, 100, 3).unwrap();
        assert!(got.is_none());
    }
}

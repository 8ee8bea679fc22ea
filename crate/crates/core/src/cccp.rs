//! Convex-concave procedure on the slack-variable reformulation.
//!
//! For a fixed Dinkelbach parameter μ the non-convex design problem is
//! rewritten with per-user slacks
//!
//!   r₁ₖ ≤ ½log₂(1+p₁ₖ),  p₁ₖ ≤ Σᵢ aₖ(hₖᵀwᵢ)²   (signal),
//!   r₂ₖ ≥ ½log₂(1+p₂ₖ),  p₂ₖ ≥ Σ_{i≠k} bₖ(hₖᵀwᵢ)²  (interference),
//!   r₃ₖ ≥ ½log₂(1+p₃ₖ),  p₃ₖ ≥ Σ_{i≠k} bᵢ(hᵢᵀwₖ)²  (leakage),
//!
//! and the three non-convex constraints are replaced by first-order Taylor
//! bounds around the previous iterate: the quadratic is under-estimated, the
//! logs are over-estimated. Each pass is then a conic program; iterating
//! yields monotone ascent of the true objective.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::conic::{ConicProgram, LinExpr, SolveStatus, VarId};
use crate::dinkelbach::InnerError;
use crate::geometry::ChannelMatrix;
use crate::power::{total_power, DrivePolicy, PowerModel, Precoder};
use crate::secrecy::{
    secrecy_rates, sum_secrecy_rate, LinkCoefficients, NormalizedLinks,
};
use crate::trace::{InnerStatus, IterateStat};

#[derive(Debug, Error, PartialEq)]
pub enum CccpError {
    #[error("subproblem infeasible at the initial point")]
    Infeasible,
    #[error("conic solver failed: {0}")]
    Solver(String),
}

impl From<CccpError> for InnerError {
    fn from(e: CccpError) -> Self {
        match e {
            CccpError::Infeasible => InnerError::Infeasible,
            CccpError::Solver(msg) => InnerError::Solver(msg),
        }
    }
}

/// Inner-loop configuration: relative-change tolerance ε₂ and cap L_max,2.
#[derive(Debug, Clone)]
pub struct CccpConfig {
    pub eps2: f64,
    pub lmax2: usize,
    /// Tolerance handed to the conic solver.
    pub solver_tol: f64,
}

impl Default for CccpConfig {
    fn default() -> Self {
        Self {
            eps2: 1e-4,
            lmax2: 100,
            solver_tol: 1e-6,
        }
    }
}

/// Slack values attached to a precoder iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackState {
    pub r1: DVector<f64>,
    pub r2: DVector<f64>,
    pub r3: DVector<f64>,
    pub p1: DVector<f64>,
    pub p2: DVector<f64>,
    pub p3: DVector<f64>,
}

impl SlackState {
    /// Evaluates the defining equalities of the slacks at `w`.
    pub fn from_precoder(w: &Precoder, channel: &ChannelMatrix, coeffs: &LinkCoefficients) -> Self {
        let links = NormalizedLinks::new(channel, coeffs);
        Self::from_precoder_links(w, &links)
    }

    pub(crate) fn from_precoder_links(w: &Precoder, links: &NormalizedLinks) -> Self {
        let k_users = links.n_users();
        let mut p1 = DVector::zeros(k_users);
        let mut p2 = DVector::zeros(k_users);
        let mut p3 = DVector::zeros(k_users);
        for k in 0..k_users {
            let hk = links.row(k);
            for i in 0..k_users {
                let g = hk.dot(&w.user_column(i));
                p1[k] += links.a[k] * g * g;
                if i != k {
                    p2[k] += links.b[k] * g * g;
                    let gl = links.row(i).dot(&w.user_column(k));
                    p3[k] += links.b[i] * gl * gl;
                }
            }
        }
        let half_log = |p: f64| 0.5 * (1.0 + p).log2();
        Self {
            r1: p1.map(half_log),
            r2: p2.map(half_log),
            r3: p3.map(half_log),
            p1,
            p2,
            p3,
        }
    }
}

/// Affine function c + gᵀw of a precoder column.
#[derive(Debug, Clone)]
pub struct TaylorAffine {
    pub constant: f64,
    pub gradient: DVector<f64>,
}

impl TaylorAffine {
    pub fn eval(&self, w: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(w)
    }
}

/// Affine scalar function c + s·p.
#[derive(Debug, Clone, Copy)]
pub struct TaylorScalar {
    pub constant: f64,
    pub slope: f64,
}

impl TaylorScalar {
    pub fn eval(&self, p: f64) -> f64 {
        self.constant + self.slope * p
    }
}

/// First-order under-estimator of (hᵀw)² around `w_prev`:
/// (hᵀw_prev)² + 2(hᵀw_prev)·hᵀ(w − w_prev). Exact at the expansion point.
pub fn taylor_quadratic_lower(w_prev: &DVector<f64>, h: &DVector<f64>) -> TaylorAffine {
    let g0 = h.dot(w_prev);
    TaylorAffine {
        constant: -g0 * g0,
        gradient: h * (2.0 * g0),
    }
}

/// First-order over-estimator of ½log₂(1+p) around `p_prev`:
/// ½log₂(1+p_prev) + (p − p_prev)/(2·ln2·(1+p_prev)). Exact at p_prev.
pub fn taylor_log_upper(p_prev: f64) -> TaylorScalar {
    assert!(p_prev >= 0.0, "expansion point must be nonnegative");
    let slope = 1.0 / (2.0 * std::f64::consts::LN_2 * (1.0 + p_prev));
    TaylorScalar {
        constant: 0.5 * (1.0 + p_prev).log2() - slope * p_prev,
        slope,
    }
}

/// Variable handles of a built subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemVars {
    pub w: VarId,
    pub r: [VarId; 3],
    pub p: [VarId; 3],
    /// Min-slack variable in feasibility mode.
    pub t: Option<VarId>,
    n_leds: usize,
    n_users: usize,
}

impl SubproblemVars {
    pub fn extract(&self, prog: &ConicProgram, x: &[f64]) -> (Precoder, SlackState) {
        let flat = prog.vector_value(x, self.w);
        let w = DMatrix::from_fn(self.n_leds, self.n_users, |n, k| flat[k * self.n_leds + n]);
        let get = |v: VarId| prog.vector_value(x, v);
        let state = SlackState {
            r1: get(self.r[0]),
            r2: get(self.r[1]),
            r3: get(self.r[2]),
            p1: get(self.p[0]),
            p2: get(self.p[1]).map(|v| v.max(0.0)),
            p3: get(self.p[2]).map(|v| v.max(0.0)),
        };
        (Precoder { w }, state)
    }
}

#[derive(Clone, Copy)]
enum Mode {
    /// Maximize Σ(r₁−r₂−r₃) − μ·D under rate thresholds λ.
    Objective { mu: f64 },
    /// Maximize the minimum threshold slack t.
    Feasibility,
}

/// Builds the convex subproblem around `prev` for parameter `mu`.
pub fn build_subproblem(
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    model: &PowerModel,
    prev: (&Precoder, &SlackState),
    mu: f64,
    lambda: &DVector<f64>,
) -> (ConicProgram, SubproblemVars) {
    let links = NormalizedLinks::new(channel, coeffs);
    build_inner(&links, policy, model, prev, lambda, Mode::Objective { mu })
}

fn build_inner(
    links: &NormalizedLinks,
    policy: &DrivePolicy,
    model: &PowerModel,
    prev: (&Precoder, &SlackState),
    lambda: &DVector<f64>,
    mode: Mode,
) -> (ConicProgram, SubproblemVars) {
    let (w_prev, slack_prev) = prev;
    let n_leds = links.n_leds();
    let k_users = links.n_users();
    assert_eq!(w_prev.n_leds(), n_leds);
    assert_eq!(w_prev.n_users(), k_users);
    assert_eq!(lambda.len(), k_users);

    let mut prog = ConicProgram::new();
    let nk = n_leds * k_users;
    let w = prog.add_vector("w", nk);
    let wp = prog.add_vector("wp", nk);
    let wm = prog.add_vector("wm", nk);
    let r1 = prog.add_vector("r1", k_users);
    let r2 = prog.add_vector("r2", k_users);
    let r3 = prog.add_vector("r3", k_users);
    let p1 = prog.add_vector("p1", k_users);
    let p2 = prog.add_vector("p2", k_users);
    let p3 = prog.add_vector("p3", k_users);
    let t = match mode {
        Mode::Feasibility => Some(prog.add_scalar("t")),
        Mode::Objective { .. } => None,
    };

    let widx = |n: usize, k: usize| k * n_leds + n;
    let w_col = |prog: &ConicProgram, k: usize, coeffs_vec: &DVector<f64>| {
        let mut e = LinExpr::default();
        for n in 0..n_leds {
            e = e + prog.vec_term(w, widx(n, k)) * coeffs_vec[n];
        }
        e
    };

    // sign split and per-LED row bounds
    for j in 0..nk {
        let (ew, ep, em) = (
            prog.vec_term(w, j),
            prog.vec_term(wp, j),
            prog.vec_term(wm, j),
        );
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

    // shared squares s_ab >= (ĥ_a' w_b)² for every ordered pair a != b
    let mut sq = vec![vec![None; k_users]; k_users];
    for a in 0..k_users {
        for b in 0..k_users {
            if a == b {
                continue;
            }
            let y = w_col(&prog, b, &links.row(a));
            let s = prog.add_square_epigraph(y, &format!("sq_{a}_{b}"));
            sq[a][b] = Some(s);
        }
    }

    for k in 0..k_users {
        // signal epigraph r1 <= ½log2(1+p1)
        prog.add_log_epigraph(prog.vec_term(r1, k), prog.vec_term(p1, k), 0.5);

        // p1 below the linearized signal power
        let mut lin = LinExpr::default();
        for i in 0..k_users {
            let ta = taylor_quadratic_lower(&w_prev.user_column(i), &links.row(k));
            lin = lin + w_col(&prog, i, &ta.gradient) * links.a[k]
                + LinExpr::constant(links.a[k] * ta.constant);
        }
        prog.leq(prog.vec_term(p1, k), lin);

        // interference / leakage quadratics below their slacks
        let mut intf = LinExpr::default();
        let mut leak = LinExpr::default();
        for i in 0..k_users {
            if i == k {
                continue;
            }
            intf = intf + sq[k][i].clone().unwrap() * links.b[k];
            leak = leak + sq[i][k].clone().unwrap() * links.b[i];
        }
        prog.leq(intf, prog.vec_term(p2, k));
        prog.leq(leak, prog.vec_term(p3, k));

        // linearized log upper bounds
        let t2 = taylor_log_upper(slack_prev.p2[k]);
        prog.nonneg(prog.vec_term(r2, k) - prog.vec_term(p2, k) * t2.slope - t2.constant.into());
        let t3 = taylor_log_upper(slack_prev.p3[k]);
        prog.nonneg(prog.vec_term(r3, k) - prog.vec_term(p3, k) * t3.slope - t3.constant.into());

        // per-user secrecy threshold
        let rate = prog.vec_term(r1, k) - prog.vec_term(r2, k) - prog.vec_term(r3, k);
        match t {
            Some(t) => prog.nonneg(rate - prog.term(t) - lambda[k].into()),
            None => prog.nonneg(rate - lambda[k].into()),
        }
    }

    // objective
    match mode {
        Mode::Feasibility => {
            let t = t.unwrap();
            prog.set_objective(prog.term(t));
        }
        Mode::Objective { mu } => {
            let mut obj = LinExpr::constant(-mu * model.dc_power(policy));
            for k in 0..k_users {
                obj = obj + prog.vec_term(r1, k) - prog.vec_term(r2, k) - prog.vec_term(r3, k);
            }
            let mu_xi = mu * model.equiv_resistance;
            if mu_xi > 0.0 {
                for j in 0..nk {
                    let s = prog.add_square_epigraph(prog.vec_term(w, j), &format!("tr_{j}"));
                    obj = obj + s * (-mu_xi);
                }
            }
            prog.set_objective(obj);
        }
    }

    let vars = SubproblemVars {
        w,
        r: [r1, r2, r3],
        p: [p1, p2, p3],
        t,
        n_leds,
        n_users: k_users,
    };
    (prog, vars)
}

/// Result of a parameterized CCCP run.
#[derive(Debug, Clone)]
pub struct CccpOutcome {
    pub w: Precoder,
    /// Exact N(W) − μ·D(W) at the returned precoder.
    pub objective: f64,
    pub iterations: usize,
    pub status: InnerStatus,
    pub steps: Vec<IterateStat>,
}

/// Iterates the convexified subproblem from `init` until the relative changes
/// of W, p₂ and p₃ all fall below ε₂ or the iteration cap is hit.
pub fn solve_parameterized(
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    model: &PowerModel,
    mu: f64,
    lambda: &DVector<f64>,
    init: &Precoder,
    cfg: &CccpConfig,
) -> Result<CccpOutcome, CccpError> {
    let links = NormalizedLinks::new(channel, coeffs);
    let exact = |w: &Precoder| {
        sum_secrecy_rate(w, channel, coeffs) - mu * total_power(w, policy, model)
    };

    let mut w = init.clone();
    let mut state = SlackState::from_precoder_links(&w, &links);
    let mut best: Option<(Precoder, f64)> = None;
    let mut steps: Vec<IterateStat> = Vec::new();

    for m in 1..=cfg.lmax2 {
        let (prog, vars) = build_inner(
            &links,
            policy,
            model,
            (&w, &state),
            lambda,
            Mode::Objective { mu },
        );
        let res = prog.solve(cfg.solver_tol);
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if m == 1 => return Err(CccpError::Infeasible),
            status => {
                if m == 1 {
                    return Err(CccpError::Solver(format!("status {status:?} at first pass")));
                }
                let (bw, bobj) = best.unwrap();
                return Ok(CccpOutcome {
                    w: bw,
                    objective: bobj,
                    iterations: m - 1,
                    status: InnerStatus::SolverStall,
                    steps,
                });
            }
        }
        let (w_new, state_new) = vars.extract(&prog, &res.x);

        let rel_w = (&w_new.w - &w.w).norm() / w_new.w.norm().max(1e-12);
        let rel_p2 = rel_change(&state_new.p2, &state.p2);
        let rel_p3 = rel_change(&state_new.p3, &state.p3);

        let obj_exact = exact(&w_new);
        steps.push(IterateStat {
            inner_iter: m,
            objective: obj_exact,
            see: sum_secrecy_rate(&w_new, channel, coeffs)
                / total_power(&w_new, policy, model),
            rates: secrecy_rates(&w_new, channel, coeffs).iter().cloned().collect(),
            w_rel_change: rel_w,
            surrogate: res.objective,
            solver_iterations: res.iterations,
            relax_gap: None,
            threshold_violation: None,
        });
        match &best {
            Some((_, b)) if *b >= obj_exact => {}
            _ => best = Some((w_new.clone(), obj_exact)),
        }

        w = w_new;
        state = state_new;

        if rel_w <= cfg.eps2 && rel_p2 <= cfg.eps2 && rel_p3 <= cfg.eps2 {
            return Ok(CccpOutcome {
                w,
                objective: obj_exact,
                iterations: m,
                status: InnerStatus::Converged,
                steps,
            });
        }
    }

    let (bw, bobj) = best.expect("lmax2 >= 1");
    Ok(CccpOutcome {
        w: bw,
        objective: bobj,
        iterations: cfg.lmax2,
        status: InnerStatus::MaxIterations,
        steps,
    })
}

/// One CCCP pass maximizing the minimum threshold slack from `init`; returns
/// a precoder meeting every threshold if the slack turns nonnegative.
pub fn feasibility_phase(
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    model: &PowerModel,
    lambda: &DVector<f64>,
    init: &Precoder,
    cfg: &CccpConfig,
) -> Option<Precoder> {
    let links = NormalizedLinks::new(channel, coeffs);
    let mut w = init.clone();
    let mut state = SlackState::from_precoder_links(&w, &links);
    let mut prev_slack = f64::NEG_INFINITY;
    for _ in 1..=cfg.lmax2 {
        let (prog, vars) = build_inner(&links, policy, model, (&w, &state), lambda, Mode::Feasibility);
        let res = prog.solve(cfg.solver_tol);
        if res.status != SolveStatus::Optimal {
            return None;
        }
        let slack = prog.scalar_value(&res.x, vars.t.unwrap());
        let (w_new, state_new) = vars.extract(&prog, &res.x);
        if slack >= 0.0 {
            return Some(w_new);
        }
        // monotone in exact slack too; stop when progress stalls
        if slack <= prev_slack + 1e-9 {
            return None;
        }
        prev_slack = slack;
        w = w_new;
        state = state_new;
    }
    None
}

fn rel_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    (0..new.len())
        .map(|k| (new[k] - old[k]).abs() / new[k].abs().max(1e-12))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secrecy::{link_coefficients, secrecy_rate, SymbolDistribution};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // -- Taylor operators ------------------------------------------------------

    #[test]
    fn quadratic_lower_exact_at_expansion() {
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let w0 = DVector::from_vec(vec![0.3, 0.1, -0.7]);
        let t = taylor_quadratic_lower(&w0, &h);
        let g = h.dot(&w0);
        assert_relative_eq!(t.eval(&w0), g * g, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_lower_hand_values() {
        let h = DVector::from_vec(vec![1.0]);
        let w0 = DVector::from_vec(vec![1.0]);
        let t = taylor_quadratic_lower(&w0, &h);
        assert_relative_eq!(t.eval(&DVector::from_vec(vec![2.0])), 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.eval(&DVector::from_vec(vec![0.0])), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_lower_bound_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let dim = 1 + rng.gen_range(0..4);
            let h = DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let w0 = DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let w = DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let t = taylor_quadratic_lower(&w0, &h);
            let g = h.dot(&w);
            assert!(t.eval(&w) <= g * g + 1e-12);
        }
    }

    #[test]
    fn log_upper_exact_and_hand_values() {
        let t = taylor_log_upper(0.7);
        assert_relative_eq!(t.eval(0.7), 0.5 * 1.7f64.log2(), epsilon = 1e-12);
        let t = taylor_log_upper(0.0);
        assert_relative_eq!(t.eval(1.0), 1.0 / (2.0 * std::f64::consts::LN_2), epsilon = 1e-12);
        assert_relative_eq!(t.eval(1.0), 0.72135, epsilon = 1e-5);
        let t = taylor_log_upper(1.0);
        assert_relative_eq!(
            t.eval(0.0),
            0.5 - 1.0 / (4.0 * std::f64::consts::LN_2),
            epsilon = 1e-12
        );
        assert_relative_eq!(t.eval(0.0), 0.139326, epsilon = 1e-5);
    }

    #[test]
    fn log_upper_bound_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10_000 {
            let p0 = rng.gen::<f64>() * 100.0;
            let p = rng.gen::<f64>() * 100.0;
            let t = taylor_log_upper(p0);
            assert!(t.eval(p) >= 0.5 * (1.0 + p).log2() - 1e-12);
        }
    }

    // -- Subproblem ------------------------------------------------------------

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
        let policy = DrivePolicy::uniform_symmetric(n_leds, 0.5);
        let model = PowerModel::default();
        (channel, coeffs, policy, model)
    }

    #[test]
    fn previous_iterate_is_feasible_in_built_subproblem() {
        let (channel, coeffs, policy, model) = small_instance(2, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // a strictly interior previous point
        let w_prev = Precoder::new(DMatrix::from_fn(3, 2, |_, _| {
            0.1 * (rng.gen::<f64>() - 0.5)
        }))
        .unwrap();
        let state = SlackState::from_precoder(&w_prev, &channel, &coeffs);
        let lambda = DVector::from_element(2, -10.0); // thresholds off
        let (prog, vars) = build_subproblem(
            &channel,
            &coeffs,
            &policy,
            &model,
            (&w_prev, &state),
            0.2,
            &lambda,
        );
        // the expansion point stays feasible, so the solve succeeds and its
        // exact objective dominates the previous iterate's
        let res = prog.solve(1e-8);
        assert_eq!(res.status, SolveStatus::Optimal);
        let (w_new, _) = vars.extract(&prog, &res.x);
        let exact = |w: &Precoder| {
            sum_secrecy_rate(w, &channel, &coeffs) - 0.2 * total_power(w, &policy, &model)
        };
        assert!(exact(&w_new) >= exact(&w_prev) - 1e-6);
    }

    #[test]
    fn zero_state_with_zero_thresholds_is_feasible() {
        let (channel, coeffs, policy, model) = small_instance(2, 3, 6);
        let w0 = Precoder::zeros(3, 2);
        let state = SlackState::from_precoder(&w0, &channel, &coeffs);
        let lambda = DVector::zeros(2);
        let (prog, _) = build_subproblem(
            &channel,
            &coeffs,
            &policy,
            &model,
            (&w0, &state),
            0.0,
            &lambda,
        );
        let res = prog.solve(1e-8);
        assert_eq!(res.status, SolveStatus::Optimal);
        // objective 0 attainable at W = 0, optimum at least that
        assert!(res.objective >= -1e-8);
    }

    /// A random interference-free precoder: W = H⁺·diag(g) with g > 0 scaled
    /// inside the row bounds, so all rates are positive and the init is
    /// feasible for any λ ≤ 0⁺ thresholds.
    fn random_zf_direction(
        channel: &ChannelMatrix,
        policy: &DrivePolicy,
        seed: u64,
    ) -> Precoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pinv = channel
            .gains
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .unwrap();
        let k = channel.n_users();
        let g = DVector::from_fn(k, |_, _| 0.2 + rng.gen::<f64>());
        let mut w = pinv * DMatrix::from_diagonal(&g);
        let worst: f64 = (0..w.nrows())
            .map(|n| {
                w.row(n).iter().map(|v| v.abs()).sum::<f64>() / policy.amplitude_bound(n)
            })
            .fold(0.0, f64::max);
        w /= worst * 2.0; // half of the row-L1 frontier
        Precoder::new(w).unwrap()
    }

    #[test]
    fn monotone_ascent_from_random_feasible_init() {
        let (channel, coeffs, policy, model) = small_instance(2, 2, 7);
        let init = random_zf_direction(&channel, &policy, 17);
        let lambda = DVector::zeros(2);
        let cfg = CccpConfig::default();
        let out = solve_parameterized(
            &channel, &coeffs, &policy, &model, 0.0, &lambda, &init, &cfg,
        )
        .unwrap();
        // μ = 0: objective is the sum rate; must not decrease along iterations
        let init_rate = sum_secrecy_rate(&init, &channel, &coeffs);
        assert!(out.objective >= init_rate - 1e-6);
        for pair in out.steps.windows(2) {
            assert!(
                pair[1].objective >= pair[0].objective - 1e-6,
                "ascent violated: {} -> {}",
                pair[0].objective,
                pair[1].objective
            );
        }
    }

    #[test]
    fn returned_precoder_respects_constraints() {
        let (channel, coeffs, policy, model) = small_instance(3, 4, 8);
        let lambda = DVector::from_element(3, 0.1);
        // start from a feasibility-phase point (zero is a CCCP fixed point,
        // so the phase itself needs a nonzero start)
        let start = random_zf_direction(&channel, &policy, 23);
        let w0 = feasibility_phase(
            &channel,
            &coeffs,
            &policy,
            &model,
            &lambda,
            &start,
            &CccpConfig::default(),
        )
        .expect("instance should be feasible");
        let out = solve_parameterized(
            &channel,
            &coeffs,
            &policy,
            &model,
            0.05,
            &lambda,
            &w0,
            &CccpConfig::default(),
        )
        .unwrap();
        assert!(crate::power::row_l1_feasible(&out.w, &policy, 1e-7));
        for k in 0..3 {
            assert!(
                secrecy_rate(&out.w, &channel, &coeffs, k) >= lambda[k] - 1e-5,
                "threshold violated for user {k}"
            );
        }
        assert_eq!(out.status, InnerStatus::Converged);
    }

    #[test]
    fn fixed_point_returns_in_one_iteration() {
        let (channel, coeffs, policy, model) = small_instance(2, 2, 10);
        let lambda = DVector::zeros(2);
        let cfg = CccpConfig::default();
        let init = random_zf_direction(&channel, &policy, 29);
        let first = solve_parameterized(
            &channel, &coeffs, &policy, &model, 0.02, &lambda, &init, &cfg,
        )
        .unwrap();
        // re-run from the converged point
        let again = solve_parameterized(
            &channel, &coeffs, &policy, &model, 0.02, &lambda, &first.w, &cfg,
        )
        .unwrap();
        assert!(again.iterations <= 2, "took {}", again.iterations);
        assert_relative_eq!(again.objective, first.objective, epsilon = 1e-5);
    }

    #[test]
    fn infeasible_thresholds_detected() {
        let (channel, coeffs, policy, model) = small_instance(2, 2, 11);
        let lambda = DVector::from_element(2, 50.0); // beyond any attainable rate
        let init = random_zf_direction(&channel, &policy, 31);
        let err = solve_parameterized(
            &channel,
            &coeffs,
            &policy,
            &model,
            0.0,
            &lambda,
            &init,
            &CccpConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, CccpError::Infeasible);
    }
}

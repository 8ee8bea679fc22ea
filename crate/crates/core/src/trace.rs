//! Per-iteration statistics shared by the inner solvers.

/// One inner iteration of a parameterized solve: the exact (unsurrogated)
/// objective N − μD, the SEE of the iterate, per-user rates, and
/// algorithm-specific extras.
#[derive(Debug, Clone)]
pub struct IterateStat {
    pub inner_iter: usize,
    /// N(W) − μ·D(W) evaluated exactly on the iterate.
    pub objective: f64,
    /// Φ(W) of the iterate.
    pub see: f64,
    /// Per-user secrecy-rate bounds.
    pub rates: Vec<f64>,
    /// ‖W − W_prev‖ / max(‖W‖, floor).
    pub w_rel_change: f64,
    /// Surrogate optimum reported by the conic solve.
    pub surrogate: f64,
    /// Interior-point iterations of the conic solve.
    pub solver_iterations: usize,
    /// Relative rank-one approximation gap (SDR only).
    pub relax_gap: Option<f64>,
    /// Worst threshold shortfall after rank-one retrieval (SDR only).
    pub threshold_violation: Option<f64>,
}

/// Convergence status of an inner parameterized solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    MaxIterations,
    /// The conic solver failed mid-run; the best iterate so far is returned.
    SolverStall,
}

//! Fractional-programming outer loop.
//!
//! Maximizing a ratio Φ(W) = N(W)/D(W) with D > 0 is reduced to a sequence of
//! parameterized problems max_W N(W) − μ·D(W). The parameter is updated to
//! the achieved ratio μ ← N(W)/D(W) until the parameterized optimum F(μ)
//! drops below the tolerance, at which point μ equals the maximal ratio.

/// Failure modes an inner solver may report for a given μ.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerError {
    Infeasible,
    Solver(String),
}

/// Inner-solver output for one parameter value.
#[derive(Debug, Clone)]
pub struct InnerSolve<T> {
    pub solution: T,
    pub inner_iterations: usize,
}

/// Outer-loop configuration: initial parameter, tolerance ε₁, iteration cap.
#[derive(Debug, Clone)]
pub struct DinkelbachConfig {
    pub mu0: f64,
    pub eps1: f64,
    pub lmax1: usize,
}

impl Default for DinkelbachConfig {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            eps1: 1e-4,
            lmax1: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DinkelbachStatus {
    /// Terminated with N − μD ≤ ε₁.
    Optimal,
    /// Iteration cap reached; the last iterate is returned.
    MaxIterations,
    /// The inner problem was infeasible at the initial parameter.
    Infeasible,
    /// The inner solver failed after at least one success; the best feasible
    /// iterate is returned.
    Degraded,
}

/// One outer iteration: the parameter solved at, the achieved F(μ) = N − μD,
/// and the inner iterations spent.
#[derive(Debug, Clone)]
pub struct DinkelbachStep {
    pub outer: usize,
    pub mu: f64,
    pub f_value: f64,
    pub inner_iterations: usize,
}

/// Outer-loop result. `solution` is absent only for `Infeasible`.
#[derive(Debug, Clone)]
pub struct DinkelbachOutcome<T> {
    pub solution: Option<T>,
    pub mu_star: f64,
    pub status: DinkelbachStatus,
    pub trace: Vec<DinkelbachStep>,
}

/// Runs the outer loop over a parameterized inner solver.
///
/// `inner(μ)` must return a feasible maximizer of N − μD (or an error);
/// `numerator`/`denominator` evaluate N and D exactly on its output. The μ
/// sequence is nondecreasing when μ₀ is the ratio of a feasible point.
pub fn run<T: Clone>(
    mut inner: impl FnMut(f64) -> Result<InnerSolve<T>, InnerError>,
    numerator: impl Fn(&T) -> f64,
    denominator: impl Fn(&T) -> f64,
    cfg: &DinkelbachConfig,
) -> DinkelbachOutcome<T> {
    let mut mu = cfg.mu0;
    let mut trace = Vec::new();
    let mut best: Option<(T, f64)> = None;

    for l in 0..cfg.lmax1 {
        let solved = match inner(mu) {
            Ok(s) => s,
            Err(_) if l == 0 => {
                return DinkelbachOutcome {
                    solution: None,
                    mu_star: f64::NAN,
                    status: DinkelbachStatus::Infeasible,
                    trace,
                };
            }
            Err(_) => {
                let (sol, ratio) = best.expect("prior success");
                return DinkelbachOutcome {
                    solution: Some(sol),
                    mu_star: ratio,
                    status: DinkelbachStatus::Degraded,
                    trace,
                };
            }
        };
        let n = numerator(&solved.solution);
        let d = denominator(&solved.solution);
        assert!(d > 0.0, "denominator must stay positive");
        let f_value = n - mu * d;
        trace.push(DinkelbachStep {
            outer: l,
            mu,
            f_value,
            inner_iterations: solved.inner_iterations,
        });
        let ratio = n / d;
        match &best {
            Some((_, r)) if *r >= ratio => {}
            _ => best = Some((solved.solution.clone(), ratio)),
        }
        if f_value <= cfg.eps1 {
            return DinkelbachOutcome {
                solution: Some(solved.solution),
                mu_star: ratio,
                status: DinkelbachStatus::Optimal,
                trace,
            };
        }
        mu = ratio;
    }

    let (sol, ratio) = best.expect("lmax1 >= 1");
    DinkelbachOutcome {
        solution: Some(sol),
        mu_star: ratio,
        status: DinkelbachStatus::MaxIterations,
        trace,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

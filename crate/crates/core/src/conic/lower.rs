//! Lowering of a [`ConicProgram`] onto the Clarabel interior-point solver.
//!
//! Clarabel minimizes qᵀx subject to Ax + s = b with s in a product cone, so
//! every stored constraint becomes a slack row: equalities map to the zero
//! cone, inequalities to the nonnegative orthant, exponential memberships to
//! three-row blocks, and each PSD variable to an svec-scaled triangle block
//! tied to its own storage. Optimal points are accepted only after the
//! independent residual re-check passes at 10× the requested tolerance.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, ExponentialConeT, IPSolver, NonnegativeConeT,
    PSDTriangleConeT, SolverStatus, SupportedConeT, ZeroConeT,
};

use super::{ConicProgram, LinExpr, SolveResult, SolveStatus, VarShape};

/// Sparse triplet accumulator converted to CSC at the end.
struct TripletMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    fn new(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            entries: Vec::new(),
        }
    }

    fn push_row(&mut self, coeffs: &[(usize, f64)]) -> usize {
        let r = self.rows;
        for &(c, v) in coeffs {
            if v != 0.0 {
                self.entries.push((r, c, v));
            }
        }
        self.rows += 1;
        r
    }

    fn into_csc(mut self) -> CscMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (c, r));
        // merge duplicates at identical (col, row)
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut colptr = vec![0usize; self.cols + 1];
        let mut rowval = Vec::with_capacity(merged.len());
        let mut nzval = Vec::with_capacity(merged.len());
        for &(r, c, v) in &merged {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..self.cols {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(self.rows, self.cols, colptr, rowval, nzval)
    }
}

impl ConicProgram {
    /// Solve to the given tolerance (duality gap and feasibility).
    pub fn solve(&self, tol: f64) -> SolveResult {
        self.solve_with_iters(tol, 200)
    }

    /// Solve with an explicit interior-point iteration cap.
    pub fn solve_with_iters(&self, tol: f64, max_iter: u32) -> SolveResult {
        let n = self.n_flat();

        // objective: maximize c'x + c0  ->  minimize (-c)'x
        let mut q = vec![0.0; n];
        for &(i, c) in &self.objective.terms {
            q[i] -= c;
        }

        let mut a = TripletMatrix::new(n);
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        // affine row: expr relates to its slack as s = -expr  (b = -const, A = coeffs)
        let push_expr = |a: &mut TripletMatrix, b: &mut Vec<f64>, e: &LinExpr| {
            a.push_row(&e.terms);
            b.push(-e.constant);
        };

        if !self.eqs.is_empty() {
            for e in &self.eqs {
                push_expr(&mut a, &mut b, e);
            }
            cones.push(ZeroConeT(self.eqs.len()));
        }
        if !self.leqs.is_empty() {
            for e in &self.leqs {
                push_expr(&mut a, &mut b, e);
            }
            cones.push(NonnegativeConeT(self.leqs.len()));
        }
        for block in &self.exps {
            // cone slack must equal the expression: s = expr  (A = -coeffs, b = const)
            for e in block {
                let negated: Vec<(usize, f64)> = e.terms.iter().map(|&(i, c)| (i, -c)).collect();
                a.push_row(&negated);
                b.push(e.constant);
            }
            cones.push(ExponentialConeT());
        }
        for &v in &self.psds {
            let d = match self.shape(v) {
                VarShape::Symmetric(d) => d,
                _ => unreachable!(),
            };
            let sqrt2 = std::f64::consts::SQRT_2;
            for j in 0..d {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { sqrt2 };
                    let flat = self.flat_index(v, j * (j + 1) / 2 + i);
                    a.push_row(&[(flat, -scale)]);
                    b.push(0.0);
                }
            }
            cones.push(PSDTriangleConeT(d));
        }

        let a = a.into_csc();
        let p = CscMatrix::zeros((n, n));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(max_iter)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .build()
            .expect("settings");

        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => {
                return SolveResult {
                    status: SolveStatus::NumericalError,
                    x: Vec::new(),
                    objective: f64::NAN,
                    iterations: 0,
                }
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let iterations = sol.iterations as usize;

        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                if self.is_feasible(&sol.x, 10.0 * tol) {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalError
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIter,
            _ => SolveStatus::NumericalError,
        };

        if status == SolveStatus::Optimal {
            let objective = self.objective.eval(&sol.x);
            SolveResult {
                status,
                x: sol.x.clone(),
                objective,
                iterations,
            }
        } else {
            SolveResult {
                status,
                x: Vec::new(),
                objective: f64::NAN,
                iterations,
            }
        }
    }
}

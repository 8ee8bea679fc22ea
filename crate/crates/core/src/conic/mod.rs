//! Minimal conic-program representation and solver contract.
//!
//! A [`ConicProgram`] holds named scalar/vector/symmetric-matrix variables, a
//! linear objective (maximized), affine equalities and inequalities, and
//! memberships in the exponential cone {(x,y,z) : y·e^{x/y} ≤ z, y > 0} and
//! the PSD cone. This is exactly the substrate the precoder subproblems
//! need; convex quadratics enter through [`ConicProgram::add_square_epigraph`]
//! as 2×2 PSD blocks, so no second-order cone is required.
//!
//! Solving delegates to an interior-point backend (see `lower`), but every
//! optimal point is re-checked against the constraint residuals here,
//! independently of the solver.

mod lower;
mod text;

pub use text::ParseError;

use nalgebra::{DMatrix, DVector};

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(usize);

/// Shape of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    Scalar,
    Vector(usize),
    /// Symmetric d×d matrix; d(d+1)/2 stored entries, column-major upper
    /// triangle.
    Symmetric(usize),
}

impl VarShape {
    fn flat_len(&self) -> usize {
        match *self {
            VarShape::Scalar => 1,
            VarShape::Vector(n) => n,
            VarShape::Symmetric(d) => d * (d + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VarDecl {
    name: String,
    shape: VarShape,
    offset: usize,
}

/// Affine expression over the flattened variables: Σᵢ cᵢ·xᵢ + c₀.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    /// Sorted, merged, zero-free term list.
    fn normalize(mut self) -> Self {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            assert!(c.is_finite(), "non-finite coefficient in expression");
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        assert!(self.constant.is_finite(), "non-finite constant in expression");
        Self {
            terms: merged,
            constant: self.constant,
        }
    }

    /// Evaluate at a flat point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    /// 1 + Σ|cᵢxᵢ| + |c₀|, the scale used for relative residuals.
    fn magnitude(&self, x: &[f64]) -> f64 {
        1.0 + self.terms.iter().map(|&(i, c)| (c * x[i]).abs()).sum::<f64>() + self.constant.abs()
    }
}

impl std::ops::Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl std::ops::Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + (-rhs)
    }
}

impl std::ops::Neg for LinExpr {
    type Output = LinExpr;
    fn neg(mut self) -> LinExpr {
        for t in &mut self.terms {
            t.1 = -t.1;
        }
        self.constant = -self.constant;
        self
    }
}

impl std::ops::Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, rhs: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= rhs;
        }
        self.constant *= rhs;
        self
    }
}

impl std::ops::Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: f64) -> LinExpr {
        self.constant += rhs;
        self
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalError,
}

/// Solver output; `x` is populated only when `status == Optimal`.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Residual summary from the independent feasibility re-check.
#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    pub max_eq: f64,
    pub max_leq: f64,
    pub max_exp: f64,
    pub max_psd: f64,
}

impl ResidualReport {
    pub fn max_violation(&self) -> f64 {
        self.max_eq.max(self.max_leq).max(self.max_exp).max(self.max_psd)
    }
}

/// A conic program with a linear objective to maximize.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    vars: Vec<VarDecl>,
    n_flat: usize,
    objective: LinExpr,
    eqs: Vec<LinExpr>,
    leqs: Vec<LinExpr>,
    exps: Vec<[LinExpr; 3]>,
    psds: Vec<VarId>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_var(&mut self, name: &str, shape: VarShape) -> VarId {
        assert!(
            !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !name.chars().next().unwrap().is_ascii_digit(),
            "invalid variable name {name:?}"
        );
        assert!(
            self.vars.iter().all(|v| v.name != name),
            "duplicate variable name {name:?}"
        );
        let offset = self.n_flat;
        self.n_flat += shape.flat_len();
        self.vars.push(VarDecl {
            name: name.to_string(),
            shape,
            offset,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_scalar(&mut self, name: &str) -> VarId {
        self.add_var(name, VarShape::Scalar)
    }

    pub fn add_vector(&mut self, name: &str, dim: usize) -> VarId {
        assert!(dim > 0);
        self.add_var(name, VarShape::Vector(dim))
    }

    pub fn add_symmetric(&mut self, name: &str, dim: usize) -> VarId {
        assert!(dim > 0);
        self.add_var(name, VarShape::Symmetric(dim))
    }

    pub fn n_flat(&self) -> usize {
        self.n_flat
    }

    pub fn shape(&self, v: VarId) -> VarShape {
        self.vars[v.0].shape
    }

    fn flat_index(&self, v: VarId, local: usize) -> usize {
        self.vars[v.0].offset + local
    }

    /// Expression for a scalar variable.
    pub fn term(&self, v: VarId) -> LinExpr {
        assert_eq!(self.vars[v.0].shape, VarShape::Scalar);
        LinExpr {
            terms: vec![(self.flat_index(v, 0), 1.0)],
            constant: 0.0,
        }
    }

    /// Expression for one entry of a vector variable.
    pub fn vec_term(&self, v: VarId, i: usize) -> LinExpr {
        match self.vars[v.0].shape {
            VarShape::Vector(n) => assert!(i < n),
            _ => panic!("vec_term on non-vector"),
        }
        LinExpr {
            terms: vec![(self.flat_index(v, i), 1.0)],
            constant: 0.0,
        }
    }

    /// Expression for entry (i, j) of a symmetric matrix variable; (i, j)
    /// and (j, i) address the same stored scalar.
    pub fn mat_term(&self, v: VarId, i: usize, j: usize) -> LinExpr {
        let d = match self.vars[v.0].shape {
            VarShape::Symmetric(d) => d,
            _ => panic!("mat_term on non-symmetric"),
        };
        assert!(i < d && j < d);
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        LinExpr {
            terms: vec![(self.flat_index(v, c * (c + 1) / 2 + r), 1.0)],
            constant: 0.0,
        }
    }

    /// Weighted sum Σᵢ cᵢ·vec[i].
    pub fn dot(&self, v: VarId, coeffs: &DVector<f64>) -> LinExpr {
        let n = match self.vars[v.0].shape {
            VarShape::Vector(n) => n,
            _ => panic!("dot on non-vector"),
        };
        assert_eq!(coeffs.len(), n);
        LinExpr {
            terms: (0..n)
                .map(|i| (self.flat_index(v, i), coeffs[i]))
                .collect(),
            constant: 0.0,
        }
    }

    /// Tr(M·Q) for a symmetric parameter M and symmetric variable Q:
    /// Σₙ Mₙₙ·Qₙₙ + 2·Σ_{m<n} Mₘₙ·Qₘₙ over stored entries.
    pub fn trace_product(&self, q: VarId, m: &DMatrix<f64>) -> LinExpr {
        let d = match self.vars[q.0].shape {
            VarShape::Symmetric(d) => d,
            _ => panic!("trace_product on non-symmetric"),
        };
        assert_eq!(m.nrows(), d);
        assert_eq!(m.ncols(), d);
        let mut terms = Vec::with_capacity(d * (d + 1) / 2);
        for j in 0..d {
            for i in 0..=j {
                let coeff = if i == j {
                    m[(i, i)]
                } else {
                    m[(i, j)] + m[(j, i)]
                };
                terms.push((self.flat_index(q, j * (j + 1) / 2 + i), coeff));
            }
        }
        LinExpr {
            terms,
            constant: 0.0,
        }
    }

    pub fn set_objective(&mut self, expr: LinExpr) {
        self.objective = expr.normalize();
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    /// expr == 0
    pub fn eq_zero(&mut self, expr: LinExpr) {
        self.eqs.push(expr.normalize());
    }

    /// lhs ≤ rhs
    pub fn leq(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.leqs.push((lhs - rhs).normalize());
    }

    /// expr ≥ 0
    pub fn nonneg(&mut self, expr: LinExpr) {
        self.leq(LinExpr::constant(0.0), expr);
    }

    /// (x, y, z) ∈ K_exp, i.e. y·e^{x/y} ≤ z.
    pub fn exp_cone(&mut self, x: LinExpr, y: LinExpr, z: LinExpr) {
        self.exps
            .push([x.normalize(), y.normalize(), z.normalize()]);
    }

    /// Q ⪰ 0 for a symmetric matrix variable.
    pub fn psd(&mut self, v: VarId) {
        assert!(
            matches!(self.vars[v.0].shape, VarShape::Symmetric(_)),
            "psd on non-symmetric variable"
        );
        self.psds.push(v);
    }

    /// Encodes r ≤ coeff·log₂(1 + p) as (ln2/coeff·r, 1, 1+p) ∈ K_exp.
    ///
    /// For the usual coeff = ½ this is e^{2·ln2·r} ≤ 1 + p. The cone also
    /// enforces 1 + p ≥ 0.
    pub fn add_log_epigraph(&mut self, r: LinExpr, p: LinExpr, coeff: f64) {
        assert!(coeff > 0.0);
        self.exp_cone(
            r * (std::f64::consts::LN_2 / coeff),
            LinExpr::constant(1.0),
            p + 1.0,
        );
    }

    /// Introduces s ≥ y² through the 2×2 PSD block [[1, y], [y, s]] and
    /// returns the expression for s.
    pub fn add_square_epigraph(&mut self, y: LinExpr, name: &str) -> LinExpr {
        let block = self.add_symmetric(name, 2);
        let unit = self.mat_term(block, 0, 0);
        self.eq_zero(unit - 1.0.into());
        let off = self.mat_term(block, 0, 1);
        self.eq_zero(off - y);
        self.psd(block);
        self.mat_term(block, 1, 1)
    }

    // -- solution extraction --------------------------------------------------

    pub fn value(&self, x: &[f64], expr: &LinExpr) -> f64 {
        expr.eval(x)
    }

    pub fn scalar_value(&self, x: &[f64], v: VarId) -> f64 {
        assert_eq!(self.vars[v.0].shape, VarShape::Scalar);
        x[self.flat_index(v, 0)]
    }

    pub fn vector_value(&self, x: &[f64], v: VarId) -> DVector<f64> {
        let n = match self.vars[v.0].shape {
            VarShape::Vector(n) => n,
            _ => panic!("vector_value on non-vector"),
        };
        DVector::from_fn(n, |i, _| x[self.flat_index(v, i)])
    }

    pub fn matrix_value(&self, x: &[f64], v: VarId) -> DMatrix<f64> {
        let d = match self.vars[v.0].shape {
            VarShape::Symmetric(d) => d,
            _ => panic!("matrix_value on non-symmetric"),
        };
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..=j {
                let val = x[self.flat_index(v, j * (j + 1) / 2 + i)];
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
        }
        m
    }

    // -- independent feasibility re-check -------------------------------------

    /// Relative constraint residuals at `x`, computed without the solver.
    ///
    /// Each affine residual is divided by 1 + the absolute magnitude of the
    /// evaluated terms; the PSD residual is −λ_min normalized by 1 + ‖Q‖.
    pub fn residuals(&self, x: &[f64]) -> ResidualReport {
        let mut rep = ResidualReport::default();
        for e in &self.eqs {
            rep.max_eq = rep.max_eq.max(e.eval(x).abs() / e.magnitude(x));
        }
        for e in &self.leqs {
            rep.max_leq = rep.max_leq.max(e.eval(x).max(0.0) / e.magnitude(x));
        }
        for [ex, ey, ez] in &self.exps {
            let (u, v, w) = (ex.eval(x), ey.eval(x), ez.eval(x));
            let scale = 1.0 + u.abs() + v.abs() + w.abs();
            let viol = if v > 0.0 {
                (v * (u / v).exp() - w).max(0.0)
            } else {
                // closure of the cone: v = 0, u <= 0, w >= 0
                (-v).max(0.0) + u.max(0.0) + (-w).max(0.0)
            };
            rep.max_exp = rep.max_exp.max(viol / scale);
        }
        for &v in &self.psds {
            let m = self.matrix_value(x, v);
            let scale = 1.0 + m.norm();
            let eig = m.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            rep.max_psd = rep.max_psd.max((-min).max(0.0) / scale);
        }
        rep
    }

    /// True iff all residuals at `x` are within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.residuals(x).max_violation() <= tol
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

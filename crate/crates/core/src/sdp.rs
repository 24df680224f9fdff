//! Small modelling layer for linear matrix inequalities.
//!
//! Decision variables are scalars. Matrix-valued unknowns are built from
//! scalars, one per free entry, so entries excluded by a [`StructMask`]
//! are identically zero. Every constraint has the form `F(x) ⪰ μ I` with
//! `F` affine in `x`; the backend is Clarabel's PSD triangle cone.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::StructMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// `constant + Σ x_v · coefficient_v`, all of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<VarId, DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// `x_v · coefficient`.
    pub fn term(var: VarId, coefficient: DMatrix<f64>) -> Self {
        let mut e = Self::zeros(coefficient.nrows(), coefficient.ncols());
        e.terms.insert(var, coefficient);
        e
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn add(&self, other: &AffineMatrix) -> AffineMatrix {
        assert_eq!(self.shape(), other.shape(), "affine add shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (v, m) in &other.terms {
            out.terms
                .entry(*v)
                .and_modify(|acc| *acc += m)
                .or_insert_with(|| m.clone());
        }
        out
    }

    pub fn sub(&self, other: &AffineMatrix) -> AffineMatrix {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AffineMatrix {
        AffineMatrix {
            constant: &self.constant * s,
            terms: self.terms.iter().map(|(v, m)| (*v, m * s)).collect(),
        }
    }

    /// `left · self`.
    pub fn left_mul(&self, left: &DMatrix<f64>) -> AffineMatrix {
        AffineMatrix {
            constant: left * &self.constant,
            terms: self.terms.iter().map(|(v, m)| (*v, left * m)).collect(),
        }
    }

    /// `self · right`.
    pub fn right_mul(&self, right: &DMatrix<f64>) -> AffineMatrix {
        AffineMatrix {
            constant: &self.constant * right,
            terms: self.terms.iter().map(|(v, m)| (*v, m * right)).collect(),
        }
    }

    pub fn transpose(&self) -> AffineMatrix {
        AffineMatrix {
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(v, m)| (*v, m.transpose())).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out += m * x[v.0];
        }
        out
    }

    /// Assembles a symmetric block matrix from its lower triangle:
    /// `lower[i]` holds blocks `(i, 0..=i)`.
    pub fn symmetric_from_lower(lower: &[Vec<AffineMatrix>]) -> AffineMatrix {
        let nb = lower.len();
        for (i, row) in lower.iter().enumerate() {
            assert_eq!(row.len(), i + 1, "lower block row {i} must have {} blocks", i + 1);
        }
        let sizes: Vec<usize> = (0..nb).map(|i| lower[i][i].shape().0).collect();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let n: usize = sizes.iter().sum();
        let mut out = AffineMatrix::zeros(n, n);
        let mut place = |blk: &AffineMatrix, r0: usize, c0: usize| {
            let (br, bc) = blk.shape();
            out.constant.view_mut((r0, c0), (br, bc)).copy_from(&blk.constant);
            for (v, m) in &blk.terms {
                let coef = out.terms.entry(*v).or_insert_with(|| DMatrix::zeros(n, n));
                coef.view_mut((r0, c0), (br, bc)).copy_from(m);
            }
        };
        for i in 0..nb {
            for j in 0..=i {
                let blk = &lower[i][j];
                assert_eq!(blk.shape(), (sizes[i], sizes[j]), "block ({i},{j}) has wrong shape");
                place(blk, offsets[i], offsets[j]);
                if i != j {
                    place(&blk.transpose(), offsets[j], offsets[i]);
                }
            }
        }
        out
    }
}

/// Matrix-shaped group of scalar decision variables.
#[derive(Debug, Clone)]
pub struct MatrixVar {
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    /// `(row, col, var)`; for symmetric variables only `row <= col`.
    pub entries: Vec<(usize, usize, VarId)>,
}

impl MatrixVar {
    pub fn expr(&self) -> AffineMatrix {
        let mut e = AffineMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            let mut m = DMatrix::zeros(self.rows, self.cols);
            m[(r, c)] = 1.0;
            if self.symmetric {
                m[(c, r)] = 1.0;
            }
            e.terms.insert(v, m);
        }
        e
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = x[v.0];
            if self.symmetric {
                m[(c, r)] = x[v.0];
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
struct Lmi {
    expr: AffineMatrix,
    margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iter: u32,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdpStatus {
    Solved,
    Infeasible,
    Unbounded,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    /// Objective in the caller's sense (maximized value for `maximize`).
    pub objective: f64,
    pub iterations: u32,
    pub solve_time: Duration,
}

/// Decision variables, LMI constraints, scalar bounds and a linear objective.
#[derive(Debug, Clone, Default)]
pub struct SdpSpec {
    n_vars: usize,
    lmis: Vec<Lmi>,
    lower: Vec<(VarId, f64)>,
    upper: Vec<(VarId, f64)>,
    objective: Vec<(VarId, f64)>,
    maximize: bool,
}

impl SdpSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn scalar(&mut self) -> VarId {
        self.n_vars += 1;
        VarId(self.n_vars - 1)
    }

    /// Symmetric `n×n` unknown; entries outside `mask` are fixed at zero.
    pub fn symmetric(&mut self, n: usize, mask: Option<&StructMask>) -> MatrixVar {
        let mut entries = Vec::new();
        for c in 0..n {
            for r in 0..=c {
                if mask.map_or(true, |m| m.is_allowed(r, c)) {
                    entries.push((r, c, self.scalar()));
                }
            }
        }
        MatrixVar {
            rows: n,
            cols: n,
            symmetric: true,
            entries,
        }
    }

    /// General `rows×cols` unknown; entries outside `mask` are fixed at zero.
    pub fn matrix(&mut self, rows: usize, cols: usize, mask: Option<&StructMask>) -> MatrixVar {
        let mut entries = Vec::new();
        for c in 0..cols {
            for r in 0..rows {
                if mask.map_or(true, |m| m.is_allowed(r, c)) {
                    entries.push((r, c, self.scalar()));
                }
            }
        }
        MatrixVar {
            rows,
            cols,
            symmetric: false,
            entries,
        }
    }

    pub fn lower_bound(&mut self, v: VarId, lo: f64) {
        self.lower.push((v, lo));
    }

    pub fn upper_bound(&mut self, v: VarId, hi: f64) {
        self.upper.push((v, hi));
    }

    /// Requires `expr ⪰ margin · I`. `expr` is symmetrized.
    pub fn psd(&mut self, expr: AffineMatrix, margin: f64) {
        let (r, c) = expr.shape();
        assert_eq!(r, c, "LMI must be square");
        self.lmis.push(Lmi { expr, margin });
    }

    pub fn minimize(&mut self, objective: Vec<(VarId, f64)>) {
        self.objective = objective;
        self.maximize = false;
    }

    pub fn maximize(&mut self, objective: Vec<(VarId, f64)>) {
        self.objective = objective;
        self.maximize = true;
    }

    /// Smallest eigenvalue of each LMI's `F(x) - μ I` at `x`.
    pub fn lmi_slack(&self, x: &[f64]) -> Vec<f64> {
        self.lmis
            .iter()
            .map(|l| {
                let f = l.expr.eval(x);
                let sym = (&f + f.transpose()) * 0.5;
                sym.symmetric_eigenvalues().min() - l.margin
            })
            .collect()
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<SdpSolution> {
        let n = self.n_vars;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let n_bounds = self.lower.len() + self.upper.len();
        if n_bounds > 0 {
            // lo <= x  ->  s = x - lo >= 0 ;  x <= hi  ->  s = hi - x >= 0
            for &(v, lo) in &self.lower {
                cols[v.0].push((b.len(), -1.0));
                b.push(-lo);
            }
            for &(v, hi) in &self.upper {
                cols[v.0].push((b.len(), 1.0));
                b.push(hi);
            }
            cones.push(SupportedConeT::NonnegativeConeT(n_bounds));
        }

        let sqrt2 = std::f64::consts::SQRT_2;
        for lmi in &self.lmis {
            let dim = lmi.expr.shape().0;
            let base = b.len();
            let svec = |m: &DMatrix<f64>, i: usize, j: usize| {
                if i == j {
                    m[(i, i)]
                } else {
                    0.5 * (m[(i, j)] + m[(j, i)]) * sqrt2
                }
            };
            for j in 0..dim {
                for i in 0..=j {
                    let mut v = svec(&lmi.expr.constant, i, j);
                    if i == j {
                        v -= lmi.margin;
                    }
                    b.push(v);
                }
            }
            for (var, coef) in &lmi.expr.terms {
                let mut row = base;
                for j in 0..dim {
                    for i in 0..=j {
                        let v = svec(coef, i, j);
                        if v != 0.0 {
                            cols[var.0].push((row, -v));
                        }
                        row += 1;
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(dim));
        }

        let m = b.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut cols {
            col.sort_by_key(|e| e.0);
            for &(r, v) in col.iter() {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let mut q = vec![0.0; n];
        for &(v, c) in &self.objective {
            q[v.0] += sign * c;
        }

        let cfg = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_gap_abs(settings.tol_gap_abs)
            .tol_gap_rel(settings.tol_gap_rel)
            .tol_feas(settings.tol_feas)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, cfg)
            .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SdpStatus::Solved,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SdpStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SdpStatus::Unbounded,
            other => SdpStatus::Failed(format!("{other:?}")),
        };
        Ok(SdpSolution {
            status,
            objective: sign * sol.obj_val,
            x: sol.x.clone(),
            iterations: sol.iterations,
            solve_time: start.elapsed(),
        })
    }
}

/// Strictness margin `rel · max(1, max |F0|)` for an LMI whose constant part is `f0`.
pub fn relative_margin(f0: &DMatrix<f64>, rel: f64) -> f64 {
    rel * f0.amax().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Partition;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_lmi() {
        // min t  s.t. [[t, 1], [1, t]] ⪰ 0  ->  t = 1
        let mut sdp = SdpSpec::new();
        let t = sdp.scalar();
        let f = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
            .add(&AffineMatrix::term(t, DMatrix::identity(2, 2)));
        sdp.psd(f, 0.0);
        sdp.minimize(vec![(t, 1.0)]);
        let s = sdp.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Solved);
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(s.objective, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn bounds_and_maximize() {
        let mut sdp = SdpSpec::new();
        let a = sdp.scalar();
        sdp.lower_bound(a, -1.0);
        sdp.upper_bound(a, 3.0);
        sdp.maximize(vec![(a, 2.0)]);
        let s = sdp.solve(&SolverSettings::default()).unwrap();
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-6);
        assert_relative_eq!(s.objective, 6.0, epsilon = 1e-5);
    }

    #[test]
    fn detects_infeasible() {
        // X ⪰ I and X ⪯ 0.5 I
        let mut sdp = SdpSpec::new();
        let x = sdp.symmetric(2, None);
        sdp.psd(x.expr().sub(&AffineMatrix::identity(2)), 0.0);
        sdp.psd(AffineMatrix::identity(2).scale(0.5).sub(&x.expr()), 0.0);
        let s = sdp.solve(&SolverSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Infeasible);
    }

    #[test]
    fn masked_variables_have_structural_zeros() {
        let mut sdp = SdpSpec::new();
        let mask = StructMask::from_owners(&Partition::singletons(2), &[0, 1], &[0, 1]);
        let x = sdp.symmetric(2, Some(&mask));
        assert_eq!(x.entries.len(), 2);
        // closest point to [[2,1],[1,2]] in trace with X ⪰ I: minimise trace
        sdp.psd(x.expr().sub(&AffineMatrix::identity(2)), 0.0);
        sdp.minimize(x.entries.iter().map(|e| (e.2, 1.0)).collect());
        let s = sdp.solve(&SolverSettings::default()).unwrap();
        let v = x.value(&s.x);
        assert_eq!(v[(0, 1)], 0.0);
        assert_relative_eq!(v[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn margin_is_enforced() {
        let mut sdp = SdpSpec::new();
        let t = sdp.scalar();
        sdp.psd(AffineMatrix::term(t, DMatrix::identity(1, 1)), 0.25);
        sdp.minimize(vec![(t, 1.0)]);
        let s = sdp.solve(&SolverSettings::default()).unwrap();
        assert_relative_eq!(s.x[0], 0.25, epsilon = 1e-6);
        assert!(sdp.lmi_slack(&s.x)[0] > -1e-7);
    }

    #[test]
    fn block_assembly_is_symmetric() {
        let mut sdp = SdpSpec::new();
        let y = sdp.matrix(2, 1, None);
        let f = AffineMatrix::symmetric_from_lower(&[
            vec![AffineMatrix::identity(1)],
            vec![y.expr(), AffineMatrix::identity(2)],
        ]);
        let m = f.eval(&[0.3, -0.7]);
        assert_eq!(m, m.transpose());
        assert_eq!(m[(0, 1)], 0.3);
        assert_eq!(m[(2, 0)], -0.7);
    }
}

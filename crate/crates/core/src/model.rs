//! Networked plant description, communication topologies and the
//! coalition structure they induce.
//!
//! Agents and links are indexed from zero internally. Configuration files
//! and human-facing output use one-based agent numbers.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-agent block sizes of the stacked state, input and output vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDims {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
}

/// Discrete-time networked LTI plant `x+ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub agents: Vec<AgentDims>,
    pub dt: f64,
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        agents: Vec<AgentDims>,
        dt: f64,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidParameter("plant needs at least one agent".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("sampling period must be positive, got {dt}")));
        }
        let nx: usize = agents.iter().map(|d| d.nx).sum();
        let nu: usize = agents.iter().map(|d| d.nu).sum();
        let ny: usize = agents.iter().map(|d| d.ny).sum();
        if a.shape() != (nx, nx) {
            return Err(Error::Dimension(format!("A is {:?}, agents imply {nx}x{nx}", a.shape())));
        }
        if b.shape() != (nx, nu) {
            return Err(Error::Dimension(format!("B is {:?}, agents imply {nx}x{nu}", b.shape())));
        }
        if c.shape() != (ny, nx) {
            return Err(Error::Dimension(format!("C is {:?}, agents imply {ny}x{nx}", c.shape())));
        }
        let plant = Self { a, b, c, agents, dt };
        let row_owner = plant.output_owners();
        let col_owner = plant.state_owners();
        for r in 0..ny {
            for col in 0..nx {
                if row_owner[r] != col_owner[col] && plant.c[(r, col)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "C must be block-diagonal per agent; entry ({r},{col}) couples agents {} and {}",
                        row_owner[r] + 1,
                        col_owner[col] + 1
                    )));
                }
            }
        }
        Ok(plant)
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|d| d.nx).collect()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|d| d.nu).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|d| d.ny).collect()
    }

    pub fn state_owners(&self) -> Vec<usize> {
        owners(&self.state_dims())
    }

    pub fn input_owners(&self) -> Vec<usize> {
        owners(&self.input_dims())
    }

    pub fn output_owners(&self) -> Vec<usize> {
        owners(&self.output_dims())
    }

    /// Owners of the lifted `[x; u]` coordinates.
    pub fn lifted_owners(&self) -> Vec<usize> {
        let mut o = self.state_owners();
        o.extend(self.input_owners());
        o
    }

    /// Owners of the extended `[x; u; e]` coordinates.
    pub fn extended_owners(&self) -> Vec<usize> {
        let mut o = self.lifted_owners();
        o.extend(self.state_owners());
        o
    }
}

/// Expands per-agent block sizes into an owner index per coordinate.
pub fn owners(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .enumerate()
        .flat_map(|(agent, &n)| std::iter::repeat(agent).take(n))
        .collect()
}

/// An undirected communication link between two agents.
pub type Link = (usize, usize);

/// A set of enabled links drawn from an ordered link universe.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    /// Position in the enumeration order (the `Λ_i` label).
    pub index: usize,
    /// Bit `j` set when universe link `j` is enabled.
    pub bits: u64,
    pub links: Vec<Link>,
}

impl Topology {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn label(&self) -> String {
        format!("L{}", self.index)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Λ{} {{", self.index)?;
        for (n, (i, j)) in self.links.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}-{}", i + 1, j + 1)?;
        }
        write!(f, "}}")
    }
}

/// Every subset of `universe`, ordered by link count and then
/// lexicographically by universe position, so the empty topology is index 0
/// and the full set is last.
pub fn enumerate_topologies(universe: &[Link]) -> Result<Vec<Topology>> {
    for (n, &(i, j)) in universe.iter().enumerate() {
        if i == j {
            return Err(Error::InvalidLinks(format!("self-loop on agent {}", i + 1)));
        }
        let key = (i.min(j), i.max(j));
        if universe[..n].iter().any(|&(p, q)| (p.min(q), p.max(q)) == key) {
            return Err(Error::InvalidLinks(format!("duplicate link {}-{}", i + 1, j + 1)));
        }
    }
    let m = universe.len();
    if m > 20 {
        return Err(Error::InvalidLinks(format!("{m} links gives too many topologies to enumerate")));
    }

    let mut out = Vec::with_capacity(1 << m);
    for size in 0..=m {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let bits = combo.iter().fold(0u64, |acc, &p| acc | (1 << p));
            out.push(Topology {
                index: out.len(),
                bits,
                links: combo.iter().map(|&p| universe[p]).collect(),
            });
            // advance to the next lexicographic combination
            let Some(pos) = (0..size).rev().find(|&p| combo[p] < m - size + p) else {
                break;
            };
            combo[pos] += 1;
            for q in pos + 1..size {
                combo[q] = combo[q - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// Disjoint coalitions covering every agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub coalitions: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(n_agents: usize, mut coalitions: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n_agents];
        for c in &mut coalitions {
            if c.is_empty() {
                return Err(Error::InvalidParameter("empty coalition".into()));
            }
            c.sort_unstable();
            for &a in c.iter() {
                if a >= n_agents {
                    return Err(Error::InvalidParameter(format!("agent {} out of range", a + 1)));
                }
                if std::mem::replace(&mut seen[a], true) {
                    return Err(Error::InvalidParameter(format!("agent {} in two coalitions", a + 1)));
                }
            }
        }
        if let Some(a) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!("agent {} not covered", a + 1)));
        }
        coalitions.sort_by_key(|c| c[0]);
        Ok(Self { coalitions })
    }

    pub fn singletons(n_agents: usize) -> Self {
        Self {
            coalitions: (0..n_agents).map(|a| vec![a]).collect(),
        }
    }

    pub fn grand(n_agents: usize) -> Self {
        Self {
            coalitions: vec![(0..n_agents).collect()],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.coalitions.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    /// Coalition id of every agent.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.n_agents()];
        for (id, c) in self.coalitions.iter().enumerate() {
            for &a in c {
                m[a] = id;
            }
        }
        m
    }
}

/// Connected components of the graph `(agents, enabled links)`, listed by
/// smallest member.
pub fn coalitions_of(topology: &Topology, n_agents: usize) -> Result<Partition> {
    let mut parent: Vec<usize> = (0..n_agents).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for &(i, j) in &topology.links {
        if i >= n_agents || j >= n_agents {
            return Err(Error::InvalidLinks(format!(
                "link {}-{} outside 1..{n_agents}",
                i + 1,
                j + 1
            )));
        }
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            // keep the smaller index as root so roots are component minima
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut coalitions: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n_agents];
    for a in 0..n_agents {
        let r = find(&mut parent, a);
        if slot[r] == usize::MAX {
            slot[r] = coalitions.len();
            coalitions.push(Vec::new());
        }
        coalitions[slot[r]].push(a);
    }
    Ok(Partition { coalitions })
}

/// Block-sparsity pattern: entry `(r, c)` may be nonzero only when its row
/// and column owners share a coalition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl StructMask {
    pub fn from_owners(partition: &Partition, row_owners: &[usize], col_owners: &[usize]) -> Self {
        let member = partition.membership();
        let mut allowed = Vec::with_capacity(row_owners.len() * col_owners.len());
        for &ro in row_owners {
            for &co in col_owners {
                allowed.push(member[ro] == member[co]);
            }
        }
        Self {
            rows: row_owners.len(),
            cols: col_owners.len(),
            allowed,
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_allowed(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }

    pub fn count_allowed(&self) -> usize {
        self.allowed.iter().filter(|a| **a).count()
    }

    /// Copy of `m` with every disallowed entry set to zero.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
            if self.is_allowed(r, c) {
                m[(r, c)]
            } else {
                0.0
            }
        })
    }

    /// Largest magnitude among disallowed entries of `m`.
    pub fn max_off_mask(&self, m: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if !self.is_allowed(r, c) {
                    worst = worst.max(m[(r, c)].abs());
                }
            }
        }
        worst
    }

    /// Zeroes disallowed entries, failing if any exceeds `tol`.
    pub fn snap(&self, m: &mut DMatrix<f64>, tol: f64) -> Result<()> {
        if m.shape() != self.shape() {
            return Err(Error::Dimension(format!(
                "mask {:?} vs matrix {:?}",
                self.shape(),
                m.shape()
            )));
        }
        let worst = self.max_off_mask(m);
        if worst > tol {
            return Err(Error::Solver(format!(
                "off-mask entry of magnitude {worst:.3e} exceeds tolerance {tol:.1e}"
            )));
        }
        *m = self.apply(m);
        Ok(())
    }
}

pub fn mask_for(partition: &Partition, row_dims: &[usize], col_dims: &[usize]) -> Result<StructMask> {
    let n = partition.n_agents();
    if row_dims.len() != n || col_dims.len() != n {
        return Err(Error::Dimension(format!(
            "{} agents but {} row / {} column blocks",
            n,
            row_dims.len(),
            col_dims.len()
        )));
    }
    Ok(StructMask::from_owners(partition, &owners(row_dims), &owners(col_dims)))
}

/// In-coalition and cross-coalition parts of the plant matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSplit {
    pub a_in: DMatrix<f64>,
    pub b_in: DMatrix<f64>,
    pub a_out: DMatrix<f64>,
    pub b_out: DMatrix<f64>,
}

impl CoalitionSplit {
    /// The coupling matrix `E = [A_R, B_R]` acting on `[x; u]`.
    pub fn coupling(&self) -> DMatrix<f64> {
        let (nx, nu) = (self.a_out.nrows(), self.b_out.ncols());
        let mut e = DMatrix::zeros(nx, nx + nu);
        e.view_mut((0, 0), (nx, nx)).copy_from(&self.a_out);
        e.view_mut((0, nx), (nx, nu)).copy_from(&self.b_out);
        e
    }
}

pub fn split_dynamics(plant: &PlantModel, partition: &Partition) -> Result<CoalitionSplit> {
    if partition.n_agents() != plant.n_agents() {
        return Err(Error::Dimension(format!(
            "partition covers {} agents, plant has {}",
            partition.n_agents(),
            plant.n_agents()
        )));
    }
    let sx = plant.state_owners();
    let a_mask = StructMask::from_owners(partition, &sx, &sx);
    let b_mask = StructMask::from_owners(partition, &sx, &plant.input_owners());
    let a_in = a_mask.apply(&plant.a);
    let b_in = b_mask.apply(&plant.b);
    let a_out = &plant.a - &a_in;
    let b_out = &plant.b - &b_in;
    Ok(CoalitionSplit {
        a_in,
        b_in,
        a_out,
        b_out,
    })
}

/// Exact zero-order-hold sampling through the exponential of the augmented
/// matrix `[[A, B], [0, 0]] * dt`.
pub fn zoh_discretize(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    if a_c.ncols() != n {
        return Err(Error::Dimension(format!("A_c must be square, got {:?}", a_c.shape())));
    }
    if b_c.nrows() != n {
        return Err(Error::Dimension(format!("B_c has {} rows, expected {n}", b_c.nrows())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let m = b_c.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * dt));
    let e = aug.exp();
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// Parameters of the car-following platoon benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatoonParams {
    pub n_cars: usize,
    /// Time headway, s.
    pub h: f64,
    /// Engine time constant, s.
    pub tau: f64,
    /// Standstill distance, m. Only used to reconstruct absolute gaps.
    pub r_standstill: f64,
    /// Sampling period, s.
    pub dt: f64,
}

impl PlatoonParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_cars < 2 {
            return Err(Error::InvalidParameter(format!("platoon needs n_cars >= 2, got {}", self.n_cars)));
        }
        for (name, v) in [("h", self.h), ("tau", self.tau), ("r_standstill", self.r_standstill), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("platoon `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Continuous-time stacked platoon dynamics. Car `i` carries
/// `[gap error, relative speed, acceleration]`; the preceding car's
/// acceleration enters the relative-speed equation, and a virtual leader
/// ahead of car 1 has zero acceleration and input.
pub fn platoon_continuous(params: &PlatoonParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    params.validate()?;
    let n = params.n_cars;
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    let mut b = DMatrix::zeros(3 * n, n);
    for i in 0..n {
        let (d, v, acc) = (3 * i, 3 * i + 1, 3 * i + 2);
        a[(d, v)] = 1.0;
        a[(d, acc)] = -params.h;
        a[(v, acc)] = -1.0;
        if i > 0 {
            a[(v, 3 * (i - 1) + 2)] = 1.0;
        }
        a[(acc, acc)] = -1.0 / params.tau;
        b[(acc, i)] = 1.0 / params.tau;
    }
    Ok((a, b))
}

/// Sampled platoon plant; each car measures its gap error and relative speed.
pub fn build_platoon(params: &PlatoonParams) -> Result<PlantModel> {
    let (a_c, b_c) = platoon_continuous(params)?;
    let (a, b) = zoh_discretize(&a_c, &b_c, params.dt)?;
    let n = params.n_cars;
    let mut c = DMatrix::zeros(2 * n, 3 * n);
    for i in 0..n {
        c[(2 * i, 3 * i)] = 1.0;
        c[(2 * i + 1, 3 * i + 1)] = 1.0;
    }
    let agents = vec![AgentDims { nx: 3, nu: 1, ny: 2 }; n];
    PlantModel::new(a, b, c, agents, params.dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankDefect {
    Unstabilizable,
    Undetectable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralCheck {
    pub ok: bool,
    pub offender: Option<(Complex<f64>, RankDefect)>,
}

// Eigenvalues this close to the unit circle are treated as unstable; this
// also catches defective unit eigenvalues that the Schur form splits slightly.
const UNIT_CIRCLE_SLACK: f64 = 1e-6;
const RANK_TOL: f64 = 1e-9;

/// PBH rank test of `(A, B)` and `(A, C)` at every eigenvalue on or
/// outside the unit circle.
pub fn check_stabilizable_detectable(plant: &PlantModel) -> StructuralCheck {
    let n = plant.nx();
    let eig = plant.a.complex_eigenvalues();
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
    let a = to_c(&plant.a);
    let b = to_c(&plant.b);
    let ct = to_c(&plant.c.transpose());
    let at = a.transpose();
    let full_rank = |m: DMatrix<Complex<f64>>| {
        let sv = m.singular_values();
        let top = sv.iter().cloned().fold(1.0f64, f64::max);
        sv.len() == n && sv.iter().all(|&s| s > RANK_TOL * top)
    };
    for &lambda in eig.iter() {
        if lambda.norm() < 1.0 - UNIT_CIRCLE_SLACK {
            continue;
        }
        let shift = DMatrix::<Complex<f64>>::identity(n, n) * lambda;
        let mut ab = DMatrix::zeros(n, n + b.ncols());
        ab.view_mut((0, 0), (n, n)).copy_from(&(&a - &shift));
        ab.view_mut((0, n), (n, b.ncols())).copy_from(&b);
        if !full_rank(ab) {
            return StructuralCheck {
                ok: false,
                offender: Some((lambda, RankDefect::Unstabilizable)),
            };
        }
        let mut ac = DMatrix::zeros(n, n + ct.ncols());
        ac.view_mut((0, 0), (n, n)).copy_from(&(&at - &shift.conjugate()));
        ac.view_mut((0, n), (n, ct.ncols())).copy_from(&ct);
        if !full_rank(ac) {
            return StructuralCheck {
                ok: false,
                offender: Some((lambda, RankDefect::Undetectable)),
            };
        }
    }
    StructuralCheck { ok: true, offender: None }
}

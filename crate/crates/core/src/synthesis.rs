//! Per-topology design: structured state-feedback gains, set-membership
//! observer gains, and the Lyapunov certificate of the combined loop.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, max_eigenvalue, min_eigenvalue, spectral_radius, sqrt_psd};
use crate::model::{split_dynamics, Partition, PlantModel, StructMask};
use crate::sdp::{relative_margin, AffineMatrix, SdpSolution, SdpSpec, SdpStatus, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSettings {
    /// Relative strictness margin for strict LMIs.
    pub strict_rel: f64,
    /// Trust-region cap `W ⪯ w_max I` on the controller LMI.
    pub w_max: f64,
    /// Off-mask entries below this are snapped to zero; above it is an error.
    pub mask_tol: f64,
    /// `β` is kept inside `[beta_min, 1 - beta_min]`.
    pub beta_min: f64,
    /// At most `2^vertex_budget_log2` coupling vertices.
    pub vertex_budget_log2: u32,
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            strict_rel: 1e-6,
            w_max: 1e6,
            mask_tol: 1e-7,
            beta_min: 1e-3,
            vertex_budget_log2: 12,
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

impl SynthesisSettings {
    fn solver(&self) -> SolverSettings {
        SolverSettings {
            max_iter: self.max_iter,
            tol_gap_abs: self.tol,
            tol_gap_rel: self.tol,
            tol_feas: self.tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    Infeasible,
    Numerical,
}

/// Result of a per-topology design problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Feasible(T),
    Rejected { kind: RejectKind, reason: String },
}

impl<T> Outcome<T> {
    pub fn feasible(self) -> Option<T> {
        match self {
            Outcome::Feasible(t) => Some(t),
            Outcome::Rejected { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Outcome::Feasible(_))
    }

    fn infeasible(reason: impl Into<String>) -> Self {
        Outcome::Rejected {
            kind: RejectKind::Infeasible,
            reason: reason.into(),
        }
    }

    fn numerical(reason: impl Into<String>) -> Self {
        Outcome::Rejected {
            kind: RejectKind::Numerical,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u32,
    pub seconds: f64,
    pub objective: f64,
}

impl SolveStats {
    fn from(sol: &SdpSolution) -> Self {
        Self {
            iterations: sol.iterations,
            seconds: Duration::as_secs_f64(&sol.solve_time),
            objective: sol.objective,
        }
    }
}

/// Maps a non-success solver status to a rejection.
fn rejection<T>(what: &str, status: &SdpStatus) -> Option<Outcome<T>> {
    match status {
        SdpStatus::Solved => None,
        SdpStatus::Infeasible => Some(Outcome::infeasible(format!("{what} LMI infeasible"))),
        SdpStatus::Unbounded => Some(Outcome::numerical(format!("{what} problem unbounded"))),
        SdpStatus::Failed(s) => Some(Outcome::numerical(format!("{what} solver stopped: {s}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    #[serde(with = "crate::serde_mat::matrix")]
    pub k_x: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub k_u: DMatrix<f64>,
    /// Cost matrix of the ideal lifted loop, `W⁻¹`.
    #[serde(with = "crate::serde_mat::matrix")]
    pub p_ctrl: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub w: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub y: DMatrix<f64>,
    pub stats: SolveStats,
}

impl ControllerGains {
    /// `[K_x, K_u]`.
    pub fn lifted(&self) -> DMatrix<f64> {
        let (nu, nx) = self.k_x.shape();
        let mut k = DMatrix::zeros(nu, nx + nu);
        k.view_mut((0, 0), (nu, nx)).copy_from(&self.k_x);
        k.view_mut((0, nx), (nu, nu)).copy_from(&self.k_u);
        k
    }
}

/// `([[A, B], [0, 0]], [0; I])`: the plant with the input held as a state.
pub fn lifted_plant(plant: &PlantModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu) = (plant.nx(), plant.nu());
    let mut a = DMatrix::zeros(nx + nu, nx + nu);
    a.view_mut((0, 0), (nx, nx)).copy_from(&plant.a);
    a.view_mut((0, nx), (nx, nu)).copy_from(&plant.b);
    let mut b = DMatrix::zeros(nx + nu, nu);
    b.view_mut((nx, 0), (nu, nu)).fill_with_identity();
    (a, b)
}

fn check_weight(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::Dimension(format!("{name} is {:?}, expected {n}x{n}", m.shape())));
    }
    if !crate::linalg::is_symmetric(m, 1e-12) || min_eigenvalue(m) <= 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric positive definite")));
    }
    Ok(())
}

/// Structured dynamic state feedback `u+ = K_x x̂ + K_u u` maximizing
/// `trace(W)` under the lifted Lyapunov LMI with `W, Y` block-structured.
pub fn synth_controller(
    plant: &PlantModel,
    partition: &Partition,
    q_x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    settings: &SynthesisSettings,
) -> Result<Outcome<ControllerGains>> {
    let (nx, nu) = (plant.nx(), plant.nu());
    check_weight("Q_x", q_x, nx)?;
    check_weight("R", r, nu)?;
    let nl = nx + nu;
    let (a_l, b_l) = lifted_plant(plant);
    let q_half = sqrt_psd(&block_diag(&[q_x, r]))?;

    let lifted = plant.lifted_owners();
    let w_mask = StructMask::from_owners(partition, &lifted, &lifted);
    let y_mask = StructMask::from_owners(partition, &plant.input_owners(), &lifted);

    let mut sdp = SdpSpec::new();
    let w = sdp.symmetric(nl, Some(&w_mask));
    let y = sdp.matrix(nu, nl, Some(&y_mask));
    let we = w.expr();
    let ye = y.expr();

    let lmi = AffineMatrix::symmetric_from_lower(&[
        vec![we.clone()],
        vec![we.left_mul(&a_l).add(&ye.left_mul(&b_l)), we.clone()],
        vec![we.left_mul(&q_half), AffineMatrix::zeros(nl, nl), AffineMatrix::identity(nl)],
    ]);
    let mu = relative_margin(&lmi.constant, settings.strict_rel);
    sdp.psd(lmi, mu);
    sdp.psd(AffineMatrix::identity(nl).scale(settings.w_max).sub(&we), 0.0);
    sdp.maximize(w.entries.iter().filter(|e| e.0 == e.1).map(|e| (e.2, 1.0)).collect());

    let sol = sdp.solve(&settings.solver())?;
    if let Some(rej) = rejection("controller", &sol.status) {
        return Ok(rej);
    }
    let w_val = w.value(&sol.x);
    let y_val = y.value(&sol.x);
    if min_eigenvalue(&w_val) <= 0.0 {
        return Ok(Outcome::numerical("controller W is not positive definite"));
    }
    let Some(w_inv) = w_val.clone().try_inverse() else {
        return Ok(Outcome::numerical("controller W is singular"));
    };
    let mut k = &y_val * &w_inv;
    y_mask.snap(&mut k, settings.mask_tol)?;
    let mut p_ctrl = (&w_inv + w_inv.transpose()) * 0.5;
    w_mask.snap(&mut p_ctrl, settings.mask_tol)?;

    let rho = spectral_radius(&(&a_l + &b_l * &k));
    if rho >= 1.0 {
        return Ok(Outcome::numerical(format!(
            "recovered controller has spectral radius {rho:.6}"
        )));
    }
    Ok(Outcome::Feasible(ControllerGains {
        k_x: k.view((0, 0), (nu, nx)).into_owned(),
        k_u: k.view((0, nx), (nu, nu)).into_owned(),
        p_ctrl,
        w: w_val,
        y: y_val,
        stats: SolveStats::from(&sol),
    }))
}

/// Corners of the coupling box, varying only components whose column of
/// `coupling` is nonzero. Component `j` of vertex `v` is `+bound_j` when
/// bit `j'` of `v` is set (`j'` = rank of `j` among active columns), else
/// `-bound_j`.
pub fn coupling_vertices(
    coupling: &DMatrix<f64>,
    omega_box: &DVector<f64>,
    budget_log2: u32,
) -> Result<Vec<DVector<f64>>> {
    if omega_box.len() != coupling.ncols() {
        return Err(Error::Dimension(format!(
            "coupling box has {} bounds, coupling has {} columns",
            omega_box.len(),
            coupling.ncols()
        )));
    }
    if omega_box.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::InvalidParameter("coupling bounds must be nonnegative".into()));
    }
    let active: Vec<usize> = (0..coupling.ncols())
        .filter(|&j| coupling.column(j).iter().any(|v| *v != 0.0))
        .collect();
    if active.len() > budget_log2 as usize {
        return Err(Error::VertexBudget {
            active: active.len(),
            budget_log2,
        });
    }
    let count = 1usize << active.len();
    Ok((0..count)
        .map(|v| {
            let mut w = DVector::zeros(coupling.ncols());
            for (bit, &j) in active.iter().enumerate() {
                w[j] = if v >> bit & 1 == 1 { omega_box[j] } else { -omega_box[j] };
            }
            w
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    #[serde(with = "crate::serde_mat::matrix")]
    pub l: DMatrix<f64>,
    pub beta: f64,
    pub sigma: f64,
    /// Fixed ellipsoid shape matrix.
    #[serde(with = "crate::serde_mat::matrix")]
    pub p_obs: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub y_obs: DMatrix<f64>,
    pub n_vertices: usize,
    pub stats: SolveStats,
}

/// Ellipsoidal observer: minimizes `σ + ε β` so that
/// `x ∈ E(P, x̂, ρ)` implies `x+ ∈ E(P, x̂+, β ρ + σ)` for every coupling
/// signal in the box.
pub fn synth_observer(
    plant: &PlantModel,
    partition: &Partition,
    p_obs: &DMatrix<f64>,
    omega_box: &DVector<f64>,
    eps: f64,
    settings: &SynthesisSettings,
) -> Result<Outcome<ObserverGains>> {
    let (nx, ny) = (plant.nx(), plant.ny());
    check_weight("observer shape", p_obs, nx)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("observer weight must be positive, got {eps}")));
    }
    let split = split_dynamics(plant, partition)?;
    let e = split.coupling();
    let vertices = coupling_vertices(&e, omega_box, settings.vertex_budget_log2)?;

    let y_mask = StructMask::from_owners(partition, &plant.state_owners(), &plant.output_owners());
    let mut sdp = SdpSpec::new();
    let y = sdp.matrix(nx, ny, Some(&y_mask));
    let beta = sdp.scalar();
    let sigma = sdp.scalar();
    sdp.lower_bound(beta, settings.beta_min);
    sdp.upper_bound(beta, 1.0 - settings.beta_min);
    sdp.lower_bound(sigma, 0.0);

    let lmis = observer_lmis(p_obs, &split.a_in, &plant.c, &e, &vertices, &y.expr(), beta, sigma);
    for lmi in &lmis {
        let mu = relative_margin(&lmi.constant, settings.strict_rel);
        sdp.psd(lmi.clone(), mu);
    }
    sdp.minimize(vec![(sigma, 1.0), (beta, eps)]);

    let sol = sdp.solve(&settings.solver())?;
    if let Some(rej) = rejection("observer", &sol.status) {
        return Ok(rej);
    }
    let Some(p_inv) = p_obs.clone().try_inverse() else {
        return Ok(Outcome::numerical("observer shape matrix is singular"));
    };
    let mut l = &p_inv * y.value(&sol.x);
    y_mask.snap(&mut l, settings.mask_tol)?;
    let y_obs = p_obs * &l;
    let beta_v = sol.x[beta.0].clamp(settings.beta_min, 1.0 - settings.beta_min);
    let sigma_v = sol.x[sigma.0].max(0.0);

    // Re-check the non-strict inequality at every vertex with the snapped gain.
    let mut x = sol.x.clone();
    for &(r, c, v) in &y.entries {
        x[v.0] = y_obs[(r, c)];
    }
    x[beta.0] = beta_v;
    x[sigma.0] = sigma_v;
    let worst = lmis.iter().map(|m| min_eigenvalue(&m.eval(&x))).fold(f64::INFINITY, f64::min);
    if worst < 0.0 {
        return Ok(Outcome::numerical(format!(
            "observer LMI violated by {worst:.3e} after recovery"
        )));
    }
    Ok(Outcome::Feasible(ObserverGains {
        l,
        beta: beta_v,
        sigma: sigma_v,
        p_obs: p_obs.clone(),
        y_obs,
        n_vertices: vertices.len(),
        stats: SolveStats::from(&sol),
    }))
}

/// One LMI per coupling vertex:
/// `[[β P, *, *], [0, σ, *], [P A_in − Y C, P E ω, P]] ⪰ 0`.
#[allow(clippy::too_many_arguments)]
fn observer_lmis(
    p_obs: &DMatrix<f64>,
    a_in: &DMatrix<f64>,
    c: &DMatrix<f64>,
    e: &DMatrix<f64>,
    vertices: &[DVector<f64>],
    y: &AffineMatrix,
    beta: crate::sdp::VarId,
    sigma: crate::sdp::VarId,
) -> Vec<AffineMatrix> {
    let nx = a_in.nrows();
    let innovation = AffineMatrix::constant(p_obs * a_in).sub(&y.right_mul(c));
    vertices
        .iter()
        .map(|w| {
            let pew = p_obs * (e * w);
            AffineMatrix::symmetric_from_lower(&[
                vec![AffineMatrix::term(beta, p_obs.clone())],
                vec![AffineMatrix::zeros(1, nx), AffineMatrix::term(sigma, DMatrix::identity(1, 1))],
                vec![
                    innovation.clone(),
                    AffineMatrix::constant(DMatrix::from_column_slice(nx, 1, pew.as_slice())),
                    AffineMatrix::constant(p_obs.clone()),
                ],
            ])
        })
        .collect()
}

/// Combined dynamics of `ξ = [x; u; e]` with `e = x̂ − x`:
///
/// ```text
/// [ A         B         0          ]
/// [ K_x       K_u       K_x        ]
/// [ A_in − A  B_in − B  A_in − L C ]
/// ```
pub fn closed_loop_matrix(
    plant: &PlantModel,
    partition: &Partition,
    ctrl: &ControllerGains,
    obs: &ObserverGains,
) -> Result<DMatrix<f64>> {
    let (nx, nu, ny) = (plant.nx(), plant.nu(), plant.ny());
    if ctrl.k_x.shape() != (nu, nx) || ctrl.k_u.shape() != (nu, nu) || obs.l.shape() != (nx, ny) {
        return Err(Error::Dimension("gains do not match the plant".into()));
    }
    let s = split_dynamics(plant, partition)?;
    let n = 2 * nx + nu;
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (nx, nx)).copy_from(&plant.a);
    m.view_mut((0, nx), (nx, nu)).copy_from(&plant.b);
    m.view_mut((nx, 0), (nu, nx)).copy_from(&ctrl.k_x);
    m.view_mut((nx, nx), (nu, nu)).copy_from(&ctrl.k_u);
    m.view_mut((nx, nx + nu), (nu, nx)).copy_from(&ctrl.k_x);
    m.view_mut((nx + nu, 0), (nx, nx)).copy_from(&(-&s.a_out));
    m.view_mut((nx + nu, nx), (nx, nu)).copy_from(&(-&s.b_out));
    m.view_mut((nx + nu, nx + nu), (nx, nx)).copy_from(&(&s.a_in - &obs.l * &plant.c));
    Ok(m)
}

/// `diag(Q_x, R, Q_e)`.
pub fn extended_weight(q_x: &DMatrix<f64>, r: &DMatrix<f64>, q_e: &DMatrix<f64>) -> DMatrix<f64> {
    block_diag(&[q_x, r, q_e])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyCertificate {
    #[serde(with = "crate::serde_mat::matrix")]
    pub p: DMatrix<f64>,
    pub feasible: bool,
    /// `-λ_max(𝔸ᵀ P 𝔸 − P + Q)`.
    pub margin: f64,
    pub stats: SolveStats,
}

/// `-λ_max(𝔸ᵀ P 𝔸 − P + Q)`, computed directly.
pub fn decrease_margin(abb: &DMatrix<f64>, p: &DMatrix<f64>, q_full: &DMatrix<f64>) -> f64 {
    -max_eigenvalue(&(abb.transpose() * p * abb - p + q_full))
}

/// Finds the minimum-trace structured `P ≻ 0` with
/// `𝔸ᵀ P 𝔸 − P ⪯ −Q − μ I`.
pub fn certify_topology(
    abb: &DMatrix<f64>,
    q_full: &DMatrix<f64>,
    mask_xi: &StructMask,
    settings: &SynthesisSettings,
) -> Result<Outcome<TopologyCertificate>> {
    let n = abb.nrows();
    if abb.ncols() != n || q_full.shape() != (n, n) || mask_xi.shape() != (n, n) {
        return Err(Error::Dimension("certificate inputs disagree in size".into()));
    }
    check_weight("Q", q_full, n)?;
    let mut sdp = SdpSpec::new();
    let p = sdp.symmetric(n, Some(mask_xi));
    let pe = p.expr();
    let decrease = pe
        .sub(&pe.left_mul(&abb.transpose()).right_mul(abb))
        .sub(&AffineMatrix::constant(q_full.clone()));
    let mu = relative_margin(&decrease.constant, settings.strict_rel);
    sdp.psd(decrease, mu);
    sdp.psd(pe, mu);
    sdp.minimize(p.entries.iter().filter(|e| e.0 == e.1).map(|e| (e.2, 1.0)).collect());

    let sol = sdp.solve(&settings.solver())?;
    if let Some(rej) = rejection("certificate", &sol.status) {
        return Ok(rej);
    }
    let p_val = p.value(&sol.x);
    let margin = decrease_margin(abb, &p_val, q_full);
    let p_min = min_eigenvalue(&p_val);
    if !(margin > 0.0 && p_min > 0.0) {
        return Ok(Outcome::numerical(format!(
            "certificate check failed: decrease margin {margin:.3e}, min eig(P) {p_min:.3e}"
        )));
    }
    Ok(Outcome::Feasible(TopologyCertificate {
        p: p_val,
        feasible: true,
        margin,
        stats: SolveStats::from(&sol),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_platoon, AgentDims, PlatoonParams};
    use approx::assert_relative_eq;

    fn scalar_plant(a: f64, b: f64, c: f64) -> PlantModel {
        PlantModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            vec![AgentDims { nx: 1, nu: 1, ny: 1 }],
            1.0,
        )
        .unwrap()
    }

    fn eye(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    #[test]
    fn unstable_scalar_controller() {
        let plant = scalar_plant(1.2, 1.0, 1.0);
        let g = synth_controller(&plant, &Partition::grand(1), &eye(1), &eye(1), &Default::default())
            .unwrap()
            .feasible()
            .expect("feasible");
        let (a_l, b_l) = lifted_plant(&plant);
        assert!(spectral_radius(&(a_l + b_l * g.lifted())) < 1.0);
        assert!(min_eigenvalue(&g.p_ctrl) > 0.0);
    }

    #[test]
    fn decoupled_pair_gets_diagonal_gain() {
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.6]),
            eye(2),
            eye(2),
            vec![AgentDims { nx: 1, nu: 1, ny: 1 }; 2],
            1.0,
        )
        .unwrap();
        let g = synth_controller(&plant, &Partition::singletons(2), &eye(2), &eye(2), &Default::default())
            .unwrap()
            .feasible()
            .unwrap();
        assert!(g.k_x[(0, 1)].abs() <= 1e-8 && g.k_x[(1, 0)].abs() <= 1e-8);
        assert!(g.k_u[(0, 1)].abs() <= 1e-8 && g.k_u[(1, 0)].abs() <= 1e-8);
    }

    #[test]
    fn vertex_enumeration() {
        let v = coupling_vertices(&DMatrix::zeros(2, 3), &DVector::from_element(3, 5.0), 12).unwrap();
        assert_eq!(v, vec![DVector::zeros(3)]);

        let e = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, -2.0]);
        let v = coupling_vertices(&e, &DVector::from_vec(vec![1.0, 9.0, 2.0]), 12).unwrap();
        let got: Vec<Vec<f64>> = v.iter().map(|w| w.iter().cloned().collect()).collect();
        assert_eq!(
            got,
            vec![
                vec![-1.0, 0.0, -2.0],
                vec![1.0, 0.0, -2.0],
                vec![-1.0, 0.0, 2.0],
                vec![1.0, 0.0, 2.0],
            ]
        );
        let wide = DMatrix::from_element(1, 5, 1.0);
        assert!(matches!(
            coupling_vertices(&wide, &DVector::from_element(5, 1.0), 4),
            Err(Error::VertexBudget { active: 5, .. })
        ));
        assert!(coupling_vertices(&e, &DVector::from_vec(vec![1.0, -1.0, 2.0]), 12).is_err());
    }

    #[test]
    fn scalar_observer_reaches_deadbeat() {
        // a − l c = 0 is reachable, so σ and β can both sit at their lower limits.
        let plant = scalar_plant(0.9, 1.0, 1.0);
        let s = SynthesisSettings::default();
        let o = synth_observer(&plant, &Partition::grand(1), &eye(1), &DVector::from_element(2, 1.0), 0.01, &s)
            .unwrap()
            .feasible()
            .unwrap();
        assert_eq!(o.n_vertices, 1);
        assert!(o.sigma < 1e-4, "sigma {}", o.sigma);
        assert!(o.beta < s.beta_min + 1e-3, "beta {}", o.beta);
        assert_relative_eq!(o.l[(0, 0)], 0.9, epsilon = 0.05);
    }

    #[test]
    fn certify_contracting_diagonal() {
        let abb = eye(3) * 0.5;
        let q = eye(3) * 0.1;
        let cert = certify_topology(&abb, &q, &StructMask::full(3, 3), &Default::default())
            .unwrap()
            .feasible()
            .unwrap();
        // minimum-trace solution is (0.1 + μ)/0.75 · I
        for i in 0..3 {
            assert_relative_eq!(cert.p[(i, i)], 0.1 / 0.75, epsilon = 1e-4);
        }
        assert!(cert.margin > 0.0);
        // the hand-picked P = I also satisfies the inequality
        assert!(decrease_margin(&abb, &eye(3), &q) >= 0.75 - 0.1 - 1e-12);
    }

    #[test]
    fn certify_rejects_expanding_loop() {
        let abb = eye(2) * 1.1;
        let out = certify_topology(&abb, &eye(2), &StructMask::full(2, 2), &Default::default()).unwrap();
        assert!(matches!(out, Outcome::Rejected { kind: RejectKind::Infeasible, .. }), "{out:?}");
    }

    #[test]
    fn closed_loop_zero_gains_block_triangular() {
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.7]),
            eye(2),
            eye(2),
            vec![AgentDims { nx: 1, nu: 1, ny: 1 }; 2],
            1.0,
        )
        .unwrap();
        let ctrl = ControllerGains {
            k_x: DMatrix::zeros(2, 2),
            k_u: DMatrix::zeros(2, 2),
            p_ctrl: eye(4),
            w: eye(4),
            y: DMatrix::zeros(2, 4),
            stats: Default::default(),
        };
        let obs = ObserverGains {
            l: DMatrix::zeros(2, 2),
            beta: 0.5,
            sigma: 0.0,
            p_obs: eye(2),
            y_obs: DMatrix::zeros(2, 2),
            n_vertices: 1,
            stats: Default::default(),
        };
        let m = closed_loop_matrix(&plant, &Partition::grand(2), &ctrl, &obs).unwrap();
        assert_relative_eq!(spectral_radius(&m), 0.7, epsilon = 1e-12);
        // grand coalition: error block is A itself, coupling rows vanish
        assert_eq!(m.view((4, 0), (2, 4)).amax(), 0.0);
        assert_eq!(m.view((4, 4), (2, 2)).into_owned(), plant.a);
    }

    #[test]
    fn platoon_grand_coalition_controller() {
        let plant = build_platoon(&PlatoonParams {
            n_cars: 4,
            h: 0.7,
            tau: 0.1,
            r_standstill: 2.0,
            dt: 0.01,
        })
        .unwrap();
        let g = synth_controller(&plant, &Partition::grand(4), &eye(12), &(eye(4) * 0.1), &Default::default())
            .unwrap()
            .feasible()
            .unwrap();
        let (a_l, b_l) = lifted_plant(&plant);
        assert!(spectral_radius(&(a_l + b_l * g.lifted())) < 1.0);
    }
}

//! Topology selection at switch instants.
//!
//! Each candidate topology is scored by the worst value of its certificate
//! `ξᵀ P ξ` over the corners of the box enclosing the estimation ellipsoid,
//! plus the communication cost of its enabled links over `κ` steps.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad, stack};
use crate::model::Topology;

/// Axis-aligned box `center ± half_widths`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexBox {
    pub center: DVector<f64>,
    pub half_widths: DVector<f64>,
}

/// Tightest axis-aligned box around `{x : (x − x̂)ᵀ P (x − x̂) ≤ ρ}`.
pub fn ellipsoid_box(p_obs: &DMatrix<f64>, x_hat: &DVector<f64>, rho: f64) -> Result<VertexBox> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!("ellipsoid level must be nonnegative, got {rho}")));
    }
    let p_inv = p_obs
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("ellipsoid shape is singular".into()))?;
    Ok(VertexBox {
        center: x_hat.clone(),
        half_widths: DVector::from_fn(x_hat.len(), |i, _| (rho * p_inv[(i, i)]).max(0.0).sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub rho_bar: f64,
    pub x_bar: DVector<f64>,
    pub e_bar: DVector<f64>,
}

/// Maximizes `[x; u; x̂ − x]ᵀ P [x; u; x̂ − x]` over the `2^n_x` box corners.
/// Corner `v` puts `x_i` at `x̂_i + δ_i` when bit `i` of `v` is set, at
/// `x̂_i − δ_i` otherwise. Ties keep the first corner.
pub fn worst_case(
    p_cert: &DMatrix<f64>,
    u: &DVector<f64>,
    bx: &VertexBox,
    max_states: u32,
) -> Result<WorstCase> {
    let nx = bx.center.len();
    let nu = u.len();
    if p_cert.shape() != (2 * nx + nu, 2 * nx + nu) {
        return Err(Error::Dimension(format!(
            "certificate is {:?}, expected {}",
            p_cert.shape(),
            2 * nx + nu
        )));
    }
    if nx as u32 > max_states {
        return Err(Error::VertexBudget {
            active: nx,
            budget_log2: max_states,
        });
    }
    // ξ(s) = ξ̂ + M s with s ∈ {±1}^nx, M = [D; 0; −D]
    let xi_hat = stack(&[&bx.center, u, &DVector::zeros(nx)]);
    let mut m = DMatrix::zeros(2 * nx + nu, nx);
    for i in 0..nx {
        m[(i, i)] = bx.half_widths[i];
        m[(nx + nu + i, i)] = -bx.half_widths[i];
    }
    let base = quad(p_cert, &xi_hat);
    let g = m.transpose() * (p_cert * &xi_hat);
    let h = m.transpose() * p_cert * &m;

    let mut s = vec![0.0; nx];
    let mut best = f64::NEG_INFINITY;
    let mut best_v = 0usize;
    for v in 0..(1usize << nx) {
        for (i, si) in s.iter_mut().enumerate() {
            *si = if v >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        let mut val = base;
        for i in 0..nx {
            let mut hs = 0.0;
            for j in 0..nx {
                hs += h[(i, j)] * s[j];
            }
            val += s[i] * (2.0 * g[i] + hs);
        }
        if val > best {
            best = val;
            best_v = v;
        }
    }
    let offset = DVector::from_fn(nx, |i, _| {
        if best_v >> i & 1 == 1 {
            bx.half_widths[i]
        } else {
            -bx.half_widths[i]
        }
    });
    Ok(WorstCase {
        rho_bar: best,
        x_bar: &bx.center + &offset,
        e_bar: -offset,
    })
}

/// `ρ̄ + κ c |Λ|`.
pub fn topology_cost(rho_bar: f64, kappa_steps: f64, link_cost: f64, n_links: usize) -> f64 {
    rho_bar + kappa_steps * link_cost * n_links as f64
}

/// A certified topology competing at a switch instant.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub topology: &'a Topology,
    pub p_cert: &'a DMatrix<f64>,
    /// Ellipsoid level already advanced to this instant.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub kappa_steps: f64,
    pub link_cost: f64,
    pub max_states: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub score: f64,
    pub rho: f64,
    pub rho_bar: f64,
    pub x_bar: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub n_links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchDecision {
    pub k: usize,
    pub incumbent: usize,
    pub chosen: usize,
    /// Keyed by topology index; decertified topologies are absent.
    pub scores: BTreeMap<usize, CandidateScore>,
}

impl SwitchDecision {
    pub fn chosen_score(&self) -> Option<&CandidateScore> {
        self.scores.get(&self.chosen)
    }

    pub fn incumbent_score(&self) -> Option<&CandidateScore> {
        self.scores.get(&self.incumbent)
    }
}

/// Scores every candidate and picks the minimizer. Ties prefer the
/// incumbent, then fewer links, then the lower topology index.
pub fn select_topology(
    candidates: &[Candidate<'_>],
    incumbent: usize,
    p_obs: &DMatrix<f64>,
    x_hat: &DVector<f64>,
    u: &DVector<f64>,
    params: &SelectionParams,
    k: usize,
) -> Result<SwitchDecision> {
    if candidates.is_empty() {
        return Err(Error::config("topologies", "no certified topology to choose from"));
    }
    let mut scores = BTreeMap::new();
    for c in candidates {
        let bx = ellipsoid_box(p_obs, x_hat, c.rho)?;
        let wc = worst_case(c.p_cert, u, &bx, params.max_states)?;
        let n_links = c.topology.n_links();
        scores.insert(
            c.topology.index,
            CandidateScore {
                score: topology_cost(wc.rho_bar, params.kappa_steps, params.link_cost, n_links),
                rho: c.rho,
                rho_bar: wc.rho_bar,
                x_bar: wc.x_bar.iter().copied().collect(),
                e_bar: wc.e_bar.iter().copied().collect(),
                n_links,
            },
        );
    }
    let chosen = scores
        .iter()
        .min_by(|(ia, a), (ib, b)| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| (**ib == incumbent).cmp(&(**ia == incumbent)))
                .then_with(|| a.n_links.cmp(&b.n_links))
                .then_with(|| ia.cmp(ib))
        })
        .map(|(i, _)| *i)
        .expect("nonempty");
    Ok(SwitchDecision {
        k,
        incumbent,
        chosen,
        scores,
    })
}

//! Offline design over all topologies and the online switching loop.

use std::collections::BTreeMap;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::store::{CertifiedDesign, DesignStatus, GainStore, TopologyRecord, FORMAT_TAG};
use crate::error::{Error, Result};
use crate::linalg::quad;
use crate::model::{
    check_stabilizable_detectable, coalitions_of, enumerate_topologies, split_dynamics, CoalitionSplit,
    Partition, RankDefect, StructMask, Topology,
};
use crate::runtime::{control_update, measure, observer_step, plant_step, rho_step, sample_in_ellipsoid, SimState};
use crate::supervisor::{select_topology, Candidate, SelectionParams, SwitchDecision};
use crate::synthesis::{
    certify_topology, closed_loop_matrix, extended_weight, synth_controller, synth_observer, Outcome,
};

/// States beyond this magnitude abort the run.
pub const OVERFLOW_LIMIT: f64 = 1e12;

fn design_topology(cfg: &SimConfig, topology: &Topology) -> Result<TopologyRecord> {
    let plant = &cfg.plant;
    let coalitions = coalitions_of(topology, plant.n_agents())?;
    let s = &cfg.synthesis;
    let reject = |stage: &str, outcome: Outcome<()>| match outcome {
        Outcome::Rejected { kind, reason } => DesignStatus::Rejected {
            stage: stage.into(),
            kind,
            reason,
        },
        Outcome::Feasible(()) => unreachable!(),
    };
    let record = |status| TopologyRecord {
        topology: topology.clone(),
        coalitions: coalitions.clone(),
        status,
    };

    let controller = match synth_controller(plant, &coalitions, &cfg.q_x, &cfg.r, s)? {
        Outcome::Feasible(c) => c,
        Outcome::Rejected { kind, reason } => {
            return Ok(record(reject("controller", Outcome::Rejected { kind, reason })))
        }
    };
    let observer = match synth_observer(plant, &coalitions, &cfg.p_obs, &cfg.omega_box, cfg.epsilon, s)? {
        Outcome::Feasible(o) => o,
        Outcome::Rejected { kind, reason } => {
            return Ok(record(reject("observer", Outcome::Rejected { kind, reason })))
        }
    };
    let closed_loop = closed_loop_matrix(plant, &coalitions, &controller, &observer)?;
    let q_full = extended_weight(&cfg.q_x, &cfg.r, &cfg.q_e);
    let owners = plant.extended_owners();
    let mask = StructMask::from_owners(&coalitions, &owners, &owners);
    let certificate = match certify_topology(&closed_loop, &q_full, &mask, s)? {
        Outcome::Feasible(c) => c,
        Outcome::Rejected { kind, reason } => {
            return Ok(record(reject("certificate", Outcome::Rejected { kind, reason })))
        }
    };
    Ok(record(DesignStatus::Certified(Box::new(CertifiedDesign {
        controller,
        observer,
        closed_loop,
        certificate,
    }))))
}

/// Designs and certifies every topology. Topologies whose design fails are
/// kept in the store as rejected; failure of the all-links topology is fatal.
pub fn synthesize_all(cfg: &SimConfig) -> Result<GainStore> {
    let check = check_stabilizable_detectable(&cfg.plant);
    if let Some((lambda, defect)) = check.offender {
        let what = match defect {
            RankDefect::Unstabilizable => "not stabilizable",
            RankDefect::Undetectable => "not detectable",
        };
        return Err(Error::Assumption(format!("plant is {what}: mode λ = {lambda:.6}")));
    }
    let topologies = enumerate_topologies(&cfg.links)?;
    let records = topologies
        .par_iter()
        .map(|t| {
            let r = design_topology(cfg, t);
            match &r {
                Ok(rec) => match &rec.status {
                    DesignStatus::Certified(d) => info!(
                        "{}: certified, β = {:.4}, σ = {:.4e}, margin = {:.3e}",
                        t, d.observer.beta, d.observer.sigma, d.certificate.margin
                    ),
                    DesignStatus::Rejected { stage, reason, .. } => warn!("{t}: removed at {stage}: {reason}"),
                },
                Err(e) => warn!("{t}: {e}"),
            }
            r
        })
        .collect::<Result<Vec<_>>>()?;
    let grand = records.last().expect("at least the empty topology");
    if let DesignStatus::Rejected { stage, reason, .. } = &grand.status {
        return Err(Error::Infeasible {
            topology: grand.topology.index,
            reason: format!("{stage}: {reason}"),
        });
    }
    Ok(GainStore {
        format: FORMAT_TAG.into(),
        nx: cfg.plant.nx(),
        nu: cfg.plant.nu(),
        ny: cfg.plant.ny(),
        links: cfg.links.clone(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub topology: usize,
    #[serde(with = "crate::serde_mat::vector")]
    pub x: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub u: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub x_hat: DVector<f64>,
    /// `ξᵀ diag(Q_x, R, Q_e) ξ`.
    pub stage_cost: f64,
    /// Every agent shared its estimate and input network-wide at this step.
    pub broadcast: bool,
}

impl StepRecord {
    pub fn error(&self) -> DVector<f64> {
        &self.x_hat - &self.x
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `Σ xᵀ Q_x x + uᵀ R u`.
    pub j_x: f64,
    /// `Σ eᵀ Q_e e`.
    pub j_e: f64,
    /// Sum of stage costs.
    pub stage_sum: f64,
    /// `Σ κ c |Λ|` over switch intervals.
    pub comm_cost: f64,
    pub j_total: f64,
    /// Steps spent in each topology.
    pub dwell: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub dt: f64,
    pub n_topologies: usize,
    pub steps: Vec<StepRecord>,
    pub switches: Vec<SwitchDecision>,
    pub metrics: Metrics,
    /// Set when the run stopped early; the last record is the last valid step.
    pub aborted: Option<String>,
}

/// Weights and counts needed to evaluate costs on a list of step records.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub q_x: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_e: DMatrix<f64>,
    pub kappa_steps: f64,
    pub link_cost: f64,
    pub switch_steps: usize,
    /// `|Λ|` by topology index.
    pub n_links: Vec<usize>,
}

impl CostModel {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            q_x: cfg.q_x.clone(),
            r: cfg.r.clone(),
            q_e: cfg.q_e.clone(),
            kappa_steps: cfg.kappa_steps,
            link_cost: cfg.link_cost,
            switch_steps: cfg.switch_steps,
            n_links: (0..cfg.n_topologies()).map(|i| (i as u64).count_ones() as usize).collect(),
        }
    }

    pub fn stage(&self, x: &DVector<f64>, u: &DVector<f64>, e: &DVector<f64>) -> (f64, f64) {
        (quad(&self.q_x, x) + quad(&self.r, u), quad(&self.q_e, e))
    }
}

/// Cost summary of a trace. Communication is billed once per switch
/// interval, at the interval's first step, for the topology then active.
pub fn metrics(steps: &[StepRecord], costs: &CostModel) -> Metrics {
    let mut m = Metrics::default();
    let last = steps.last().map_or(0, |s| s.k);
    for s in steps {
        let (jx, je) = costs.stage(&s.x, &s.u, &s.error());
        m.j_x += jx;
        m.j_e += je;
        m.stage_sum += s.stage_cost;
        *m.dwell.entry(s.topology).or_default() += 1;
        if s.k % costs.switch_steps == 0 && s.k < last {
            m.comm_cost += costs.kappa_steps * costs.link_cost * costs.n_links[s.topology] as f64;
        }
    }
    m.j_total = m.stage_sum + m.comm_cost;
    m
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Hold this topology for the whole run; the supervisor is bypassed.
    pub forced_topology: Option<usize>,
    /// Overrides `x(0)`.
    pub initial_state: Option<DVector<f64>>,
}

struct Active<'a> {
    design: &'a CertifiedDesign,
    split: CoalitionSplit,
}

fn activate<'a>(cfg: &SimConfig, store: &'a GainStore, index: usize) -> Result<Active<'a>> {
    let design = store
        .design(index)
        .ok_or_else(|| Error::config("topology", format!("topology {index} is not certified")))?;
    let partition: &Partition = &store.records[index].coalitions;
    Ok(Active {
        design,
        split: split_dynamics(&cfg.plant, partition)?,
    })
}

/// Resolves the initial true state, drawing it from the initial ellipsoid
/// when the config asks for it.
pub fn initial_state(cfg: &SimConfig) -> Result<DVector<f64>> {
    if cfg.sample_in_ellipsoid {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        sample_in_ellipsoid(&mut rng, &cfg.p_obs, &cfg.x_hat0, cfg.initial_rho())
    } else {
        Ok(cfg.x0.clone())
    }
}

/// Online execution. At every multiple of the switch interval all agents
/// exchange estimates and inputs, each topology's ellipsoid level is
/// advanced over the elapsed steps and the cheapest topology is selected.
/// In between, each coalition runs its observer and controller on
/// coalition-local data.
pub fn run(cfg: &SimConfig, store: &GainStore, opts: &RunOptions) -> Result<Trace> {
    let plant = &cfg.plant;
    store.check_compatible(plant.nx(), plant.nu(), plant.ny(), &cfg.links)?;
    let certified = store.certified_indices();
    if certified.is_empty() {
        return Err(Error::config("gains", "no certified topology"));
    }
    let start = match (opts.forced_topology, cfg.initial_topology) {
        (Some(f), _) => f,
        (None, Some(t)) => t,
        (None, None) => store.grand_index(),
    };
    let mut active = activate(cfg, store, start)?;
    let costs = CostModel::from_config(cfg);
    let q_full = extended_weight(&cfg.q_x, &cfg.r, &cfg.q_e);
    let params = SelectionParams {
        kappa_steps: cfg.kappa_steps,
        link_cost: cfg.link_cost,
        max_states: cfg.max_states,
    };

    let x0 = match &opts.initial_state {
        Some(x) => x.clone(),
        None => initial_state(cfg)?,
    };
    let rho0 = cfg.initial_rho();
    let rho = certified.iter().map(|&i| (i, rho0)).collect();
    let mut st = SimState::new(x0, cfg.x_hat0.clone(), plant.nu(), rho, start);
    let mut last_update = 0usize;

    let n = cfg.horizon_steps;
    let mut steps = Vec::with_capacity(n + 1);
    let mut switches = Vec::new();
    let mut aborted = None;

    loop {
        let k = st.k;
        let switch_instant = opts.forced_topology.is_none() && k % cfg.switch_steps == 0 && k < n;
        if switch_instant {
            let elapsed = (k - last_update) as u32;
            last_update = k;
            for (&i, r) in st.rho.iter_mut() {
                let o = &store.records[i].design().expect("certified").observer;
                *r = rho_step(*r, o.beta, o.sigma, elapsed);
            }
            let candidates: Vec<Candidate> = certified
                .iter()
                .map(|&i| Candidate {
                    topology: &store.records[i].topology,
                    p_cert: &store.records[i].design().expect("certified").certificate.p,
                    rho: st.rho[&i],
                })
                .collect();
            let decision = select_topology(&candidates, st.current, &cfg.p_obs, &st.x_hat, &st.u, &params, k)?;
            if decision.chosen != st.current {
                info!("k = {k}: Λ{} -> Λ{}", st.current, decision.chosen);
                st.current = decision.chosen;
                active = activate(cfg, store, st.current)?;
            }
            switches.push(decision);
        }

        let xi = st.extended();
        steps.push(StepRecord {
            k,
            topology: st.current,
            x: st.true_state().clone(),
            u: st.u.clone(),
            x_hat: st.x_hat.clone(),
            stage_cost: quad(&q_full, &xi),
            broadcast: switch_instant,
        });
        if k == n {
            break;
        }

        let x = st.true_state().clone();
        let y = measure(plant, &x);
        let x_next = plant_step(plant, &x, &st.u);
        let x_hat_next = observer_step(&active.split, &plant.c, &active.design.observer.l, &st.x_hat, &st.u, &y);
        let u_next = control_update(&active.design.controller, &st.x_hat, &st.u);
        let finite = |v: &DVector<f64>| v.iter().all(|z| z.is_finite() && z.abs() < OVERFLOW_LIMIT);
        if !(finite(&x_next) && finite(&x_hat_next) && finite(&u_next)) {
            aborted = Some(format!("state overflow after step {k}"));
            warn!("{}", aborted.as_deref().unwrap_or_default());
            break;
        }
        st.set_true_state(x_next);
        st.x_hat = x_hat_next;
        st.u = u_next;
        st.k += 1;
    }

    let metrics = metrics(&steps, &costs);
    Ok(Trace {
        dt: cfg.dt,
        n_topologies: store.records.len(),
        steps,
        switches,
        metrics,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    const SCALAR: &str = r#"
[plant.explicit]
a = [[1.1]]
b = [[1.0]]
c = [[1.0]]
agents = [[1, 1, 1]]

[network]
links = []

[weights]
q_x = 1.0
r = 1.0
q_e = 1.0

[cost]
link_cost = 1.0
kappa = 0.1

[observer]
epsilon = 0.01
state_bound = 1.0
input_bound = 1.0

[timing]
dt = 0.1
switch_interval = 0.5
horizon = 3.0

[initial]
state = [1.0]
estimate_error = [0.5]
"#;

    #[test]
    fn single_agent_degenerate_network() {
        let cfg = parse_config(SCALAR).unwrap();
        let store = synthesize_all(&cfg).unwrap();
        assert_eq!(store.records.len(), 1);
        let d = store.design(0).unwrap();
        // no coupling: the observer needs no slack
        assert_eq!(d.observer.n_vertices, 1);
        assert!(d.certificate.margin > 0.0);

        let trace = run(&cfg, &store, &RunOptions::default()).unwrap();
        assert_eq!(trace.steps.len(), 31);
        assert_eq!(trace.switches.len(), 6);
        assert!(trace.aborted.is_none());
        assert!(trace.steps.last().unwrap().x[0].abs() < 0.5);
        assert_eq!(trace.metrics.comm_cost, 0.0);
    }

    #[test]
    fn unstabilizable_plant_rejected_before_design() {
        let cfg = parse_config(&SCALAR.replace("b = [[1.0]]", "b = [[0.0]]")).unwrap();
        assert!(matches!(synthesize_all(&cfg), Err(Error::Assumption(_))));
    }

    #[test]
    fn metrics_of_zero_trace() {
        let cfg = parse_config(SCALAR).unwrap();
        let z = DVector::zeros(1);
        let steps: Vec<StepRecord> = (0..4)
            .map(|k| StepRecord {
                k,
                topology: 0,
                x: z.clone(),
                u: z.clone(),
                x_hat: z.clone(),
                stage_cost: 0.0,
                broadcast: false,
            })
            .collect();
        let m = metrics(&steps, &CostModel::from_config(&cfg));
        assert_eq!((m.j_x, m.j_e, m.comm_cost, m.j_total), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(m.dwell[&0], 4);
    }
}

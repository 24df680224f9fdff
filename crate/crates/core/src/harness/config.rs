//! Experiment configuration.
//!
//! A config is a TOML document. Matrices are nested arrays of rows; weight
//! matrices may also be given as a scalar (a multiple of the identity) or
//! as `{ diag = [...] }`. Agent numbers in `network.links` are one-based.
//! Unknown keys are rejected.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, min_eigenvalue};
use crate::model::{build_platoon, AgentDims, Link, PlantModel, PlatoonParams};
use crate::serde_mat::from_rows;
use crate::synthesis::SynthesisSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantSpec,
    pub network: NetworkSpec,
    pub weights: WeightSpec,
    pub cost: CostSpec,
    pub observer: ObserverSpec,
    pub timing: TimingSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
    #[serde(default)]
    pub supervisor: SupervisorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Platoon(PlatoonSpec),
    Explicit(ExplicitPlantSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonSpec {
    pub n_cars: usize,
    pub h: f64,
    pub tau: f64,
    pub r_standstill: f64,
}

/// Discrete-time matrices sampled at `timing.dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPlantSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// `[n_x, n_u, n_y]` per agent.
    pub agents: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub links: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Named(String),
    Diag { diag: Vec<f64> },
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn resolve(&self, field: &str, n: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            MatrixSpec::Scalar(s) => DMatrix::identity(n, n) * *s,
            MatrixSpec::Named(name) if name == "identity" => DMatrix::identity(n, n),
            MatrixSpec::Named(name) => {
                return Err(Error::config(field, format!("unknown matrix name `{name}`; expected `identity`")))
            }
            MatrixSpec::Diag { diag } => {
                if diag.len() != n {
                    return Err(Error::config(field, format!("diagonal has {} entries, expected {n}", diag.len())));
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(diag))
            }
            MatrixSpec::Rows(rows) => from_rows(rows).map_err(|e| Error::config(field, e))?,
        };
        if m.shape() != (n, n) {
            return Err(Error::config(field, format!("matrix is {:?}, expected {n}x{n}", m.shape())));
        }
        if !is_symmetric(&m, 1e-12) || min_eigenvalue(&m) <= 0.0 {
            return Err(Error::config(field, "must be symmetric positive definite"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Uniform(f64),
    PerComponent(Vec<f64>),
}

impl BoundSpec {
    fn resolve(&self, field: &str, n: usize) -> Result<Vec<f64>> {
        let v = match self {
            BoundSpec::Uniform(b) => vec![*b; n],
            BoundSpec::PerComponent(v) if v.len() == n => v.clone(),
            BoundSpec::PerComponent(v) => {
                return Err(Error::config(field, format!("{} bounds given, expected {n}", v.len())))
            }
        };
        if v.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::config(field, "bounds must be finite and nonnegative"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub q_x: MatrixSpec,
    pub r: MatrixSpec,
    pub q_e: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Cost per enabled link and step.
    pub link_cost: f64,
    /// Horizon over which link costs are charged, seconds.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    /// Weight on `β` in the observer objective `σ + ε β`.
    pub epsilon: f64,
    /// Ellipsoid shape matrix; identity when omitted.
    #[serde(default)]
    pub shape: Option<MatrixSpec>,
    /// Symmetric bounds on the state part of the coupling signal.
    pub state_bound: BoundSpec,
    /// Symmetric bounds on the input part of the coupling signal.
    pub input_bound: BoundSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSpec {
    pub dt: f64,
    /// Seconds between topology re-evaluations.
    pub switch_interval: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub state: Vec<f64>,
    /// `x̂(0) − x(0)`. Mutually exclusive with `estimate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_error: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Vec<f64>>,
    /// Topology index in force before the first switch; all links by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<usize>,
    /// Replace `state` by a seeded uniform draw from the initial ellipsoid.
    #[serde(default)]
    pub sample_in_ellipsoid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisorSpec {
    /// Worst-case search enumerates `2^n_x` corners; larger `n_x` is refused.
    pub max_states: u32,
}

impl Default for SupervisorSpec {
    fn default() -> Self {
        Self { max_states: 20 }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Input document with defaults filled in; written back beside outputs.
    pub resolved: ConfigFile,
    pub seed: u64,
    pub plant: PlantModel,
    pub platoon: Option<PlatoonParams>,
    pub links: Vec<Link>,
    pub link_names: Vec<String>,
    pub q_x: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_e: DMatrix<f64>,
    pub link_cost: f64,
    pub kappa_seconds: f64,
    pub kappa_steps: f64,
    pub epsilon: f64,
    pub p_obs: DMatrix<f64>,
    /// Bounds on `ω = [x; u]`.
    pub omega_box: DVector<f64>,
    pub dt: f64,
    pub switch_steps: usize,
    pub horizon_steps: usize,
    pub x0: DVector<f64>,
    pub x_hat0: DVector<f64>,
    pub initial_topology: Option<usize>,
    pub sample_in_ellipsoid: bool,
    pub synthesis: SynthesisSettings,
    pub max_states: u32,
}

impl SimConfig {
    /// `e(0)ᵀ P e(0)`: the initial ellipsoid level.
    pub fn initial_rho(&self) -> f64 {
        let e = &self.x_hat0 - &self.x0;
        e.dot(&(&self.p_obs * &e))
    }

    pub fn n_topologies(&self) -> usize {
        1 << self.links.len()
    }

    pub fn echo(&self) -> String {
        toml::to_string_pretty(&self.resolved).expect("config serializes")
    }
}

/// Integer `num / den`, rejecting ratios off an integer by more than 1e-9.
fn step_ratio(field: &str, num: f64, den: f64) -> Result<usize> {
    let r = num / den;
    let n = r.round();
    if !(n >= 1.0) || (r - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::config(
            field,
            format!("{num} s is not a positive integer multiple of dt = {den} s"),
        ));
    }
    Ok(n as usize)
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let field = e
            .span()
            .map(|s| format!("byte {}..{}", s.start, s.end))
            .unwrap_or_else(|| "document".into());
        Error::config(field, e.message().to_string())
    })?;
    resolve(file)
}

pub fn resolve(mut file: ConfigFile) -> Result<SimConfig> {
    let t = &file.timing;
    let dt = positive("timing.dt", t.dt)?;
    positive("timing.switch_interval", t.switch_interval)?;
    positive("timing.horizon", t.horizon)?;
    let switch_steps = step_ratio("timing.switch_interval", t.switch_interval, dt)?;
    let horizon_steps = step_ratio("timing.horizon", t.horizon, dt)?;

    let (plant, platoon) = match &file.plant {
        PlantSpec::Platoon(p) => {
            let params = PlatoonParams {
                n_cars: p.n_cars,
                h: p.h,
                tau: p.tau,
                r_standstill: p.r_standstill,
                dt,
            };
            let plant = build_platoon(&params).map_err(|e| Error::config("plant.platoon", e.to_string()))?;
            (plant, Some(params))
        }
        PlantSpec::Explicit(p) => {
            let m = |name: &str, rows: &[Vec<f64>]| {
                from_rows(rows).map_err(|e| Error::config(format!("plant.explicit.{name}"), e))
            };
            let agents = p
                .agents
                .iter()
                .map(|&[nx, nu, ny]| AgentDims { nx, nu, ny })
                .collect();
            let plant = PlantModel::new(m("a", &p.a)?, m("b", &p.b)?, m("c", &p.c)?, agents, dt)
                .map_err(|e| Error::config("plant.explicit", e.to_string()))?;
            (plant, None)
        }
    };
    let (nx, nu, n_agents) = (plant.nx(), plant.nu(), plant.n_agents());

    let mut links = Vec::with_capacity(file.network.links.len());
    for (n, &[i, j]) in file.network.links.iter().enumerate() {
        if i == 0 || j == 0 || i > n_agents || j > n_agents {
            return Err(Error::config(
                format!("network.links[{n}]"),
                format!("agents are numbered 1..={n_agents}, got [{i}, {j}]"),
            ));
        }
        links.push((i - 1, j - 1));
    }
    crate::model::enumerate_topologies(&links).map_err(|e| Error::config("network.links", e.to_string()))?;
    let link_names = match &file.network.names {
        Some(names) if names.len() != links.len() => {
            return Err(Error::config("network.names", "one name per link required"))
        }
        Some(names) => names.clone(),
        None => links.iter().map(|(i, j)| format!("{}-{}", i + 1, j + 1)).collect(),
    };

    let q_x = file.weights.q_x.resolve("weights.q_x", nx)?;
    let r = file.weights.r.resolve("weights.r", nu)?;
    let q_e = file.weights.q_e.resolve("weights.q_e", nx)?;

    let link_cost = file.cost.link_cost;
    if !(link_cost >= 0.0 && link_cost.is_finite()) {
        return Err(Error::config("cost.link_cost", "must be nonnegative"));
    }
    let kappa_seconds = positive("cost.kappa", file.cost.kappa)?;
    let kappa_steps = kappa_seconds / dt;
    if kappa_steps < 1.0 - 1e-9 {
        return Err(Error::config("cost.kappa", "must cover at least one sampling period"));
    }

    let epsilon = positive("observer.epsilon", file.observer.epsilon)?;
    let shape = file.observer.shape.get_or_insert(MatrixSpec::Named("identity".into()));
    let p_obs = shape.resolve("observer.shape", nx)?;
    let mut omega = file.observer.state_bound.resolve("observer.state_bound", nx)?;
    omega.extend(file.observer.input_bound.resolve("observer.input_bound", nu)?);

    let init = &file.initial;
    if init.state.len() != nx {
        return Err(Error::config("initial.state", format!("{} entries, expected {nx}", init.state.len())));
    }
    let x0 = DVector::from_column_slice(&init.state);
    let x_hat0 = match (&init.estimate_error, &init.estimate) {
        (Some(_), Some(_)) => {
            return Err(Error::config("initial", "give either `estimate` or `estimate_error`, not both"))
        }
        (Some(e), None) if e.len() == nx => &x0 + DVector::from_column_slice(e),
        (None, Some(xh)) if xh.len() == nx => DVector::from_column_slice(xh),
        (Some(_), None) => return Err(Error::config("initial.estimate_error", format!("expected {nx} entries"))),
        (None, Some(_)) => return Err(Error::config("initial.estimate", format!("expected {nx} entries"))),
        (None, None) => x0.clone(),
    };
    if let Some(t) = init.topology {
        if t >= 1 << links.len() {
            return Err(Error::config("initial.topology", format!("index {t} out of range")));
        }
    }
    if x0.iter().chain(x_hat0.iter()).any(|v| !v.is_finite()) {
        return Err(Error::config("initial", "non-finite value"));
    }

    let s = &file.synthesis;
    positive("synthesis.strict_rel", s.strict_rel)?;
    positive("synthesis.w_max", s.w_max)?;
    positive("synthesis.tol", s.tol)?;
    if !(s.beta_min > 0.0 && s.beta_min < 0.5) {
        return Err(Error::config("synthesis.beta_min", "must lie in (0, 0.5)"));
    }

    Ok(SimConfig {
        seed: file.seed,
        plant,
        platoon,
        links,
        link_names,
        q_x,
        r,
        q_e,
        link_cost,
        kappa_seconds,
        kappa_steps,
        epsilon,
        p_obs,
        omega_box: DVector::from_vec(omega),
        dt,
        switch_steps,
        horizon_steps,
        x0,
        x_hat0,
        initial_topology: init.topology,
        sample_in_ellipsoid: init.sample_in_ellipsoid,
        synthesis: file.synthesis,
        max_states: file.supervisor.max_states,
        resolved: file,
    })
}

//! One closed-loop sample: plant propagation, coalition-local observer and
//! dynamic control law, plus the ellipsoid radius recursion.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::sqrt_psd;
use crate::model::{CoalitionSplit, PlantModel};
use crate::error::Result;
use crate::synthesis::ControllerGains;

pub fn plant_step(plant: &PlantModel, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    &plant.a * x + &plant.b * u
}

pub fn measure(plant: &PlantModel, x: &DVector<f64>) -> DVector<f64> {
    &plant.c * x
}

/// `u+ = K_x x̂ + K_u u`.
pub fn control_update(gains: &ControllerGains, x_hat: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    &gains.k_x * x_hat + &gains.k_u * u
}

/// `x̂+ = A_in x̂ + B_in u + L (y − C x̂)`.
pub fn observer_step(
    split: &CoalitionSplit,
    c: &DMatrix<f64>,
    l: &DMatrix<f64>,
    x_hat: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    let innovation = y - c * x_hat;
    &split.a_in * x_hat + &split.b_in * u + l * innovation
}

/// `steps` applications of `ρ ← β ρ + σ`, in closed form.
pub fn rho_step(rho: f64, beta: f64, sigma: f64, steps: u32) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0 && sigma >= 0.0 && rho >= 0.0);
    let bt = beta.powi(steps as i32);
    bt * rho + (1.0 - bt) / (1.0 - beta) * sigma
}

/// State of one simulation. The true plant state is only reachable through
/// [`SimState::true_state`], which is reserved for the harness oracle.
#[derive(Debug, Clone)]
pub struct SimState {
    x: DVector<f64>,
    pub u: DVector<f64>,
    pub x_hat: DVector<f64>,
    /// Ellipsoid level per certified topology index.
    pub rho: BTreeMap<usize, f64>,
    pub k: usize,
    pub current: usize,
}

impl SimState {
    pub fn new(x0: DVector<f64>, x_hat0: DVector<f64>, nu: usize, rho: BTreeMap<usize, f64>, current: usize) -> Self {
        Self {
            x: x0,
            u: DVector::zeros(nu),
            x_hat: x_hat0,
            rho,
            k: 0,
            current,
        }
    }

    pub fn true_state(&self) -> &DVector<f64> {
        &self.x
    }

    pub(crate) fn set_true_state(&mut self, x: DVector<f64>) {
        self.x = x;
    }

    /// `e = x̂ − x`.
    pub fn estimation_error(&self) -> DVector<f64> {
        &self.x_hat - &self.x
    }

    /// `ξ = [x; u; e]`.
    pub fn extended(&self) -> DVector<f64> {
        crate::linalg::stack(&[&self.x, &self.u, &self.estimation_error()])
    }
}

/// Uniform sample from `{z : (z − center)ᵀ P (z − center) ≤ rho}`.
pub fn sample_in_ellipsoid<R: Rng + ?Sized>(
    rng: &mut R,
    p: &DMatrix<f64>,
    center: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>> {
    let n = center.len();
    let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let radius = rng.gen::<f64>().powf(1.0 / n as f64);
    let unit = dir.normalize() * radius;
    let p_inv_half = sqrt_psd(p)?
        .try_inverse()
        .ok_or_else(|| crate::Error::InvalidParameter("ellipsoid shape is singular".into()))?;
    Ok(center + p_inv_half * unit * rho.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_platoon, split_dynamics, AgentDims, Partition, PlatoonParams};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn gains(k_x: DMatrix<f64>, k_u: DMatrix<f64>) -> ControllerGains {
        let n = k_x.ncols() + k_u.ncols();
        ControllerGains {
            p_ctrl: DMatrix::identity(n, n),
            w: DMatrix::identity(n, n),
            y: DMatrix::zeros(k_x.nrows(), n),
            k_x,
            k_u,
            stats: Default::default(),
        }
    }

    #[test]
    fn plant_identity_and_equilibrium() {
        let plant = PlantModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            vec![AgentDims { nx: 2, nu: 1, ny: 2 }],
            0.1,
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.5, -2.0]);
        assert_eq!(plant_step(&plant, &x, &DVector::from_element(1, 3.0)), x);
        assert_eq!(plant_step(&plant, &DVector::zeros(2), &DVector::zeros(1)), DVector::zeros(2));
        assert_eq!(measure(&plant, &DVector::zeros(2)), DVector::zeros(2));
    }

    #[test]
    fn platoon_single_step_matches_matrix_product() {
        let plant = build_platoon(&PlatoonParams {
            n_cars: 4,
            h: 0.7,
            tau: 0.1,
            r_standstill: 2.0,
            dt: 0.01,
        })
        .unwrap();
        let x0 = DVector::from_vec(vec![5.0, 4.5, 2.5, -3.5, -4.0, -4.5, 2.0, 2.5, 3.0, -2.5, -3.0, -2.0]);
        let next = plant_step(&plant, &x0, &DVector::zeros(4));
        // explicit row-by-row sum
        for r in 0..12 {
            let s: f64 = (0..12).map(|c| plant.a[(r, c)] * x0[c]).sum();
            assert_relative_eq!(next[r], s, epsilon = 1e-14);
        }
    }

    #[test]
    fn control_law() {
        let g = gains(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1));
        let one = DVector::from_element(1, 1.0);
        assert_eq!(control_update(&g, &one, &one)[0], 0.0);
        let g = gains(DMatrix::from_element(1, 1, -0.7), DMatrix::from_element(1, 1, 0.1));
        assert_relative_eq!(
            control_update(&g, &DVector::from_element(1, 2.0), &one)[0],
            -1.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn decentralized_control_is_local() {
        let g = gains(DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.2]), DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.4]));
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let a = control_update(&g, &DVector::from_vec(vec![1.0, 2.0]), &u);
        let b = control_update(&g, &DVector::from_vec(vec![1.0, -7.0]), &u);
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn exact_estimate_stays_exact_in_grand_coalition() {
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            vec![AgentDims { nx: 1, nu: 1, ny: 1 }; 2],
            1.0,
        )
        .unwrap();
        let split = split_dynamics(&plant, &Partition::grand(2)).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[0.4, -1.0, 2.0, 0.3]);
        let mut x = DVector::from_vec(vec![1.0, -1.0]);
        let mut xh = x.clone();
        let u = DVector::from_vec(vec![0.5, 0.25]);
        for _ in 0..20 {
            let y = measure(&plant, &x);
            xh = observer_step(&split, &plant.c, &l, &xh, &u, &y);
            x = plant_step(&plant, &x, &u);
            assert_eq!(xh, x);
        }
        // L = 0 is the open-loop model
        let open = observer_step(&split, &plant.c, &DMatrix::zeros(2, 2), &xh, &u, &DVector::zeros(2));
        assert_eq!(open, &split.a_in * &xh + &split.b_in * &u);
    }

    #[test]
    fn rho_recursion() {
        assert_eq!(rho_step(4.0, 0.5, 1.0, 1), 3.0);
        assert_eq!(rho_step(4.0, 0.5, 1.0, 2), 2.5);
        let fixed = 1.0 / (1.0 - 0.5);
        assert_relative_eq!(rho_step(fixed, 0.5, 1.0, 7), fixed, epsilon = 1e-15);
    }

    #[test]
    fn ellipsoid_samples_stay_inside() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let c = DVector::from_vec(vec![1.0, -1.0]);
        for _ in 0..2000 {
            let z = sample_in_ellipsoid(&mut rng, &p, &c, 9.0).unwrap();
            let d = &z - &c;
            assert!(d.dot(&(&p * &d)) <= 9.0 * (1.0 + 1e-12));
        }
    }
}

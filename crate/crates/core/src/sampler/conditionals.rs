//! Full conditional updates for beta, theta, z and y.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Beta, Gamma};

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, LatentState, RecordStore};

/// Draw from `Dirichlet(alpha)` by normalizing independent gamma draws.
pub fn draw_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
            // tiny shapes can underflow to zero
            g.max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

pub(crate) fn draw_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("positive parameters").sample(rng)
}

/// Dirichlet parameters of theta's full conditional for one field:
/// `mu_m + #{occupied j : y_j = m} + #{r : z_r = 1, x_r = m}`.
pub fn theta_parameters(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    field: usize,
) -> Vec<f64> {
    let mut alpha = hyper.mu(field).to_vec();
    for label in state.occupied_labels() {
        alpha[state.y(label)[field] as usize] += 1.0;
    }
    for r in 0..data.num_records() {
        if state.z(r, field) {
            alpha[data.value(r, field) as usize] += 1.0;
        }
    }
    alpha
}

/// Beta parameters of beta's full conditional for one field, or `None` for a
/// blocked field.
pub fn beta_parameters(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    field: usize,
) -> Option<(f64, f64)> {
    if hyper.is_blocked(field) {
        return None;
    }
    let n = data.num_records();
    let distorted = (0..n).filter(|&r| state.z(r, field)).count();
    Some((
        hyper.a(field) + distorted as f64,
        hyper.b(field) + (n - distorted) as f64,
    ))
}

pub fn resample_theta<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    rng: &mut R,
) {
    for l in 0..data.num_fields() {
        let alpha = theta_parameters(state, data, hyper, l);
        state.theta_mut()[l] = draw_dirichlet(&alpha, rng);
    }
}

pub fn resample_beta<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    rng: &mut R,
) {
    for l in 0..data.num_fields() {
        state.beta_mut()[l] = match beta_parameters(state, data, hyper, l) {
            Some((a, b)) => draw_beta(a, b, rng),
            None => 0.0,
        };
    }
}

/// `P(z = 1 | y = x)`: `beta * theta_x / (beta * theta_x + 1 - beta)`.
#[inline]
pub fn distortion_probability(beta: f64, theta_x: f64) -> f64 {
    let distorted = beta * theta_x;
    let denom = distorted + (1.0 - beta);
    if denom > 0.0 {
        distorted / denom
    } else {
        1.0
    }
}

/// Per-field lookup tables derived from theta and beta, valid until either
/// is resampled.
#[derive(Debug, Clone)]
pub(crate) struct ConditionalTables {
    pub(crate) z_prob: Vec<Vec<f64>>,
    pub(crate) y_dist: Vec<WeightedIndex<f64>>,
}

impl ConditionalTables {
    pub(crate) fn new(state: &LatentState, hyper: &Hyperparameters) -> Self {
        let z_prob = (0..state.num_fields())
            .map(|l| {
                if hyper.is_blocked(l) {
                    Vec::new()
                } else {
                    let beta = state.beta()[l];
                    state.theta()[l]
                        .iter()
                        .map(|&t| distortion_probability(beta, t))
                        .collect()
                }
            })
            .collect();
        let y_dist = state
            .theta()
            .iter()
            .map(|t| WeightedIndex::new(t).expect("theta is a probability vector"))
            .collect();
        Self { z_prob, y_dist }
    }
}

pub fn resample_z<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    rng: &mut R,
) {
    let tables = ConditionalTables::new(state, hyper);
    resample_z_with(state, data, hyper, &tables, rng);
}

pub(crate) fn resample_z_with<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    tables: &ConditionalTables,
    rng: &mut R,
) {
    let p = data.num_fields();
    for r in 0..data.num_records() {
        let label = state.label(r);
        for l in 0..p {
            if hyper.is_blocked(l) {
                continue;
            }
            let x = data.value(r, l);
            let z = if state.y(label)[l] != x {
                true
            } else {
                rng.random::<f64>() < tables.z_prob[l][x as usize]
            };
            state.set_z(r, l, z);
        }
    }
}

pub fn resample_y<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<()> {
    let tables = ConditionalTables::new(state, hyper);
    resample_y_with(state, data, &tables, rng)
}

/// Each individual's field is pinned to the value of any undistorted linked
/// record, and otherwise drawn from theta.
pub(crate) fn resample_y_with<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    tables: &ConditionalTables,
    rng: &mut R,
) -> Result<()> {
    let p = data.num_fields();
    for label in 0..data.num_records() as u32 {
        if state.cluster(label).is_empty() {
            continue;
        }
        for l in 0..p {
            let mut pinned: Option<u32> = None;
            for &r in state.cluster(label) {
                if !state.z(r as usize, l) {
                    let x = data.value(r as usize, l);
                    match pinned {
                        None => pinned = Some(x),
                        Some(v) if v != x => {
                            return Err(Error::Inconsistent(format!(
                                "individual {label} field {l}: undistorted records disagree ({v} vs {x})"
                            )))
                        }
                        Some(_) => {}
                    }
                }
            }
            let value = match pinned {
                Some(v) => v,
                None => tables.y_dist[l].sample(rng) as u32,
            };
            state.set_y(label, l, value);
        }
    }
    Ok(())
}

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::SystemModel;

/// Open-loop disturbance policy `k -> d(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// The same value at every step.
    Constant(Vec<f64>),
    /// An explicit sequence, cycled when the horizon is longer.
    Sequence(Vec<Vec<f64>>),
    /// Independent uniform draws from `grid` at every step. Random access: the draw at
    /// step `k` depends only on `seed` and `k`.
    Random { seed: u64, grid: Arc<[Vec<f64>]> },
}

impl Policy {
    pub fn random(seed: u64, grid: Arc<[Vec<f64>]>) -> Policy {
        assert!(!grid.is_empty(), "random policy over an empty grid");
        Policy::Random { seed, grid }
    }

    pub fn at(&self, k: usize) -> &[f64] {
        match self {
            Policy::Constant(d) => d,
            Policy::Sequence(s) => &s[k % s.len()],
            Policy::Random { seed, grid } => &grid[random_index(*seed, k, grid.len())],
        }
    }
}

/// Derives an independent seed for a named stage from the run seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(stage.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn random_index(seed: u64, k: usize, len: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(2 * k as u128);
    ((rng.next_u64() as u128 * len as u128) >> 64) as usize
}

/// States `x(0..=K)` and the disturbances applied between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub policy: Policy,
    /// First index with `x ∉ X`.
    pub first_exit: Option<usize>,
    /// First index with `x ∈ X∞`.
    pub first_hit: Option<usize>,
    /// The state became non-finite; the trajectory ends at the last finite state.
    pub overflow: bool,
}

/// Runs `K` steps of `policy` from `x0`, recording the first exit from `X` and the first
/// entry into `X∞`.
pub fn simulate(model: &SystemModel, x0: &[f64], policy: &Policy, horizon: usize) -> Trajectory {
    let mut states = vec![x0.to_vec()];
    let mut disturbances = Vec::with_capacity(horizon);
    let (mut first_exit, mut first_hit, mut overflow) = (None, None, false);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; model.n];
    for k in 0..=horizon {
        if first_exit.is_none() && !model.in_constraint(&x) {
            first_exit = Some(k);
        }
        if first_hit.is_none() && model.in_seed(&x) {
            first_hit = Some(k);
        }
        if k == horizon {
            break;
        }
        let d = policy.at(k);
        model.step_into(&x, d, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            overflow = true;
            break;
        }
        disturbances.push(d.to_vec());
        std::mem::swap(&mut x, &mut next);
        states.push(x.clone());
    }
    Trajectory {
        states,
        disturbances,
        policy: policy.clone(),
        first_exit,
        first_hit,
        overflow,
    }
}

/// Summary of a trajectory run without storing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub hit: Option<usize>,
    pub exit: Option<usize>,
    pub overflow: bool,
}

impl Outcome {
    /// Entered `X∞` without leaving `X` beforehand.
    pub fn reached(&self) -> bool {
        self.hit.is_some_and(|h| self.exit.is_none_or(|e| h < e))
    }
}

/// Runs from `x0` with the feedback adversary `choose(k, x)` until the state leaves `X`,
/// overflows, reaches step `horizon`, or (when `stop_on_hit`) enters `X∞`.
pub fn run_until<'a>(
    model: &SystemModel,
    x0: &[f64],
    horizon: usize,
    stop_on_hit: bool,
    mut choose: impl FnMut(usize, &[f64]) -> &'a [f64],
) -> Outcome {
    let mut out = Outcome {
        hit: None,
        exit: None,
        overflow: false,
    };
    let mut x = x0.to_vec();
    let mut next = vec![0.0; model.n];
    for k in 0..=horizon {
        if !model.in_constraint(&x) {
            out.exit = Some(k);
            return out;
        }
        if out.hit.is_none() && model.in_seed(&x) {
            out.hit = Some(k);
            if stop_on_hit {
                return out;
            }
        }
        if k == horizon {
            break;
        }
        model.step_into(&x, choose(k, &x), &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            out.overflow = true;
            return out;
        }
        std::mem::swap(&mut x, &mut next);
    }
    out
}

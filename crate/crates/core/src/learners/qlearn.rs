use crate::error::{Error, Result};
use crate::game::{Action, ObservationId};
use crate::policy::{softmax2, QTable};

/// One transition `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub obs: ObservationId,
    pub action: Action,
    pub reward: f64,
    pub next_obs: ObservationId,
    pub done: bool,
}

/// `q(s,a) ← (1−α)·q(s,a) + α·(r + γ·max q(s',·))`, with the max term dropped on terminal steps.
pub fn q_update(q: &mut QTable, e: &Experience, alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidHyper {
            name: "alpha",
            reason: format!("{alpha} not in (0, 1]"),
        });
    }
    let bootstrap = if e.done { 0.0 } else { q.max(e.next_obs) };
    let cell = &mut q.values[e.obs.0][e.action.index()];
    *cell = (1.0 - alpha) * *cell + alpha * (e.reward + gamma * bootstrap);
    Ok(())
}

/// Parameter-noise scale adapted so the perturbed greedy policy stays about as far
/// from the clean one as an ε-greedy policy would be.
///
/// ε anneals linearly from 1.0 to `FINAL_EPSILON` over `EPSILON_STEPS` leader
/// steps. After each episode the mean KL between softmax(q) and softmax(q̃) over
/// the visited observations is compared with `−ln(1 − ε + ε/2)`; the stddev is
/// multiplied by 1.01 if below and divided by 1.01 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveNoise {
    pub stddev: f64,
    steps: usize,
}

impl AdaptiveNoise {
    pub const FINAL_EPSILON: f64 = 0.05;
    pub const EPSILON_STEPS: usize = 10_000;
    const FACTOR: f64 = 1.01;

    pub fn new(stddev: f64) -> Self {
        Self { stddev, steps: 0 }
    }

    pub fn epsilon(&self) -> f64 {
        let f = (self.steps as f64 / Self::EPSILON_STEPS as f64).min(1.0);
        1.0 + f * (Self::FINAL_EPSILON - 1.0)
    }

    pub fn update(&mut self, clean: &QTable, noisy: &QTable, visited: &[ObservationId]) {
        if visited.is_empty() {
            return;
        }
        let kl: f64 = visited
            .iter()
            .map(|o| {
                let p = softmax2(clean.values[o.0]);
                let q = softmax2(noisy.values[o.0]);
                (0..2).map(|a| p[a] * (p[a] / (q[a] + 1e-12)).ln()).sum::<f64>()
            })
            .sum::<f64>()
            / visited.len() as f64;
        let eps = self.epsilon();
        let delta = -(1.0 - eps + eps / 2.0).ln();
        if kl <= delta {
            self.stddev *= Self::FACTOR;
        } else {
            self.stddev /= Self::FACTOR;
        }
        self.steps += visited.len();
    }
}

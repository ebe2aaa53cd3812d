use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::game::{Action, ObservationId};
use crate::policy::{linear_logits, softmax2, Features, SoftmaxTabularPolicy};

use super::{Adam, LearnerHyper, Optimizer};

/// One on-policy step prepared for a policy-gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct PgSample {
    pub features: Features,
    pub action: Action,
    /// Discounted reward-to-go from this step.
    pub ret: f64,
    /// Row of the value baseline table.
    pub key: usize,
}

pub fn rewards_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

fn add_score(grad: &mut [[f64; 2]], params: &[[f64; 2]], features: &[(usize, f64)], action: Action, weight: f64) {
    let pi = softmax2(linear_logits(params, features));
    for &(i, v) in features {
        for b in 0..2 {
            let indicator = if b == action.index() { 1.0 } else { 0.0 };
            grad[i][b] += weight * v * (indicator - pi[b]);
        }
    }
}

/// `Σ w_i ∇ ln π(a_i | x_i)` for a softmax over linear logits.
pub fn score_gradient(params: &[[f64; 2]], samples: &[PgSample], weights: &[f64]) -> Vec<[f64; 2]> {
    let mut grad = vec![[0.0; 2]; params.len()];
    for (s, &w) in samples.iter().zip(weights) {
        add_score(&mut grad, params, &s.features, s.action, w);
    }
    grad
}

/// `Σ G_t ∇ ln π(a_t | x_t)`.
pub fn reinforce_gradient(params: &[[f64; 2]], samples: &[PgSample]) -> Vec<[f64; 2]> {
    let w: Vec<f64> = samples.iter().map(|s| s.ret).collect();
    score_gradient(params, samples, &w)
}

/// One plain gradient step `θ ← θ + α Σ_t G_t ∇ ln π(a_t|o_t)` over a single episode.
pub fn reinforce_update(
    policy: &SoftmaxTabularPolicy,
    steps: &[(ObservationId, Action, f64)],
    alpha: f64,
    gamma: f64,
) -> SoftmaxTabularPolicy {
    let rewards: Vec<f64> = steps.iter().map(|s| s.2).collect();
    let samples: Vec<PgSample> = steps
        .iter()
        .zip(rewards_to_go(&rewards, gamma))
        .map(|(&(o, a, _), ret)| PgSample {
            features: SoftmaxTabularPolicy::features(o),
            action: a,
            ret,
            key: o.0,
        })
        .collect();
    let grad = reinforce_gradient(&policy.logits, &samples);
    let mut out = policy.clone();
    for (p, g) in out.logits.iter_mut().zip(&grad) {
        p[0] += alpha * g[0];
        p[1] += alpha * g[1];
    }
    out
}

/// Running mean return per row, used as a variance-reducing baseline.
#[derive(Debug, Clone)]
pub struct Baseline {
    values: Vec<f64>,
}

impl Baseline {
    pub const RATE: f64 = 0.5;

    pub fn new(rows: usize) -> Self {
        Self {
            values: vec![0.0; rows],
        }
    }

    pub fn get(&self, key: usize) -> f64 {
        self.values[key]
    }

    /// Moves each row toward the batch mean return of that row.
    pub fn update(&mut self, samples: &[PgSample]) {
        let mut acc: HashMap<usize, (f64, usize)> = HashMap::new();
        for s in samples {
            let e = acc.entry(s.key).or_default();
            e.0 += s.ret;
            e.1 += 1;
        }
        for (k, (sum, count)) in acc {
            self.values[k] += Self::RATE * (sum / count as f64 - self.values[k]);
        }
    }
}

/// Mean-per-step policy-gradient step, optionally against a baseline.
pub fn policy_gradient_step(
    params: &mut [[f64; 2]],
    samples: &[PgSample],
    baseline: Option<&mut Baseline>,
    optimizer: &mut PolicyOptimizer,
) {
    if samples.is_empty() {
        return;
    }
    let n = samples.len() as f64;
    let weights: Vec<f64> = match &baseline {
        Some(b) => samples.iter().map(|s| (s.ret - b.get(s.key)) / n).collect(),
        None => samples.iter().map(|s| s.ret / n).collect(),
    };
    let grad = score_gradient(params, samples, &weights);
    optimizer.ascend(params, &grad);
    if let Some(b) = baseline {
        b.update(samples);
    }
}

#[derive(Debug, Clone)]
pub enum PolicyOptimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl PolicyOptimizer {
    pub fn new(hyper: &LearnerHyper, rows: usize) -> Self {
        match hyper.optimizer {
            Optimizer::Sgd => PolicyOptimizer::Sgd { lr: hyper.lr },
            Optimizer::Adam => PolicyOptimizer::Adam(Adam::new(hyper.lr, rows)),
        }
    }

    pub fn ascend(&mut self, params: &mut [[f64; 2]], grad: &[[f64; 2]]) {
        match self {
            PolicyOptimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    p[0] += *lr * g[0];
                    p[1] += *lr * g[1];
                }
            }
            PolicyOptimizer::Adam(adam) => adam.ascend(params, grad),
        }
    }
}

/// Per-epoch step of the value table toward the batch mean reward-to-go.
const VALUE_STEP: f64 = 0.1;

/// Clipped-surrogate policy optimisation on one batch.
///
/// Advantages are reward-to-go minus the per-key value table, computed once
/// before the epochs. Each epoch takes one full-batch step on the surrogate
/// and moves the value table toward the batch mean return.
pub fn clipped_surrogate_update(
    params: &mut [[f64; 2]],
    values: &mut [f64],
    samples: &[PgSample],
    hyper: &LearnerHyper,
    optimizer: &mut PolicyOptimizer,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let old: Vec<f64> = samples
        .iter()
        .map(|s| softmax2(linear_logits(params, &s.features))[s.action.index()])
        .collect();
    let adv: Vec<f64> = samples.iter().map(|s| s.ret - values[s.key]).collect();
    let mut mean_ret: HashMap<usize, (f64, usize)> = HashMap::new();
    for s in samples {
        let e = mean_ret.entry(s.key).or_default();
        e.0 += s.ret;
        e.1 += 1;
    }
    let n = samples.len() as f64;
    for _ in 0..hyper.epochs {
        let mut weights = Vec::with_capacity(samples.len());
        for ((s, &a), &p_old) in samples.iter().zip(&adv).zip(&old) {
            let p = softmax2(linear_logits(params, &s.features))[s.action.index()];
            let ratio = p / p_old;
            let active = (a >= 0.0 && ratio < 1.0 + hyper.clip) || (a < 0.0 && ratio > 1.0 - hyper.clip);
            weights.push(if active { a * ratio / n } else { 0.0 });
        }
        let grad = score_gradient(params, samples, &weights);
        optimizer.ascend(params, &grad);
        for (&k, &(sum, count)) in &mean_ret {
            values[k] += VALUE_STEP * (sum / count as f64 - values[k]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::canonical_game;
    use Action::{Cooperate as C, Defect as D};

    const O: ObservationId = ObservationId(0);

    #[test]
    fn reward_to_go_discounts() {
        let g = rewards_to_go(&[1.0, 0.0, 2.0], 0.5);
        assert_eq!(g, vec![1.5, 1.0, 2.0]);
    }

    #[test]
    fn positive_return_reinforces_action() {
        let p = SoftmaxTabularPolicy::uniform(1);
        let q = reinforce_update(&p, &[(O, D, 1.0)], 0.1, 0.99);
        assert!(q.logits[0][1] > 0.0 && q.logits[0][0] < 0.0);
    }

    #[test]
    fn zero_return_is_a_no_op() {
        let p = SoftmaxTabularPolicy {
            logits: vec![[0.3, -0.1]],
        };
        assert_eq!(reinforce_update(&p, &[(O, D, 0.0), (O, C, 0.0)], 0.1, 0.99), p);
    }

    /// Expected one-shot return of a softmax leader against a follower who always plays A.
    fn bos_return(logits: [f64; 2]) -> f64 {
        let bos = canonical_game("battle of the sexes").unwrap();
        let pi = softmax2(logits);
        pi[0] * bos.leader_payoff.get(C, C) + pi[1] * bos.leader_payoff.get(D, C)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let bos = canonical_game("battle of the sexes").unwrap();
        let logits = [0.4, -0.7];
        let pi = softmax2(logits);
        // Exact expectation of the score-function estimator over both actions.
        let mut grad = [0.0; 2];
        for a in Action::ALL {
            let s = PgSample {
                features: vec![(0, 1.0)],
                action: a,
                ret: bos.leader_payoff.get(a, C),
                key: 0,
            };
            let g = score_gradient(&[logits], std::slice::from_ref(&s), &[s.ret * pi[a.index()]]);
            grad[0] += g[0][0];
            grad[1] += g[0][1];
        }
        let h = 1e-5;
        for k in 0..2 {
            let mut up = logits;
            let mut dn = logits;
            up[k] += h;
            dn[k] -= h;
            let fd = (bos_return(up) - bos_return(dn)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-4, "{fd} vs {}", grad[k]);
        }
    }

    fn sample(action: Action, ret: f64) -> PgSample {
        PgSample {
            features: vec![(0, 1.0)],
            action,
            ret,
            key: 0,
        }
    }

    #[test]
    fn surrogate_zero_advantage_is_a_no_op() {
        let hyper = LearnerHyper::leader_ppo();
        let mut params = vec![[0.2, -0.2]];
        let mut values = vec![1.0];
        let mut opt = PolicyOptimizer::new(&hyper, 1);
        let batch = vec![sample(C, 1.0), sample(D, 1.0)];
        clipped_surrogate_update(&mut params, &mut values, &batch, &hyper, &mut opt).unwrap();
        assert_eq!(params, vec![[0.2, -0.2]]);
    }

    #[test]
    fn surrogate_positive_advantage_increases_probability() {
        let hyper = LearnerHyper::leader_ppo();
        let mut params = vec![[0.0, 0.0]];
        let mut values = vec![0.0];
        let mut opt = PolicyOptimizer::new(&hyper, 1);
        let batch = vec![sample(D, 1.0); 8];
        clipped_surrogate_update(&mut params, &mut values, &batch, &hyper, &mut opt).unwrap();
        assert!(softmax2(params[0])[1] > 0.5);
        assert!(values[0] > 0.0);
    }

    #[test]
    fn surrogate_rejects_empty_batch() {
        let hyper = LearnerHyper::leader_ppo();
        let mut opt = PolicyOptimizer::new(&hyper, 1);
        assert_eq!(
            clipped_surrogate_update(&mut [[0.0; 2]], &mut [0.0], &[], &hyper, &mut opt),
            Err(Error::Empty("batch"))
        );
    }

    #[test]
    fn ratio_clipping_bounds_the_step() {
        let mut hyper = LearnerHyper::leader_ppo();
        hyper.optimizer = Optimizer::Sgd;
        hyper.lr = 50.0;
        hyper.epochs = 20;
        let mut params = vec![[0.0, 0.0]];
        let mut values = vec![0.0];
        let mut opt = PolicyOptimizer::new(&hyper, 1);
        clipped_surrogate_update(&mut params, &mut values, &[sample(D, 1.0)], &hyper, &mut opt).unwrap();
        // The first step overshoots; afterwards the clipped ratio stops further growth.
        let p1 = softmax2(params[0])[1];
        clipped_surrogate_update(&mut params, &mut values, &[sample(D, 1.0)], &hyper, &mut opt).unwrap();
        assert!(p1 > 0.5);
        assert!(softmax2(params[0])[1] >= p1);
    }
}

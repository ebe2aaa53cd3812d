//! Exhaustive Stackelberg solver, exact policy evaluation and equilibrium checks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{initial_state, observe, step, Action, MatrixGameSpec, Role};
use crate::learners::{policy_gradient_step, rewards_to_go, Baseline, LearnerHyper, PgSample, PolicyOptimizer};
use crate::oracle::exact_best_response;
use crate::policy::{Policy, SoftmaxTabularPolicy, TabularDeterministicPolicy};

/// Largest observation count [`solve_stackelberg`] will enumerate.
pub const ENUMERATION_BOUND: usize = 16;

/// Follower improvement (table scale) below which an equilibrium is accepted.
pub const VERIFY_TOLERANCE: f64 = 0.5;

/// Values closer than this are treated as ties.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergSolution {
    pub leader: TabularDeterministicPolicy,
    pub follower: TabularDeterministicPolicy,
    pub leader_value: f64,
    pub follower_value: f64,
}

fn check_shape(game: &MatrixGameSpec, p: &dyn Policy) -> Result<()> {
    let n = game.observation_count();
    if p.observation_count() != n {
        return Err(Error::PolicyShape {
            expected: n,
            got: p.observation_count(),
        });
    }
    Ok(())
}

/// Deterministic `h`-step rollout; undiscounted (leader, follower) sums.
pub fn evaluate_policy_pair(
    game: &MatrixGameSpec,
    leader: &TabularDeterministicPolicy,
    follower: &TabularDeterministicPolicy,
) -> Result<(f64, f64)> {
    check_shape(game, leader)?;
    check_shape(game, follower)?;
    let mut state = initial_state(game);
    let (mut vl, mut vf) = (0.0, 0.0);
    for _ in 0..game.horizon {
        let a_l = leader.action(observe(game, &state, Role::Leader));
        let a_f = follower.action(observe(game, &state, Role::Follower));
        let (next, rl, rf) = step(game, state, a_l, a_f)?;
        vl += rl;
        vf += rf;
        state = next;
    }
    Ok((vl, vf))
}

/// Exact expected undiscounted values for stochastic policies, by forward
/// propagation of the distribution over the previous joint action.
pub fn expected_values(game: &MatrixGameSpec, leader: &dyn Policy, follower: &dyn Policy) -> Result<(f64, f64)> {
    check_shape(game, leader)?;
    check_shape(game, follower)?;
    // Index 0: initial; 1 + 2l + f: previous joint action.
    let mut dist = [0.0f64; 5];
    dist[0] = 1.0;
    let (mut vl, mut vf) = (0.0, 0.0);
    for t in 0..game.horizon {
        let mut next = [0.0f64; 5];
        for (k, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let state = crate::game::GameState {
                previous: (k > 0).then(|| {
                    let j = k - 1;
                    (Action::from_bit(j >> 1 == 1), Action::from_bit(j & 1 == 1))
                }),
                step_count: t,
            };
            let pl = leader.defect_probability(observe(game, &state, Role::Leader));
            let pf = follower.defect_probability(observe(game, &state, Role::Follower));
            for l in Action::ALL {
                let wl = if l.is_defect() { pl } else { 1.0 - pl };
                for f in Action::ALL {
                    let wf = if f.is_defect() { pf } else { 1.0 - pf };
                    let w = p * wl * wf;
                    if w == 0.0 {
                        continue;
                    }
                    vl += w * game.leader_payoff.get(l, f);
                    vf += w * game.follower_payoff.get(l, f);
                    next[1 + 2 * l.index() + f.index()] += w;
                }
            }
        }
        dist = next;
    }
    Ok((vl, vf))
}

pub fn solve_stackelberg(game: &MatrixGameSpec) -> Result<StackelbergSolution> {
    solve_stackelberg_with_bound(game, ENUMERATION_BOUND)
}

/// Enumerates every deterministic leader, scores it against its strong-Stackelberg
/// best response and keeps the best (lowest index on ties).
pub fn solve_stackelberg_with_bound(game: &MatrixGameSpec, bound: usize) -> Result<StackelbergSolution> {
    let n = game.observation_count();
    if n > bound {
        return Err(Error::EnumerationBound { obs: n, limit: bound });
    }
    let mut best: Option<StackelbergSolution> = None;
    for leader in TabularDeterministicPolicy::all(n) {
        let br = exact_best_response(game, &leader)?;
        if best.as_ref().is_none_or(|b| br.leader_value > b.leader_value + TIE_EPS) {
            best = Some(StackelbergSolution {
                leader,
                follower: br.follower,
                leader_value: br.leader_value,
                follower_value: br.follower_value,
            });
        }
    }
    Ok(best.expect("at least one leader policy"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Best follower value found by post-training minus the entry follower's value.
    pub follower_improvement: f64,
    /// Gap between the exact best response to the leader's mode policy and the entry follower.
    pub exact_gap: f64,
    pub leader_value_before: f64,
    pub leader_value_after: f64,
    pub passed: bool,
}

/// Samples one episode of a frozen leader against a softmax follower.
fn sample_follower_episode<R: Rng + ?Sized>(
    game: &MatrixGameSpec,
    leader: &dyn Policy,
    follower: &SoftmaxTabularPolicy,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<PgSample>> {
    let mut state = initial_state(game);
    let mut steps = Vec::with_capacity(game.horizon);
    let mut rewards = Vec::with_capacity(game.horizon);
    for _ in 0..game.horizon {
        let ol = observe(game, &state, Role::Leader);
        let of = observe(game, &state, Role::Follower);
        let a_l = Action::from_bit(rng.random::<f64>() < leader.defect_probability(ol));
        let a_f = follower.act(of, rng);
        let (next, _, rf) = step(game, state, a_l, a_f)?;
        steps.push((of, a_f));
        rewards.push(rf);
        state = next;
    }
    Ok(steps
        .into_iter()
        .zip(rewards_to_go(&rewards, gamma))
        .map(|((o, a), ret)| PgSample {
            features: SoftmaxTabularPolicy::features(o),
            action: a,
            ret,
            key: o.0,
        })
        .collect())
}

/// Freezes the leader and post-trains a fresh policy-gradient follower against it.
///
/// Every iteration the follower's greedy policy is evaluated exactly; the best
/// value seen is compared with the entry follower.
pub fn verify_equilibrium<R: Rng + ?Sized>(
    game: &MatrixGameSpec,
    leader: &dyn Policy,
    entry_follower: &TabularDeterministicPolicy,
    hyper: &LearnerHyper,
    iterations: usize,
    rng: &mut R,
) -> Result<VerificationReport> {
    hyper.validate()?;
    check_shape(game, leader)?;
    let (leader_before, entry_value) = expected_values(game, leader, entry_follower)?;
    let n = game.observation_count();
    let mut follower = SoftmaxTabularPolicy::uniform(n);
    let mut opt = PolicyOptimizer::new(hyper, n);
    let mut baseline = hyper.baseline.then(|| Baseline::new(n));
    let mut best_value = entry_value;
    let mut leader_after = leader_before;
    for _ in 0..iterations {
        let mut batch = Vec::new();
        while batch.len() < hyper.batch_steps.max(1) {
            batch.extend(sample_follower_episode(game, leader, &follower, hyper.gamma, rng)?);
        }
        policy_gradient_step(&mut follower.logits, &batch, baseline.as_mut(), &mut opt);
        let greedy = follower.to_deterministic();
        let (vl, vf) = expected_values(game, leader, &greedy)?;
        if vf > best_value + TIE_EPS {
            best_value = vf;
            leader_after = vl;
        }
    }
    let br = exact_best_response(game, &leader.to_deterministic())?;
    let entry_det = expected_values(game, &leader.to_deterministic(), entry_follower)?.1;
    let improvement = best_value - entry_value;
    Ok(VerificationReport {
        follower_improvement: improvement,
        exact_gap: br.follower_value - entry_det,
        leader_value_before: leader_before,
        leader_value_after: leader_after,
        passed: improvement < VERIFY_TOLERANCE && (leader_after - leader_before).abs() < VERIFY_TOLERANCE,
    })
}

/// `g = (1 − γ^{h/2}) / (1 − γ)` and the limits `(g, −2g, −3g)`.
pub fn divergence_limits(gamma: f64, h: usize) -> Result<(f64, f64, f64)> {
    if gamma == 1.0 {
        return Err(Error::UndiscountedLimit);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} not in (0, 1)")));
    }
    if !h.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("horizon {h} must be even")));
    }
    let g = (1.0 - gamma.powi((h / 2) as i32)) / (1.0 - gamma);
    Ok((g, -2.0 * g, -3.0 * g))
}

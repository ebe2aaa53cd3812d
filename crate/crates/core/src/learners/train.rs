use rand::RngCore;

use crate::composer::{Composer, ComposerConfig, LeaderEpisode};
use crate::error::Result;
use crate::game::MatrixGameSpec;
use crate::oracle::{OracleKind, QueryAccess};
use crate::policy::{
    perturb_parameters, sample_random_policy, Exploration, FrozenPolicy, Policy, QTable, SoftmaxTabularPolicy,
    TabularDeterministicPolicy,
};

use super::{
    clipped_surrogate_update, es_update, policy_gradient_step, q_update, rewards_to_go, AdaptiveNoise, Algorithm, Baseline,
    Experience,
    LearnerHyper, PgSample, PolicyOptimizer,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LeaderPolicy {
    Deterministic(TabularDeterministicPolicy),
    Softmax(SoftmaxTabularPolicy),
    Q(QTable),
}

impl LeaderPolicy {
    pub fn as_query(&self) -> &dyn QueryAccess {
        match self {
            LeaderPolicy::Deterministic(p) => p,
            LeaderPolicy::Softmax(p) => p,
            LeaderPolicy::Q(q) => q,
        }
    }

    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            LeaderPolicy::Deterministic(p) => p,
            LeaderPolicy::Softmax(p) => p,
            LeaderPolicy::Q(q) => q,
        }
    }

    /// The same policy with exploration switched off.
    pub fn exploit(&self) -> LeaderPolicy {
        match self {
            LeaderPolicy::Q(q) => LeaderPolicy::Q(QTable {
                values: q.values.clone(),
                exploration: Exploration::None,
            }),
            other => other.clone(),
        }
    }

    /// Action distribution the leader uses while playing (the phase-1 half of a phase-bit leader).
    pub fn play_policy(&self, n_obs: usize, phase_bit: bool) -> FrozenPolicy {
        let exploit = self.exploit();
        FrozenPolicy::rows(exploit.as_policy(), if phase_bit { n_obs } else { 0 }, n_obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Cumulative environment steps after this iteration.
    pub env_steps: usize,
    /// Mean play-segment leader reward over the iteration's episodes.
    pub leader_reward: f64,
    pub follower_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: LeaderPolicy,
    pub curve: Vec<CurvePoint>,
    pub env_steps: usize,
}

struct Tracker {
    env_steps: usize,
    curve: Vec<CurvePoint>,
    budget: Option<usize>,
}

impl Tracker {
    fn record(&mut self, episodes: &[LeaderEpisode]) {
        let k = episodes.len().max(1) as f64;
        self.env_steps += episodes.iter().map(|e| e.env_steps).sum::<usize>();
        self.curve.push(CurvePoint {
            env_steps: self.env_steps,
            leader_reward: episodes.iter().map(|e| e.play_reward()).sum::<f64>() / k,
            follower_reward: episodes.iter().map(|e| e.follower_play_reward).sum::<f64>() / k,
        });
    }

    fn exhausted(&self) -> bool {
        self.budget.is_some_and(|b| self.env_steps >= b)
    }
}

fn samples(episode: &LeaderEpisode, n: usize, phase_bit: bool, gamma: f64) -> Vec<PgSample> {
    let rewards: Vec<f64> = episode.steps.iter().map(|s| s.reward).collect();
    episode
        .steps
        .iter()
        .zip(rewards_to_go(&rewards, gamma))
        .map(|(s, ret)| {
            let o = s.leader_obs(n, phase_bit);
            PgSample {
                features: SoftmaxTabularPolicy::features(o),
                action: s.action,
                ret,
                key: o.0,
            }
        })
        .collect()
}

fn experiences(episode: &LeaderEpisode, n: usize, phase_bit: bool) -> Vec<Experience> {
    let steps = &episode.steps;
    (0..steps.len())
        .map(|i| {
            let done = i + 1 == steps.len();
            let next = if done { steps[i] } else { steps[i + 1] };
            Experience {
                obs: steps[i].leader_obs(n, phase_bit),
                action: steps[i].action,
                reward: steps[i].reward,
                next_obs: next.leader_obs(n, phase_bit),
                done,
            }
        })
        .collect()
}

/// Main training loop of the leader.
pub fn train_leader(
    game: &MatrixGameSpec,
    oracle: &OracleKind,
    config: ComposerConfig,
    hyper: &LearnerHyper,
    rng: &mut dyn RngCore,
) -> Result<TrainOutput> {
    train_leader_budgeted(game, oracle, config, hyper, None, rng)
}

/// [`train_leader`] that also stops once `max_env_steps` have been spent.
pub fn train_leader_budgeted(
    game: &MatrixGameSpec,
    oracle: &OracleKind,
    config: ComposerConfig,
    hyper: &LearnerHyper,
    max_env_steps: Option<usize>,
    rng: &mut dyn RngCore,
) -> Result<TrainOutput> {
    hyper.validate()?;
    let n = game.observation_count();
    let phase_bit = config.leader_phase_bit;
    let n_leader = if phase_bit { 2 * n } else { n };
    let mut composer = Composer::new(config);
    let mut tracker = Tracker {
        env_steps: 0,
        curve: Vec::with_capacity(hyper.iterations),
        budget: max_env_steps,
    };
    let min_steps = hyper.batch_steps.max(1);

    let policy = match hyper.algorithm {
        Algorithm::QLearn => {
            let mut q = QTable::filled(n_leader, hyper.q_init, hyper.exploration)?;
            let mut adaptive = match hyper.exploration {
                Exploration::ParameterNoise { stddev } if hyper.adaptive_noise => Some(AdaptiveNoise::new(stddev)),
                _ => None,
            };
            for it in 0..hyper.iterations {
                if tracker.exhausted() {
                    break;
                }
                let exploration = hyper.exploration_at(it);
                let mut batch = Vec::new();
                let mut steps = 0;
                while steps < min_steps {
                    let acting = match (exploration, &adaptive) {
                        (Exploration::ParameterNoise { .. }, Some(a)) => QTable {
                            exploration: Exploration::None,
                            ..perturb_parameters(&q, a.stddev, rng)?
                        },
                        (Exploration::ParameterNoise { stddev }, None) => QTable {
                            exploration: Exploration::None,
                            ..perturb_parameters(&q, stddev, rng)?
                        },
                        (e, _) => QTable {
                            values: q.values.clone(),
                            exploration: e,
                        },
                    };
                    let ep = composer.compose_episode(game, &acting, oracle, rng)?;
                    if let Some(a) = adaptive.as_mut() {
                        let visited: Vec<_> = ep.steps.iter().map(|s| s.leader_obs(n, phase_bit)).collect();
                        a.update(&q, &acting, &visited);
                    }
                    steps += ep.steps.len();
                    batch.push(ep);
                }
                for ep in &batch {
                    for e in experiences(ep, n, phase_bit) {
                        q_update(&mut q, &e, hyper.lr, hyper.gamma)?;
                    }
                }
                tracker.record(&batch);
            }
            LeaderPolicy::Q(q)
        }
        Algorithm::Reinforce | Algorithm::ClippedSurrogate => {
            let mut policy = SoftmaxTabularPolicy::uniform(n_leader);
            let mut values = vec![0.0; n_leader];
            let mut opt = PolicyOptimizer::new(hyper, n_leader);
            let mut baseline = hyper.baseline.then(|| Baseline::new(n_leader));
            for _ in 0..hyper.iterations {
                if tracker.exhausted() {
                    break;
                }
                let mut batch = Vec::new();
                let mut data = Vec::new();
                while data.len() < min_steps {
                    let ep = composer.compose_episode(game, &policy, oracle, rng)?;
                    data.extend(samples(&ep, n, phase_bit, hyper.gamma));
                    batch.push(ep);
                }
                if hyper.algorithm == Algorithm::Reinforce {
                    policy_gradient_step(&mut policy.logits, &data, baseline.as_mut(), &mut opt);
                } else {
                    clipped_surrogate_update(&mut policy.logits, &mut values, &data, hyper, &mut opt)?;
                }
                tracker.record(&batch);
            }
            LeaderPolicy::Softmax(policy)
        }
        Algorithm::EvolutionStrategies => {
            let mut population: Vec<TabularDeterministicPolicy> =
                (0..hyper.population).map(|_| sample_random_policy(n_leader, rng)).collect();
            for _ in 0..hyper.iterations {
                if tracker.exhausted() {
                    break;
                }
                let mut batch = Vec::with_capacity(population.len());
                for member in &population {
                    batch.push(composer.compose_episode(game, member, oracle, rng)?);
                }
                let fitness: Vec<f64> = batch.iter().map(|e| e.total_reward()).collect();
                population = es_update(&population, &fitness, hyper, rng)?;
                tracker.record(&batch);
            }
            LeaderPolicy::Deterministic(population.swap_remove(0))
        }
    };
    Ok(TrainOutput {
        policy,
        curve: tracker.curve,
        env_steps: tracker.env_steps,
    })
}

//! Leader and follower learning rules.

mod adam;
mod es;
mod pg;
mod qlearn;
mod train;

pub use adam::Adam;
pub use es::{es_update, Mutate};
pub use pg::{
    clipped_surrogate_update, policy_gradient_step, reinforce_gradient, reinforce_update, rewards_to_go,
    score_gradient, Baseline, PgSample, PolicyOptimizer,
};
pub use qlearn::{q_update, AdaptiveNoise, Experience};
pub use train::{train_leader, train_leader_budgeted, CurvePoint, LeaderPolicy, TrainOutput};

use crate::error::{Error, Result};
use crate::policy::Exploration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    QLearn,
    Reinforce,
    ClippedSurrogate,
    EvolutionStrategies,
}

impl Algorithm {
    pub fn keyword(self) -> &'static str {
        match self {
            Algorithm::QLearn => "qlearn",
            Algorithm::Reinforce => "reinforce",
            Algorithm::ClippedSurrogate => "ppo",
            Algorithm::EvolutionStrategies => "es",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "qlearn" | "dqn" => Ok(Algorithm::QLearn),
            "reinforce" | "pg" => Ok(Algorithm::Reinforce),
            "ppo" | "clipped_surrogate" => Ok(Algorithm::ClippedSurrogate),
            "es" => Ok(Algorithm::EvolutionStrategies),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Hyperparameters shared by every learner. Fields an algorithm does not use are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerHyper {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub gamma: f64,
    /// Training iterations (batches, generations, or follower episodes for an inner loop).
    pub iterations: usize,
    /// Minimum environment steps per batch; a batch always holds whole episodes.
    pub batch_steps: usize,
    pub exploration: Exploration,
    /// Iterations over which ε or the parameter-noise stddev decays linearly to zero. 0 keeps it fixed.
    pub exploration_decay: usize,
    pub q_init: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub clip: f64,
    pub population: usize,
    pub elite_fraction: f64,
    /// ES mutation scale: logit noise stddev, or per-observation flip probability for tabular genomes.
    pub noise_std: f64,
    /// Subtract a learned per-row mean return from policy-gradient returns.
    pub baseline: bool,
    /// Adapt the parameter-noise stddev after each episode (see [`AdaptiveNoise`]).
    pub adaptive_noise: bool,
}

impl LearnerHyper {
    fn base(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            lr: 0.01,
            gamma: 0.99,
            iterations: 100,
            batch_steps: 100,
            exploration: Exploration::None,
            exploration_decay: 0,
            q_init: 0.0,
            optimizer: Optimizer::Adam,
            epochs: 10,
            clip: 0.2,
            population: 16,
            elite_fraction: 0.25,
            noise_std: 0.2,
            baseline: false,
            adaptive_noise: false,
        }
    }

    /// Follower policy gradient: lr 0.02, batch 100, 500 iterations, with a return baseline.
    pub fn follower_pg() -> Self {
        Self {
            lr: 0.02,
            baseline: true,
            batch_steps: 100,
            iterations: 500,
            ..Self::base(Algorithm::Reinforce)
        }
    }

    /// Leader policy gradient: lr 0.156, batch 100, 1200 iterations.
    pub fn leader_pg() -> Self {
        Self {
            lr: 0.156,
            batch_steps: 100,
            iterations: 1200,
            ..Self::base(Algorithm::Reinforce)
        }
    }

    /// Leader clipped surrogate: lr 0.008, batch 1000, 500 iterations, no entropy bonus,
    /// 30 full-batch epochs with clip 0.3.
    pub fn leader_ppo() -> Self {
        Self {
            lr: 0.008,
            epochs: 30,
            clip: 0.3,
            batch_steps: 1000,
            iterations: 500,
            ..Self::base(Algorithm::ClippedSurrogate)
        }
    }

    /// Leader Q-learning with adaptive parameter noise: lr 0.001, batch 1024, initial stddev 1.0.
    pub fn leader_qlearn() -> Self {
        Self {
            lr: 0.001,
            adaptive_noise: true,
            batch_steps: 1024,
            iterations: 500,
            exploration: Exploration::ParameterNoise { stddev: 1.0 },
            ..Self::base(Algorithm::QLearn)
        }
    }

    pub fn leader_es() -> Self {
        Self {
            iterations: 60,
            population: 16,
            elite_fraction: 0.25,
            noise_std: 0.2,
            ..Self::base(Algorithm::EvolutionStrategies)
        }
    }

    /// Inner-loop follower Q-learning: α 0.1, ε 0.1, one iteration per episode.
    pub fn follower_qlearn(episodes: usize) -> Self {
        Self {
            lr: 0.1,
            iterations: episodes,
            batch_steps: 0,
            exploration: Exploration::EpsilonGreedy(0.1),
            ..Self::base(Algorithm::QLearn)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidHyper { name, reason });
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr", format!("{} must be positive", self.lr));
        }
        if self.algorithm == Algorithm::QLearn && self.lr > 1.0 {
            return bad("lr", format!("{} must be in (0, 1] for Q-learning", self.lr));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("{} not in (0, 1]", self.gamma));
        }
        match self.exploration {
            Exploration::EpsilonGreedy(e) if !(0.0..=1.0).contains(&e) => {
                return bad("epsilon", format!("{e} not in [0, 1]"));
            }
            Exploration::ParameterNoise { stddev } if !(stddev >= 0.0) => {
                return bad("stddev", format!("{stddev} is negative"));
            }
            _ => {}
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if !(self.clip > 0.0) {
            return bad("clip", format!("{} must be positive", self.clip));
        }
        if self.algorithm == Algorithm::EvolutionStrategies && self.population < 2 {
            return bad("population", format!("{} must be at least 2", self.population));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return bad("elite_fraction", format!("{} not in (0, 1]", self.elite_fraction));
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std", format!("{} is negative", self.noise_std));
        }
        if !self.q_init.is_finite() {
            return bad("q_init", "must be finite".into());
        }
        Ok(())
    }

    /// Exploration after `iteration` iterations of linear decay.
    pub fn exploration_at(&self, iteration: usize) -> Exploration {
        if self.exploration_decay == 0 {
            return self.exploration;
        }
        let f = 1.0 - (iteration as f64 / self.exploration_decay as f64).min(1.0);
        match self.exploration {
            Exploration::EpsilonGreedy(e) => Exploration::EpsilonGreedy(e * f),
            Exploration::ParameterNoise { stddev } => Exploration::ParameterNoise { stddev: stddev * f },
            Exploration::None => Exploration::None,
        }
    }
}

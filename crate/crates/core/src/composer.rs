//! The leader's two-segment learning problem: a query segment in which the
//! oracle questions the leader (zero reward), then a play segment of the real
//! game against the follower the oracle returned.

use std::fmt::Write as _;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::game::{initial_state, observe, step, Action, MatrixGameSpec, ObservationId, Role};
use crate::oracle::{exact_best_response, qlearn_best_response_traced, respond, OracleKind, PhaseView, QueryAccess};
use crate::policy::{induced_policy, Context, PhaseBit, QTable, TabularDeterministicPolicy};
use crate::solver::{evaluate_policy_pair, TIE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComposerConfig {
    /// Query-segment steps are part of the leader's batch.
    pub queries_in_leader_batch: bool,
    /// The leader is paid during an inner-loop follower's learning episodes.
    pub reward_during_initial: bool,
    /// The leader observes whether it is being queried or playing.
    pub leader_phase_bit: bool,
    /// An inner-loop follower starts every episode from a fresh Q-table.
    pub follower_reset: bool,
    /// Keep only the last `k` inner-loop learning episodes in the returned episode.
    pub inner_loop_keep: Option<usize>,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        Self {
            queries_in_leader_batch: true,
            reward_during_initial: false,
            leader_phase_bit: false,
            follower_reset: true,
            inner_loop_keep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Query,
    Play,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderStep {
    pub obs: ObservationId,
    pub phase: PhaseBit,
    pub action: Action,
    pub reward: f64,
    pub segment: Segment,
}

impl LeaderStep {
    /// Observation index as seen by a leader with `n_obs` base observations.
    pub fn leader_obs(&self, n_obs: usize, phase_bit: bool) -> ObservationId {
        if phase_bit {
            ObservationId(self.obs.0 + n_obs * self.phase as usize)
        } else {
            self.obs
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderEpisode {
    pub steps: Vec<LeaderStep>,
    pub follower_used: TabularDeterministicPolicy,
    pub context: Option<Context>,
    /// Environment steps charged to this episode.
    pub env_steps: usize,
    pub follower_play_reward: f64,
}

impl LeaderEpisode {
    pub fn play_reward(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.segment == Segment::Play)
            .map(|s| s.reward)
            .sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn query_len(&self) -> usize {
        self.steps.iter().filter(|s| s.segment == Segment::Query).count()
    }

    /// One tab-separated line per step: `segment obs phase action reward`.
    pub fn trace_dump(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let seg = match s.segment {
                Segment::Query => "query",
                Segment::Play => "play",
            };
            let _ = writeln!(out, "{seg}\t{}\t{}\t{}\t{}", s.obs.0, s.phase as u8, s.action, s.reward);
        }
        out
    }
}

/// Builds leader episodes. Holds the retained follower table when followers are not reset.
#[derive(Debug, Clone, Default)]
pub struct Composer {
    pub config: ComposerConfig,
    retained: Option<QTable>,
}

impl Composer {
    pub fn new(config: ComposerConfig) -> Self {
        Self { config, retained: None }
    }

    pub fn retained(&self) -> Option<&QTable> {
        self.retained.as_ref()
    }

    pub fn compose_episode(
        &mut self,
        game: &MatrixGameSpec,
        leader: &dyn QueryAccess,
        oracle: &OracleKind,
        rng: &mut dyn RngCore,
    ) -> Result<LeaderEpisode> {
        let cfg = self.config;
        let n = game.observation_count();
        let expected = if cfg.leader_phase_bit { 2 * n } else { n };
        if leader.observation_count() != expected {
            return Err(if cfg.leader_phase_bit {
                Error::PhaseBitShape {
                    expected,
                    got: leader.observation_count(),
                }
            } else {
                Error::PolicyShape {
                    expected,
                    got: leader.observation_count(),
                }
            });
        }
        if cfg.reward_during_initial && !oracle.has_learning_episodes() {
            return Err(Error::NoLearningEpisodes);
        }
        let query_view = PhaseView {
            inner: leader,
            n_obs: n,
            offset: 0,
        };
        let play_view = PhaseView {
            inner: leader,
            n_obs: n,
            offset: if cfg.leader_phase_bit { n } else { 0 },
        };

        let mut steps = Vec::new();
        let mut query_steps;
        let follower;
        let mut context = None;
        match oracle {
            OracleKind::QLearnInnerLoop(hyper) => {
                let init = if cfg.follower_reset { None } else { self.retained.take() };
                let inner = qlearn_best_response_traced(game, &query_view, hyper, init, rng)?;
                follower = induced_policy(&inner.q);
                query_steps = inner.trace.len();
                let first_kept = match cfg.inner_loop_keep {
                    Some(k) => hyper.iterations.saturating_sub(k),
                    None => 0,
                };
                steps.extend(inner.trace.iter().filter(|s| s.episode >= first_kept).map(|s| LeaderStep {
                    obs: s.leader_obs,
                    phase: PhaseBit::Query,
                    action: s.leader_action,
                    reward: if cfg.reward_during_initial { s.leader_reward } else { 0.0 },
                    segment: Segment::Query,
                }));
                if !cfg.follower_reset {
                    self.retained = Some(inner.q);
                }
            }
            _ => {
                let response = respond(oracle, game, &query_view, rng)?;
                query_steps = response.queries.len();
                steps.extend(response.queries.iter().map(|r| LeaderStep {
                    obs: r.obs,
                    phase: PhaseBit::Query,
                    action: r.answer,
                    reward: 0.0,
                    segment: Segment::Query,
                }));
                context = response.context();
                follower = response.follower;
            }
        }
        if !cfg.queries_in_leader_batch {
            steps.clear();
            query_steps = 0;
        }

        let mut state = initial_state(game);
        let mut follower_play_reward = 0.0;
        for _ in 0..game.horizon {
            let ol = observe(game, &state, Role::Leader);
            let a_l = play_view.answer(ol, rng);
            let a_f = follower.action(observe(game, &state, Role::Follower));
            let (next, rl, rf) = step(game, state, a_l, a_f)?;
            steps.push(LeaderStep {
                obs: ol,
                phase: PhaseBit::Play,
                action: a_l,
                reward: rl,
                segment: Segment::Play,
            });
            follower_play_reward += rf;
            state = next;
        }
        Ok(LeaderEpisode {
            steps,
            follower_used: follower,
            context,
            env_steps: query_steps + game.horizon,
            follower_play_reward,
        })
    }
}

pub fn compose_episode(
    game: &MatrixGameSpec,
    leader: &dyn QueryAccess,
    oracle: &OracleKind,
    config: ComposerConfig,
    rng: &mut dyn RngCore,
) -> Result<LeaderEpisode> {
    Composer::new(config).compose_episode(game, leader, oracle, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaReport {
    /// Exact best-response value minus the value of the follower actually used.
    pub best_response_gap: f64,
    /// |episode reward − exact evaluation of (leader, follower used)|.
    pub evaluation_gap: f64,
    pub best_response_holds: bool,
    pub evaluation_holds: bool,
}

/// Checks that the episode's follower is a best response and that the
/// episode's reward equals the exact value of the pair.
pub fn check_lemma_conditions(
    episode: &LeaderEpisode,
    game: &MatrixGameSpec,
    leader: &TabularDeterministicPolicy,
) -> Result<LemmaReport> {
    let br = exact_best_response(game, leader)?;
    let (vl, vf) = evaluate_policy_pair(game, leader, &episode.follower_used)?;
    let best_response_gap = br.follower_value - vf;
    let evaluation_gap = (episode.total_reward() - vl).abs();
    Ok(LemmaReport {
        best_response_gap,
        evaluation_gap,
        best_response_holds: best_response_gap <= TIE_EPS,
        evaluation_holds: evaluation_gap <= TIE_EPS,
    })
}

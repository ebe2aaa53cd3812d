//! Follower best-response oracles. Every oracle reaches the leader only through
//! [`QueryAccess::answer`].

use std::cell::Cell;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::game::{initial_state, observe, step, Action, MatrixGameSpec, MemoryMode, ObservationId, Role};
use crate::learners::{
    policy_gradient_step, q_update, rewards_to_go, Baseline, Experience, LearnerHyper, PgSample, PolicyOptimizer,
};
use crate::policy::{
    induced_policy, sample_random_leader_policy, Context, ContextualFollowerPolicy, ContextualKind, FrozenPolicy,
    Policy, QTable, SoftmaxTabularPolicy, TabularDeterministicPolicy,
};
use crate::solver::{evaluate_policy_pair, TIE_EPS};

/// Leader observations asked by a query oracle, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySchedule {
    pub observations: Vec<ObservationId>,
}

impl QuerySchedule {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

pub fn enumerate_query_schedule(memory: MemoryMode) -> QuerySchedule {
    QuerySchedule {
        observations: (0..memory.observation_count()).map(ObservationId).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryRecord {
    pub obs: ObservationId,
    pub answer: Action,
}

/// Observation → action access to a leader.
pub trait QueryAccess {
    fn observation_count(&self) -> usize;
    fn answer(&self, obs: ObservationId, rng: &mut dyn RngCore) -> Action;
}

macro_rules! query_via_act {
    ($($t:ty),*) => {$(
        impl QueryAccess for $t {
            fn observation_count(&self) -> usize {
                Policy::observation_count(self)
            }

            fn answer(&self, obs: ObservationId, rng: &mut dyn RngCore) -> Action {
                self.act(obs, rng)
            }
        }
    )*};
}

query_via_act!(TabularDeterministicPolicy, SoftmaxTabularPolicy, QTable, FrozenPolicy);

/// Counts every call that reaches the wrapped leader.
pub struct CountingLeader<'a> {
    inner: &'a dyn QueryAccess,
    calls: Cell<usize>,
}

impl<'a> CountingLeader<'a> {
    pub fn new(inner: &'a dyn QueryAccess) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl QueryAccess for CountingLeader<'_> {
    fn observation_count(&self) -> usize {
        self.inner.observation_count()
    }

    fn answer(&self, obs: ObservationId, rng: &mut dyn RngCore) -> Action {
        self.calls.set(self.calls.get() + 1);
        self.inner.answer(obs, rng)
    }
}

/// A phase-bit leader seen at one phase: observation `o` maps to `o + offset`.
pub struct PhaseView<'a> {
    pub inner: &'a dyn QueryAccess,
    pub n_obs: usize,
    pub offset: usize,
}

impl QueryAccess for PhaseView<'_> {
    fn observation_count(&self) -> usize {
        self.n_obs
    }

    fn answer(&self, obs: ObservationId, rng: &mut dyn RngCore) -> Action {
        self.inner.answer(ObservationId(obs.0 + self.offset), rng)
    }
}

pub fn query_leader(leader: &dyn QueryAccess, schedule: &QuerySchedule, rng: &mut dyn RngCore) -> Vec<QueryRecord> {
    schedule
        .observations
        .iter()
        .map(|&obs| QueryRecord {
            obs,
            answer: leader.answer(obs, rng),
        })
        .collect()
}

/// `answers[i]` is the leader's action at `schedule[i]`.
pub fn context_from_queries(leader: &dyn QueryAccess, schedule: &QuerySchedule, rng: &mut dyn RngCore) -> Context {
    Context::new(query_leader(leader, schedule, rng).into_iter().map(|r| r.answer).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub follower: TabularDeterministicPolicy,
    pub follower_value: f64,
    pub leader_value: f64,
}

/// Enumerates all deterministic follower policies. Ties in follower value go to the
/// leader's favour, then to the lowest policy index.
pub fn exact_best_response(game: &MatrixGameSpec, leader: &TabularDeterministicPolicy) -> Result<BestResponse> {
    let n = game.observation_count();
    let mut best: Option<BestResponse> = None;
    for follower in TabularDeterministicPolicy::all(n) {
        let (vl, vf) = evaluate_policy_pair(game, leader, &follower)?;
        let better = match &best {
            None => true,
            Some(b) => vf > b.follower_value + TIE_EPS || (vf > b.follower_value - TIE_EPS && vl > b.leader_value + TIE_EPS),
        };
        if better {
            best = Some(BestResponse {
                follower,
                follower_value: vf,
                leader_value: vl,
            });
        }
    }
    Ok(best.expect("at least one follower policy"))
}

/// One leader step observed while an inner-loop follower learns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep {
    pub episode: usize,
    pub leader_obs: ObservationId,
    pub leader_action: Action,
    pub leader_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoop {
    pub q: QTable,
    pub trace: Vec<InnerStep>,
}

fn check_shape(game: &MatrixGameSpec, leader: &dyn QueryAccess) -> Result<()> {
    if leader.observation_count() != game.observation_count() {
        return Err(Error::PolicyShape {
            expected: game.observation_count(),
            got: leader.observation_count(),
        });
    }
    Ok(())
}

/// Tabular ε-greedy Q-learning of the follower against a frozen leader,
/// starting from `init` (or a table filled with `hyper.q_init`).
pub fn qlearn_best_response_traced(
    game: &MatrixGameSpec,
    leader: &dyn QueryAccess,
    hyper: &LearnerHyper,
    init: Option<QTable>,
    rng: &mut dyn RngCore,
) -> Result<InnerLoop> {
    hyper.validate()?;
    if hyper.lr > 1.0 {
        return Err(Error::InvalidHyper {
            name: "lr",
            reason: format!("{} not in (0, 1]", hyper.lr),
        });
    }
    check_shape(game, leader)?;
    let n = game.observation_count();
    let mut q = match init {
        Some(mut q) => {
            q.exploration = hyper.exploration;
            q
        }
        None => QTable::filled(n, hyper.q_init, hyper.exploration)?,
    };
    let mut trace = Vec::with_capacity(hyper.iterations * game.horizon);
    for episode in 0..hyper.iterations {
        q.exploration = hyper.exploration_at(episode);
        let mut state = initial_state(game);
        for t in 0..game.horizon {
            let ol = observe(game, &state, Role::Leader);
            let of = observe(game, &state, Role::Follower);
            let a_l = leader.answer(ol, rng);
            let a_f = q.act(of, rng);
            let (next, rl, rf) = step(game, state, a_l, a_f)?;
            let e = Experience {
                obs: of,
                action: a_f,
                reward: rf,
                next_obs: observe(game, &next, Role::Follower),
                done: t + 1 == game.horizon,
            };
            q_update(&mut q, &e, hyper.lr, hyper.gamma)?;
            trace.push(InnerStep {
                episode,
                leader_obs: ol,
                leader_action: a_l,
                leader_reward: rl,
            });
            state = next;
        }
    }
    Ok(InnerLoop { q, trace })
}

pub fn qlearn_best_response(
    game: &MatrixGameSpec,
    leader: &dyn QueryAccess,
    hyper: &LearnerHyper,
    rng: &mut dyn RngCore,
) -> Result<QTable> {
    Ok(qlearn_best_response_traced(game, leader, hyper, None, rng)?.q)
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub policy: ContextualFollowerPolicy,
    pub env_steps: usize,
    /// Mean follower episode reward per iteration.
    pub curve: Vec<f64>,
}

/// Two-phase training, phase one: a contextual follower learns by policy
/// gradient against uniformly sampled deterministic leaders.
pub fn pretrain_meta_follower<R: Rng + ?Sized>(
    game: &MatrixGameSpec,
    hyper: &LearnerHyper,
    kind: ContextualKind,
    rng: &mut R,
) -> Result<Pretrained> {
    hyper.validate()?;
    let n = game.observation_count();
    let schedule = enumerate_query_schedule(game.memory);
    let mut policy = ContextualFollowerPolicy::new(kind, n, schedule.len());
    let mut opt = PolicyOptimizer::new(hyper, policy.params().len());
    let mut baseline = hyper.baseline.then(|| Baseline::new(n << schedule.len()));
    let mut env_steps = 0;
    let mut curve = Vec::with_capacity(hyper.iterations);
    for _ in 0..hyper.iterations {
        let mut batch: Vec<PgSample> = Vec::new();
        let (mut total, mut episodes) = (0.0, 0usize);
        while batch.len() < hyper.batch_steps.max(1) {
            let leader = sample_random_leader_policy(game.memory, rng);
            let ctx = Context::new(schedule.observations.iter().map(|&o| leader.action(o)).collect());
            let mut state = initial_state(game);
            let mut steps = Vec::with_capacity(game.horizon);
            let mut rewards = Vec::with_capacity(game.horizon);
            for _ in 0..game.horizon {
                let a_l = leader.action(observe(game, &state, Role::Leader));
                let of = observe(game, &state, Role::Follower);
                let a_f = policy.act(of, &ctx, rng);
                let (next, _, rf) = step(game, state, a_l, a_f)?;
                steps.push((policy.features(of, &ctx), a_f, (of.0 << schedule.len()) + ctx.index()));
                rewards.push(rf);
                state = next;
            }
            total += rewards.iter().sum::<f64>();
            episodes += 1;
            env_steps += game.horizon;
            for ((features, action, key), ret) in steps.into_iter().zip(rewards_to_go(&rewards, hyper.gamma)) {
                batch.push(PgSample {
                    features,
                    action,
                    ret,
                    key,
                });
            }
        }
        policy_gradient_step(policy.params_mut(), &batch, baseline.as_mut(), &mut opt);
        curve.push(total / episodes as f64);
    }
    Ok(Pretrained {
        policy,
        env_steps,
        curve,
    })
}

#[derive(Debug, Clone)]
pub enum OracleKind {
    ExactBestResponse,
    QLearnInnerLoop(LearnerHyper),
    ContextualMeta(Arc<ContextualFollowerPolicy>),
}

impl OracleKind {
    pub fn has_learning_episodes(&self) -> bool {
        matches!(self, OracleKind::QLearnInnerLoop(_))
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            OracleKind::ExactBestResponse => "exact",
            OracleKind::QLearnInnerLoop(_) => "qlearn",
            OracleKind::ContextualMeta(_) => "meta",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Response {
    pub follower: TabularDeterministicPolicy,
    /// Schedule queries (exact and meta oracles).
    pub queries: Vec<QueryRecord>,
    /// Learning episodes (inner-loop oracle).
    pub inner: Option<InnerLoop>,
}

impl Response {
    pub fn context(&self) -> Option<Context> {
        (!self.queries.is_empty()).then(|| Context::new(self.queries.iter().map(|r| r.answer).collect()))
    }
}

pub(crate) fn check_meta(game: &MatrixGameSpec, meta: &ContextualFollowerPolicy) -> Result<()> {
    if meta.observation_count() != game.observation_count() {
        return match MemoryMode::from_observation_count(meta.observation_count()) {
            Some(m) => Err(Error::MemoryMismatch {
                expected: m,
                got: game.memory,
            }),
            None => Err(Error::PolicyShape {
                expected: game.observation_count(),
                got: meta.observation_count(),
            }),
        };
    }
    let schedule_len = enumerate_query_schedule(game.memory).len();
    if meta.context_len() != schedule_len {
        return Err(Error::ContextLength {
            expected: schedule_len,
            got: meta.context_len(),
        });
    }
    Ok(())
}

/// The follower policy an oracle plays against `leader`, with exploration off.
pub fn respond(
    oracle: &OracleKind,
    game: &MatrixGameSpec,
    leader: &dyn QueryAccess,
    rng: &mut dyn RngCore,
) -> Result<Response> {
    check_shape(game, leader)?;
    let schedule = enumerate_query_schedule(game.memory);
    match oracle {
        OracleKind::ExactBestResponse => {
            let queries = query_leader(leader, &schedule, rng);
            let mut snapshot = TabularDeterministicPolicy::always(Action::Cooperate, game.observation_count());
            for r in &queries {
                snapshot.set(r.obs, r.answer);
            }
            Ok(Response {
                follower: exact_best_response(game, &snapshot)?.follower,
                queries,
                inner: None,
            })
        }
        OracleKind::QLearnInnerLoop(hyper) => {
            let inner = qlearn_best_response_traced(game, leader, hyper, None, rng)?;
            Ok(Response {
                follower: induced_policy(&inner.q),
                queries: Vec::new(),
                inner: Some(inner),
            })
        }
        OracleKind::ContextualMeta(meta) => {
            check_meta(game, meta)?;
            let queries = query_leader(leader, &schedule, rng);
            let ctx = Context::new(queries.iter().map(|r| r.answer).collect());
            Ok(Response {
                follower: meta.curry(&ctx),
                queries,
                inner: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::canonical_game;
    use crate::rng::{stream, Stream};
    use Action::{Cooperate as C, Defect as D};

    fn pdm() -> MatrixGameSpec {
        canonical_game("prisoners dilemma modified").unwrap()
    }

    #[test]
    fn schedules_cover_every_observation() {
        assert_eq!(enumerate_query_schedule(MemoryMode::OtherOnly).len(), 3);
        assert_eq!(enumerate_query_schedule(MemoryMode::JointOneStep).len(), 5);
        assert_eq!(enumerate_query_schedule(MemoryMode::SingleShot).len(), 1);
    }

    #[test]
    fn contexts_of_simple_leaders() {
        let mut rng = stream(0, Stream::Oracle);
        let s = enumerate_query_schedule(MemoryMode::OtherOnly);
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        assert_eq!(context_from_queries(&tft, &s, &mut rng).to_string(), "CCD");
        let alld = TabularDeterministicPolicy::always(D, 3);
        assert_eq!(context_from_queries(&alld, &s, &mut rng).to_string(), "DDD");
        let s5 = enumerate_query_schedule(MemoryMode::JointOneStep);
        let tft5 = TabularDeterministicPolicy::tit_for_tat(MemoryMode::JointOneStep);
        assert_eq!(context_from_queries(&tft5, &s5, &mut rng).to_string(), "CCDCD");
    }

    #[test]
    fn best_responses_in_modified_dilemma() {
        let g = pdm();
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        let br = exact_best_response(&g, &tft).unwrap();
        assert_eq!(br.follower.actions()[..2], [C, C]);
        assert_eq!(br.leader_value, 0.0);
        let alld = TabularDeterministicPolicy::always(D, 3);
        let br = exact_best_response(&g, &alld).unwrap();
        // Observation 1 is never reached against always-defect.
        assert_eq!([br.follower.actions()[0], br.follower.actions()[2]], [D, D]);
    }

    #[test]
    fn best_response_in_standard_dilemma() {
        // Against tit-for-tat over ten rounds the follower cooperates throughout
        // and defects only in the last round, which it cannot condition on, so
        // full cooperation is optimal: ten rounds of −1.
        let g = canonical_game("prisoners dilemma").unwrap();
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::JointOneStep);
        let br = exact_best_response(&g, &tft).unwrap();
        assert_eq!(br.follower_value, -10.0);
        assert_eq!(br.leader_value, -10.0);
    }

    #[test]
    fn qlearning_follower_finds_best_response() {
        let hyper = LearnerHyper::follower_qlearn(2000);

        let pd = canonical_game("prisoners dilemma").unwrap();
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::JointOneStep);
        let mut rng = stream(3, Stream::Oracle);
        let q = qlearn_best_response(&pd, &tft, &hyper, &mut rng).unwrap();
        let theta = induced_policy(&q);
        let br = exact_best_response(&pd, &tft).unwrap();
        assert_eq!(evaluate_policy_pair(&pd, &tft, &theta).unwrap().1, br.follower_value, "{theta}");

        let g = pdm();
        let alld = TabularDeterministicPolicy::always(D, 3);
        let mut rng = stream(3, Stream::Oracle);
        let q = qlearn_best_response(&g, &alld, &hyper, &mut rng).unwrap();
        let theta = induced_policy(&q);
        assert_eq!([theta.actions()[0], theta.actions()[2]], [D, D], "{theta}");

        let mut rng = stream(3, Stream::Oracle);
        let q = qlearn_best_response(&g, &alld, &LearnerHyper::follower_qlearn(0), &mut rng).unwrap();
        assert!(q.values.iter().all(|r| *r == [0.0, 0.0]));
    }

    /// With only the leader's last action visible, tit-for-tat's retaliation
    /// is credited to cooperating, so tabular Q-learning settles on defection.
    #[test]
    fn qlearning_follower_aliases_tit_for_tat() {
        let g = pdm();
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        let mut rng = stream(3, Stream::Oracle);
        let q = qlearn_best_response(&g, &tft, &LearnerHyper::follower_qlearn(2000), &mut rng).unwrap();
        let got = evaluate_policy_pair(&g, &tft, &induced_policy(&q)).unwrap().1;
        let br = exact_best_response(&g, &tft).unwrap();
        assert!(got < br.follower_value, "{got} vs {}", br.follower_value);
    }

    #[test]
    fn oracles_only_touch_the_leader_through_queries() {
        let g = pdm();
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        let mut rng = stream(4, Stream::Oracle);

        let counted = CountingLeader::new(&tft);
        respond(&OracleKind::ExactBestResponse, &g, &counted, &mut rng).unwrap();
        assert_eq!(counted.calls(), 3);

        let counted = CountingLeader::new(&tft);
        let hyper = LearnerHyper::follower_qlearn(7);
        let r = respond(&OracleKind::QLearnInnerLoop(hyper), &g, &counted, &mut rng).unwrap();
        assert_eq!(counted.calls(), 70);
        assert_eq!(r.inner.unwrap().trace.len(), 70);

        let meta = Arc::new(ContextualFollowerPolicy::new(ContextualKind::Table, 3, 3));
        let counted = CountingLeader::new(&tft);
        respond(&OracleKind::ContextualMeta(meta), &g, &counted, &mut rng).unwrap();
        assert_eq!(counted.calls(), 3);
    }

    #[test]
    fn meta_oracle_checks_memory_mode() {
        let g = pdm();
        let mut rng = stream(5, Stream::Oracle);
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        let meta = Arc::new(ContextualFollowerPolicy::new(ContextualKind::Table, 5, 5));
        assert!(matches!(
            respond(&OracleKind::ContextualMeta(meta), &g, &tft, &mut rng),
            Err(Error::MemoryMismatch { .. })
        ));
    }

    #[test]
    fn meta_follower_learns_modified_dilemma() {
        let g = pdm();
        let mut rng = stream(6, Stream::Pretrain);
        let pre = pretrain_meta_follower(&g, &LearnerHyper::follower_pg(), ContextualKind::Table, &mut rng).unwrap();
        assert_eq!(pre.env_steps, 500 * 100);
        for c in 0..8 {
            let ctx = Context::from_index(c, 3);
            let leader = TabularDeterministicPolicy::new(ctx.answers.clone());
            let follower = pre.policy.curry(&ctx);
            let br = exact_best_response(&g, &leader).unwrap();
            let got = evaluate_policy_pair(&g, &leader, &follower).unwrap().1;
            assert!(got >= br.follower_value - 0.5, "context {ctx}: {got} vs {}", br.follower_value);
        }
        let tft = Context::new(vec![C, C, D]);
        assert_eq!(pre.policy.curry(&tft).actions()[..2], [C, C]);
        let alld = Context::new(vec![D, D, D]);
        let f = pre.policy.curry(&alld);
        assert_eq!([f.actions()[0], f.actions()[2]], [D, D]);
    }
}

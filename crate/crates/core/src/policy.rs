//! Policy and value-table representations for leader and follower.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::game::{Action, MemoryMode, ObservationId};

/// Sparse feature vector: `(parameter row, value)` pairs.
pub type Features = Vec<(usize, f64)>;

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

pub fn linear_logits(params: &[[f64; 2]], features: &[(usize, f64)]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for &(i, v) in features {
        out[0] += params[i][0] * v;
        out[1] += params[i][1] * v;
    }
    out
}

fn sample(defect_prob: f64, rng: &mut (impl Rng + ?Sized)) -> Action {
    Action::from_bit(rng.random::<f64>() < defect_prob)
}

/// A policy over a finite observation set.
pub trait Policy {
    fn observation_count(&self) -> usize;

    fn defect_probability(&self, obs: ObservationId) -> f64;

    fn act<R: Rng + ?Sized>(&self, obs: ObservationId, rng: &mut R) -> Action
    where
        Self: Sized,
    {
        sample(self.defect_probability(obs), rng)
    }

    /// Most likely action; ties go to cooperate.
    fn mode(&self, obs: ObservationId) -> Action {
        Action::from_bit(self.defect_probability(obs) > 0.5)
    }

    fn to_deterministic(&self) -> TabularDeterministicPolicy {
        TabularDeterministicPolicy::new(
            (0..self.observation_count())
                .map(|o| self.mode(ObservationId(o)))
                .collect(),
        )
    }
}

/// Defect probability per observation, frozen from any policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPolicy {
    pub defect: Vec<f64>,
}

impl FrozenPolicy {
    pub fn of(policy: &dyn Policy) -> Self {
        Self::rows(policy, 0, policy.observation_count())
    }

    /// Rows `offset..offset + n` of a policy, e.g. the play half of a phase-bit leader.
    pub fn rows(policy: &dyn Policy, offset: usize, n: usize) -> Self {
        Self {
            defect: (offset..offset + n).map(|o| policy.defect_probability(ObservationId(o))).collect(),
        }
    }
}

impl Policy for FrozenPolicy {
    fn observation_count(&self) -> usize {
        self.defect.len()
    }

    fn defect_probability(&self, obs: ObservationId) -> f64 {
        self.defect[obs.0]
    }
}

/// One action per observation. The policy index packs the action at
/// observation `i` into bit `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TabularDeterministicPolicy {
    actions: Vec<Action>,
}

impl TabularDeterministicPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn always(action: Action, n_obs: usize) -> Self {
        Self::new(vec![action; n_obs])
    }

    pub fn from_index(index: usize, n_obs: usize) -> Self {
        Self::new((0..n_obs).map(|i| Action::from_bit(index >> i & 1 == 1)).collect())
    }

    pub fn index(&self) -> usize {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, a)| a.index() << i)
            .sum()
    }

    pub fn count(n_obs: usize) -> usize {
        1 << n_obs
    }

    pub fn all(n_obs: usize) -> impl Iterator<Item = TabularDeterministicPolicy> {
        (0..Self::count(n_obs)).map(move |i| Self::from_index(i, n_obs))
    }

    /// Cooperate first, then repeat the other agent's previous action.
    pub fn tit_for_tat(memory: MemoryMode) -> Self {
        use Action::{Cooperate as C, Defect as D};
        match memory {
            // [Initial, CC, CD, DC, DD]; the second letter is the other agent's move
            // from the leader's point of view.
            MemoryMode::JointOneStep => Self::new(vec![C, C, D, C, D]),
            MemoryMode::OtherOnly => Self::new(vec![C, C, D]),
            MemoryMode::SingleShot => Self::new(vec![C]),
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, obs: ObservationId) -> Action {
        self.actions[obs.0]
    }

    pub fn set(&mut self, obs: ObservationId, action: Action) {
        self.actions[obs.0] = action;
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl Policy for TabularDeterministicPolicy {
    fn observation_count(&self) -> usize {
        self.actions.len()
    }

    fn defect_probability(&self, obs: ObservationId) -> f64 {
        if self.actions[obs.0].is_defect() {
            1.0
        } else {
            0.0
        }
    }

    fn act<R: Rng + ?Sized>(&self, obs: ObservationId, _rng: &mut R) -> Action {
        self.actions[obs.0]
    }
}

impl fmt::Display for TabularDeterministicPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.actions {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

impl FromStr for TabularDeterministicPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| Action::from_letter(c).ok_or_else(|| Error::InvalidArgument(format!("bad action `{c}` in `{s}`"))))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

/// Per-observation softmax over the two actions.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTabularPolicy {
    pub logits: Vec<[f64; 2]>,
}

impl SoftmaxTabularPolicy {
    pub fn uniform(n_obs: usize) -> Self {
        Self {
            logits: vec![[0.0; 2]; n_obs],
        }
    }

    /// Logits `±confidence/2` favouring the given deterministic policy.
    pub fn from_deterministic(policy: &TabularDeterministicPolicy, confidence: f64) -> Self {
        Self {
            logits: policy
                .actions()
                .iter()
                .map(|a| match a {
                    Action::Cooperate => [confidence / 2.0, -confidence / 2.0],
                    Action::Defect => [-confidence / 2.0, confidence / 2.0],
                })
                .collect(),
        }
    }

    pub fn probs(&self, obs: ObservationId) -> [f64; 2] {
        softmax2(self.logits[obs.0])
    }

    pub fn features(obs: ObservationId) -> Features {
        vec![(obs.0, 1.0)]
    }
}

impl Policy for SoftmaxTabularPolicy {
    fn observation_count(&self) -> usize {
        self.logits.len()
    }

    fn defect_probability(&self, obs: ObservationId) -> f64 {
        self.probs(obs)[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    None,
    EpsilonGreedy(f64),
    ParameterNoise { stddev: f64 },
}

/// Action-value table `q(s, a)`; zero initialised.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub values: Vec<[f64; 2]>,
    pub exploration: Exploration,
}

impl QTable {
    pub fn zeros(n_obs: usize, exploration: Exploration) -> Result<Self> {
        Self::filled(n_obs, 0.0, exploration)
    }

    pub fn filled(n_obs: usize, value: f64, exploration: Exploration) -> Result<Self> {
        match exploration {
            Exploration::EpsilonGreedy(e) if !(0.0..=1.0).contains(&e) => {
                return Err(Error::InvalidHyper {
                    name: "epsilon",
                    reason: format!("{e} not in [0, 1]"),
                })
            }
            Exploration::ParameterNoise { stddev } if !(stddev >= 0.0) => {
                return Err(Error::InvalidHyper {
                    name: "stddev",
                    reason: format!("{stddev} is negative"),
                })
            }
            _ => {}
        }
        Ok(Self {
            values: vec![[value; 2]; n_obs],
            exploration,
        })
    }

    pub fn get(&self, obs: ObservationId, action: Action) -> f64 {
        self.values[obs.0][action.index()]
    }

    pub fn max(&self, obs: ObservationId) -> f64 {
        let [c, d] = self.values[obs.0];
        c.max(d)
    }

    fn greedy_defects(&self, obs: ObservationId) -> bool {
        let [c, d] = self.values[obs.0];
        d > c
    }
}

impl Policy for QTable {
    fn observation_count(&self) -> usize {
        self.values.len()
    }

    /// Under ε-greedy the defect probability is `θ + (-1)^θ · ε/2`.
    fn defect_probability(&self, obs: ObservationId) -> f64 {
        let theta = if self.greedy_defects(obs) { 1.0 } else { 0.0 };
        match self.exploration {
            Exploration::EpsilonGreedy(eps) => {
                if theta == 1.0 {
                    1.0 - eps / 2.0
                } else {
                    eps / 2.0
                }
            }
            _ => theta,
        }
    }

    fn act<R: Rng + ?Sized>(&self, obs: ObservationId, rng: &mut R) -> Action {
        match self.exploration {
            Exploration::EpsilonGreedy(_) => sample(self.defect_probability(obs), rng),
            _ => Action::from_bit(self.greedy_defects(obs)),
        }
    }
}

/// θ_s = 1 iff q(s,D) > q(s,C); ties cooperate.
pub fn induced_policy(q: &QTable) -> TabularDeterministicPolicy {
    TabularDeterministicPolicy::new(
        (0..q.values.len())
            .map(|o| Action::from_bit(q.greedy_defects(ObservationId(o))))
            .collect(),
    )
}

pub fn sample_random_policy(n_obs: usize, rng: &mut (impl Rng + ?Sized)) -> TabularDeterministicPolicy {
    TabularDeterministicPolicy::from_index(rng.random_range(0..TabularDeterministicPolicy::count(n_obs)), n_obs)
}

/// Uniform over the `2^n` deterministic policies of a memory mode.
pub fn sample_random_leader_policy(memory: MemoryMode, rng: &mut (impl Rng + ?Sized)) -> TabularDeterministicPolicy {
    sample_random_policy(memory.observation_count(), rng)
}

pub fn perturb_parameters(q: &QTable, stddev: f64, rng: &mut (impl Rng + ?Sized)) -> Result<QTable> {
    if !(stddev >= 0.0) {
        return Err(Error::InvalidHyper {
            name: "stddev",
            reason: format!("{stddev} is negative"),
        });
    }
    let mut out = q.clone();
    if stddev == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, stddev).expect("stddev checked");
    for row in &mut out.values {
        for v in row.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    Ok(out)
}

/// The leader's answers to a fixed query schedule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Context {
    pub answers: Vec<Action>,
}

impl Context {
    pub fn new(answers: Vec<Action>) -> Self {
        Self { answers }
    }

    /// Bit `i` is the answer to query `i`.
    pub fn index(&self) -> usize {
        self.answers
            .iter()
            .enumerate()
            .map(|(i, a)| a.index() << i)
            .sum()
    }

    pub fn from_index(index: usize, len: usize) -> Self {
        Self::new((0..len).map(|i| Action::from_bit(index >> i & 1 == 1)).collect())
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.answers {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseBit {
    Query = 0,
    Play = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextualKind {
    /// One logit row per (observation, context) pair.
    Table,
    /// Logits linear in one-hot(observation) ⊕ context bits (±1).
    Linear,
}

/// Follower policy conditioned on the leader's query answers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualFollowerPolicy {
    n_obs: usize,
    context_len: usize,
    kind: ContextualKind,
    params: Vec<[f64; 2]>,
}

impl ContextualFollowerPolicy {
    pub fn new(kind: ContextualKind, n_obs: usize, context_len: usize) -> Self {
        let rows = match kind {
            ContextualKind::Table => n_obs << context_len,
            ContextualKind::Linear => n_obs + context_len,
        };
        Self {
            n_obs,
            context_len,
            kind,
            params: vec![[0.0; 2]; rows],
        }
    }

    pub fn kind(&self) -> ContextualKind {
        self.kind
    }

    pub fn observation_count(&self) -> usize {
        self.n_obs
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn params(&self) -> &[[f64; 2]] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.params
    }

    pub fn check_context(&self, ctx: &Context) -> Result<()> {
        if ctx.len() != self.context_len {
            return Err(Error::ContextLength {
                expected: self.context_len,
                got: ctx.len(),
            });
        }
        Ok(())
    }

    pub fn features(&self, obs: ObservationId, ctx: &Context) -> Features {
        match self.kind {
            ContextualKind::Table => vec![(obs.0 * (1 << self.context_len) + ctx.index(), 1.0)],
            ContextualKind::Linear => {
                let mut f = Vec::with_capacity(1 + self.context_len);
                f.push((obs.0, 1.0));
                for (i, a) in ctx.answers.iter().enumerate() {
                    f.push((self.n_obs + i, if a.is_defect() { 1.0 } else { -1.0 }));
                }
                f
            }
        }
    }

    pub fn logits(&self, obs: ObservationId, ctx: &Context) -> [f64; 2] {
        linear_logits(&self.params, &self.features(obs, ctx))
    }

    pub fn probs(&self, obs: ObservationId, ctx: &Context) -> [f64; 2] {
        softmax2(self.logits(obs, ctx))
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: ObservationId, ctx: &Context, rng: &mut R) -> Action {
        sample(self.probs(obs, ctx)[1], rng)
    }

    pub fn greedy(&self, obs: ObservationId, ctx: &Context) -> Action {
        let [c, d] = self.logits(obs, ctx);
        Action::from_bit(d > c)
    }

    /// The greedy follower policy for one context.
    pub fn curry(&self, ctx: &Context) -> TabularDeterministicPolicy {
        TabularDeterministicPolicy::new((0..self.n_obs).map(|o| self.greedy(ObservationId(o), ctx)).collect())
    }

    /// Builds a table representation holding the given logits for every (obs, context).
    pub fn table_from_fn(n_obs: usize, context_len: usize, f: impl Fn(ObservationId, &Context) -> [f64; 2]) -> Self {
        let mut p = Self::new(ContextualKind::Table, n_obs, context_len);
        for o in 0..n_obs {
            for c in 0..1usize << context_len {
                let ctx = Context::from_index(c, context_len);
                p.params[o * (1 << context_len) + c] = f(ObservationId(o), &ctx);
            }
        }
        p
    }

    /// Least-squares projection of a table onto the linear representation.
    ///
    /// Over the full (observation × context) grid the one-hot and ±1 context
    /// features are mutually orthogonal, so the projection reduces to means.
    /// The fit is exact whenever the table is itself linear in those features.
    pub fn linear_from_table(table: &ContextualFollowerPolicy) -> Result<Self> {
        if table.kind != ContextualKind::Table {
            return Err(Error::InvalidArgument("linear_from_table needs a table policy".into()));
        }
        let (n, k) = (table.n_obs, table.context_len);
        let n_ctx = 1usize << k;
        let mut lin = Self::new(ContextualKind::Linear, n, k);
        for o in 0..n {
            for a in 0..2 {
                let mean: f64 = (0..n_ctx).map(|c| table.params[o * n_ctx + c][a]).sum::<f64>() / n_ctx as f64;
                lin.params[o][a] = mean;
            }
        }
        for i in 0..k {
            for a in 0..2 {
                let mut acc = 0.0;
                for o in 0..n {
                    for c in 0..n_ctx {
                        let sign = if c >> i & 1 == 1 { 1.0 } else { -1.0 };
                        acc += sign * table.params[o * n_ctx + c][a];
                    }
                }
                lin.params[n + i][a] = acc / (n * n_ctx) as f64;
            }
        }
        Ok(lin)
    }
}

/// Borrowed view over every policy representation, for uniform dispatch.
#[derive(Debug, Clone, Copy)]
pub enum PolicyRef<'a> {
    Deterministic(&'a TabularDeterministicPolicy),
    Softmax(&'a SoftmaxTabularPolicy),
    Q(&'a QTable),
    Contextual(&'a ContextualFollowerPolicy),
}

pub fn act<R: Rng + ?Sized>(
    policy: PolicyRef<'_>,
    obs: ObservationId,
    context: Option<&Context>,
    rng: &mut R,
) -> Result<Action> {
    let n = match policy {
        PolicyRef::Deterministic(p) => p.observation_count(),
        PolicyRef::Softmax(p) => p.observation_count(),
        PolicyRef::Q(p) => p.observation_count(),
        PolicyRef::Contextual(p) => p.observation_count(),
    };
    if obs.0 >= n {
        return Err(Error::ObservationOutOfRange { obs: obs.0, count: n });
    }
    match (policy, context) {
        (PolicyRef::Contextual(p), Some(ctx)) => {
            p.check_context(ctx)?;
            Ok(p.act(obs, ctx, rng))
        }
        (PolicyRef::Contextual(_), None) => Err(Error::MissingContext),
        (_, Some(_)) => Err(Error::SuperfluousContext),
        (PolicyRef::Deterministic(p), None) => Ok(p.act(obs, rng)),
        (PolicyRef::Softmax(p), None) => Ok(p.act(obs, rng)),
        (PolicyRef::Q(p), None) => Ok(p.act(obs, rng)),
    }
}

pub mod format {
    //! Line-based policy files.
    //!
    //! ```text
    //! # deterministic
    //! 0 C
    //! # softmax            (or `# qtable`)
    //! 0 0.25 -0.25
    //! # contextual-table n_obs=3 context_len=3
    //! 0 CCD 0.5 -0.5
    //! # contextual-linear n_obs=3 context_len=3
    //! 4 0.1 -0.1
    //! ```

    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub enum PolicyFile {
        Deterministic(TabularDeterministicPolicy),
        Softmax(SoftmaxTabularPolicy),
        Q(QTable),
        Contextual(ContextualFollowerPolicy),
    }

    pub fn write_deterministic(p: &TabularDeterministicPolicy) -> String {
        let mut s = String::from("# deterministic\n");
        for (i, a) in p.actions().iter().enumerate() {
            s += &format!("{i} {a}\n");
        }
        s
    }

    fn write_rows(header: &str, rows: &[[f64; 2]]) -> String {
        let mut s = format!("# {header}\n");
        for (i, r) in rows.iter().enumerate() {
            s += &format!("{i} {:?} {:?}\n", r[0], r[1]);
        }
        s
    }

    pub fn write_softmax(p: &SoftmaxTabularPolicy) -> String {
        write_rows("softmax", &p.logits)
    }

    pub fn write_qtable(q: &QTable) -> String {
        write_rows("qtable", &q.values)
    }

    pub fn write_contextual(p: &ContextualFollowerPolicy) -> String {
        let (n, k) = (p.observation_count(), p.context_len());
        match p.kind() {
            ContextualKind::Table => {
                let mut s = format!("# contextual-table n_obs={n} context_len={k}\n");
                for o in 0..n {
                    for c in 0..1usize << k {
                        let ctx = Context::from_index(c, k);
                        let [lc, ld] = p.params()[o * (1 << k) + c];
                        s += &format!("{o} {ctx} {lc:?} {ld:?}\n");
                    }
                }
                s
            }
            ContextualKind::Linear => write_rows(&format!("contextual-linear n_obs={n} context_len={k}"), p.params()),
        }
    }

    pub fn write(file: &PolicyFile) -> String {
        match file {
            PolicyFile::Deterministic(p) => write_deterministic(p),
            PolicyFile::Softmax(p) => write_softmax(p),
            PolicyFile::Q(q) => write_qtable(q),
            PolicyFile::Contextual(p) => write_contextual(p),
        }
    }

    fn header_usize(header: &str, key: &str) -> Result<usize> {
        header
            .split_whitespace()
            .find_map(|t| t.strip_prefix(&format!("{key}=")))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("header is missing `{key}=`"),
            })
    }

    pub fn read(text: &str) -> Result<PolicyFile> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Empty("policy file"))?;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "expected a `# kind` header".into(),
            })?
            .trim()
            .to_string();
        let kind = header.split_whitespace().next().unwrap_or("");
        let body: Vec<(usize, Vec<&str>)> = lines
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
            .collect();
        let parse_f = |line: usize, s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("expected a number, got `{s}`"),
            })
        };
        let expect_index = |line: usize, s: &str, want: usize| -> Result<()> {
            match s.parse::<usize>() {
                Ok(i) if i == want => Ok(()),
                _ => Err(Error::Parse {
                    line,
                    message: format!("expected row index {want}, got `{s}`"),
                }),
            }
        };
        let rows = |width: usize| -> Result<Vec<[f64; 2]>> {
            body.iter()
                .enumerate()
                .map(|(k, (line, t))| {
                    if t.len() != width {
                        return Err(Error::Parse {
                            line: *line,
                            message: format!("expected {width} fields"),
                        });
                    }
                    expect_index(*line, t[0], k)?;
                    Ok([parse_f(*line, t[width - 2])?, parse_f(*line, t[width - 1])?])
                })
                .collect()
        };
        match kind {
            "deterministic" => {
                let mut actions = Vec::new();
                for (k, (line, t)) in body.iter().enumerate() {
                    if t.len() != 2 {
                        return Err(Error::Parse {
                            line: *line,
                            message: "expected `obs_index action`".into(),
                        });
                    }
                    expect_index(*line, t[0], k)?;
                    let a = t[1].chars().next().and_then(Action::from_letter).ok_or_else(|| Error::Parse {
                        line: *line,
                        message: format!("bad action `{}`", t[1]),
                    })?;
                    actions.push(a);
                }
                Ok(PolicyFile::Deterministic(TabularDeterministicPolicy::new(actions)))
            }
            "softmax" => Ok(PolicyFile::Softmax(SoftmaxTabularPolicy { logits: rows(3)? })),
            "qtable" => Ok(PolicyFile::Q(QTable {
                values: rows(3)?,
                exploration: Exploration::None,
            })),
            "contextual-table" => {
                let n = header_usize(&header, "n_obs")?;
                let k = header_usize(&header, "context_len")?;
                let mut p = ContextualFollowerPolicy::new(ContextualKind::Table, n, k);
                if body.len() != n << k {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("expected {} rows, found {}", n << k, body.len()),
                    });
                }
                for (line, t) in &body {
                    if t.len() != 4 {
                        return Err(Error::Parse {
                            line: *line,
                            message: "expected `obs context logit_C logit_D`".into(),
                        });
                    }
                    let o: usize = t[0].parse().map_err(|_| Error::Parse {
                        line: *line,
                        message: format!("bad observation `{}`", t[0]),
                    })?;
                    let ctx: TabularDeterministicPolicy = t[1].parse()?;
                    if o >= n || ctx.len() != k {
                        return Err(Error::Parse {
                            line: *line,
                            message: "observation or context out of range".into(),
                        });
                    }
                    p.params_mut()[o * (1 << k) + ctx.index()] = [parse_f(*line, t[2])?, parse_f(*line, t[3])?];
                }
                Ok(PolicyFile::Contextual(p))
            }
            "contextual-linear" => {
                let n = header_usize(&header, "n_obs")?;
                let k = header_usize(&header, "context_len")?;
                let mut p = ContextualFollowerPolicy::new(ContextualKind::Linear, n, k);
                let r = rows(3)?;
                if r.len() != n + k {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("expected {} rows, found {}", n + k, r.len()),
                    });
                }
                p.params_mut().copy_from_slice(&r);
                Ok(PolicyFile::Contextual(p))
            }
            other => Err(Error::Parse {
                line: 1,
                message: format!("unknown policy kind `{other}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use Action::{Cooperate as C, Defect as D};

    #[test]
    fn tit_for_tat_retaliates() {
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        let mut rng = stream(0, Stream::Leader);
        assert_eq!(act(PolicyRef::Deterministic(&tft), ObservationId(2), None, &mut rng), Ok(D));
        assert_eq!(tft.to_string(), "CCD");
    }

    #[test]
    fn epsilon_greedy_defect_probability() {
        let mut q = QTable::zeros(1, Exploration::EpsilonGreedy(0.2)).unwrap();
        q.values[0] = [-1.0, 0.0];
        assert!((q.defect_probability(ObservationId(0)) - 0.9).abs() < 1e-12);
        q.values[0] = [0.0, 0.0];
        assert!((q.defect_probability(ObservationId(0)) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn softmax_zero_logits_is_fair() {
        let p = SoftmaxTabularPolicy::uniform(1);
        let mut rng = stream(1, Stream::Leader);
        let n = 100_000;
        let d = (0..n).filter(|_| p.act(ObservationId(0), &mut rng).is_defect()).count();
        assert!((d as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn context_presence_is_checked() {
        let mut rng = stream(2, Stream::Leader);
        let meta = ContextualFollowerPolicy::new(ContextualKind::Table, 3, 3);
        assert_eq!(
            act(PolicyRef::Contextual(&meta), ObservationId(0), None, &mut rng),
            Err(Error::MissingContext)
        );
        let tft = TabularDeterministicPolicy::tit_for_tat(MemoryMode::OtherOnly);
        let ctx = Context::new(vec![C, C, D]);
        assert_eq!(
            act(PolicyRef::Deterministic(&tft), ObservationId(0), Some(&ctx), &mut rng),
            Err(Error::SuperfluousContext)
        );
        let short = Context::new(vec![C]);
        assert!(matches!(
            act(PolicyRef::Contextual(&meta), ObservationId(0), Some(&short), &mut rng),
            Err(Error::ContextLength { .. })
        ));
    }

    #[test]
    fn induced_policy_breaks_ties_towards_cooperate() {
        let mut q = QTable::zeros(3, Exploration::None).unwrap();
        q.values[1] = [-2.0, -1.0];
        q.values[2] = [-9.8, -14.7];
        let theta = induced_policy(&q);
        assert_eq!(theta.actions(), &[C, D, C]);
    }

    #[test]
    fn greedy_q_act_matches_induced_policy() {
        let mut rng = stream(3, Stream::Leader);
        let mut q = QTable::zeros(5, Exploration::EpsilonGreedy(0.0)).unwrap();
        for (i, row) in q.values.iter_mut().enumerate() {
            *row = [i as f64 * 0.3 - 0.5, 0.2 * (i as f64) - 0.1];
        }
        let theta = induced_policy(&q);
        for o in 0..5 {
            assert_eq!(q.act(ObservationId(o), &mut rng), theta.action(ObservationId(o)));
        }
    }

    #[test]
    fn random_leader_policies_are_uniform() {
        let mut rng = stream(4, Stream::Pretrain);
        let n = 100_000;
        let d = (0..n)
            .filter(|_| sample_random_leader_policy(MemoryMode::SingleShot, &mut rng).action(ObservationId(0)).is_defect())
            .count();
        assert!((d as f64 / n as f64 - 0.5).abs() < 0.01);

        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            seen.insert(sample_random_leader_policy(MemoryMode::JointOneStep, &mut rng).index());
        }
        assert_eq!(seen.len(), 32);

        let a = sample_random_leader_policy(MemoryMode::JointOneStep, &mut stream(9, Stream::Pretrain));
        let b = sample_random_leader_policy(MemoryMode::JointOneStep, &mut stream(9, Stream::Pretrain));
        assert_eq!(a, b);
    }

    #[test]
    fn random_leader_chi_square() {
        // 31 degrees of freedom; the 0.999 quantile is about 61.1.
        let mut rng = stream(5, Stream::Pretrain);
        let n = 100_000;
        let mut counts = [0usize; 32];
        for _ in 0..n {
            counts[sample_random_leader_policy(MemoryMode::JointOneStep, &mut rng).index()] += 1;
        }
        let expected = n as f64 / 32.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 61.1, "chi2 = {chi2}");
    }

    #[test]
    fn perturbation() {
        let mut rng = stream(6, Stream::Leader);
        let mut q = QTable::zeros(2, Exploration::ParameterNoise { stddev: 1.0 }).unwrap();
        q.values[0] = [1.0, 2.0];
        assert_eq!(perturb_parameters(&q, 0.0, &mut rng).unwrap(), q);
        assert!(perturb_parameters(&q, -1.0, &mut rng).is_err());

        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let p = perturb_parameters(&q, 1.0, &mut rng).unwrap();
            sum[0] += p.values[0][0] - 1.0;
            sum[1] += p.values[1][1];
        }
        assert!((sum[0] / n as f64).abs() < 0.02);
        assert!((sum[1] / n as f64).abs() < 0.02);
        assert_eq!(q.values[0], [1.0, 2.0]);

        // Small gaps flip the induced action under noise.
        q.values[0] = [0.0, 0.1];
        let base = induced_policy(&q);
        let flips = (0..1000)
            .filter(|_| induced_policy(&perturb_parameters(&q, 1.0, &mut rng).unwrap()) != base)
            .count();
        assert!(flips > 0);
    }

    #[test]
    fn linear_projection_agrees_with_linear_tables() {
        // A table generated by a linear map is reproduced exactly by the projection.
        let (n, k) = (5, 5);
        let bias = [[0.3, -0.2], [0.0, 0.5], [-1.0, 0.25], [0.7, 0.1], [0.2, -0.6]];
        let w = [[0.1, -0.4], [0.5, 0.0], [-0.3, 0.3], [0.05, 0.2], [0.9, -0.8]];
        let table = ContextualFollowerPolicy::table_from_fn(n, k, |o, ctx| {
            let mut l = bias[o.0];
            for (i, a) in ctx.answers.iter().enumerate() {
                let s = if a.is_defect() { 1.0 } else { -1.0 };
                l[0] += s * w[i][0];
                l[1] += s * w[i][1];
            }
            l
        });
        let lin = ContextualFollowerPolicy::linear_from_table(&table).unwrap();
        for o in 0..n {
            for c in 0..1 << k {
                let ctx = Context::from_index(c, k);
                let a = table.logits(ObservationId(o), &ctx);
                let b = lin.logits(ObservationId(o), &ctx);
                assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
                assert_eq!(table.greedy(ObservationId(o), &ctx), lin.greedy(ObservationId(o), &ctx));
            }
        }
    }

    #[test]
    fn policy_files_round_trip() {
        use format::*;
        let det = TabularDeterministicPolicy::tit_for_tat(MemoryMode::JointOneStep);
        assert_eq!(read(&write_deterministic(&det)).unwrap(), PolicyFile::Deterministic(det));

        let sm = SoftmaxTabularPolicy {
            logits: vec![[0.1, -0.3], [1e-17, 2.5]],
        };
        assert_eq!(read(&write_softmax(&sm)).unwrap(), PolicyFile::Softmax(sm));

        let meta = ContextualFollowerPolicy::table_from_fn(3, 3, |o, c| [o.0 as f64 * 0.5, c.index() as f64 - 0.25]);
        assert_eq!(read(&write_contextual(&meta)).unwrap(), PolicyFile::Contextual(meta.clone()));
        let lin = ContextualFollowerPolicy::linear_from_table(&meta).unwrap();
        assert_eq!(read(&write_contextual(&lin)).unwrap(), PolicyFile::Contextual(lin));

        assert!(matches!(read("# deterministic\n0 C\n2 D\n"), Err(Error::Parse { line: 3, .. })));
    }
}

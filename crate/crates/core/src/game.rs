//! Iterated 2×2 matrix games with one-step memory.
//!
//! A game is played for `horizon` rounds. Both agents pick one of two actions
//! each round; the state remembers the previous joint action and each agent's
//! observation is a projection of it, selected by [`MemoryMode`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the two actions available to each agent. Row/column 0 is "cooperate".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Cooperate,
    Defect,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Cooperate, Action::Defect];

    pub fn index(self) -> usize {
        match self {
            Action::Cooperate => 0,
            Action::Defect => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Action> {
        match index {
            0 => Some(Action::Cooperate),
            1 => Some(Action::Defect),
            _ => None,
        }
    }

    pub fn from_bit(defect: bool) -> Action {
        if defect {
            Action::Defect
        } else {
            Action::Cooperate
        }
    }

    pub fn is_defect(self) -> bool {
        self == Action::Defect
    }

    pub fn letter(self) -> char {
        match self {
            Action::Cooperate => 'C',
            Action::Defect => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Action> {
        match c {
            'C' | 'c' | '0' => Some(Action::Cooperate),
            'D' | 'd' | '1' => Some(Action::Defect),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Payoffs for one agent; rows are the leader's action, columns the follower's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffMatrix {
    entries: [[f64; 2]; 2],
}

impl PayoffMatrix {
    pub fn new(entries: [[f64; 2]; 2]) -> Result<Self> {
        for &v in entries.iter().flatten() {
            if !v.is_finite() {
                return Err(Error::NonFinitePayoff(v));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, leader: Action, follower: Action) -> f64 {
        self.entries[leader.index()][follower.index()]
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.entries
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let e = self.entries;
        Self::new([[f(e[0][0]), f(e[0][1])], [f(e[1][0]), f(e[1][1])]])
    }
}

impl fmt::Display for PayoffMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.entries;
        write!(f, "{},{};{},{}", e[0][0], e[0][1], e[1][0], e[1][1])
    }
}

impl FromStr for PayoffMatrix {
    type Err = Error;

    /// Parses `a,b;c,d`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("payoff matrix `{s}` is not of the form a,b;c,d"));
        let rows: Vec<&str> = s.split(';').collect();
        if rows.len() != 2 {
            return Err(bad());
        }
        let mut entries = [[0.0; 2]; 2];
        for (r, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 2 {
                return Err(bad());
            }
            for (c, col) in cols.iter().enumerate() {
                entries[r][c] = col.trim().parse().map_err(|_| bad())?;
            }
        }
        Self::new(entries)
    }
}

/// What each agent remembers from the previous round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryMode {
    /// Both agents see the previous joint action: `[Initial, CC, CD, DC, DD]`.
    JointOneStep,
    /// Each agent sees only the other agent's previous action: `[Initial, OtherC, OtherD]`.
    OtherOnly,
    /// No memory; a single observation.
    SingleShot,
}

impl MemoryMode {
    pub fn observation_count(self) -> usize {
        match self {
            MemoryMode::JointOneStep => 5,
            MemoryMode::OtherOnly => 3,
            MemoryMode::SingleShot => 1,
        }
    }

    pub fn observation_label(self, obs: ObservationId) -> &'static str {
        const JOINT: [&str; 5] = ["Initial", "CC", "CD", "DC", "DD"];
        const OTHER: [&str; 3] = ["Initial", "OtherC", "OtherD"];
        match self {
            MemoryMode::JointOneStep => JOINT.get(obs.0).copied().unwrap_or("?"),
            MemoryMode::OtherOnly => OTHER.get(obs.0).copied().unwrap_or("?"),
            MemoryMode::SingleShot => "Single",
        }
    }

    pub fn from_observation_count(n: usize) -> Option<Self> {
        match n {
            5 => Some(MemoryMode::JointOneStep),
            3 => Some(MemoryMode::OtherOnly),
            1 => Some(MemoryMode::SingleShot),
            _ => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            MemoryMode::JointOneStep => "joint",
            MemoryMode::OtherOnly => "other",
            MemoryMode::SingleShot => "single",
        }
    }
}

impl FromStr for MemoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "joint" => Ok(MemoryMode::JointOneStep),
            "other" => Ok(MemoryMode::OtherOnly),
            "single" => Ok(MemoryMode::SingleShot),
            other => Err(Error::InvalidArgument(format!(
                "memory must be one of joint, other, single; got `{other}`"
            ))),
        }
    }
}

/// Index into the observation set of a memory mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservationId(pub usize);

impl ObservationId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Leader,
    Follower,
}

/// Game state. The previous joint action is stored for every memory mode;
/// [`observe`] projects it to each role's view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GameState {
    pub previous: Option<(Action, Action)>,
    pub step_count: usize,
}

impl GameState {
    pub fn is_initial(&self) -> bool {
        self.previous.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSpec {
    pub name: String,
    pub leader_payoff: PayoffMatrix,
    pub follower_payoff: PayoffMatrix,
    pub horizon: usize,
    pub memory: MemoryMode,
    pub discount: f64,
}

impl MatrixGameSpec {
    pub fn new(
        name: impl Into<String>,
        leader: [[f64; 2]; 2],
        follower: [[f64; 2]; 2],
        horizon: usize,
        memory: MemoryMode,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(Self {
            name: name.into(),
            leader_payoff: PayoffMatrix::new(leader)?,
            follower_payoff: PayoffMatrix::new(follower)?,
            horizon,
            memory,
            discount: DEFAULT_DISCOUNT,
        })
    }

    pub fn observation_count(&self) -> usize {
        self.memory.observation_count()
    }

    pub fn payoff(&self, role: Role) -> &PayoffMatrix {
        match role {
            Role::Leader => &self.leader_payoff,
            Role::Follower => &self.follower_payoff,
        }
    }
}

pub const DEFAULT_DISCOUNT: f64 = 0.99;
pub const CANONICAL_HORIZON: usize = 10;

/// Names of the twelve symmetric iterated games, in table order.
pub const SYMMETRIC_GAMES: [&str; 12] = [
    "prisoners dilemma",
    "stag hunt",
    "assurance",
    "coordination",
    "mixedharmony",
    "harmony",
    "noconflict",
    "deadlock",
    "prisoners delight",
    "hero",
    "battle",
    "chicken",
];

/// The twelve symmetric iterated games plus the single-shot battle of the sexes
/// and the modified prisoner's dilemma.
pub fn canonical_games() -> Vec<MatrixGameSpec> {
    type M = [[f64; 2]; 2];
    let table: [(&str, M, M); 12] = [
        ("prisoners dilemma", [[-1., -3.], [0., -2.]], [[-1., 0.], [-3., -2.]]),
        ("stag hunt", [[0., -3.], [-1., -2.]], [[0., -1.], [-3., -2.]]),
        ("assurance", [[0., -3.], [-2., -1.]], [[0., -2.], [-3., -1.]]),
        ("coordination", [[0., -2.], [-3., -1.]], [[0., -3.], [-2., -1.]]),
        ("mixedharmony", [[0., -1.], [-3., -2.]], [[0., -3.], [-1., -2.]]),
        ("harmony", [[0., -1.], [-2., -3.]], [[0., -2.], [-1., -3.]]),
        ("noconflict", [[0., -2.], [-1., -3.]], [[0., -1.], [-2., -3.]]),
        ("deadlock", [[-2., -3.], [0., -1.]], [[-2., 0.], [-3., -1.]]),
        ("prisoners delight", [[-3., -2.], [0., -1.]], [[-3., 0.], [-2., -1.]]),
        ("hero", [[-3., -1.], [0., -2.]], [[-3., 0.], [-1., -2.]]),
        ("battle", [[-2., -1.], [0., -3.]], [[-2., 0.], [-1., -3.]]),
        ("chicken", [[-1., -2.], [0., -3.]], [[-1., 0.], [-2., -3.]]),
    ];
    let mut games: Vec<MatrixGameSpec> = table
        .iter()
        .map(|(name, l, f)| {
            MatrixGameSpec::new(*name, *l, *f, CANONICAL_HORIZON, MemoryMode::JointOneStep)
                .expect("canonical table is valid")
        })
        .collect();
    games.push(
        MatrixGameSpec::new(
            "battle of the sexes",
            [[2., 0.], [0., 1.]],
            [[1., 0.], [0., 2.]],
            1,
            MemoryMode::SingleShot,
        )
        .expect("valid"),
    );
    games.push(
        MatrixGameSpec::new(
            "prisoners dilemma modified",
            [[0., -2.], [-1., -3.]],
            [[-1., 0.], [-3., -2.]],
            CANONICAL_HORIZON,
            MemoryMode::OtherOnly,
        )
        .expect("valid"),
    );
    games
}

pub fn canonical_game(name: &str) -> Result<MatrixGameSpec> {
    canonical_games()
        .into_iter()
        .find(|g| g.name == name)
        .ok_or_else(|| Error::UnknownGame(name.to_string()))
}

pub fn initial_state(_spec: &MatrixGameSpec) -> GameState {
    GameState {
        previous: None,
        step_count: 0,
    }
}

/// Advances one round. Returns the next state and the (leader, follower) rewards.
pub fn step(
    spec: &MatrixGameSpec,
    state: GameState,
    leader: Action,
    follower: Action,
) -> Result<(GameState, f64, f64)> {
    if state.step_count >= spec.horizon {
        return Err(Error::TerminalState {
            horizon: spec.horizon,
        });
    }
    let next = GameState {
        previous: Some((leader, follower)),
        step_count: state.step_count + 1,
    };
    Ok((
        next,
        spec.leader_payoff.get(leader, follower),
        spec.follower_payoff.get(leader, follower),
    ))
}

pub fn observe(spec: &MatrixGameSpec, state: &GameState, role: Role) -> ObservationId {
    let Some((l, f)) = state.previous else {
        return ObservationId(0);
    };
    match spec.memory {
        MemoryMode::JointOneStep => ObservationId(1 + 2 * l.index() + f.index()),
        MemoryMode::OtherOnly => match role {
            Role::Leader => ObservationId(1 + f.index()),
            Role::Follower => ObservationId(1 + l.index()),
        },
        MemoryMode::SingleShot => ObservationId(0),
    }
}

/// Affine map from the table scale {0,-1,-2,-3} to the centred training scale.
pub const CENTERING_OFFSET: f64 = 1.5;

pub fn scale_rewards(spec: &MatrixGameSpec) -> Result<MatrixGameSpec> {
    let check = |v: f64| -> Result<f64> {
        if [0.0, -1.0, -2.0, -3.0].contains(&v) {
            Ok(v + CENTERING_OFFSET)
        } else {
            Err(Error::NotCanonicalScale(v))
        }
    };
    let mut entries = [[[0.0; 2]; 2]; 2];
    for (k, m) in [spec.leader_payoff, spec.follower_payoff].iter().enumerate() {
        for (r, row) in m.entries().iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                entries[k][r][c] = check(v)?;
            }
        }
    }
    Ok(MatrixGameSpec {
        name: format!("{} (scaled)", spec.name),
        leader_payoff: PayoffMatrix::new(entries[0])?,
        follower_payoff: PayoffMatrix::new(entries[1])?,
        ..spec.clone()
    })
}

/// Parses the flat `key = value` game definition format.
///
/// ```text
/// name = my game
/// leader_payoff = 2,0;0,1
/// follower_payoff = 1,0;0,2
/// horizon = 1
/// memory = single
/// gamma = 0.99
/// ```
pub fn parse_game_file(text: &str) -> Result<MatrixGameSpec> {
    let mut name = None;
    let mut leader = None;
    let mut follower = None;
    let mut horizon = None;
    let mut memory = None;
    let mut gamma = DEFAULT_DISCOUNT;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let value = value.trim();
        match key.trim() {
            "name" => name = Some(value.to_string()),
            "leader_payoff" => leader = Some(value.parse::<PayoffMatrix>().map_err(|e| err(e.to_string()))?),
            "follower_payoff" => follower = Some(value.parse::<PayoffMatrix>().map_err(|e| err(e.to_string()))?),
            "horizon" => {
                horizon = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| err(format!("horizon must be a positive integer, got `{value}`")))?,
                )
            }
            "memory" => memory = Some(value.parse::<MemoryMode>().map_err(|e| err(e.to_string()))?),
            "gamma" => {
                gamma = value
                    .parse::<f64>()
                    .ok()
                    .filter(|g| *g > 0.0 && *g <= 1.0)
                    .ok_or_else(|| err(format!("gamma must be in (0, 1], got `{value}`")))?
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::Parse {
        line: 0,
        message: format!("missing key `{k}`"),
    };
    let mut spec = MatrixGameSpec::new(
        name.ok_or_else(|| missing("name"))?,
        leader.ok_or_else(|| missing("leader_payoff"))?.entries(),
        follower.ok_or_else(|| missing("follower_payoff"))?.entries(),
        horizon.ok_or_else(|| missing("horizon"))?,
        memory.ok_or_else(|| missing("memory"))?,
    )?;
    spec.discount = gamma;
    Ok(spec)
}

pub fn format_game_file(spec: &MatrixGameSpec) -> String {
    format!(
        "name = {}\nleader_payoff = {}\nfollower_payoff = {}\nhorizon = {}\nmemory = {}\ngamma = {}\n",
        spec.name,
        spec.leader_payoff,
        spec.follower_payoff,
        spec.horizon,
        spec.memory.keyword(),
        spec.discount
    )
}

//! Experiment configuration files.
//!
//! Flat `key = value` lines, `#` comments, and four optional sections:
//!
//! ```text
//! name = pd-meta-ppo
//! seeds = 0..5            # or 0,1,2
//! budget = 100000         # combined env steps, pretraining included
//! out = runs/pd
//! scale = table           # or centered
//! verify_iterations = 500
//!
//! [game]
//! name = prisoners dilemma
//! center = auto           # train on the centred scale when the payoffs allow it
//!
//! [oracle]
//! kind = meta             # meta | exact | qlearn
//! representation = table  # meta only: table | linear
//!
//! [leader]
//! algorithm = ppo         # qlearn | reinforce | ppo | es
//!
//! [composer]
//! queries_in_leader_batch = true
//! ```
//!
//! Omitted hyperparameters come from the presets:
//!
//! | role | preset |
//! |---|---|
//! | meta follower | policy gradient, lr 0.02, batch 100, 500 iterations |
//! | inner-loop follower | Q-learning, α 0.1, ε 0.1, 1000 episodes |
//! | leader `reinforce` | lr 0.156, batch 100, 1200 iterations |
//! | leader `ppo` | lr 0.008, batch 1000, 500 iterations, no entropy bonus |
//! | leader `qlearn` | lr 0.001, batch 1024, parameter noise stddev 1.0 |
//! | leader `es` | population 16, elite 0.25, 60 generations |
//!
//! A `[game]` section either names one of the built-in games or defines one
//! inline with the game-file keys (`leader_payoff = a,b;c,d`, ...).

use std::path::PathBuf;

use crate::composer::ComposerConfig;
use crate::error::{Error, Result};
use crate::game::{canonical_game, format_game_file, parse_game_file, MatrixGameSpec, CENTERING_OFFSET};
use crate::learners::{Algorithm, LearnerHyper, Optimizer};
use crate::policy::{ContextualKind, Exploration};

/// Inner-loop follower episodes when `[oracle] kind = qlearn` gives none.
pub const DEFAULT_INNER_EPISODES: usize = 1000;

/// Modified battle of the sexes: the follower gains almost nothing from the leader's preferred outcome.
pub const BOS_MODIFIED: &str = "battle of the sexes modified (variant payoffs)";
/// [`BOS_MODIFIED`] with a -1 leader penalty on miscoordination.
pub const BOS_MODIFIED_PENALTY: &str = "battle of the sexes modified penalty (variant payoffs)";

/// Built-in games plus the two labelled battle-of-the-sexes variants.
pub fn resolve_game(name: &str) -> Result<MatrixGameSpec> {
    use crate::game::MemoryMode::SingleShot;
    let short = |full: &str| full.split(" (").next().unwrap_or(full).to_string();
    let n = name.trim();
    if n == BOS_MODIFIED || n == short(BOS_MODIFIED) {
        MatrixGameSpec::new(BOS_MODIFIED, [[2., 0.], [0., 1.]], [[0.1, 0.], [0., 2.]], 1, SingleShot)
    } else if n == BOS_MODIFIED_PENALTY || n == short(BOS_MODIFIED_PENALTY) {
        MatrixGameSpec::new(BOS_MODIFIED_PENALTY, [[2., -1.], [-1., 1.]], [[0.1, 0.], [0., 2.]], 1, SingleShot)
    } else {
        canonical_game(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    Exact,
    QLearn(LearnerHyper),
    Meta {
        hyper: LearnerHyper,
        representation: ContextualKind,
    },
}

impl OracleSpec {
    pub fn keyword(&self) -> &'static str {
        match self {
            OracleSpec::Exact => "exact",
            OracleSpec::QLearn(_) => "qlearn",
            OracleSpec::Meta { .. } => "meta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportScale {
    Table,
    Centered,
}

impl std::str::FromStr for ReportScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "table" => Ok(ReportScale::Table),
            "centered" | "centred" => Ok(ReportScale::Centered),
            other => Err(Error::InvalidArgument(format!("unknown scale `{other}` (table | centered)"))),
        }
    }
}

impl ReportScale {
    pub fn keyword(self) -> &'static str {
        match self {
            ReportScale::Table => "table",
            ReportScale::Centered => "centered",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Payoffs on the table scale.
    pub game: MatrixGameSpec,
    /// Train on payoffs shifted by the centring offset.
    pub center_rewards: bool,
    pub oracle: OracleSpec,
    pub leader: LearnerHyper,
    pub composer: ComposerConfig,
    pub seeds: Vec<u64>,
    /// Combined env-step budget (pretraining plus leader training).
    pub budget: Option<usize>,
    pub out: PathBuf,
    pub scale: ReportScale,
    pub verify_iterations: usize,
}

impl ExperimentConfig {
    /// Meta oracle, clipped-surrogate leader, seeds 0..5.
    pub fn new(game: MatrixGameSpec) -> Self {
        let center = is_centerable(&game);
        Self {
            name: slug(&game.name),
            game,
            center_rewards: center,
            oracle: OracleSpec::Meta {
                hyper: LearnerHyper::follower_pg(),
                representation: ContextualKind::Table,
            },
            leader: LearnerHyper::leader_ppo(),
            composer: ComposerConfig::default(),
            seeds: (0..5).collect(),
            budget: None,
            out: PathBuf::from("runs"),
            scale: ReportScale::Table,
            verify_iterations: LearnerHyper::follower_pg().iterations,
        }
    }

    /// Per-episode offset added to table-scale play rewards by the reported scale.
    pub fn report_offset(&self) -> f64 {
        match self.scale {
            ReportScale::Table => 0.0,
            ReportScale::Centered => CENTERING_OFFSET * self.game.horizon as f64,
        }
    }

    /// Per-episode offset added to table-scale play rewards during training.
    pub fn training_offset(&self) -> f64 {
        if self.center_rewards {
            CENTERING_OFFSET * self.game.horizon as f64
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.budget == Some(0) {
            return bad("budget must be positive".into());
        }
        if self.verify_iterations == 0 {
            return bad("verify_iterations must be positive".into());
        }
        let centerable = is_centerable(&self.game);
        if self.center_rewards && !centerable {
            return bad(format!("`{}` has payoffs off the table scale and cannot be centred", self.game.name));
        }
        if self.scale == ReportScale::Centered && !centerable {
            return bad(format!("`{}` has no centred scale", self.game.name));
        }
        let inner = matches!(self.oracle, OracleSpec::QLearn(_));
        if !inner && self.composer.reward_during_initial {
            return bad("reward_during_initial requires oracle kind qlearn".into());
        }
        if !inner && !self.composer.follower_reset {
            return bad("follower_reset = false requires oracle kind qlearn".into());
        }
        self.leader.validate()?;
        match &self.oracle {
            OracleSpec::Exact => Ok(()),
            OracleSpec::QLearn(h) => {
                if h.algorithm != Algorithm::QLearn {
                    return bad("inner-loop follower must use Q-learning".into());
                }
                h.validate()
            }
            OracleSpec::Meta { hyper, .. } => hyper.validate(),
        }
    }
}

fn is_centerable(game: &MatrixGameSpec) -> bool {
    crate::game::scale_rewards(game).is_ok()
}

/// Lowercase, `-` for anything not alphanumeric.
pub fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_matches('-').to_string()
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| perr(e.line, format!("`{}` expects {what}, got `{}`", e.key, e.value)))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        v => Err(perr(e.line, format!("`{}` expects true or false, got `{v}`", e.key))),
    }
}

/// `0..5`, `3`, or `0,2,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("seeds `{s}` is not a list like 0,1,2 or a range like 0..5"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn format_seeds(seeds: &[u64]) -> String {
    let contiguous = seeds.windows(2).all(|w| w[1] == w[0] + 1);
    match (seeds.first(), seeds.last()) {
        (Some(a), Some(b)) if contiguous && seeds.len() > 1 => format!("{a}..{}", b + 1),
        _ => seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    }
}

fn parse_exploration(e: &Entry) -> Result<Exploration> {
    let mut t = e.value.split_whitespace();
    let kind = t.next().unwrap_or("");
    let arg = t.next().map(|v| {
        v.parse::<f64>()
            .map_err(|_| perr(e.line, format!("exploration scale must be a number, got `{v}`")))
    });
    let ex = match (kind, arg) {
        ("none", None) => Exploration::None,
        ("epsilon", Some(v)) => Exploration::EpsilonGreedy(v?),
        ("parameter_noise", Some(v)) => Exploration::ParameterNoise { stddev: v? },
        _ => {
            return Err(perr(
                e.line,
                format!("exploration expects `none`, `epsilon <e>` or `parameter_noise <stddev>`, got `{}`", e.value),
            ))
        }
    };
    if t.next().is_some() {
        return Err(perr(e.line, "trailing tokens after exploration"));
    }
    Ok(ex)
}

fn format_exploration(e: Exploration) -> String {
    match e {
        Exploration::None => "none".into(),
        Exploration::EpsilonGreedy(v) => format!("epsilon {v:?}"),
        Exploration::ParameterNoise { stddev } => format!("parameter_noise {stddev:?}"),
    }
}

/// Applies one hyperparameter line; `Ok(false)` if the key is not a hyperparameter.
fn apply_hyper(h: &mut LearnerHyper, e: &Entry) -> Result<bool> {
    let (int, real) = ("a non-negative integer", "a number");
    match e.key.as_str() {
        "lr" => h.lr = parse_num(e, real)?,
        "gamma" => h.gamma = parse_num(e, real)?,
        "iterations" => h.iterations = parse_num(e, int)?,
        "batch_steps" => h.batch_steps = parse_num(e, int)?,
        "exploration" => h.exploration = parse_exploration(e)?,
        "epsilon" => h.exploration = Exploration::EpsilonGreedy(parse_num(e, real)?),
        "exploration_decay" => h.exploration_decay = parse_num(e, int)?,
        "adaptive_noise" => h.adaptive_noise = parse_bool(e)?,
        "q_init" => h.q_init = parse_num(e, real)?,
        "optimizer" => {
            h.optimizer = match e.value.as_str() {
                "adam" => Optimizer::Adam,
                "sgd" => Optimizer::Sgd,
                v => return Err(perr(e.line, format!("optimizer expects adam or sgd, got `{v}`"))),
            }
        }
        "epochs" => h.epochs = parse_num(e, int)?,
        "clip" => h.clip = parse_num(e, real)?,
        "population" => h.population = parse_num(e, int)?,
        "elite_fraction" => h.elite_fraction = parse_num(e, real)?,
        "noise_std" => h.noise_std = parse_num(e, real)?,
        "baseline" => h.baseline = parse_bool(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn format_hyper(h: &LearnerHyper) -> String {
    let opt = match h.optimizer {
        Optimizer::Adam => "adam",
        Optimizer::Sgd => "sgd",
    };
    format!(
        "lr = {:?}\ngamma = {:?}\niterations = {}\nbatch_steps = {}\nexploration = {}\nexploration_decay = {}\n\
         adaptive_noise = {}\nq_init = {:?}\noptimizer = {opt}\nepochs = {}\nclip = {:?}\npopulation = {}\n\
         elite_fraction = {:?}\nnoise_std = {:?}\nbaseline = {}\n",
        h.lr,
        h.gamma,
        h.iterations,
        h.batch_steps,
        format_exploration(h.exploration),
        h.exploration_decay,
        h.adaptive_noise,
        h.q_init,
        h.epochs,
        h.clip,
        h.population,
        h.elite_fraction,
        h.noise_std,
        h.baseline,
    )
}

fn leader_preset(algorithm: Algorithm) -> LearnerHyper {
    match algorithm {
        Algorithm::QLearn => LearnerHyper::leader_qlearn(),
        Algorithm::Reinforce => LearnerHyper::leader_pg(),
        Algorithm::ClippedSurrogate => LearnerHyper::leader_ppo(),
        Algorithm::EvolutionStrategies => LearnerHyper::leader_es(),
    }
}

const GAME_FILE_KEYS: [&str; 5] = ["leader_payoff", "follower_payoff", "horizon", "memory", "gamma"];

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut sections: [Vec<Entry>; 5] = Default::default();
    let names = ["", "game", "oracle", "leader", "composer"];
    let mut current = 0;
    let mut seen = [true, false, false, false, false];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        if let Some(sec) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = names
                .iter()
                .position(|n| !n.is_empty() && *n == sec.trim())
                .ok_or_else(|| perr(line, format!("unknown section `[{sec}]`")))?;
            if seen[current] {
                return Err(perr(line, format!("duplicate section `[{sec}]`")));
            }
            seen[current] = true;
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| perr(line, format!("expected `key = value`, got `{t}`")))?;
        let entry = Entry {
            line,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        };
        if sections[current].iter().any(|e| e.key == entry.key) {
            return Err(perr(line, format!("duplicate key `{}`", entry.key)));
        }
        sections[current].push(entry);
    }
    let [top, game_s, oracle_s, leader_s, composer_s] = sections;

    let (game, center_entry) = parse_game_section(text, &game_s)?;
    let mut config = ExperimentConfig::new(game);

    for e in &top {
        match e.key.as_str() {
            "name" => config.name = e.value.clone(),
            "seeds" => config.seeds = parse_seeds(&e.value).map_err(|err| perr(e.line, err.to_string()))?,
            "budget" => {
                let b: usize = parse_num(e, "a positive integer")?;
                if b == 0 {
                    return Err(perr(e.line, "budget must be positive"));
                }
                config.budget = Some(b);
            }
            "out" => config.out = PathBuf::from(&e.value),
            "scale" => config.scale = e.value.parse().map_err(|err: Error| perr(e.line, err.to_string()))?,
            "verify_iterations" => config.verify_iterations = parse_num(e, "a positive integer")?,
            k => return Err(perr(e.line, format!("unknown key `{k}`"))),
        }
    }
    if let Some(e) = &center_entry {
        config.center_rewards = match e.value.as_str() {
            "auto" => is_centerable(&config.game),
            _ => parse_bool(e)?,
        };
        if config.center_rewards && !is_centerable(&config.game) {
            return Err(perr(e.line, "payoffs are off the table scale and cannot be centred"));
        }
    }

    config.oracle = parse_oracle_section(&oracle_s)?;
    config.leader = parse_leader_section(&leader_s)?;
    for e in &composer_s {
        let c = &mut config.composer;
        match e.key.as_str() {
            "queries_in_leader_batch" => c.queries_in_leader_batch = parse_bool(e)?,
            "reward_during_initial" => c.reward_during_initial = parse_bool(e)?,
            "leader_phase_bit" => c.leader_phase_bit = parse_bool(e)?,
            "follower_reset" => c.follower_reset = parse_bool(e)?,
            "inner_loop_keep" => {
                c.inner_loop_keep = match e.value.as_str() {
                    "all" => None,
                    _ => Some(parse_num(e, "an integer or `all`")?),
                }
            }
            k => return Err(perr(e.line, format!("unknown key `{k}` in [composer]"))),
        }
        let needs_inner = (c.reward_during_initial && e.key == "reward_during_initial")
            || (!c.follower_reset && e.key == "follower_reset");
        if needs_inner && !matches!(config.oracle, OracleSpec::QLearn(_)) {
            return Err(perr(e.line, format!("`{}` requires [oracle] kind = qlearn", e.key)));
        }
    }
    config.validate()?;
    Ok(config)
}

fn parse_game_section(text: &str, entries: &[Entry]) -> Result<(MatrixGameSpec, Option<Entry>)> {
    let mut name = None;
    let mut center = None;
    let mut file_keys = Vec::new();
    for e in entries {
        match e.key.as_str() {
            "name" => name = Some(e),
            "center" => center = Some(e.clone()),
            k if GAME_FILE_KEYS.contains(&k) => file_keys.push(e),
            k => return Err(perr(e.line, format!("unknown key `{k}` in [game]"))),
        }
    }
    let name = name.ok_or_else(|| perr(0, "missing game: [game] needs `name`"))?;
    let inline = file_keys.iter().any(|e| e.key != "gamma");
    let game = if inline {
        // Blank every other line so parse errors keep the config's line numbers.
        let keep: Vec<usize> = std::iter::once(name).chain(file_keys.iter().copied()).map(|e| e.line).collect();
        let sub: Vec<&str> = text
            .lines()
            .enumerate()
            .map(|(i, l)| if keep.contains(&(i + 1)) { l } else { "" })
            .collect();
        parse_game_file(&sub.join("\n")).map_err(|err| match err {
            Error::Parse { line: 0, message } => perr(name.line, format!("inline game: {message}")),
            other => other,
        })?
    } else {
        let mut g = resolve_game(&name.value).map_err(|err| perr(name.line, err.to_string()))?;
        if let Some(e) = file_keys.first() {
            g.discount = parse_num(e, "a number")?;
            if !(g.discount > 0.0 && g.discount <= 1.0) {
                return Err(perr(e.line, "gamma must be in (0, 1]"));
            }
        }
        g
    };
    Ok((game, center))
}

fn parse_oracle_section(entries: &[Entry]) -> Result<OracleSpec> {
    let kind = entries.iter().find(|e| e.key == "kind");
    let kind_str = kind.map(|e| e.value.as_str()).unwrap_or("meta");
    let mut hyper = match kind_str {
        "meta" => LearnerHyper::follower_pg(),
        "qlearn" => LearnerHyper::follower_qlearn(DEFAULT_INNER_EPISODES),
        "exact" => LearnerHyper::follower_pg(),
        other => {
            return Err(perr(
                kind.map_or(0, |e| e.line),
                format!("unknown oracle kind `{other}` (meta | exact | qlearn)"),
            ))
        }
    };
    let mut representation = ContextualKind::Table;
    for e in entries.iter().filter(|e| e.key != "kind") {
        let handled = match (kind_str, e.key.as_str()) {
            ("exact", k) => return Err(perr(e.line, format!("unknown key `{k}` for the exact oracle"))),
            ("meta", "representation") => {
                representation = match e.value.as_str() {
                    "table" => ContextualKind::Table,
                    "linear" => ContextualKind::Linear,
                    v => return Err(perr(e.line, format!("representation expects table or linear, got `{v}`"))),
                };
                true
            }
            ("qlearn", "episodes") => {
                hyper.iterations = parse_num(e, "a non-negative integer")?;
                true
            }
            _ => apply_hyper(&mut hyper, e)?,
        };
        if !handled {
            return Err(perr(e.line, format!("unknown key `{}` in [oracle]", e.key)));
        }
    }
    let check = |h: &LearnerHyper| {
        h.validate()
            .map_err(|err| perr(entries.first().map_or(0, |e| e.line), err.to_string()))
    };
    Ok(match kind_str {
        "exact" => OracleSpec::Exact,
        "qlearn" => {
            check(&hyper)?;
            OracleSpec::QLearn(hyper)
        }
        _ => {
            check(&hyper)?;
            OracleSpec::Meta { hyper, representation }
        }
    })
}

fn parse_leader_section(entries: &[Entry]) -> Result<LearnerHyper> {
    let algo = entries.iter().find(|e| e.key == "algorithm");
    let algorithm = match algo {
        Some(e) => e.value.parse::<Algorithm>().map_err(|err| perr(e.line, err.to_string()))?,
        None => Algorithm::ClippedSurrogate,
    };
    let mut hyper = leader_preset(algorithm);
    for e in entries.iter().filter(|e| e.key != "algorithm") {
        if !apply_hyper(&mut hyper, e)? {
            return Err(perr(e.line, format!("unknown key `{}` in [leader]", e.key)));
        }
    }
    hyper
        .validate()
        .map_err(|err| perr(entries.first().map_or(0, |e| e.line), err.to_string()))?;
    Ok(hyper)
}

/// Writes every field explicitly; `parse_config(&format_config(c)) == c`.
pub fn format_config(c: &ExperimentConfig) -> String {
    let mut s = format!("name = {}\nseeds = {}\n", c.name, format_seeds(&c.seeds));
    if let Some(b) = c.budget {
        s += &format!("budget = {b}\n");
    }
    s += &format!(
        "out = {}\nscale = {}\nverify_iterations = {}\n\n[game]\n{}center = {}\n\n[oracle]\nkind = {}\n",
        c.out.display(),
        c.scale.keyword(),
        c.verify_iterations,
        format_game_file(&c.game),
        c.center_rewards,
        c.oracle.keyword()
    );
    match &c.oracle {
        OracleSpec::Exact => {}
        OracleSpec::QLearn(h) => s += &format_hyper(h),
        OracleSpec::Meta { hyper, representation } => {
            let r = match representation {
                ContextualKind::Table => "table",
                ContextualKind::Linear => "linear",
            };
            s += &format!("representation = {r}\n{}", format_hyper(hyper));
        }
    }
    let cc = &c.composer;
    s += &format!(
        "\n[leader]\nalgorithm = {}\n{}\n[composer]\nqueries_in_leader_batch = {}\nreward_during_initial = {}\n\
         leader_phase_bit = {}\nfollower_reset = {}\ninner_loop_keep = {}\n",
        c.leader.algorithm.keyword(),
        format_hyper(&c.leader),
        cc.queries_in_leader_batch,
        cc.reward_during_initial,
        cc.leader_phase_bit,
        cc.follower_reset,
        cc.inner_loop_keep.map_or("all".to_string(), |k| k.to_string()),
    );
    s
}

//! One training run per seed: pretraining, leader training, verification.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::composer::compose_episode;
use crate::error::{Error, Result};
use crate::game::scale_rewards;
use crate::learners::{train_leader_budgeted, LeaderPolicy, LearnerHyper};
use crate::oracle::{exact_best_response, pretrain_meta_follower, respond, OracleKind};
use crate::policy::format::{write, PolicyFile};
use crate::policy::{ContextualFollowerPolicy, FrozenPolicy, Policy, TabularDeterministicPolicy};
use crate::rng::RngStreams;
use crate::solver::{evaluate_policy_pair, solve_stackelberg, VerificationReport};

use super::config::{format_config, slug, ExperimentConfig, OracleSpec};

/// Window of trailing env steps averaged into a run's final reward.
pub const FINAL_WINDOW: usize = 10_000;

pub const CURVE_HEADER: [&str; 5] = [
    "run_id",
    "seed",
    "env_steps",
    "leader_mean_episode_reward",
    "follower_mean_episode_reward",
];

pub const SUMMARY_HEADER: [&str; 14] = [
    "run_id",
    "seed",
    "game",
    "scale",
    "pretrain_steps",
    "env_steps",
    "final_leader_reward",
    "final_follower_reward",
    "greedy_leader_value",
    "greedy_follower_value",
    "solver_leader_value",
    "follower_improvement",
    "leader_value_change",
    "equilibrium",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub run_id: String,
    pub seed: u64,
    /// Combined steps: pretraining plus every composed leader episode so far.
    pub env_steps: usize,
    /// Play segment only.
    pub leader_reward: f64,
    pub follower_reward: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    pub game: String,
    pub curve: Vec<CurvePoint>,
    pub pretrain_steps: usize,
    pub env_steps: usize,
    pub leader: LeaderPolicy,
    pub meta: Option<Arc<ContextualFollowerPolicy>>,
    /// Greedy leader answers to queries, and its greedy play policy.
    pub greedy_query: TabularDeterministicPolicy,
    pub greedy_play: TabularDeterministicPolicy,
    /// Exact best response to `greedy_query`, played against `greedy_play`; reported scale.
    pub greedy_leader_value: f64,
    pub greedy_follower_value: f64,
    /// Best deterministic-commitment value; reported scale.
    pub solver_leader_value: f64,
    /// The follower the oracle delivered to the final leader.
    pub entry_follower: TabularDeterministicPolicy,
    pub verification: VerificationReport,
    pub final_leader_reward: f64,
    pub final_follower_reward: f64,
}

impl RunResult {
    pub fn equilibrium(&self) -> bool {
        self.verification.passed
    }
}

pub fn run_id(config: &ExperimentConfig, seed: u64) -> String {
    format!("{}-s{seed}", slug(&config.name))
}

/// Mean of the curve points within [`FINAL_WINDOW`] steps of the last one.
pub fn final_rewards(curve: &[CurvePoint]) -> (f64, f64) {
    let Some(last) = curve.last() else {
        return (f64::NAN, f64::NAN);
    };
    let tail: Vec<&CurvePoint> = curve
        .iter()
        .filter(|p| p.env_steps + FINAL_WINDOW > last.env_steps)
        .collect();
    let k = tail.len() as f64;
    (
        tail.iter().map(|p| p.leader_reward).sum::<f64>() / k,
        tail.iter().map(|p| p.follower_reward).sum::<f64>() / k,
    )
}

/// Trains and verifies one seed. Deterministic in `(config, seed)`.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let table = &config.game;
    let train_game = if config.center_rewards {
        scale_rewards(table)?
    } else {
        table.clone()
    };
    // Training-scale episode reward minus this gives the reported scale.
    let shift = config.training_offset() - config.report_offset();
    let mut rng = RngStreams::new(seed);
    let (oracle, pretrain_steps, meta) = match &config.oracle {
        OracleSpec::Exact => (OracleKind::ExactBestResponse, 0, None),
        OracleSpec::QLearn(h) => (OracleKind::QLearnInnerLoop(h.clone()), 0, None),
        OracleSpec::Meta { hyper, representation } => {
            let pre = pretrain_meta_follower(&train_game, hyper, *representation, &mut rng.pretrain)?;
            let m = Arc::new(pre.policy);
            (OracleKind::ContextualMeta(m.clone()), pre.env_steps, Some(m))
        }
    };
    let leader_budget = config.budget.map(|b| b.saturating_sub(pretrain_steps));
    let out = train_leader_budgeted(
        &train_game,
        &oracle,
        config.composer,
        &config.leader,
        leader_budget,
        &mut rng.leader,
    )?;

    let id = run_id(config, seed);
    let curve: Vec<CurvePoint> = out
        .curve
        .iter()
        .map(|p| CurvePoint {
            run_id: id.clone(),
            seed,
            env_steps: pretrain_steps + p.env_steps,
            leader_reward: p.leader_reward - shift,
            follower_reward: p.follower_reward - shift,
        })
        .collect();
    let (final_leader_reward, final_follower_reward) = final_rewards(&curve);

    let n = table.observation_count();
    let phase_bit = config.composer.leader_phase_bit;
    let exploit = out.policy.exploit();
    let play = out.policy.play_policy(n, phase_bit);
    let greedy_query = FrozenPolicy::rows(exploit.as_policy(), 0, n).to_deterministic();
    let greedy_play = play.to_deterministic();
    let br = exact_best_response(table, &greedy_query)?;
    let (gl, gf) = evaluate_policy_pair(table, &greedy_play, &br.follower)?;

    let entry_follower = respond(&oracle, &train_game, &greedy_query, &mut rng.verify)?.follower;
    let verification = crate::solver::verify_equilibrium(
        table,
        &play,
        &entry_follower,
        &LearnerHyper::follower_pg(),
        config.verify_iterations,
        &mut rng.verify,
    )?;
    let solver_leader_value = solve_stackelberg(table)?.leader_value + config.report_offset();

    Ok(RunResult {
        run_id: id,
        seed,
        game: table.name.clone(),
        curve,
        pretrain_steps,
        env_steps: pretrain_steps + out.env_steps,
        leader: out.policy,
        meta,
        greedy_query,
        greedy_play,
        greedy_leader_value: gl + config.report_offset(),
        greedy_follower_value: gf + config.report_offset(),
        solver_leader_value,
        entry_follower,
        verification,
        final_leader_reward,
        final_follower_reward,
    })
}

/// One composed episode of the final greedy leader, as `segment obs phase action reward` lines.
pub fn trace_final_episode(config: &ExperimentConfig, result: &RunResult) -> Result<String> {
    let train_game = if config.center_rewards {
        scale_rewards(&config.game)?
    } else {
        config.game.clone()
    };
    let oracle = match (&config.oracle, &result.meta) {
        (OracleSpec::Meta { .. }, Some(m)) => OracleKind::ContextualMeta(m.clone()),
        (OracleSpec::QLearn(h), _) => OracleKind::QLearnInnerLoop(h.clone()),
        _ => OracleKind::ExactBestResponse,
    };
    let mut rng = crate::rng::stream(result.seed, crate::rng::Stream::Composer);
    let leader = result.leader.exploit();
    Ok(compose_episode(&train_game, leader.as_query(), &oracle, config.composer, &mut rng)?.trace_dump())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn curve_csv(curve: &[CurvePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for p in curve {
        w.write_record([
            p.run_id.clone(),
            p.seed.to_string(),
            p.env_steps.to_string(),
            p.leader_reward.to_string(),
            p.follower_reward.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a curve file; the header must match exactly and steps must increase per run.
pub fn read_curve_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = r.records();
    let header = records.next().ok_or(Error::Empty("curve file"))?.map_err(csv_err)?;
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", CURVE_HEADER.join(",")),
        });
    }
    let mut out: Vec<CurvePoint> = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        if rec.len() != CURVE_HEADER.len() {
            return Err(bad("field count"));
        }
        let p = CurvePoint {
            run_id: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            env_steps: rec[2].parse().map_err(|_| bad("env_steps"))?,
            leader_reward: rec[3].parse().map_err(|_| bad("leader reward"))?,
            follower_reward: rec[4].parse().map_err(|_| bad("follower reward"))?,
        };
        if let Some(prev) = out.iter().rev().find(|q| q.run_id == p.run_id) {
            if p.env_steps <= prev.env_steps {
                return Err(bad("env_steps (must increase within a run)"));
            }
        }
        out.push(p);
    }
    Ok(out)
}

pub fn summary_csv(config: &ExperimentConfig, results: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in results {
        let v = &r.verification;
        w.write_record([
            r.run_id.clone(),
            r.seed.to_string(),
            r.game.clone(),
            config.scale.keyword().to_string(),
            r.pretrain_steps.to_string(),
            r.env_steps.to_string(),
            r.final_leader_reward.to_string(),
            r.final_follower_reward.to_string(),
            r.greedy_leader_value.to_string(),
            r.greedy_follower_value.to_string(),
            r.solver_leader_value.to_string(),
            v.follower_improvement.to_string(),
            (v.leader_value_after - v.leader_value_before).to_string(),
            r.equilibrium().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Solver reference value recorded in a summary file.
pub fn read_summary_reference(text: &str) -> Result<f64> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let idx = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .position(|h| h == "solver_leader_value")
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "summary has no solver_leader_value column".into(),
        })?;
    let rec = r
        .records()
        .next()
        .ok_or(Error::Empty("summary"))?
        .map_err(csv_err)?;
    rec.get(idx).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
        line: 2,
        message: "bad solver_leader_value".into(),
    })
}

fn leader_file(p: &LeaderPolicy) -> PolicyFile {
    match p {
        LeaderPolicy::Deterministic(d) => PolicyFile::Deterministic(d.clone()),
        LeaderPolicy::Softmax(s) => PolicyFile::Softmax(s.clone()),
        LeaderPolicy::Q(q) => PolicyFile::Q(q.clone()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `<run_id>.csv`, `<run_id>.leader.policy` and, for a meta oracle, `<run_id>.follower.policy`.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join(format!("{}.csv", result.run_id)), &curve_csv(&result.curve)?)?;
    write_file(
        &dir.join(format!("{}.leader.policy", result.run_id)),
        &write(&leader_file(&result.leader)),
    )?;
    if let Some(m) = &result.meta {
        write_file(
            &dir.join(format!("{}.follower.policy", result.run_id)),
            &write(&PolicyFile::Contextual((**m).clone())),
        )?;
    }
    Ok(())
}

/// Writes `summary.csv` and the expanded `experiment.cfg`.
pub fn write_summary(config: &ExperimentConfig, results: &[RunResult]) -> Result<()> {
    std::fs::create_dir_all(&config.out).map_err(|e| Error::Io(format!("{}: {e}", config.out.display())))?;
    write_file(&config.out.join("summary.csv"), &summary_csv(config, results)?)?;
    write_file(&config.out.join("experiment.cfg"), &format_config(config))
}

/// Runs every seed in order and writes all outputs under `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let r = run_seed(config, seed)?;
        write_run(&config.out, &r)?;
        results.push(r);
    }
    write_summary(config, &results)?;
    Ok(results)
}

/// One row per run, aligned for terminal output.
pub fn summary_table(results: &[RunResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<40} {:>10} {:>10} {:>10} {:>8} {:>11}",
        "run", "final", "greedy", "solver", "steps", "equilibrium"
    );
    for r in results {
        let _ = writeln!(
            s,
            "{:<40} {:>10.3} {:>10.3} {:>10.3} {:>8} {:>11}",
            r.run_id,
            r.final_leader_reward,
            r.greedy_leader_value,
            r.solver_leader_value,
            r.env_steps,
            r.equilibrium()
        );
    }
    s
}

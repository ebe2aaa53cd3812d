//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::sync::Arc;

use stackelberg_core::composer::{check_lemma_conditions, Composer, ComposerConfig, Segment};
use stackelberg_core::game::{canonical_games, scale_rewards, Action, MatrixGameSpec};
use stackelberg_core::harness::{curve_csv, run_seed, ExperimentConfig};
use stackelberg_core::learners::{score_gradient, LearnerHyper, PgSample};
use stackelberg_core::oracle::{enumerate_query_schedule, exact_best_response, respond, CountingLeader, OracleKind};
use stackelberg_core::policy::{
    linear_logits, softmax2, ContextualFollowerPolicy, TabularDeterministicPolicy,
};
use stackelberg_core::rng::{stream, Stream};
use stackelberg_core::solver::{evaluate_policy_pair, solve_stackelberg, verify_equilibrium, TIE_EPS};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn games() -> Vec<MatrixGameSpec> {
    canonical_games()
}

/// Meta follower with arbitrary logits; only its shape matters to the composer.
pub fn random_meta(game: &MatrixGameSpec, seed: u64) -> Arc<ContextualFollowerPolicy> {
    use rand::Rng;
    let k = enumerate_query_schedule(game.memory).len();
    let mut rng = stream(seed, Stream::Pretrain);
    let vals: Vec<[f64; 2]> = (0..game.observation_count() << k)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    Arc::new(ContextualFollowerPolicy::table_from_fn(game.observation_count(), k, |o, c| {
        vals[(o.0 << k) + c.index()]
    }))
}

/// Lengths, zero query rewards, context fidelity and leader invariance of one composed episode.
pub fn composer_invariants(game: &MatrixGameSpec, leader_index: usize, oracle: &OracleKind, config: ComposerConfig, seed: u64) -> Check {
    let n = game.observation_count();
    let leader = TabularDeterministicPolicy::from_index(leader_index % TabularDeterministicPolicy::count(n), n);
    let mut rng = stream(seed, Stream::Composer);
    let ep = Composer::new(config)
        .compose_episode(game, &leader, oracle, &mut rng)
        .map_err(|e| e.to_string())?;
    let schedule = enumerate_query_schedule(game.memory);
    let expected_query = match oracle {
        OracleKind::QLearnInnerLoop(h) => {
            h.iterations.min(config.inner_loop_keep.unwrap_or(usize::MAX)) * game.horizon
        }
        _ => schedule.len(),
    };
    let expected_query = if config.queries_in_leader_batch { expected_query } else { 0 };
    ensure!(ep.query_len() == expected_query, "query segment {} != {expected_query}", ep.query_len());
    let play: Vec<_> = ep.steps.iter().filter(|s| s.segment == Segment::Play).collect();
    ensure!(play.len() == game.horizon, "play segment {} != horizon {}", play.len(), game.horizon);
    ensure!(
        ep.steps.iter().position(|s| s.segment == Segment::Play) == Some(ep.query_len()),
        "query steps must precede play steps"
    );
    if !config.reward_during_initial {
        ensure!(
            ep.steps.iter().filter(|s| s.segment == Segment::Query).all(|s| s.reward == 0.0),
            "query segment carries reward"
        );
    }
    // A memory-less leader answers queries exactly as it plays.
    for s in &ep.steps {
        ensure!(s.action == leader.action(s.obs), "leader answered {} at {:?}, policy says {}", s.action, s.obs, leader.action(s.obs));
    }
    if let (OracleKind::ContextualMeta(m), true) = (oracle, config.queries_in_leader_batch) {
        let ctx = ep.context.clone().ok_or("meta episode without context")?;
        let want: Vec<Action> = schedule.observations.iter().map(|&o| leader.action(o)).collect();
        ensure!(ctx.answers == want, "context {ctx} does not match leader answers");
        ensure!(ep.follower_used == m.curry(&ctx), "follower is not the meta policy curried on the context");
    }
    if matches!(oracle, OracleKind::ExactBestResponse) {
        let lemma = check_lemma_conditions(&ep, game, &leader).map_err(|e| e.to_string())?;
        ensure!(lemma.best_response_holds, "exact oracle follower is not a best response");
        ensure!(
            (ep.play_reward() - evaluate_policy_pair(game, &leader, &ep.follower_used).unwrap().0).abs() < 1e-9,
            "play reward differs from exact evaluation"
        );
    }
    Ok(())
}

/// Query oracles touch the leader exactly once per scheduled observation.
pub fn oracle_purity(game: &MatrixGameSpec, leader_index: usize, seed: u64) -> Check {
    let n = game.observation_count();
    let leader = TabularDeterministicPolicy::from_index(leader_index % TabularDeterministicPolicy::count(n), n);
    let schedule_len = enumerate_query_schedule(game.memory).len();
    for oracle in [OracleKind::ExactBestResponse, OracleKind::ContextualMeta(random_meta(game, seed))] {
        let counting = CountingLeader::new(&leader);
        let mut rng = stream(seed, Stream::Oracle);
        respond(&oracle, game, &counting, &mut rng).map_err(|e| e.to_string())?;
        ensure!(
            counting.calls() == schedule_len,
            "{} oracle made {} leader calls, schedule has {schedule_len}",
            oracle.keyword(),
            counting.calls()
        );
    }
    let episodes = 3;
    let counting = CountingLeader::new(&leader);
    let mut rng = stream(seed, Stream::Oracle);
    respond(&OracleKind::QLearnInnerLoop(LearnerHyper::follower_qlearn(episodes)), game, &counting, &mut rng)
        .map_err(|e| e.to_string())?;
    ensure!(counting.calls() == episodes * game.horizon, "inner loop made {} leader calls", counting.calls());
    Ok(())
}

fn weighted_log_likelihood(params: &[[f64; 2]], samples: &[PgSample], weights: &[f64]) -> f64 {
    samples
        .iter()
        .zip(weights)
        .map(|(s, w)| w * softmax2(linear_logits(params, &s.features))[s.action.index()].ln())
        .sum()
}

/// Analytic score gradient against central differences; returns the largest error.
pub fn score_gradient_error(params: &[[f64; 2]], samples: &[PgSample], weights: &[f64]) -> f64 {
    let grad = score_gradient(params, samples, weights);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        for b in 0..2 {
            let mut up = params.to_vec();
            let mut down = params.to_vec();
            up[i][b] += h;
            down[i][b] -= h;
            let fd = (weighted_log_likelihood(&up, samples, weights) - weighted_log_likelihood(&down, samples, weights)) / (2.0 * h);
            worst = worst.max((fd - grad[i][b]).abs());
        }
    }
    worst
}

/// The exact best response is optimal among all follower policies and obeys the tie rule.
pub fn best_response_reenumeration(game: &MatrixGameSpec, leader_index: usize) -> Check {
    let n = game.observation_count();
    let leader = TabularDeterministicPolicy::from_index(leader_index % TabularDeterministicPolicy::count(n), n);
    let br = exact_best_response(game, &leader).map_err(|e| e.to_string())?;
    let mut best_f = f64::NEG_INFINITY;
    let mut best_l_at_best_f = f64::NEG_INFINITY;
    for f in TabularDeterministicPolicy::all(n) {
        let (vl, vf) = evaluate_policy_pair(game, &leader, &f).unwrap();
        if vf > best_f + TIE_EPS {
            best_f = vf;
            best_l_at_best_f = vl;
        } else if (vf - best_f).abs() <= TIE_EPS {
            best_l_at_best_f = best_l_at_best_f.max(vl);
        }
    }
    ensure!((br.follower_value - best_f).abs() < 1e-9, "follower value {} != enumerated {best_f}", br.follower_value);
    ensure!(
        (br.leader_value - best_l_at_best_f).abs() < 1e-9,
        "tie not broken toward the leader: {} vs {best_l_at_best_f}",
        br.leader_value
    );
    Ok(())
}

/// A positive affine map of both payoffs leaves the solver's argmax unchanged.
pub fn solver_scale_invariance(game: &MatrixGameSpec, a: f64, b: f64) -> Check {
    let map = |g: &MatrixGameSpec| -> MatrixGameSpec {
        MatrixGameSpec {
            leader_payoff: g.leader_payoff.map(|x| a * x + b).unwrap(),
            follower_payoff: g.follower_payoff.map(|x| a * x + b).unwrap(),
            ..g.clone()
        }
    };
    let base = solve_stackelberg(game).map_err(|e| e.to_string())?;
    let mapped = solve_stackelberg(&map(game)).map_err(|e| e.to_string())?;
    ensure!(base.leader == mapped.leader, "{}: leader {} became {}", game.name, base.leader, mapped.leader);
    let h = game.horizon as f64;
    ensure!(
        (mapped.leader_value - (a * base.leader_value + b * h)).abs() < 1e-9,
        "{}: value did not map affinely",
        game.name
    );
    if let Ok(centred) = scale_rewards(game) {
        let c = solve_stackelberg(&centred).map_err(|e| e.to_string())?;
        ensure!(c.leader == base.leader, "{}: centring changed the argmax", game.name);
    }
    Ok(())
}

/// Two runs of one (config, seed) produce identical curve bytes.
pub fn csv_reproducibility(config: &ExperimentConfig, seed: u64) -> Check {
    let a = curve_csv(&run_seed(config, seed).map_err(|e| e.to_string())?.curve).map_err(|e| e.to_string())?;
    let b = curve_csv(&run_seed(config, seed).map_err(|e| e.to_string())?.curve).map_err(|e| e.to_string())?;
    ensure!(a == b, "curve CSV differs between identical runs");
    Ok(())
}

/// The solver's own equilibrium survives post-training of the follower.
pub fn verification_consistency(game: &MatrixGameSpec, seed: u64, iterations: usize) -> Check {
    let s = solve_stackelberg(game).map_err(|e| e.to_string())?;
    let mut rng = stream(seed, Stream::Verify);
    let r = verify_equilibrium(game, &s.leader, &s.follower, &LearnerHyper::follower_pg(), iterations, &mut rng)
        .map_err(|e| e.to_string())?;
    ensure!(r.passed, "{} seed {seed}: solver equilibrium failed verification: {r:?}", game.name);
    Ok(())
}

pub fn small_config(game: &str) -> ExperimentConfig {
    let mut c = stackelberg_core::harness::parse_config(&format!(
        "[game]\nname = {game}\n[oracle]\niterations = 30\n[leader]\nalgorithm = ppo\niterations = 4\n"
    ))
    .unwrap();
    c.verify_iterations = 3;
    c
}

/// Every memory mode with every kind of oracle.
pub fn oracle_kinds(game: &MatrixGameSpec, seed: u64) -> Vec<OracleKind> {
    vec![
        OracleKind::ExactBestResponse,
        OracleKind::ContextualMeta(random_meta(game, seed)),
        OracleKind::QLearnInnerLoop(LearnerHyper::follower_qlearn(2)),
    ]
}

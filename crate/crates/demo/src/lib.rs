//! Browser bindings: solve a game, best-respond to a typed leader, train a small leader.
//!
//! Every export returns a JSON string; errors become JS exceptions.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use stackelberg_core::game::{canonical_games, MatrixGameSpec, ObservationId};
use stackelberg_core::harness::{resolve_game, run_seed, ExperimentConfig, OracleSpec};
use stackelberg_core::oracle::exact_best_response;
use stackelberg_core::policy::TabularDeterministicPolicy;
use stackelberg_core::solver::solve_stackelberg;

fn game(name: &str) -> Result<MatrixGameSpec, String> {
    resolve_game(name).map_err(|e| e.to_string())
}

fn labels(g: &MatrixGameSpec) -> Vec<&'static str> {
    (0..g.observation_count())
        .map(|o| g.memory.observation_label(ObservationId(o)))
        .collect()
}

pub fn game_names_json() -> Value {
    json!(canonical_games().iter().map(|g| g.name.clone()).collect::<Vec<_>>())
}

pub fn solve_json(name: &str) -> Result<Value, String> {
    let g = game(name)?;
    let s = solve_stackelberg(&g).map_err(|e| e.to_string())?;
    Ok(json!({
        "game": g.name,
        "observations": labels(&g),
        "leader": s.leader.to_string(),
        "follower": s.follower.to_string(),
        "leader_value": s.leader_value,
        "follower_value": s.follower_value,
    }))
}

pub fn best_response_json(name: &str, leader: &str) -> Result<Value, String> {
    let g = game(name)?;
    let leader: TabularDeterministicPolicy = leader.trim().parse().map_err(|e: stackelberg_core::Error| e.to_string())?;
    if leader.len() != g.observation_count() {
        return Err(format!(
            "`{}` needs one letter per observation ({}), got {}",
            g.name,
            labels(&g).join(", "),
            leader.len()
        ));
    }
    let br = exact_best_response(&g, &leader).map_err(|e| e.to_string())?;
    Ok(json!({
        "leader": leader.to_string(),
        "follower": br.follower.to_string(),
        "leader_value": br.leader_value,
        "follower_value": br.follower_value,
    }))
}

/// Clipped-surrogate leader against an exact or meta-learned follower.
pub fn train_json(name: &str, oracle: &str, iterations: usize, seed: u64) -> Result<Value, String> {
    let mut c = ExperimentConfig::new(game(name)?);
    match oracle {
        "exact" => c.oracle = OracleSpec::Exact,
        "meta" => {}
        other => return Err(format!("unknown oracle `{other}` (exact | meta)")),
    }
    c.leader.iterations = iterations.clamp(1, 300);
    c.leader.batch_steps = 300;
    c.verify_iterations = 100;
    let r = run_seed(&c, seed).map_err(|e| e.to_string())?;
    Ok(json!({
        "curve": r.curve.iter().map(|p| [p.env_steps as f64, p.leader_reward]).collect::<Vec<_>>(),
        "leader": r.greedy_play.to_string(),
        "follower": exact_best_response(&c.game, &r.greedy_query).map_err(|e| e.to_string())?.follower.to_string(),
        "leader_value": r.greedy_leader_value,
        "solver_value": r.solver_leader_value,
        "equilibrium": r.equilibrium(),
        "pretrain_steps": r.pretrain_steps,
    }))
}

fn js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn game_names() -> String {
    game_names_json().to_string()
}

#[wasm_bindgen]
pub fn solve(game: &str) -> Result<String, JsError> {
    js(solve_json(game))
}

#[wasm_bindgen]
pub fn best_response(game: &str, leader: &str) -> Result<String, JsError> {
    js(best_response_json(game, leader))
}

#[wasm_bindgen]
pub fn train(game: &str, oracle: &str, iterations: usize, seed: u64) -> Result<String, JsError> {
    js(train_json(game, oracle, iterations, seed))
}

//! Preset experiment bundles, one per figure.

use std::path::Path;

use crate::composer::ComposerConfig;
use crate::error::{Error, Result};
use crate::game::SYMMETRIC_GAMES;
use crate::learners::LearnerHyper;

use super::config::{resolve_game, slug, ExperimentConfig, OracleSpec, BOS_MODIFIED, BOS_MODIFIED_PENALTY};

pub const FIGURES: [&str; 7] = ["fig3", "fig4", "fig5", "fig6", "fig7", "fig9", "thm2"];

/// Effectively unbounded; the env-step budget ends these runs.
const BUDGET_BOUND_ITERATIONS: usize = 1_000_000;

fn base(game: &str, name: &str, out: &Path) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::new(resolve_game(game)?);
    c.name = name.to_string();
    c.out = out.join(slug(name));
    Ok(c)
}

fn inner_qlearn(episodes: usize, q_init: f64) -> OracleSpec {
    OracleSpec::QLearn(LearnerHyper {
        q_init,
        ..LearnerHyper::follower_qlearn(episodes)
    })
}

/// Expands a figure id into its experiment configs, each writing under `out/<name>`.
pub fn reproduce(figure: &str, out: &Path) -> Result<Vec<ExperimentConfig>> {
    let hidden = ComposerConfig {
        queries_in_leader_batch: false,
        ..ComposerConfig::default()
    };
    let mut configs = Vec::new();
    match figure {
        // Meta oracle + clipped surrogate on the 12 symmetric games, 100k combined steps.
        "fig3" => {
            for g in SYMMETRIC_GAMES {
                let mut c = base(g, &format!("fig3 {g}"), out)?;
                c.budget = Some(100_000);
                configs.push(c);
            }
        }
        // Per-step leaders with queries visible or hidden, on the table scale.
        "fig4" => {
            for (algo, leader) in [
                ("ppo", LearnerHyper::leader_ppo()),
                ("qlearn", LearnerHyper::leader_qlearn()),
                ("es", LearnerHyper::leader_es()),
            ] {
                for (label, composer) in [("visible", ComposerConfig::default()), ("hidden", hidden)] {
                    let mut c = base("prisoners dilemma modified", &format!("fig4 {algo} {label}"), out)?;
                    c.oracle = OracleSpec::Exact;
                    c.leader = leader.clone();
                    c.composer = composer;
                    c.center_rewards = false;
                    configs.push(c);
                }
            }
        }
        // A leader that sees the phase can answer queries one way and play another.
        "fig5" => {
            for (label, bit) in [("phase-bit", true), ("invariant", false)] {
                let mut c = base("prisoners dilemma", &format!("fig5 {label}"), out)?;
                c.composer.leader_phase_bit = bit;
                configs.push(c);
            }
        }
        // Leader paid during the follower's learning episodes, or not.
        "fig6" => {
            for game in [BOS_MODIFIED, BOS_MODIFIED_PENALTY] {
                let tag = if game == BOS_MODIFIED { "bosm" } else { "bosp" };
                for (label, during) in [("compliant", false), ("during", true)] {
                    let mut c = base(game, &format!("fig6 {tag} {label}"), out)?;
                    c.oracle = inner_qlearn(60, 2.0);
                    c.leader = LearnerHyper::leader_qlearn();
                    c.composer.reward_during_initial = during;
                    c.seeds = (0..10).collect();
                    configs.push(c);
                }
            }
        }
        // Inner-loop follower that resumes its Q-table across leader episodes.
        "fig7" => {
            for (label, reset) in [("reset", true), ("noreset", false)] {
                let mut c = base("battle of the sexes", &format!("fig7 {label}"), out)?;
                c.oracle = inner_qlearn(3, 2.0);
                c.leader = LearnerHyper::leader_qlearn();
                c.composer.follower_reset = reset;
                c.seeds = (0..10).collect();
                configs.push(c);
            }
        }
        // Sample efficiency: meta oracle vs a 1000-episode Q-learning inner loop.
        "fig9" => {
            let mut meta = base("prisoners dilemma", "fig9 meta", out)?;
            meta.leader.iterations = BUDGET_BOUND_ITERATIONS;
            meta.budget = Some(500_000);
            let mut inner = base("prisoners dilemma", "fig9 inner-loop", out)?;
            inner.oracle = inner_qlearn(1000, 0.0);
            inner.leader.iterations = BUDGET_BOUND_ITERATIONS;
            inner.budget = Some(2_000_000);
            configs.extend([meta, inner]);
        }
        // Hidden queries: tabular Q-learning and REINFORCE leaders on the table scale.
        "thm2" => {
            for (algo, leader) in [
                ("qlearn", LearnerHyper::leader_qlearn()),
                ("reinforce", LearnerHyper::leader_pg()),
            ] {
                let mut c = base("prisoners dilemma modified", &format!("thm2 {algo}"), out)?;
                c.oracle = OracleSpec::Exact;
                c.leader = leader;
                c.composer = hidden;
                c.center_rewards = false;
                configs.push(c);
            }
        }
        other => return Err(Error::UnknownFigure(other.to_string())),
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Algorithm;

    #[test]
    fn fig3_is_twelve_games_of_five_seeds() {
        let cs = reproduce("fig3", Path::new("x")).unwrap();
        assert_eq!(cs.len(), 12);
        for c in &cs {
            assert_eq!(c.seeds.len(), 5);
            assert!(matches!(c.oracle, OracleSpec::Meta { .. }));
            assert_eq!(c.leader.algorithm, Algorithm::ClippedSurrogate);
            assert_eq!(c.budget, Some(100_000));
        }
        assert_eq!(cs[0].out, Path::new("x/fig3-prisoners-dilemma"));
    }

    #[test]
    fn every_figure_expands_to_valid_configs() {
        for f in FIGURES {
            let cs = reproduce(f, Path::new("out")).unwrap();
            assert!(!cs.is_empty());
            let mut outs: Vec<_> = cs.iter().map(|c| c.out.clone()).collect();
            outs.dedup();
            assert_eq!(outs.len(), cs.len(), "{f}: output directories collide");
        }
        assert!(matches!(reproduce("fig8", Path::new("out")), Err(Error::UnknownFigure(_))));
    }

    #[test]
    fn thm2_hides_queries_on_the_table_scale() {
        for c in reproduce("thm2", Path::new("out")).unwrap() {
            assert!(!c.composer.queries_in_leader_batch);
            assert!(!c.center_rewards);
        }
    }
}

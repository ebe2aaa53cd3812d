use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use stackelberg_core::game::canonical_games;
use stackelberg_core::harness::{
    parse_config, parse_seeds, reproduce, run_seed, summary_table, trace_final_episode, write_run, write_summary,
    ExperimentConfig, ReportScale, RunResult,
};
use stackelberg_core::learners::LearnerHyper;
use stackelberg_core::oracle::exact_best_response;
use stackelberg_core::policy::format::{read, PolicyFile};
use stackelberg_core::policy::{Context, FrozenPolicy, Policy, TabularDeterministicPolicy};
use stackelberg_core::rng::{stream, Stream};
use stackelberg_core::solver::{solve_stackelberg, verify_equilibrium};
use stackelberg_core::{Error, MatrixGameSpec};

mod svg;

#[derive(Parser)]
#[command(name = "stackelberg", version, about = "Learn, solve and verify Stackelberg equilibria in iterated matrix games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct RunFlags {
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seeds as a range `0..5` or a list `0,3,7`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reward scale for curves and summaries.
    #[arg(long, value_parser = ["table", "centered"])]
    scale: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustive Stackelberg solutions for the built-in games.
    SolveExact {
        /// Check the table against this golden file (exit 3 on mismatch).
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Overwrite the golden file instead of checking it.
        #[arg(long, requires = "golden")]
        write: bool,
        /// Solve the game of an experiment config instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one experiment config over its seeds.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// Also write one composed episode of each final leader as `<run_id>.trace.tsv`.
        #[arg(long)]
        trace: bool,
    },
    /// Run the preset bundle of a figure and chart it.
    Reproduce {
        /// fig3, fig4, fig5, fig6, fig7, fig9 or thm2.
        figure: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Post-train a follower against a saved leader and report whether it improves.
    Verify {
        policy_file: PathBuf,
        /// Config naming the game (and oracle context length).
        #[arg(long)]
        config: PathBuf,
        /// Entry follower file; contextual followers are given the leader's query answers.
        #[arg(long)]
        follower: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Chart experiment directories as SVG.
    Plot {
        /// Experiment directories, or bundle directories containing them.
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Verification(String),
    Crash(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidHyper { .. }
            | Error::UnknownFigure(_)
            | Error::UnknownGame(_)
            | Error::NotCanonicalScale(_) => Failure::Config(e.to_string()),
            other => Failure::Crash(other.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    parse_config(&read_text(path)?).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn apply_flags(config: &mut ExperimentConfig, flags: &RunFlags, out_override: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(s) = flags.seed {
        config.seeds = vec![s];
    }
    if let Some(s) = &flags.seeds {
        config.seeds = parse_seeds(s)?;
    }
    if let Some(o) = out_override {
        config.out = o;
    }
    if let Some(s) = &flags.scale {
        config.scale = s.parse::<ReportScale>()?;
    }
    config.validate()?;
    Ok(())
}

/// Runs every (config, seed) pair in parallel; outputs are per run.
fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<Vec<RunResult>>, Failure> {
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let done: Vec<(usize, RunResult)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let r = run_seed(&configs[i], seed)?;
            write_run(&configs[i].out, &r)?;
            eprintln!("done {} ({} env steps)", r.run_id, r.env_steps);
            Ok((i, r))
        })
        .collect::<Result<_, Error>>()
        .map_err(|e| Failure::Crash(e.to_string()))?;
    let mut grouped: Vec<Vec<RunResult>> = vec![Vec::new(); configs.len()];
    for (i, r) in done {
        grouped[i].push(r);
    }
    for (c, rs) in configs.iter().zip(&grouped) {
        write_summary(c, rs)?;
    }
    Ok(grouped)
}

fn policy_string(p: &TabularDeterministicPolicy) -> String {
    p.to_string()
}

fn solve_exact(golden: Option<PathBuf>, write: bool, config: Option<PathBuf>) -> Result<(), Failure> {
    let games: Vec<MatrixGameSpec> = match &config {
        Some(path) => vec![load_config(path)?.game],
        None => canonical_games(),
    };
    let mut rows = Vec::new();
    println!("{:<28} {:<8} {:<8} {:>8} {:>9}", "game", "leader", "follower", "V_leader", "V_follower");
    for g in &games {
        let s = solve_stackelberg(g)?;
        println!(
            "{:<28} {:<8} {:<8} {:>8} {:>9}",
            g.name,
            policy_string(&s.leader),
            policy_string(&s.follower),
            s.leader_value,
            s.follower_value
        );
        rows.push(format!(
            "{}\t{}\t{}\t{}\t{}",
            g.name,
            policy_string(&s.leader),
            policy_string(&s.follower),
            s.leader_value,
            s.follower_value
        ));
    }
    let Some(path) = golden else { return Ok(()) };
    if write {
        let text = rows.join("\n") + "\n";
        return std::fs::write(&path, text).map_err(|e| Failure::Crash(format!("{}: {e}", path.display())));
    }
    let expected = read_text(&path)?;
    let mismatches = golden_mismatches(&expected, &rows);
    if mismatches.is_empty() {
        println!("golden file {} matches ({} games)", path.display(), rows.len());
        Ok(())
    } else {
        Err(Failure::Verification(format!("golden mismatch:\n{}", mismatches.join("\n"))))
    }
}

/// Compares names and policies exactly and values to 1e-9.
fn golden_mismatches(expected: &str, rows: &[String]) -> Vec<String> {
    let want: Vec<&str> = expected.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect();
    let mut out = Vec::new();
    if want.len() != rows.len() {
        out.push(format!("expected {} rows, solved {}", want.len(), rows.len()));
    }
    for (w, got) in want.iter().zip(rows) {
        let a: Vec<&str> = w.split('\t').collect();
        let b: Vec<&str> = got.split('\t').collect();
        let same = a.len() == 5
            && a[..3] == b[..3]
            && a[3..].iter().zip(&b[3..]).all(|(x, y)| match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) => (x - y).abs() < 1e-9,
                _ => false,
            });
        if !same {
            out.push(format!("expected `{w}`, got `{got}`"));
        }
    }
    out
}

fn train(config: PathBuf, flags: RunFlags, trace: bool) -> Result<(), Failure> {
    let mut c = load_config(&config)?;
    apply_flags(&mut c, &flags, flags.out.clone())?;
    let results = run_all(std::slice::from_ref(&c))?.remove(0);
    if trace {
        for r in &results {
            let path = c.out.join(format!("{}.trace.tsv", r.run_id));
            std::fs::write(&path, trace_final_episode(&c, r)?)
                .map_err(|e| Failure::Crash(format!("{}: {e}", path.display())))?;
        }
    }
    print!("{}", summary_table(&results));
    println!("outputs in {}", c.out.display());
    let failed: Vec<&str> = results.iter().filter(|r| !r.equilibrium()).map(|r| r.run_id.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("not an equilibrium: {}", failed.join(", "))))
    }
}

fn reproduce_cmd(figure: String, flags: RunFlags) -> Result<(), Failure> {
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&figure));
    let mut configs = reproduce(&figure, &out)?;
    for c in &mut configs {
        apply_flags(c, &flags, None)?;
    }
    let results = run_all(&configs)?;
    for (c, rs) in configs.iter().zip(&results) {
        println!("== {} ({})", c.name, c.game.name);
        print!("{}", summary_table(rs));
    }
    let charts = svg::plot_dirs(&configs.iter().map(|c| c.out.clone()).collect::<Vec<_>>(), &out.join("plots"))?;
    println!("{} charts in {}", charts.len(), out.join("plots").display());
    Ok(())
}

fn verify(
    policy_file: PathBuf,
    config: PathBuf,
    follower: Option<PathBuf>,
    seed: u64,
    iterations: Option<usize>,
) -> Result<(), Failure> {
    let c = load_config(&config)?;
    let game = &c.game;
    let n = game.observation_count();
    let leader: Box<dyn Policy> = match read(&read_text(&policy_file)?)? {
        PolicyFile::Deterministic(p) => Box::new(p),
        PolicyFile::Softmax(p) => Box::new(p),
        PolicyFile::Q(q) => Box::new(q),
        PolicyFile::Contextual(_) => return Err(Failure::Config("a leader cannot be a contextual policy".into())),
    };
    let rows = leader.observation_count();
    if rows != n && rows != 2 * n {
        return Err(Failure::Config(format!(
            "leader has {rows} rows; `{}` needs {n} (or {} with a phase bit)",
            game.name,
            2 * n
        )));
    }
    let query = FrozenPolicy::rows(leader.as_ref(), 0, n).to_deterministic();
    let play = FrozenPolicy::rows(leader.as_ref(), rows - n, n);
    let entry = match follower {
        None => exact_best_response(game, &query)?.follower,
        Some(path) => match read(&read_text(&path)?)? {
            PolicyFile::Deterministic(p) => p,
            PolicyFile::Contextual(m) => {
                let schedule = stackelberg_core::oracle::enumerate_query_schedule(game.memory);
                m.curry(&Context::new(schedule.observations.iter().map(|&o| query.action(o)).collect()))
            }
            _ => return Err(Failure::Config("entry follower must be deterministic or contextual".into())),
        },
    };
    let hyper = LearnerHyper::follower_pg();
    let mut rng = stream(seed, Stream::Verify);
    let report = verify_equilibrium(game, &play, &entry, &hyper, iterations.unwrap_or(c.verify_iterations), &mut rng)?;
    println!("follower improvement   {:.4}", report.follower_improvement);
    println!("exact best-response gap {:.4}", report.exact_gap);
    println!("leader value           {:.4} -> {:.4}", report.leader_value_before, report.leader_value_after);
    if report.passed {
        println!("equilibrium: yes");
        Ok(())
    } else {
        Err(Failure::Verification("equilibrium: no".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveExact { golden, write, config } => solve_exact(golden, write, config),
        Command::Train { config, flags, trace } => train(config, flags, trace),
        Command::Reproduce { figure, flags } => reproduce_cmd(figure, flags),
        Command::Verify {
            policy_file,
            config,
            follower,
            seed,
            iterations,
        } => verify(policy_file, config, follower, seed, iterations),
        Command::Plot { dirs, out } => svg::plot_dirs(&dirs, &out).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
        Err(Failure::Crash(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cedm::acts::{parse_act, render_act, ActType, DialogueAct, Observation};
use cedm::harness::{self, RunConfig, Simulation};
use cedm::ontology::Ontology;
use cedm::policy::{Mode, PolicySet};
use cedm::tracking::{apply_system_act, track_turn};
use cedm::{Error, Result};

#[derive(Parser)]
#[command(name = "cedm", about = "Train and evaluate entity-relation dialogue policies in simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train policies for every seed and write checkpoints and training logs.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed list.
        #[arg(long)]
        seed: Vec<u64>,
    },
    /// Evaluate checkpoints and write test logs, metrics.csv and summary.txt.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        seed: Vec<u64>,
    },
    /// Train and evaluate in one go.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Vec<u64>,
    },
    /// Train and evaluate two configs and test their difference per object position.
    Compare {
        #[arg(long, num_args = 2, required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        seed: Vec<u64>,
    },
    /// Talk to a policy at the semantic level, one act per line.
    Interact {
        /// A run directory (with config.toml and checkpoints/) or a config file
        /// whose learned policies start untrained.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the built-in ontology with a knowledge base generated from a seed.
    GenKb {
        #[arg(long)]
        seed: u64,
    },
}

fn load_config(path: &Path, seeds: &[u64]) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if !seeds.is_empty() {
        config.seeds = seeds.to_vec();
    }
    Ok(config)
}

fn train(config: &RunConfig) -> Result<()> {
    let ontology = harness::ontology_for(config);
    let dir = config.resolved_output_dir();
    let trained = harness::train(&ontology, config)?;
    harness::write_training(&dir, config, &trained)?;
    println!("checkpoints written to {}", dir.join("checkpoints").display());
    Ok(())
}

fn eval(config: &RunConfig, checkpoints: &Path) -> Result<Vec<harness::MetricsRow>> {
    let ontology = harness::ontology_for(config);
    let dir = config.resolved_output_dir();
    let policies = harness::load_checkpoints(checkpoints, &config.seeds)?;
    let evaluated = harness::evaluate(&ontology, config, &policies)?;
    let rows = harness::write_evaluation(&dir, config, &evaluated)?;
    print!("{}", harness::summary_table(config, &rows));
    Ok(rows)
}

fn run(config: &RunConfig) -> Result<Vec<harness::MetricsRow>> {
    let ontology = harness::ontology_for(config);
    let dir = config.resolved_output_dir();
    let (trained, evaluated) = harness::run(&ontology, config)?;
    harness::write_training(&dir, config, &trained)?;
    let rows = harness::write_evaluation(&dir, config, &evaluated)?;
    print!("{}", harness::summary_table(config, &rows));
    Ok(rows)
}

fn compare(a: &RunConfig, b: &RunConfig) -> Result<()> {
    let rows_a = run(a)?;
    let rows_b = run(b)?;
    let positions: std::collections::BTreeSet<usize> = rows_a.iter().map(|r| r.object_position).collect();
    for p in positions {
        let sa = harness::summarize_position(&rows_a, p, harness::ALL_OBJECTS);
        let sb = harness::summarize_position(&rows_b, p, harness::ALL_OBJECTS);
        let c = harness::significance(&sa, &sb)?;
        println!(
            "position {p}: reward {:.2} vs {:.2} (t={:.3}, p={:.4}, {:?}); success {:.1}% vs {:.1}% (z={:.3}, p={:.4}, {:?})",
            sa.reward_mean(),
            sb.reward_mean(),
            c.reward.statistic,
            c.reward.p_value,
            c.reward.verdict,
            100.0 * sa.success_rate(),
            100.0 * sb.success_rate(),
            c.success.statistic,
            c.success.p_value,
            c.success.verdict
        );
    }
    Ok(())
}

fn interact(path: &Path, seed: u64) -> Result<()> {
    let (config, policies) = if path.is_dir() {
        let config = RunConfig::load(path.join("config.toml"))?;
        let first = *config.seeds.first().ok_or_else(|| Error::Config("no seeds".into()))?;
        let mut p = harness::load_checkpoints(&path.join("checkpoints"), &[first])?;
        (config, p.pop())
    } else {
        (RunConfig::load(path)?, None)
    };
    let ontology: Ontology = harness::ontology_for(&config);
    let sim = Simulation::new(&ontology, &config)?;
    let mut policies: PolicySet = match policies {
        Some(p) => p,
        None => sim.new_policies()?,
    };
    let model = policies.belief_model();
    let mut world = sim.template.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut system_act = DialogueAct::hello();
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    println!("system: {}", render_act(&system_act));
    loop {
        print!("user> ");
        let _ = out.flush();
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
            return Ok(());
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let act = match parse_act(line) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("{e}");
                continue;
            }
        };
        if act.act_type == ActType::Bye {
            println!("system: {}", render_act(&DialogueAct::bye()));
            return Ok(());
        }
        if let Err(e) = track_turn(&mut world, &system_act, &Observation::certain(act), model) {
            eprintln!("{e}");
            continue;
        }
        let d = policies.decide(&world, &ontology, Mode::Exploit, false, &mut rng)?;
        apply_system_act(&mut world, &ontology, &d.act)?;
        println!("system: {}", render_act(&d.act));
        system_act = d.act;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, seed } => load_config(&config, &seed).and_then(|c| train(&c)),
        Command::Eval { config, checkpoints, seed } => {
            load_config(&config, &seed).and_then(|c| eval(&c, &checkpoints).map(|_| ()))
        }
        Command::Run { config, seed } => load_config(&config, &seed).and_then(|c| run(&c).map(|_| ())),
        Command::Compare { configs, seed } => load_config(&configs[0], &seed)
            .and_then(|a| load_config(&configs[1], &seed).map(|b| (a, b)))
            .and_then(|(a, b)| compare(&a, &b)),
        Command::Interact { checkpoint, seed } => interact(&checkpoint, seed),
        Command::GenKb { seed } => {
            print!("{}", Ontology::cambridge(seed).to_toml_string());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Experiment orchestration: simulated dialogues, training and evaluation
//! loops, metrics, significance tests and on-disk artifacts.

mod config;
mod episode;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::policy::{Mode, PolicySet};

pub use config::{LearningConfig, ObjectSpec, RewardConfig, RunConfig, UserOverrides, OUTPUT_ROOT_ENV};
pub use episode::{replay, EndReason, EpisodeLog, ObjectOutcome, ReplayOutcome, Role, Simulation, Transcript, TurnRecord};
pub use metrics::{
    metrics_rows, relation_act_rate, significance, summarize_position, summary_table, to_csv, two_proportion_z_test,
    welch_t_test, Comparison, MetricsRow, PositionSummary, TestResult, Verdict, ALL_OBJECTS, ALPHA, CSV_HEADER,
};

const TRAIN_STREAM: u64 = 1 << 40;
const TEST_STREAM: u64 = 2 << 40;

/// The random stream of one dialogue: a function of seed, phase and index only.
pub fn dialogue_rng(seed: u64, test: bool, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(if test { TEST_STREAM } else { TRAIN_STREAM } + episode as u64);
    rng
}

/// Trained policies and training logs of one seed.
pub struct TrainedSeed {
    pub seed: u64,
    pub policies: PolicySet,
    pub logs: Vec<EpisodeLog>,
}

/// Test logs and metrics of one seed.
pub struct EvaluatedSeed {
    pub seed: u64,
    pub logs: Vec<EpisodeLog>,
    pub rows: Vec<MetricsRow>,
}

/// The ontology a run config refers to.
pub fn ontology_for(config: &RunConfig) -> Ontology {
    Ontology::cambridge(config.kb_seed)
}

/// Trains fresh policies for one seed. Exploration decays linearly from
/// `learning.epsilon` to zero over the training dialogues.
pub fn train_seed(ontology: &Ontology, config: &RunConfig, seed: u64) -> Result<TrainedSeed> {
    let sim = Simulation::new(ontology, config)?;
    let mut policies = sim.new_policies()?;
    let n = config.train_dialogues;
    let mut logs = Vec::with_capacity(n);
    for i in 0..n {
        let epsilon = config.learning.epsilon * (1.0 - i as f64 / n as f64);
        let mut rng = dialogue_rng(seed, false, i);
        logs.push(sim.run_dialogue(&mut policies, Mode::Explore { epsilon }, true, &mut rng, seed, i)?);
    }
    Ok(TrainedSeed { seed, policies, logs })
}

/// Runs the test dialogues of one seed with exploration and learning off.
pub fn evaluate_seed(ontology: &Ontology, config: &RunConfig, seed: u64, policies: &PolicySet) -> Result<EvaluatedSeed> {
    let sim = Simulation::new(ontology, config)?;
    let mut policies = policies.clone();
    let mut logs = Vec::with_capacity(config.test_dialogues);
    for i in 0..config.test_dialogues {
        let mut rng = dialogue_rng(seed, true, i);
        logs.push(sim.run_dialogue(&mut policies, Mode::Exploit, false, &mut rng, seed, i)?);
    }
    let rows = metrics_rows(config, seed, &logs);
    Ok(EvaluatedSeed { seed, logs, rows })
}

/// Trains every seed of `config` (in parallel).
pub fn train(ontology: &Ontology, config: &RunConfig) -> Result<Vec<TrainedSeed>> {
    config.seeds.par_iter().map(|s| train_seed(ontology, config, *s)).collect()
}

/// Evaluates every seed against its policies, given in seed order.
pub fn evaluate(ontology: &Ontology, config: &RunConfig, policies: &[PolicySet]) -> Result<Vec<EvaluatedSeed>> {
    if policies.len() != config.seeds.len() {
        return Err(Error::MissingCheckpoint(format!(
            "{} checkpoints for {} seeds",
            policies.len(),
            config.seeds.len()
        )));
    }
    config
        .seeds
        .par_iter()
        .zip(policies.par_iter())
        .map(|(s, p)| evaluate_seed(ontology, config, *s, p))
        .collect()
}

/// Trains and evaluates every seed.
pub fn run(ontology: &Ontology, config: &RunConfig) -> Result<(Vec<TrainedSeed>, Vec<EvaluatedSeed>)> {
    let trained = train(ontology, config)?;
    let policies: Vec<PolicySet> = trained.iter().map(|t| t.policies.clone()).collect();
    let evaluated = evaluate(ontology, config, &policies)?;
    Ok((trained, evaluated))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn jsonl(logs: &[EpisodeLog]) -> String {
    let mut out = String::new();
    for l in logs {
        out.push_str(&l.to_json_line());
        out.push('\n');
    }
    out
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.json"))
}

/// Writes `checkpoints/seed_<s>.json`, `logs/train_seed_<s>.jsonl` and the config.
pub fn write_training(dir: &Path, config: &RunConfig, trained: &[TrainedSeed]) -> Result<()> {
    write(&dir.join("config.toml"), &config.to_toml_string())?;
    for t in trained {
        write(&checkpoint_path(&dir.join("checkpoints"), t.seed), &t.policies.to_json())?;
        write(&dir.join("logs").join(format!("train_seed_{}.jsonl", t.seed)), &jsonl(&t.logs))?;
    }
    Ok(())
}

/// Writes `logs/test_seed_<s>.jsonl`, `metrics.csv` and `summary.txt`.
pub fn write_evaluation(dir: &Path, config: &RunConfig, evaluated: &[EvaluatedSeed]) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for e in evaluated {
        write(&dir.join("logs").join(format!("test_seed_{}.jsonl", e.seed)), &jsonl(&e.logs))?;
        rows.extend(e.rows.iter().cloned());
    }
    write(&dir.join("metrics.csv"), &to_csv(&rows))?;
    write(&dir.join("summary.txt"), &summary_table(config, &rows))?;
    Ok(rows)
}

/// Loads the checkpoint of every seed from `dir`.
pub fn load_checkpoints(dir: &Path, seeds: &[u64]) -> Result<Vec<PolicySet>> {
    seeds
        .iter()
        .map(|s| {
            let path = checkpoint_path(dir, *s);
            if !path.exists() {
                return Err(Error::MissingCheckpoint(path.display().to_string()));
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            PolicySet::from_json(&text)
        })
        .collect()
}

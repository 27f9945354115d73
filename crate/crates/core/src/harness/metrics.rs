use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::config::RunConfig;
use super::episode::EpisodeLog;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;

pub const CSV_HEADER: &str =
    "experiment,env,r,policy,seed,object_position,object,reward_mean,success_rate,n,relation_act_rate";

/// Aggregate over all objects at a position.
pub const ALL_OBJECTS: &str = "all";

/// One row of the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub env: String,
    pub r: f64,
    pub policy: String,
    pub seed: u64,
    pub object_position: usize,
    pub object: String,
    pub reward_mean: f64,
    pub success_rate: f64,
    pub n: usize,
    pub relation_act_rate: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.4},{:.4},{},{:.4}",
            self.experiment,
            self.env,
            self.r,
            self.policy,
            self.seed,
            self.object_position,
            self.object,
            self.reward_mean,
            self.success_rate,
            self.n,
            self.relation_act_rate
        )
    }
}

/// Fraction of dialogues with at least one system relation act.
pub fn relation_act_rate(logs: &[EpisodeLog]) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    logs.iter().filter(|l| l.system_relation_acts > 0).count() as f64 / logs.len() as f64
}

fn policy_name(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Handcrafted => "handcrafted",
        PolicyKind::Cedm => "cedm",
        PolicyKind::Mddm => "mddm",
    }
}

/// Rows for one seed's test logs: per position, per object at that position
/// and pooled over objects.
pub fn metrics_rows(config: &RunConfig, seed: u64, logs: &[EpisodeLog]) -> Vec<MetricsRow> {
    let rate = relation_act_rate(logs);
    // (position, object) -> (reward sum, successes, n, policy)
    let mut groups: BTreeMap<(usize, String), (f64, usize, usize, String)> = BTreeMap::new();
    for log in logs {
        for o in &log.objects {
            for key in [(o.position, o.object.clone()), (o.position, ALL_OBJECTS.to_string())] {
                let e = groups.entry(key).or_insert((0.0, 0, 0, String::new()));
                e.0 += o.ret;
                e.1 += o.success as usize;
                e.2 += 1;
                let name = policy_name(o.policy);
                if e.3.is_empty() {
                    e.3 = name.to_string();
                } else if e.3 != name {
                    e.3 = "mixed".into();
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|((position, object), (sum, wins, n, policy))| MetricsRow {
            experiment: config.experiment.clone(),
            env: config.env_name.clone(),
            r: config.r,
            policy,
            seed,
            object_position: position,
            object,
            reward_mean: sum / n as f64,
            success_rate: wins as f64 / n as f64,
            n,
            relation_act_rate: rate,
        })
        .collect()
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Seed-level summary for one object position.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionSummary {
    pub position: usize,
    pub object: String,
    /// Per-seed mean rewards.
    pub rewards: Vec<f64>,
    /// Pooled successes and dialogues over all seeds.
    pub successes: usize,
    pub n: usize,
}

impl PositionSummary {
    pub fn success_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.successes as f64 / self.n as f64
        }
    }

    pub fn reward_mean(&self) -> f64 {
        mean(&self.rewards)
    }

    /// Half-width of the 95% normal interval of the per-seed reward means.
    pub fn reward_ci95(&self) -> f64 {
        if self.rewards.len() < 2 {
            return 0.0;
        }
        1.96 * (variance(&self.rewards) / self.rewards.len() as f64).sqrt()
    }
}

/// Collects per-seed rows of one position and object into a summary.
pub fn summarize_position(rows: &[MetricsRow], position: usize, object: &str) -> PositionSummary {
    let mut s = PositionSummary {
        position,
        object: object.to_string(),
        rewards: Vec::new(),
        successes: 0,
        n: 0,
    };
    for r in rows.iter().filter(|r| r.object_position == position && r.object == object) {
        s.rewards.push(r.reward_mean);
        s.successes += (r.success_rate * r.n as f64).round() as usize;
        s.n += r.n;
    }
    s
}

/// Text table with one line per position and object, averaged over seeds.
pub fn summary_table(config: &RunConfig, rows: &[MetricsRow]) -> String {
    let mut keys: Vec<(usize, String)> = rows.iter().map(|r| (r.object_position, r.object.clone())).collect();
    keys.sort();
    keys.dedup();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} r={} ({} seeds)",
        config.experiment,
        config.env_name,
        config.r,
        config.seeds.len()
    );
    let _ = writeln!(out, "{:<4} {:<16} {:>8} {:>7} {:>8}", "pos", "object", "reward", "±95%", "success");
    for (position, object) in keys {
        let s = summarize_position(rows, position, &object);
        let _ = writeln!(
            out,
            "{:<4} {:<16} {:>8.2} {:>7.2} {:>7.1}%",
            position,
            object,
            s.reward_mean(),
            s.reward_ci95(),
            100.0 * s.success_rate()
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ABetter,
    BBetter,
    NoDifference,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub verdict: Verdict,
}

/// Significance level of all verdicts.
pub const ALPHA: f64 = 0.05;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn verdict(statistic: f64, p_value: f64) -> Verdict {
    if p_value < ALPHA {
        if statistic > 0.0 {
            Verdict::ABetter
        } else {
            Verdict::BBetter
        }
    } else {
        Verdict::NoDifference
    }
}

/// Two-sided Welch t-test; returns the t statistic, its p-value and the
/// Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(TestResult, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "Welch test needs two samples per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (qa, qb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let se2 = qa + qb;
    if se2 == 0.0 {
        // Both samples constant: either identical or infinitely separated.
        let stat = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Ok((
            TestResult {
                statistic: stat,
                p_value: p,
                verdict: verdict(stat, p),
            },
            f64::INFINITY,
        ));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InsufficientSamples(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((
        TestResult {
            statistic: t,
            p_value: p,
            verdict: verdict(t, p),
        },
        df,
    ))
}

/// Two-sided two-proportion z-test with pooled variance.
pub fn two_proportion_z_test(successes_a: usize, n_a: usize, successes_b: usize, n_b: usize) -> Result<TestResult> {
    if n_a == 0 || n_b == 0 || successes_a > n_a || successes_b > n_b {
        return Err(Error::InsufficientSamples(format!(
            "proportions {successes_a}/{n_a} and {successes_b}/{n_b}"
        )));
    }
    let (pa, pb) = (successes_a as f64 / n_a as f64, successes_b as f64 / n_b as f64);
    let pooled = (successes_a + successes_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        let z = if pa == pb { 0.0 } else { (pa - pb).signum() * f64::INFINITY };
        let p = if pa == pb { 1.0 } else { 0.0 };
        return Ok(TestResult {
            statistic: z,
            p_value: p,
            verdict: verdict(z, p),
        });
    }
    let z = (pa - pb) / se;
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    Ok(TestResult {
        statistic: z,
        p_value: p,
        verdict: verdict(z, p),
    })
}

/// Reward (Welch on per-seed means) and success (pooled z) comparison of two
/// conditions at one object position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub reward: TestResult,
    pub success: TestResult,
}

pub fn significance(a: &PositionSummary, b: &PositionSummary) -> Result<Comparison> {
    Ok(Comparison {
        reward: welch_t_test(&a.rewards, &b.rewards)?.0,
        success: two_proportion_z_test(a.successes, a.n, b.successes, b.n)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_show_no_difference() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (r, _) = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.verdict, Verdict::NoDifference);
        assert_eq!(two_proportion_z_test(40, 100, 40, 100).unwrap().verdict, Verdict::NoDifference);
    }

    #[test]
    fn extreme_separation_is_significant() {
        let a = [10.0, 10.1, 9.9, 10.0, 10.05];
        let b = [-3.0, -3.1, -2.9, -3.0, -3.05];
        let (r, _) = welch_t_test(&a, &b).unwrap();
        assert_eq!(r.verdict, Verdict::ABetter);
        assert!(r.p_value < 1e-6);
        let (r, _) = welch_t_test(&[10.0; 5], &[-3.0; 5]).unwrap();
        assert_eq!(r.verdict, Verdict::ABetter);
    }

    #[test]
    fn welch_matches_hand_computation() {
        // means 3 and 5, variances 2.5 and 10, n = 5 each:
        // se² = 0.5 + 2 = 2.5, t = -2 / sqrt(2.5), df = 6.25 / (0.0625 + 1) = 5.882352941...
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [1.0, 3.0, 5.0, 7.0, 9.0];
        let (r, df) = welch_t_test(&a, &b).unwrap();
        assert!((r.statistic - (-2.0 / 2.5f64.sqrt())).abs() < 1e-12);
        assert!((df - 6.25 / 1.0625).abs() < 1e-9);
        // Two-sided p for |t| = 1.26491 at df = 5.88235, from an independent
        // numerical integration of the t density.
        assert!((r.p_value - 0.253_702_406).abs() < 1e-6, "{}", r.p_value);
        assert_eq!(r.verdict, Verdict::NoDifference);
    }

    #[test]
    fn too_few_samples_error() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(two_proportion_z_test(1, 0, 1, 1).is_err());
    }

    #[test]
    fn z_test_by_hand() {
        // 90/100 vs 75/100: pooled 0.825, se = sqrt(0.825*0.175*0.02), z = 0.15/se.
        let r = two_proportion_z_test(90, 100, 75, 100).unwrap();
        let se = (0.825f64 * 0.175 * 0.02).sqrt();
        assert!((r.statistic - 0.15 / se).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::ABetter);
    }
}

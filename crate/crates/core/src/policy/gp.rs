//! GP-SARSA value learner with a sparse dictionary.
//!
//! Q(x, a) is a Gaussian process with kernel `δ(a, a') * scale * <x, x'>`.
//! Each episode contributes one observation per decision: the discounted
//! return-to-go `G_t = Q(x_t, a_t) + n_t` with `n_t ~ N(0, σ²)` (the
//! Monte-Carlo noise model of GP temporal-difference learning). The posterior
//! is kept over function values at dictionary points; a new point enters the
//! dictionary when its approximate-linear-dependence residual exceeds `ν`.
//! Because the kernel factorises over actions, every action keeps its own
//! independent block.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpParams {
    /// Signal variance multiplying the linear kernel.
    pub kernel_scale: f64,
    /// Observation noise variance σ².
    pub noise_var: f64,
    /// Sparsification threshold ν.
    pub nu: f64,
    /// Discount γ.
    pub gamma: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            kernel_scale: 10.0,
            noise_var: 25.0,
            nu: 0.01,
            gamma: 0.99,
        }
    }
}

/// Exploration mode for [`GpSarsa::select`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// Posterior mean argmax with lexicographic tie-break.
    Exploit,
    /// Posterior sampling with a uniform-random floor of probability `epsilon`.
    Explore { epsilon: f64 },
}

/// Dictionary and posterior for one action. Matrices are row-major `m x m`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Block {
    points: Vec<Vec<f64>>,
    kinv: Vec<f64>,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl Block {
    fn len(&self) -> usize {
        self.points.len()
    }

    /// ALD coefficients `a = K⁻¹ k(x)` and residual `δ = k(x,x) - k(x)ᵀ a`.
    fn project(&self, x: &[f64], scale: f64) -> (Vec<f64>, f64) {
        let m = self.len();
        let k: Vec<f64> = self.points.iter().map(|p| scale * dot(p, x)).collect();
        let a = mat_vec(&self.kinv, m, &k);
        let delta = scale * dot(x, x) - dot(&k, &a);
        (a, delta)
    }

    fn predict(&self, x: &[f64], scale: f64) -> (f64, f64) {
        let (a, delta) = self.project(x, scale);
        let m = self.len();
        let mean = dot(&a, &self.mean);
        let sa = mat_vec(&self.cov, m, &a);
        let var = delta.max(0.0) + dot(&a, &sa);
        (mean, var.max(0.0))
    }

    fn add_point(&mut self, x: &[f64], a: &[f64], delta: f64) {
        let m = self.len();
        let n = m + 1;
        let mut kinv = vec![0.0; n * n];
        for i in 0..m {
            for j in 0..m {
                kinv[i * n + j] = self.kinv[i * m + j] + a[i] * a[j] / delta;
            }
            kinv[i * n + m] = -a[i] / delta;
            kinv[m * n + i] = -a[i] / delta;
        }
        kinv[m * n + m] = 1.0 / delta;

        let sa = mat_vec(&self.cov, m, a);
        let mut cov = vec![0.0; n * n];
        for i in 0..m {
            for j in 0..m {
                cov[i * n + j] = self.cov[i * m + j];
            }
            cov[i * n + m] = sa[i];
            cov[m * n + i] = sa[i];
        }
        cov[m * n + m] = dot(a, &sa) + delta;

        self.mean.push(dot(a, &self.mean));
        self.kinv = kinv;
        self.cov = cov;
        self.points.push(x.to_vec());
    }

    /// Kalman update of the dictionary values with `y = aᵀ f + n`.
    fn update(&mut self, a: &[f64], y: f64, noise_var: f64) {
        let m = self.len();
        let sa = mat_vec(&self.cov, m, a);
        let s = dot(a, &sa) + noise_var;
        let innovation = y - dot(a, &self.mean);
        for i in 0..m {
            self.mean[i] += sa[i] * innovation / s;
        }
        for i in 0..m {
            for j in 0..m {
                self.cov[i * m + j] -= sa[i] * sa[j] / s;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSarsa {
    params: GpParams,
    dim: usize,
    actions: Vec<String>,
    blocks: BTreeMap<String, Block>,
    /// Decisions of the running episode with the reward collected after each.
    #[serde(skip)]
    trajectory: Vec<(Vec<f64>, String, f64)>,
    episodes: u64,
}

impl GpSarsa {
    /// A learner over `actions` (kept sorted for tie-breaking) and summaries of length `dim`.
    pub fn new(dim: usize, actions: &[String], params: GpParams) -> Self {
        let mut actions = actions.to_vec();
        actions.sort();
        actions.dedup();
        GpSarsa {
            params,
            dim,
            actions,
            blocks: BTreeMap::new(),
            trajectory: Vec::new(),
            episodes: 0,
        }
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn dictionary_size(&self) -> usize {
        self.blocks.values().map(Block::len).sum()
    }

    fn check(&self, x: &[f64], action: &str) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if self.actions.binary_search_by(|a| a.as_str().cmp(action)).is_err() {
            return Err(Error::Config(format!("unknown action `{action}`")));
        }
        Ok(())
    }

    /// Posterior mean and variance of Q(x, action).
    pub fn q(&self, x: &[f64], action: &str) -> Result<(f64, f64)> {
        self.check(x, action)?;
        Ok(match self.blocks.get(action) {
            Some(b) => b.predict(x, self.params.kernel_scale),
            None => (0.0, (self.params.kernel_scale * dot(x, x)).max(0.0)),
        })
    }

    /// Folds one return observation `y` for (x, action) into the posterior.
    pub fn observe(&mut self, x: &[f64], action: &str, y: f64) -> Result<()> {
        self.check(x, action)?;
        let scale = self.params.kernel_scale;
        let block = self.blocks.entry(action.to_string()).or_default();
        let (mut a, delta) = block.project(x, scale);
        if delta > self.params.nu {
            block.add_point(x, &a, delta);
            a = vec![0.0; block.len()];
            a[block.len() - 1] = 1.0;
        }
        block.update(&a, y, self.params.noise_var);
        Ok(())
    }

    /// Picks among `valid` (a subset of the learner's actions).
    pub fn select<R: Rng>(&self, x: &[f64], valid: &[String], mode: Mode, rng: &mut R) -> Result<String> {
        let mut valid: Vec<&String> = valid.iter().collect();
        valid.sort();
        let first = *valid.first().ok_or_else(|| Error::Config("no valid action".into()))?;
        if let Mode::Explore { epsilon } = mode {
            if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                return Ok(valid[rng.random_range(0..valid.len())].clone());
            }
        }
        let mut best = (first, f64::NEG_INFINITY);
        for a in valid {
            let (mean, var) = self.q(x, a)?;
            let score = match mode {
                Mode::Exploit => mean,
                Mode::Explore { .. } => {
                    let z: f64 = StandardNormal.sample(rng);
                    mean + var.sqrt() * z
                }
            };
            if score > best.1 {
                best = (a, score);
            }
        }
        Ok(best.0.clone())
    }

    /// Starts collecting a new episode, dropping any unfinished one.
    pub fn begin_episode(&mut self) {
        self.trajectory.clear();
    }

    /// Records a decision of the running episode.
    pub fn record(&mut self, x: &[f64], action: &str) -> Result<()> {
        self.check(x, action)?;
        self.trajectory.push((x.to_vec(), action.to_string(), 0.0));
        Ok(())
    }

    /// Credits `r` to the most recent decision; rewards before the first decision are dropped.
    pub fn reward(&mut self, r: f64) {
        if let Some(last) = self.trajectory.last_mut() {
            last.2 += r;
        }
    }

    pub fn has_decisions(&self) -> bool {
        !self.trajectory.is_empty()
    }

    /// Ends the episode: every decision is updated with its discounted return.
    pub fn end_episode(&mut self) -> Result<()> {
        let trajectory = std::mem::take(&mut self.trajectory);
        if trajectory.is_empty() {
            return Ok(());
        }
        let returns = discounted_returns(&trajectory.iter().map(|t| t.2).collect::<Vec<_>>(), self.params.gamma);
        for ((x, a, _), g) in trajectory.iter().zip(returns) {
            self.observe(x, a, g)?;
        }
        self.episodes += 1;
        Ok(())
    }
}

/// `G_t = Σ_k γ^k r_{t+k}` for every t.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn actions() -> Vec<String> {
        vec!["b".to_string(), "a".to_string()]
    }

    #[test]
    fn untrained_exploit_picks_first_action() {
        let gp = GpSarsa::new(2, &actions(), GpParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(gp.select(&[1.0, 0.0], &actions(), Mode::Exploit, &mut rng).unwrap(), "a");
    }

    #[test]
    fn terminal_reward_moves_mean_towards_it() {
        let mut gp = GpSarsa::new(1, &actions(), GpParams { gamma: 0.0, ..GpParams::default() });
        gp.begin_episode();
        gp.record(&[1.0], "a").unwrap();
        gp.reward(1.0);
        gp.end_episode().unwrap();
        let (m, v) = gp.q(&[1.0], "a").unwrap();
        assert!(m > 0.0 && m < 1.0);
        assert!(v < 10.0);
        assert_eq!(gp.q(&[1.0], "b").unwrap().0, 0.0);
    }

    #[test]
    fn duplicate_points_do_not_grow_dictionary() {
        let mut gp = GpSarsa::new(2, &actions(), GpParams::default());
        gp.observe(&[1.0, 0.5], "a", 3.0).unwrap();
        gp.observe(&[1.0, 0.5], "a", 3.0).unwrap();
        gp.observe(&[2.0, 1.0], "a", 3.0).unwrap();
        assert_eq!(gp.dictionary_size(), 1);
    }

    #[test]
    fn exploit_prefers_higher_mean() {
        let mut gp = GpSarsa::new(1, &actions(), GpParams::default());
        for _ in 0..5 {
            gp.observe(&[1.0], "a", 5.0).unwrap();
            gp.observe(&[1.0], "b", 1.0).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(gp.select(&[1.0], &actions(), Mode::Exploit, &mut rng).unwrap(), "a");
        gp.observe(&[1.0], "a", -50.0).unwrap();
        gp.observe(&[1.0], "a", -50.0).unwrap();
        assert_eq!(gp.select(&[1.0], &actions(), Mode::Exploit, &mut rng).unwrap(), "b");
    }

    #[test]
    fn dimension_mismatch() {
        let gp = GpSarsa::new(2, &actions(), GpParams::default());
        assert!(matches!(gp.q(&[1.0], "a"), Err(Error::DimensionMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn returns_of_constant_penalty_and_bonus() {
        let mut rewards = vec![-1.0; 7];
        rewards[6] += 30.0;
        assert_eq!(discounted_returns(&rewards, 1.0)[0], 23.0);
    }
}

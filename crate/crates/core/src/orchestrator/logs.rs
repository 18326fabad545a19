use serde::{Deserialize, Serialize};

/// Cumulative episode reward of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleReward {
    pub platoon: usize,
    pub vehicle: usize,
    pub cumulative: f64,
}

/// One training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Federated updates were enabled for this episode.
    pub frl_active: bool,
    pub steps_taken: usize,
    pub rewards: Vec<VehicleReward>,
    /// Platoons whose divergence guard tripped this episode.
    pub diverged_platoons: Vec<usize>,
    /// Diagnostics only; excluded from deterministic artifacts.
    pub wall_clock_s: f64,
}

impl EpisodeRecord {
    /// Mean cumulative reward over every vehicle.
    pub fn system_reward(&self) -> f64 {
        let n = self.rewards.len().max(1);
        self.rewards.iter().map(|r| r.cumulative).sum::<f64>() / n as f64
    }
}

/// Full training history of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    /// Barrier events where at least one vehicle received an averaged update.
    pub fed_updates: u64,
}

impl TrainingLog {
    pub fn system_rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.system_reward()).collect()
    }
}

/// Per-step record of one vehicle during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub step: usize,
    pub time_s: f64,
    pub e_p: f64,
    pub e_v: f64,
    pub a: f64,
    pub u: f64,
    pub jerk: f64,
    pub reward: f64,
}

/// Evaluation outcome of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleEval {
    pub platoon: usize,
    pub vehicle: usize,
    pub cumulative_reward: f64,
    pub trajectory: Vec<TrajPoint>,
}

/// Fixed-seed evaluation of a full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eval_seed: u64,
    pub vehicles: Vec<VehicleEval>,
    /// Mean of the vehicles' cumulative rewards.
    pub system_average: f64,
}

/// Trailing moving average with warm-up truncation: the first `k < window`
/// points average the available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

/// Across-seed summary of system rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    /// Standard deviation with divisor `n`.
    pub std_population: f64,
    /// Standard deviation with divisor `n - 1`; zero for a single seed.
    pub std_sample: f64,
}

/// Summarize per-seed system rewards.
pub fn aggregate_seeds(per_seed: &[(u64, f64)]) -> SeedSummary {
    let n = per_seed.len().max(1) as f64;
    let mean = per_seed.iter().map(|(_, v)| v).sum::<f64>() / n;
    let ss: f64 = per_seed.iter().map(|(_, v)| (v - mean).powi(2)).sum();
    let std_population = (ss / n).sqrt();
    let std_sample = if per_seed.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    SeedSummary { per_seed: per_seed.to_vec(), mean, std_population, std_sample }
}

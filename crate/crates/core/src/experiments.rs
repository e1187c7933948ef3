//! Reproduction experiments: the altruism sweep, the mixed-population
//! replication of the three contribution strategies, and the comparison of
//! learned agents against full-information exact optimisers. Also hosts the
//! exact-utility oracle and the response-curve strategy classifier.

use serde::{Deserialize, Serialize};

use crate::engine::{self, Agent, CoPlayers, PhaseConfig, ResponseCurve};
use crate::error::{Error, Result};
use crate::nnet::NetworkConfig;
use crate::pgg::ScenarioConfig;
use crate::seed;
use crate::values::{self, PersonalValues, UtilityInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileLabel {
    FreeRider,
    HumpShaped,
    ConditionalCooperator,
    Custom,
}

impl ProfileLabel {
    /// Values of the built-in profiles; `None` for `Custom`.
    pub fn builtin_values(self) -> Option<PersonalValues> {
        let v = |si, al, co, fa| PersonalValues { si, al, co, fa };
        match self {
            ProfileLabel::FreeRider => Some(v(1.0, 0.0, 0.0, 0.0)),
            ProfileLabel::HumpShaped => Some(v(0.5, 0.5, 0.0, 0.0)),
            ProfileLabel::ConditionalCooperator => Some(v(0.0, 0.0, 0.8, 0.0)),
            ProfileLabel::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileLabel::FreeRider => "free_rider",
            ProfileLabel::HumpShaped => "hump_shaped",
            ProfileLabel::ConditionalCooperator => "conditional_cooperator",
            ProfileLabel::Custom => "custom",
        }
    }
}

/// A block of identical agents within a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub label: ProfileLabel,
    /// Display name; defaults to the label.
    pub name: String,
    pub values: PersonalValues,
    pub count: usize,
}

impl StrategyProfile {
    pub fn builtin(label: ProfileLabel, count: usize) -> Result<Self> {
        let values = label.builtin_values().ok_or_else(|| {
            Error::config("profile.values", "custom profiles need explicit values")
        })?;
        Ok(StrategyProfile {
            label,
            name: label.as_str().to_string(),
            values,
            count,
        })
    }

    pub fn custom(name: impl Into<String>, values: PersonalValues, count: usize) -> Result<Self> {
        values.validate()?;
        Ok(StrategyProfile {
            label: ProfileLabel::Custom,
            name: name.into(),
            values,
            count,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.values.validate()?;
        if let Some(v) = self.label.builtin_values() {
            if v != self.values {
                return Err(Error::config(
                    format!("profile.{}", self.name),
                    "built-in profile values cannot be overridden; use label = \"custom\"",
                ));
            }
        }
        if self.count == 0 {
            return Err(Error::config(
                format!("profile.{}.count", self.name),
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// The default replication population: 44 agents in 11 groups of four,
/// 22 conditional cooperators, 13 free riders, 6 hump-shaped and 3 agents
/// outside the three strategies (pure fairness seekers).
pub fn default_profiles() -> Vec<StrategyProfile> {
    vec![
        StrategyProfile::builtin(ProfileLabel::ConditionalCooperator, 22).unwrap(),
        StrategyProfile::builtin(ProfileLabel::FreeRider, 13).unwrap(),
        StrategyProfile::builtin(ProfileLabel::HumpShaped, 6).unwrap(),
        StrategyProfile::custom(
            "other",
            PersonalValues {
                si: 0.0,
                al: 0.0,
                co: 0.0,
                fa: 1.0,
            },
            3,
        )
        .unwrap(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyLabel {
    FreeRider,
    ConditionalCooperator,
    HumpShaped,
    Other,
}

impl StrategyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyLabel::FreeRider => "free_rider",
            StrategyLabel::ConditionalCooperator => "conditional_cooperator",
            StrategyLabel::HumpShaped => "hump_shaped",
            StrategyLabel::Other => "other",
        }
    }
}

/// Operational thresholds for naming a response curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Curves with a mean contribution at or below this are free riding.
    pub free_rider_max_mean: f64,
    /// Minimal Spearman correlation for conditional cooperation.
    pub cooperator_min_rho: f64,
    /// Inclusive range of `x` where a hump's peak must lie.
    pub hump_peak_window: (usize, usize),
    /// A hump must fall to at most this fraction of its peak at the top `x`.
    pub hump_decay: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            free_rider_max_mean: 1.0,
            cooperator_min_rho: 0.8,
            hump_peak_window: (4, 16),
            hump_decay: 0.6,
        }
    }
}

/// Spearman rank correlation (average ranks for ties). Zero when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut start = 0;
        while start < idx.len() {
            let mut end = start + 1;
            while end < idx.len() && v[idx[end]] == v[idx[start]] {
                end += 1;
            }
            let avg = (start + end - 1) as f64 / 2.0 + 1.0;
            for &i in &idx[start..end] {
                r[i] = avg;
            }
            start = end;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Spearman correlation between `x = 0, 1, …` and the curve.
pub fn curve_rho(curve: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..curve.len()).map(|x| x as f64).collect();
    spearman(&xs, curve)
}

/// First index of the maximum.
pub fn peak(curve: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = i;
        }
    }
    (best, curve[best])
}

/// Names a response curve. Rules, in order: low mean → free rider; strong
/// positive rank correlation without a late drop → conditional cooperator;
/// interior peak with a decayed tail → hump-shaped; otherwise other.
pub fn classify_strategy(curve: &[f64], cfg: &ClassifierConfig) -> Result<StrategyLabel> {
    let (lo, hi) = cfg.hump_peak_window;
    if curve.len() < 3 || hi >= curve.len() || lo > hi {
        return Err(Error::input(format!(
            "curve of length {} does not fit the classifier window [{lo}, {hi}]",
            curve.len()
        )));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("curve contains a non-finite value"));
    }
    let last = curve.len() - 1;
    let mean = curve.iter().sum::<f64>() / curve.len() as f64;
    if mean <= cfg.free_rider_max_mean {
        return Ok(StrategyLabel::FreeRider);
    }
    if curve_rho(curve) >= cfg.cooperator_min_rho && curve[last] >= curve[last / 2] {
        return Ok(StrategyLabel::ConditionalCooperator);
    }
    let (at, max) = peak(curve);
    if (lo..=hi).contains(&at) && curve[last] <= cfg.hump_decay * max {
        return Ok(StrategyLabel::HumpShaped);
    }
    Ok(StrategyLabel::Other)
}

/// Exact utility of every action when all co-players contribute exactly
/// `avg_others`.
pub fn exact_utilities(
    values: &PersonalValues,
    avg_others: f64,
    scen: &ScenarioConfig,
) -> Result<Vec<f64>> {
    scen.validate()?;
    values.validate()?;
    if !(0.0..=scen.endowment as f64).contains(&avg_others) {
        return Err(Error::input(format!(
            "average contribution {avg_others} is outside [0, {}]",
            scen.endowment
        )));
    }
    let n = scen.group_size;
    let e = scen.endowment as f64;
    let f = scen.enhancement_factor;
    let reference = crate::pgg::reference_payoff(scen);
    scen.actions()
        .map(|a| {
            let share = f * (a as f64 + (n - 1) as f64 * avg_others) / n as f64;
            let own = e - a as f64 + share;
            let other = e - avg_others + share;
            let mut payoffs = vec![other; n];
            payoffs[0] = own;
            let inputs = UtilityInputs::new(
                values::normalize_payoff(own, reference)?,
                values::normalize_payoff(other, reference)?,
                values::gini(&payoffs)?,
            )?;
            Ok(values::utility(values, &inputs, scen.lambda)?.total)
        })
        .collect()
}

/// Full-information optimum: exact utility argmax, lowest action on ties.
pub fn oracle_decide(
    values: &PersonalValues,
    avg_others: f64,
    scen: &ScenarioConfig,
) -> Result<u32> {
    let u = exact_utilities(values, avg_others, scen)?;
    Ok(engine::argmax_lowest(&u) as u32)
}

pub fn oracle_curve(values: &PersonalValues, scen: &ScenarioConfig) -> Result<ResponseCurve> {
    scen.actions()
        .map(|x| oracle_decide(values, x as f64, scen))
        .collect::<Result<Vec<_>>>()
        .map(ResponseCurve)
}

/// Everything an experiment needs besides its own parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub scenario: ScenarioConfig,
    pub phases: PhaseConfig,
    pub classifier: ClassifierConfig,
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.phases.validate()?;
        let (lo, hi) = self.classifier.hump_peak_window;
        if lo > hi || hi > self.scenario.endowment as usize {
            return Err(Error::config(
                "classifier.hump_peak_window",
                "must be an ordered range within the contribution grid",
            ));
        }
        Ok(())
    }
}

/// Element-wise mean and population standard deviation of curves.
pub fn curve_stats(curves: &[ResponseCurve]) -> (Vec<f64>, Vec<f64>) {
    let len = curves.first().map_or(0, |c| c.len());
    let n = curves.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for x in 0..len {
        let m = curves.iter().map(|c| c.0[x] as f64).sum::<f64>() / n;
        let var = curves
            .iter()
            .map(|c| (c.0[x] as f64 - m).powi(2))
            .sum::<f64>()
            / n;
        mean[x] = m;
        std[x] = var.sqrt();
    }
    (mean, std)
}

/// Builds a population of `profiles` (ids in profile order), padded with
/// extra agents of the last profile up to a whole number of groups when
/// `pad` is set. Returns the agents and the number of reported agents.
fn build_population(
    blocks: &[(PersonalValues, usize)],
    group_size: usize,
    pad: bool,
) -> Result<(Vec<Agent>, usize)> {
    let mut agents = Vec::new();
    for &(v, count) in blocks {
        for _ in 0..count {
            agents.push(Agent::new(agents.len(), v));
        }
    }
    let reported = agents.len();
    if pad {
        let filler = blocks
            .last()
            .map(|b| b.0)
            .ok_or_else(|| Error::config("population", "must not be empty"))?;
        while agents.len() % group_size != 0 {
            agents.push(Agent::new(agents.len(), filler));
        }
    }
    Ok((agents, reported))
}

/// Experience for the whole population, then training for the first
/// `reported` agents, then their response curves.
fn run_framework(
    agents: &mut [Agent],
    reported: usize,
    settings: &Settings,
    master_seed: u64,
) -> Result<Vec<ResponseCurve>> {
    engine::experience_phase(agents, &settings.scenario, &settings.phases, master_seed)?;
    engine::train_population(
        &mut agents[..reported],
        &settings.scenario,
        &settings.phases,
        master_seed,
    )?;
    agents[..reported]
        .iter()
        .map(|a| engine::response_curve(a, &settings.scenario))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub al: f64,
    pub seed: u64,
    pub curves: Vec<ResponseCurve>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub label: StrategyLabel,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub si: f64,
    pub points: Vec<SweepPoint>,
}

/// For each altruism level, trains `agents_per_value` agents with
/// `(si = 0.5, al, co = 0, fa = 0)` in a population of their peers and
/// reports the mean response curve.
pub fn sweep_altruism(
    settings: &Settings,
    al_values: &[f64],
    agents_per_value: usize,
    master_seed: u64,
) -> Result<SweepResult> {
    settings.validate()?;
    if al_values.is_empty() {
        return Err(Error::config("sweep.al_values", "must not be empty"));
    }
    if agents_per_value == 0 {
        return Err(Error::config(
            "sweep.agents_per_value",
            "must be at least 1",
        ));
    }
    let si = 0.5;
    let mut points = Vec::with_capacity(al_values.len());
    for (k, &al) in al_values.iter().enumerate() {
        let values = PersonalValues::new(si, al, 0.0, 0.0)?;
        let point_seed = seed::derive(master_seed, "sweep", k as u64);
        let (mut agents, reported) = build_population(
            &[(values, agents_per_value)],
            settings.scenario.group_size,
            true,
        )?;
        let curves = run_framework(&mut agents, reported, settings, point_seed)?;
        let (mean, std) = curve_stats(&curves);
        let label = classify_strategy(&mean, &settings.classifier)?;
        points.push(SweepPoint {
            al,
            seed: point_seed,
            curves,
            mean,
            std,
            label,
        });
    }
    Ok(SweepResult { si, points })
}

pub const DEFAULT_AL_GRID: [f64; 5] = [0.40, 0.45, 0.50, 0.55, 0.60];

#[derive(Debug, Clone, Serialize)]
pub struct AgentCurve {
    pub profile: usize,
    pub agent_id: usize,
    pub curve: ResponseCurve,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub profile: StrategyProfile,
    pub mean: Vec<f64>,
    pub label: StrategyLabel,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationResult {
    pub agents: Vec<AgentCurve>,
    pub profiles: Vec<ProfileSummary>,
    pub population_mean: Vec<f64>,
}

/// Trains a mixed population together and summarises every profile.
pub fn replicate_experiment(
    settings: &Settings,
    profiles: &[StrategyProfile],
    master_seed: u64,
) -> Result<ReplicationResult> {
    settings.validate()?;
    if profiles.is_empty() {
        return Err(Error::config("replicate.profiles", "must not be empty"));
    }
    for p in profiles {
        p.validate()?;
    }
    let blocks: Vec<(PersonalValues, usize)> =
        profiles.iter().map(|p| (p.values, p.count)).collect();
    let (mut agents, reported) = build_population(&blocks, settings.scenario.group_size, false)?;
    let curves = run_framework(&mut agents, reported, settings, master_seed)?;

    let mut owner = Vec::with_capacity(reported);
    for (k, p) in profiles.iter().enumerate() {
        owner.extend(std::iter::repeat_n(k, p.count));
    }
    let agent_curves: Vec<AgentCurve> = curves
        .iter()
        .zip(&agents)
        .zip(&owner)
        .map(|((c, a), &k)| AgentCurve {
            profile: k,
            agent_id: a.id(),
            curve: c.clone(),
        })
        .collect();
    let summaries = profiles
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let own: Vec<ResponseCurve> = agent_curves
                .iter()
                .filter(|c| c.profile == k)
                .map(|c| c.curve.clone())
                .collect();
            let (mean, _) = curve_stats(&own);
            let label = classify_strategy(&mean, &settings.classifier)?;
            Ok(ProfileSummary {
                profile: p.clone(),
                mean,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (population_mean, _) = curve_stats(&curves);
    Ok(ReplicationResult {
        agents: agent_curves,
        profiles: summaries,
        population_mean,
    })
}

/// How the full-information baseline is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
#[derive(Default)]
pub enum RlMode {
    /// Exact argmax of the true utility.
    #[default]
    Analytic,
    /// Networks trained on homogeneous co-player data until the validation
    /// R² reaches `threshold`.
    Converged { threshold: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareResult {
    pub values: PersonalValues,
    pub framework: Vec<ResponseCurve>,
    pub oracle: Vec<ResponseCurve>,
    /// Largest per-`x` difference over all framework pairs.
    pub framework_max_divergence: u32,
    pub oracle_max_divergence: u32,
    /// Mean absolute per-`x` difference averaged over framework pairs.
    pub framework_mean_divergence: f64,
    pub oracle_mean_divergence: f64,
}

fn pairwise_divergence(curves: &[ResponseCurve]) -> (u32, f64) {
    let mut max = 0;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let diffs = curves[i]
                .0
                .iter()
                .zip(&curves[j].0)
                .map(|(a, b)| a.abs_diff(*b));
            let mut pair_sum = 0u32;
            for d in diffs {
                max = max.max(d);
                pair_sum += d;
            }
            sum += pair_sum as f64 / curves[i].len() as f64;
            pairs += 1;
        }
    }
    (max, if pairs == 0 { 0.0 } else { sum / pairs as f64 })
}

/// A schedule that keeps descending until `threshold` is met: larger
/// steps, long patience and no learning-rate floor.
pub fn converged_network(base: &NetworkConfig, threshold: f64) -> NetworkConfig {
    NetworkConfig {
        accuracy_threshold: threshold,
        learning_rate_init: 0.05,
        patience_epochs: 20,
        max_epochs: 4000,
        min_learning_rate: 0.0,
        ..base.clone()
    }
}

/// Learned agents versus full-information optimisers with identical values.
pub fn compare_rl(
    settings: &Settings,
    values: PersonalValues,
    n_agents: usize,
    mode: RlMode,
    master_seed: u64,
) -> Result<CompareResult> {
    settings.validate()?;
    values.validate()?;
    if n_agents == 0 {
        return Err(Error::config("compare_rl.n_agents", "must be at least 1"));
    }
    let (mut agents, reported) =
        build_population(&[(values, n_agents)], settings.scenario.group_size, true)?;
    let framework = run_framework(&mut agents, reported, settings, master_seed)?;

    let oracle = match mode {
        RlMode::Analytic => (0..n_agents)
            .map(|i| engine::response_curve(&Agent::oracle(i, values), &settings.scenario))
            .collect::<Result<Vec<_>>>()?,
        RlMode::Converged { threshold } => {
            let mut phases = settings.phases.clone();
            phases.network = converged_network(&settings.phases.network, threshold);
            (0..n_agents)
                .map(|i| {
                    let mut a = Agent::new(i, values);
                    let s = seed::derive(master_seed, "rl", i as u64);
                    engine::experience_with_scripted(
                        &mut a,
                        CoPlayers::UniformHomogeneous,
                        &settings.scenario,
                        &phases,
                        s,
                    )?;
                    engine::training_phase(&mut a, &settings.scenario, &phases, s)?;
                    engine::response_curve(&a, &settings.scenario)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let (framework_max_divergence, framework_mean_divergence) = pairwise_divergence(&framework);
    let (oracle_max_divergence, oracle_mean_divergence) = pairwise_divergence(&oracle);
    Ok(CompareResult {
        values,
        framework,
        oracle,
        framework_max_divergence,
        oracle_max_divergence,
        framework_mean_divergence,
        oracle_mean_divergence,
    })
}

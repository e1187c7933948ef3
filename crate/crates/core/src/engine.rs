//! Agent lifecycle: random experience collection, per-agent network
//! training, and decisions by predicted-utility argmax.
//!
//! Agents only ever see the average contribution of their co-players, the
//! action they took and the scalar utility that came back. The payoffs of
//! the others, the Gini coefficient and the utility formula stay hidden.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Network, NetworkConfig, Sample, TrainReport};
use crate::pgg::{self, Regroup, ScenarioConfig};
use crate::seed;
use crate::values::PersonalValues;

/// One remembered round from the focal agent's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Experience {
    pub round: usize,
    /// Average contribution of the co-players in that round.
    pub observation: f64,
    pub action: u32,
    pub utility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Random,
    Learned,
    /// Exact-utility argmax with full information.
    Oracle,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: Network,
    pub scaling: Scaling,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct Agent {
    id: usize,
    values: PersonalValues,
    experiences: Vec<Experience>,
    model: Option<TrainedModel>,
    policy: Policy,
}

impl Agent {
    pub fn new(id: usize, values: PersonalValues) -> Self {
        Agent {
            id,
            values,
            experiences: Vec::new(),
            model: None,
            policy: Policy::Random,
        }
    }

    /// An agent that answers with the exact-utility optimum.
    pub fn oracle(id: usize, values: PersonalValues) -> Self {
        Agent {
            policy: Policy::Oracle,
            ..Agent::new(id, values)
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn values(&self) -> &PersonalValues {
        &self.values
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn model(&self) -> Option<&TrainedModel> {
        self.model.as_ref()
    }

    /// Appends an experience; only allowed while still acting randomly.
    pub fn record(&mut self, exp: Experience) -> Result<()> {
        if self.policy != Policy::Random {
            return Err(Error::Phase(format!(
                "agent {} no longer collects experiences",
                self.id
            )));
        }
        self.experiences.push(exp);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub experience_rounds: usize,
    /// Experience/training passes. Only a single pass is supported.
    pub iterations: usize,
    pub target_scaling: TargetScaling,
    pub network: NetworkConfig,
}

/// How utility targets are mapped before regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    /// Zero mean, unit variance over the agent's own experiences.
    #[default]
    Standardized,
    /// Affine map of the exact utility range `[-3λ, 1]` onto `[-1, 1]`.
    ScenarioBounds,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            experience_rounds: 2000,
            iterations: 1,
            target_scaling: TargetScaling::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experience_rounds == 0 {
            return Err(Error::config(
                "phases.experience_rounds",
                "must be at least 1",
            ));
        }
        if self.iterations != 1 {
            return Err(Error::config(
                "phases.iterations",
                "iterative re-experience is not supported; use 1",
            ));
        }
        self.network.validate()
    }
}

/// Input features on `[-1, 1]` plus an affine utility-to-target map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    max_contribution: f64,
    utility_offset: f64,
    utility_scale: f64,
}

impl Scaling {
    /// Standardises with the mean and spread of `utilities`.
    pub fn fit(scen: &ScenarioConfig, utilities: &[f64]) -> Result<Self> {
        if utilities.is_empty() {
            return Err(Error::Phase("no utilities to fit a scaling on".into()));
        }
        let n = utilities.len() as f64;
        let mean = utilities.iter().sum::<f64>() / n;
        let var = utilities.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(Scaling {
            max_contribution: scen.endowment as f64,
            utility_offset: mean,
            utility_scale: if std > 1e-9 { std } else { 1.0 },
        })
    }

    /// Maps the exact utility bounds of the scenario onto `[-1, 1]`.
    pub fn bounds(scen: &ScenarioConfig) -> Self {
        let (lo, hi) = scen.utility_bounds();
        Scaling {
            max_contribution: scen.endowment as f64,
            utility_offset: (lo + hi) / 2.0,
            utility_scale: (hi - lo) / 2.0,
        }
    }

    pub fn features(&self, observation: f64, action: u32) -> [f64; 2] {
        [
            2.0 * observation / self.max_contribution - 1.0,
            2.0 * action as f64 / self.max_contribution - 1.0,
        ]
    }

    pub fn utility_to_target(&self, u: f64) -> f64 {
        (u - self.utility_offset) / self.utility_scale
    }

    pub fn target_to_utility(&self, t: f64) -> f64 {
        t * self.utility_scale + self.utility_offset
    }
}

fn check_population(population: &[Agent], scen: &ScenarioConfig) -> Result<()> {
    if population.is_empty() {
        return Err(Error::config("population", "must not be empty"));
    }
    if !population.len().is_multiple_of(scen.group_size) {
        return Err(Error::config(
            "population",
            format!(
                "{} agents cannot be split into groups of {}",
                population.len(),
                scen.group_size
            ),
        ));
    }
    if let Some(a) = population.iter().find(|a| a.policy != Policy::Random) {
        return Err(Error::Phase(format!(
            "agent {} is not in the experience phase",
            a.id
        )));
    }
    Ok(())
}

/// Random play: every round each agent draws a uniform contribution, the
/// population is grouped, and every agent records what it observed, what it
/// did and the utility it received.
pub fn experience_phase(
    population: &mut [Agent],
    scen: &ScenarioConfig,
    cfg: &PhaseConfig,
    master_seed: u64,
) -> Result<()> {
    scen.validate()?;
    cfg.validate()?;
    check_population(population, scen)?;

    let mut rng = seed::rng(master_seed, "experience", 0);
    let mut order: Vec<usize> = (0..population.len()).collect();
    let mut actions = vec![0u32; population.len()];
    for round in 0..cfg.experience_rounds {
        if scen.regroup == Regroup::RandomEachRound {
            order.shuffle(&mut rng);
        }
        for a in actions.iter_mut() {
            *a = rng.random_range(0..=scen.endowment);
        }
        for group in order.chunks(scen.group_size) {
            let members: Vec<(usize, PersonalValues)> = group
                .iter()
                .map(|&i| (population[i].id, population[i].values))
                .collect();
            let contributions: Vec<u32> = group.iter().map(|&i| actions[i]).collect();
            let outcome = pgg::play_round(&members, &contributions, scen)?;
            for (k, &i) in group.iter().enumerate() {
                population[i].record(Experience {
                    round,
                    observation: outcome.observations[k],
                    action: contributions[k],
                    utility: outcome.utilities[k].total,
                })?;
            }
        }
    }
    Ok(())
}

/// Scripted co-players for single-agent experience collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoPlayers {
    /// Every co-player always contributes this amount.
    Constant(u32),
    /// Each round one uniform amount is drawn and all co-players contribute it.
    UniformHomogeneous,
}

/// Experience phase for a lone agent whose co-players follow a script.
pub fn experience_with_scripted(
    agent: &mut Agent,
    co_players: CoPlayers,
    scen: &ScenarioConfig,
    cfg: &PhaseConfig,
    master_seed: u64,
) -> Result<()> {
    scen.validate()?;
    cfg.validate()?;
    if agent.policy != Policy::Random {
        return Err(Error::Phase(format!(
            "agent {} is not in the experience phase",
            agent.id
        )));
    }
    if let CoPlayers::Constant(c) = co_players {
        if c > scen.endowment {
            return Err(Error::input(format!(
                "scripted contribution {c} is off the grid"
            )));
        }
    }
    let filler = PersonalValues::new(0.0, 0.0, 0.0, 0.0)?;
    let mut members = vec![(agent.id, agent.values)];
    members.extend((1..scen.group_size).map(|k| (usize::MAX - k, filler)));

    let mut rng = seed::rng(master_seed, "scripted-experience", agent.id as u64);
    let mut contributions = vec![0u32; scen.group_size];
    for round in 0..cfg.experience_rounds {
        let others = match co_players {
            CoPlayers::Constant(c) => c,
            CoPlayers::UniformHomogeneous => rng.random_range(0..=scen.endowment),
        };
        contributions[0] = rng.random_range(0..=scen.endowment);
        contributions[1..].fill(others);
        let outcome = pgg::play_round(&members, &contributions, scen)?;
        agent.record(Experience {
            round,
            observation: outcome.observations[0],
            action: contributions[0],
            utility: outcome.utilities[0].total,
        })?;
    }
    Ok(())
}

/// Fits the agent's own network to its experiences and switches it to the
/// learned policy.
pub fn training_phase(
    agent: &mut Agent,
    scen: &ScenarioConfig,
    cfg: &PhaseConfig,
    master_seed: u64,
) -> Result<TrainReport> {
    train_agent(agent, scen, cfg, master_seed).map_err(|e| e.for_agent(agent.id))
}

fn train_agent(
    agent: &mut Agent,
    scen: &ScenarioConfig,
    cfg: &PhaseConfig,
    master_seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    if agent.policy != Policy::Random {
        return Err(Error::Phase(
            "agent has already left the experience phase".into(),
        ));
    }
    if agent.experiences.is_empty() {
        return Err(Error::Phase("no experiences to train on".into()));
    }
    let utilities: Vec<f64> = agent.experiences.iter().map(|e| e.utility).collect();
    let scaling = match cfg.target_scaling {
        TargetScaling::Standardized => Scaling::fit(scen, &utilities)?,
        TargetScaling::ScenarioBounds => Scaling::bounds(scen),
    };
    let samples: Vec<Sample> = agent
        .experiences
        .iter()
        .map(|e| {
            Sample::new(
                scaling.features(e.observation, e.action).to_vec(),
                scaling.utility_to_target(e.utility),
            )
        })
        .collect();
    let net_cfg = NetworkConfig {
        input_dim: 2,
        rng_seed: seed::derive(master_seed, "net-train", agent.id as u64),
        ..cfg.network.clone()
    };
    let mut net = Network::new(
        2,
        net_cfg.hidden_units,
        seed::derive(master_seed, "net-init", agent.id as u64),
    )?;
    let report = net.train(&samples, &net_cfg)?;
    agent.model = Some(TrainedModel {
        net,
        scaling,
        report: report.clone(),
    });
    agent.policy = Policy::Learned;
    Ok(report)
}

/// Trains every agent independently, in parallel. Results are in
/// population order and do not depend on scheduling.
pub fn train_population(
    population: &mut [Agent],
    scen: &ScenarioConfig,
    cfg: &PhaseConfig,
    master_seed: u64,
) -> Result<Vec<TrainReport>> {
    population
        .par_iter_mut()
        .map(|a| training_phase(a, scen, cfg, master_seed))
        .collect()
}

/// Predicted utility of every action on the grid given the co-players'
/// average contribution.
pub fn predicted_utilities(
    agent: &Agent,
    avg_others: f64,
    scen: &ScenarioConfig,
) -> Result<Vec<f64>> {
    check_observation(avg_others, scen)?;
    let model = match (agent.policy, &agent.model) {
        (Policy::Learned, Some(m)) => m,
        _ => {
            return Err(Error::Phase(format!(
                "agent {} has no trained network",
                agent.id
            )))
        }
    };
    let scaling = &model.scaling;
    scen.actions()
        .map(|a| {
            let t = model.net.forward(&scaling.features(avg_others, a))?;
            Ok(scaling.target_to_utility(t))
        })
        .collect()
}

fn check_observation(avg_others: f64, scen: &ScenarioConfig) -> Result<()> {
    if !(0.0..=scen.endowment as f64).contains(&avg_others) {
        return Err(Error::input(format!(
            "average contribution {avg_others} is outside [0, {}]",
            scen.endowment
        )));
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The contribution the agent chooses when the others give `avg_others`.
pub fn decide(agent: &Agent, avg_others: f64, scen: &ScenarioConfig) -> Result<u32> {
    match agent.policy {
        Policy::Learned => {
            let u = predicted_utilities(agent, avg_others, scen)?;
            Ok(argmax_lowest(&u) as u32)
        }
        Policy::Oracle => {
            check_observation(avg_others, scen)?;
            crate::experiments::oracle_decide(&agent.values, avg_others, scen)
        }
        Policy::Random => Err(Error::Phase(format!(
            "agent {} must be trained before deciding",
            agent.id
        ))),
    }
}

/// Chosen contribution for every hypothetical average `x = 0..=endowment`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCurve(pub Vec<u32>);

impl ResponseCurve {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&a| a as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().map(|&a| a as f64).sum::<f64>() / self.0.len() as f64
    }
}

pub fn response_curve(agent: &Agent, scen: &ScenarioConfig) -> Result<ResponseCurve> {
    scen.actions()
        .map(|x| decide(agent, x as f64, scen))
        .collect::<Result<Vec<_>>>()
        .map(ResponseCurve)
}

/// Writes all experiences as CSV: `agent_id,round,observation,action,utility`.
pub fn write_experiences_csv<W: Write>(agents: &[Agent], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["agent_id", "round", "observation", "action", "utility"])?;
    for a in agents {
        for e in &a.experiences {
            w.write_record([
                a.id.to_string(),
                e.round.to_string(),
                e.observation.to_string(),
                e.action.to_string(),
                e.utility.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(si: f64, al: f64, co: f64, fa: f64) -> PersonalValues {
        PersonalValues::new(si, al, co, fa).unwrap()
    }

    fn population(n: usize, v: PersonalValues) -> Vec<Agent> {
        (0..n).map(|i| Agent::new(i, v)).collect()
    }

    fn short_phase(rounds: usize) -> PhaseConfig {
        PhaseConfig {
            experience_rounds: rounds,
            ..PhaseConfig::default()
        }
    }

    #[test]
    fn one_experience_per_round() {
        let scen = ScenarioConfig::default();
        let mut pop = population(4, values(0.5, 0.5, 0.0, 0.0));
        experience_phase(&mut pop, &scen, &short_phase(10), 1).unwrap();
        for a in &pop {
            assert_eq!(a.experiences().len(), 10);
            for (r, e) in a.experiences().iter().enumerate() {
                assert_eq!(e.round, r);
                assert!(e.action <= 20);
                assert!((0.0..=20.0).contains(&e.observation));
            }
        }
    }

    #[test]
    fn experience_is_deterministic() {
        let scen = ScenarioConfig::default();
        let run = |seed| {
            let mut pop = population(8, values(0.0, 0.0, 0.8, 0.0));
            experience_phase(&mut pop, &scen, &short_phase(50), seed).unwrap();
            pop.iter()
                .map(|a| a.experiences().to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn observations_cover_the_grid() {
        let scen = ScenarioConfig::default();
        let mut pop = population(8, values(0.5, 0.5, 0.0, 0.0));
        experience_phase(&mut pop, &scen, &PhaseConfig::default(), 9).unwrap();
        for a in &pop {
            let mut seen = [false; 21];
            for e in a.experiences() {
                seen[e.observation.round() as usize] = true;
            }
            assert!(seen.iter().filter(|&&s| s).count() >= 15);
        }
    }

    #[test]
    fn indivisible_population_is_rejected() {
        let scen = ScenarioConfig::default();
        let mut pop = population(6, values(0.0, 0.0, 0.0, 0.0));
        let err = experience_phase(&mut pop, &scen, &short_phase(1), 0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn iterative_passes_are_rejected() {
        let cfg = PhaseConfig {
            iterations: 2,
            ..PhaseConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_buffer_cannot_be_trained() {
        let scen = ScenarioConfig::default();
        let mut a = Agent::new(3, values(1.0, 0.0, 0.0, 0.0));
        let err = training_phase(&mut a, &scen, &PhaseConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Agent { agent: 3, .. }));
    }

    #[test]
    fn deciding_before_training_is_an_error() {
        let scen = ScenarioConfig::default();
        let a = Agent::new(0, values(1.0, 0.0, 0.0, 0.0));
        assert!(matches!(decide(&a, 10.0, &scen), Err(Error::Phase(_))));
        assert!(response_curve(&a, &scen).is_err());
    }

    #[test]
    fn experiences_are_frozen_after_training() {
        let scen = ScenarioConfig::default();
        let mut pop = population(4, values(1.0, 0.0, 0.0, 0.0));
        experience_phase(&mut pop, &scen, &short_phase(60), 2).unwrap();
        training_phase(&mut pop[0], &scen, &short_phase(60), 2).unwrap();
        let exp = pop[0].experiences()[0];
        assert!(matches!(pop[0].record(exp), Err(Error::Phase(_))));
        assert!(experience_phase(&mut pop, &scen, &short_phase(1), 2).is_err());
    }

    #[test]
    fn zero_network_picks_lowest_action() {
        let scen = ScenarioConfig::default();
        let mut a = Agent::new(0, values(0.0, 0.0, 0.0, 0.0));
        a.model = Some(TrainedModel {
            net: Network::zeros(2, 4),
            scaling: Scaling::fit(&scen, &[0.0]).unwrap(),
            report: TrainReport {
                epochs_run: 0,
                final_validation_score: 0.0,
                stopped_by: crate::nnet::StopReason::MaxEpochs,
                learning_rates: vec![],
                validation_scores: vec![],
            },
        });
        a.policy = Policy::Learned;
        assert_eq!(decide(&a, 7.0, &scen).unwrap(), 0);
        let curve = response_curve(&a, &scen).unwrap();
        assert_eq!(curve.len(), 21);
        assert!(curve.as_slice().iter().all(|&c| c == 0));
        assert!(decide(&a, 21.0, &scen).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[0.0; 5]), 0);
    }

    #[test]
    fn scaling_round_trips() {
        let scen = ScenarioConfig::default();
        let s = Scaling::fit(&scen, &[-3.0, 1.0]).unwrap();
        assert_eq!(s.features(0.0, 20), [-1.0, 1.0]);
        assert_eq!(s.utility_to_target(-3.0), -1.0);
        assert_eq!(s.utility_to_target(1.0), 1.0);
        assert!((s.target_to_utility(s.utility_to_target(-2.6)) + 2.6).abs() < 1e-12);
        let flat = Scaling::fit(&scen, &[0.5, 0.5]).unwrap();
        assert_eq!(flat.utility_to_target(0.5), 0.0);
        assert!(Scaling::fit(&scen, &[]).is_err());
        let b = Scaling::bounds(&scen);
        assert_eq!(b.utility_to_target(-30.0), -1.0);
        assert_eq!(b.utility_to_target(1.0), 1.0);
    }

    #[test]
    fn experience_csv_has_header_and_rows() {
        let scen = ScenarioConfig::default();
        let mut pop = population(4, values(0.0, 0.0, 0.0, 0.0));
        experience_phase(&mut pop, &scen, &short_phase(3), 0).unwrap();
        let mut buf = Vec::new();
        write_experiences_csv(&pop, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "agent_id,round,observation,action,utility"
        );
        assert_eq!(lines.count(), 12);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn training_is_isolated_per_agent() {
        let scen = ScenarioConfig::default();
        let mut cfg = short_phase(60);
        cfg.network.hidden_units = 6;
        cfg.network.max_epochs = 5;
        let mut pop = population(8, values(0.5, 0.5, 0.0, 0.0));
        experience_phase(&mut pop, &scen, &cfg, 4).unwrap();
        let mut alone = pop[5].clone();
        train_population(&mut pop, &scen, &cfg, 4).unwrap();
        training_phase(&mut alone, &scen, &cfg, 4).unwrap();
        assert_eq!(alone.model().unwrap().net, pop[5].model().unwrap().net);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn experiences_are_well_formed(seed in any::<u64>(), groups in 1usize..4, rounds in 1usize..25) {
                let scen = ScenarioConfig::default();
                let mut pop = population(4 * groups, values(0.3, 0.6, 0.5, 0.4));
                experience_phase(&mut pop, &scen, &short_phase(rounds), seed).unwrap();
                let mut again = population(4 * groups, values(0.3, 0.6, 0.5, 0.4));
                experience_phase(&mut again, &scen, &short_phase(rounds), seed).unwrap();
                let (lo, hi) = scen.utility_bounds();
                for (a, b) in pop.iter().zip(&again) {
                    prop_assert_eq!(a.experiences(), b.experiences());
                    prop_assert_eq!(a.experiences().len(), rounds);
                    for (k, e) in a.experiences().iter().enumerate() {
                        prop_assert_eq!(e.round, k);
                        prop_assert!((0.0..=20.0).contains(&e.observation));
                        prop_assert!((e.observation * 3.0 - (e.observation * 3.0).round()).abs() < 1e-9);
                        prop_assert!(e.action <= 20);
                        prop_assert!(e.utility >= lo && e.utility <= hi);
                    }
                }
            }
        }
    }
}

//! Linear public goods game.
//!
//! Every member of a group of `N` receives an endowment and contributes an
//! integer amount of it. The pot is multiplied by the enhancement factor `f`
//! and shared equally, so member `i` earns
//! `endowment − cᵢ + f·Σc / N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::values::{self, PersonalValues, UtilityBreakdown, UtilityInputs};

/// How groups are formed between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regroup {
    /// Consecutive agents form the same groups every round.
    Fixed,
    /// The population is reshuffled into new groups every round.
    RandomEachRound,
}

/// Payoff that normalises `p_s` and `p_o` to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffReference {
    /// The largest payoff the formula can produce: contribute nothing while
    /// everyone else contributes everything (41 for the default game).
    Attainable,
    /// `endowment · (1 + f)`: the full endowment kept plus the share of a
    /// fully funded pot (48 for the default game). Not attainable, but it is
    /// the scale under which the built-in value profiles produce the
    /// free-riding, hump-shaped and conditionally cooperative responses.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub endowment: u32,
    pub enhancement_factor: f64,
    pub group_size: usize,
    pub regroup: Regroup,
    /// Weight of the cost terms in the utility.
    pub lambda: f64,
    pub payoff_reference: PayoffReference,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            endowment: 20,
            enhancement_factor: 1.4,
            group_size: 4,
            regroup: Regroup::RandomEachRound,
            lambda: values::DEFAULT_LAMBDA,
            payoff_reference: PayoffReference::Nominal,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endowment == 0 {
            return Err(Error::config("scenario.endowment", "must be at least 1"));
        }
        if self.group_size < 2 {
            return Err(Error::config(
                "scenario.group_size",
                "must be at least 2 so members have others to observe",
            ));
        }
        let f = self.enhancement_factor;
        if !(f > 1.0 && f < self.group_size as f64) {
            return Err(Error::config(
                "scenario.enhancement_factor",
                format!("{f} violates 1 < f < group_size"),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("scenario.lambda", "must be positive"));
        }
        Ok(())
    }

    /// Number of actions on the contribution grid `0..=endowment`.
    pub fn action_count(&self) -> usize {
        self.endowment as usize + 1
    }

    pub fn actions(&self) -> impl Iterator<Item = u32> {
        0..=self.endowment
    }

    /// Utility range `[−3λ, 1]`.
    pub fn utility_bounds(&self) -> (f64, f64) {
        (-3.0 * self.lambda, 1.0)
    }

    fn check_contribution(&self, c: u32) -> Result<()> {
        if c > self.endowment {
            return Err(Error::input(format!(
                "contribution {c} is off the grid 0..={}",
                self.endowment
            )));
        }
        Ok(())
    }
}

fn sum_form(own: u32, total: f64, cfg: &ScenarioConfig) -> f64 {
    cfg.endowment as f64 - own as f64 + cfg.enhancement_factor * total / cfg.group_size as f64
}

/// Payoff of member `own` given every member's contribution.
pub fn payoff(own: usize, contributions: &[u32], cfg: &ScenarioConfig) -> Result<f64> {
    if contributions.len() != cfg.group_size {
        return Err(Error::input(format!(
            "expected {} contributions, got {}",
            cfg.group_size,
            contributions.len()
        )));
    }
    let own_c = *contributions
        .get(own)
        .ok_or_else(|| Error::input(format!("member index {own} out of range")))?;
    for &c in contributions {
        cfg.check_contribution(c)?;
    }
    let total: u32 = contributions.iter().sum();
    Ok(sum_form(own_c, total as f64, cfg))
}

/// The same payoff written through the others' average contribution:
/// `endowment − c + f·(c + (N−1)·avg) / N`.
pub fn payoff_from_average(own: u32, avg_others: f64, cfg: &ScenarioConfig) -> Result<f64> {
    cfg.check_contribution(own)?;
    if !(0.0..=cfg.endowment as f64).contains(&avg_others) {
        return Err(Error::input(format!(
            "average contribution {avg_others} is outside [0, {}]",
            cfg.endowment
        )));
    }
    let n = cfg.group_size as f64;
    Ok(cfg.endowment as f64 - own as f64
        + cfg.enhancement_factor * (own as f64 + (n - 1.0) * avg_others) / n)
}

/// Largest attainable payoff: own contribution 0, everyone else all in.
pub fn max_payoff(cfg: &ScenarioConfig) -> f64 {
    let others = (cfg.group_size as u32 - 1) * cfg.endowment;
    sum_form(0, others as f64, cfg)
}

/// The payoff used as the `[0, 1]` normalisation reference.
pub fn reference_payoff(cfg: &ScenarioConfig) -> f64 {
    match cfg.payoff_reference {
        PayoffReference::Attainable => max_payoff(cfg),
        PayoffReference::Nominal => cfg.endowment as f64 * (1.0 + cfg.enhancement_factor),
    }
}

/// Complete record of one group's round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundOutcome {
    pub group_members: Vec<usize>,
    pub contributions: Vec<u32>,
    pub payoffs: Vec<f64>,
    /// Average contribution of each member's co-players.
    pub observations: Vec<f64>,
    pub utility_inputs: Vec<UtilityInputs>,
    pub utilities: Vec<UtilityBreakdown>,
}

/// Plays one round for a group of `(agent id, values)` members.
pub fn play_round(
    members: &[(usize, PersonalValues)],
    contributions: &[u32],
    cfg: &ScenarioConfig,
) -> Result<RoundOutcome> {
    if members.len() != contributions.len() {
        return Err(Error::input(format!(
            "{} members but {} contributions",
            members.len(),
            contributions.len()
        )));
    }
    if members.len() != cfg.group_size {
        return Err(Error::input(format!(
            "group has {} members, scenario requires {}",
            members.len(),
            cfg.group_size
        )));
    }
    let n = cfg.group_size;
    let payoffs = (0..n)
        .map(|i| payoff(i, contributions, cfg))
        .collect::<Result<Vec<f64>>>()?;
    let total: u32 = contributions.iter().sum();
    let payoff_total: f64 = payoffs.iter().sum();
    let observations: Vec<f64> = contributions
        .iter()
        .map(|&c| (total - c) as f64 / (n - 1) as f64)
        .collect();

    let reference = reference_payoff(cfg);
    let gini = values::gini(&payoffs)?;
    let mut utility_inputs = Vec::with_capacity(n);
    let mut utilities = Vec::with_capacity(n);
    for (i, (_, v)) in members.iter().enumerate() {
        let others_mean = (payoff_total - payoffs[i]) / (n - 1) as f64;
        let inputs = UtilityInputs::new(
            values::normalize_payoff(payoffs[i], reference)?,
            values::normalize_payoff(others_mean, reference)?,
            gini,
        )?;
        utilities.push(values::utility(v, &inputs, cfg.lambda)?);
        utility_inputs.push(inputs);
    }

    Ok(RoundOutcome {
        group_members: members.iter().map(|(id, _)| *id).collect(),
        contributions: contributions.to_vec(),
        payoffs,
        observations,
        utility_inputs,
        utilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn attainable() -> ScenarioConfig {
        ScenarioConfig {
            payoff_reference: PayoffReference::Attainable,
            ..ScenarioConfig::default()
        }
    }

    fn members(n: usize) -> Vec<(usize, PersonalValues)> {
        let v = PersonalValues::new(0.0, 0.0, 0.0, 0.0).unwrap();
        (0..n).map(|i| (i, v)).collect()
    }

    #[test]
    fn payoff_examples() {
        let cfg = ScenarioConfig::default();
        assert_eq!(payoff(0, &[0, 0, 0, 0], &cfg).unwrap(), 20.0);
        assert!((payoff(2, &[20, 20, 20, 20], &cfg).unwrap() - 28.0).abs() < 1e-12);
        assert!((payoff(0, &[0, 20, 20, 20], &cfg).unwrap() - 41.0).abs() < 1e-12);
        assert!(payoff(0, &[21, 0, 0, 0], &cfg).is_err());
        assert!(payoff(0, &[0, 0, 0], &cfg).is_err());
    }

    #[test]
    fn max_payoff_examples() {
        assert!((max_payoff(&ScenarioConfig::default()) - 41.0).abs() < 1e-12);
        let pair = ScenarioConfig {
            group_size: 2,
            enhancement_factor: 1.0,
            ..ScenarioConfig::default()
        };
        assert!((max_payoff(&pair) - 30.0).abs() < 1e-12);
        let empty = ScenarioConfig {
            endowment: 0,
            ..ScenarioConfig::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn reference_payoffs() {
        assert!((reference_payoff(&attainable()) - 41.0).abs() < 1e-12);
        assert!((reference_payoff(&ScenarioConfig::default()) - 48.0).abs() < 1e-12);
    }

    #[test]
    fn nobody_contributes() {
        let cfg = attainable();
        let out = play_round(&members(4), &[0, 0, 0, 0], &cfg).unwrap();
        for inp in &out.utility_inputs {
            assert!((inp.p_s - 20.0 / 41.0).abs() < 1e-12);
            assert!((inp.p_o - 20.0 / 41.0).abs() < 1e-12);
            assert_eq!(inp.gini, 0.0);
        }
        assert!(out.observations.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn lone_free_rider() {
        let cfg = attainable();
        let out = play_round(&members(4), &[0, 20, 20, 20], &cfg).unwrap();
        assert!((out.payoffs[0] - 41.0).abs() < 1e-12);
        assert!((out.utility_inputs[0].p_s - 1.0).abs() < 1e-12);
        for p in &out.payoffs[1..] {
            assert!((p - 21.0).abs() < 1e-12);
        }
        // Pairwise: 3 pairs differ by 20, counted twice, over 2·16·26.
        let expected = 120.0 / (2.0 * 16.0 * 26.0);
        assert!((out.utility_inputs[0].gini - expected).abs() < 1e-12);
        assert_eq!(
            out.observations,
            vec![20.0, 40.0 / 3.0, 40.0 / 3.0, 40.0 / 3.0]
        );
        assert!((out.utility_inputs[0].p_o - 21.0 / 41.0).abs() < 1e-12);
    }

    #[test]
    fn single_member_group_is_rejected() {
        let cfg = ScenarioConfig {
            group_size: 1,
            ..ScenarioConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn enhancement_factor_must_be_a_dilemma() {
        for f in [1.0, 4.0, 5.0] {
            let cfg = ScenarioConfig {
                enhancement_factor: f,
                ..ScenarioConfig::default()
            };
            assert!(cfg.validate().is_err(), "f = {f}");
        }
    }

    #[test]
    fn contributing_never_pays() {
        let cfg = ScenarioConfig::default();
        for a in 0..20u32 {
            for others in [[0, 0, 0], [5, 13, 20], [20, 20, 20]] {
                let lo = payoff(0, &[a, others[0], others[1], others[2]], &cfg).unwrap();
                let hi = payoff(0, &[a + 1, others[0], others[1], others[2]], &cfg).unwrap();
                assert!(hi < lo);
            }
        }
    }

    #[test]
    fn full_contribution_is_socially_optimal() {
        let cfg = ScenarioConfig::default();
        let grid = [0u32, 5, 10, 15, 20];
        let mut best = (f64::MIN, [0u32; 4]);
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    for &d in &grid {
                        let cs = [a, b, c, d];
                        let total: f64 = (0..4).map(|i| payoff(i, &cs, &cfg).unwrap()).sum();
                        if total > best.0 {
                            best = (total, cs);
                        }
                    }
                }
            }
        }
        assert_eq!(best.1, [20, 20, 20, 20]);
    }

    #[test]
    fn normalised_payoffs_stay_in_unit_interval() {
        for cfg in [attainable(), ScenarioConfig::default()] {
            for cs in [[0, 20, 20, 20], [20, 0, 0, 0], [7, 3, 19, 11]] {
                let out = play_round(&members(4), &cs, &cfg).unwrap();
                for inp in out.utility_inputs {
                    assert!((0.0..=1.0).contains(&inp.p_s));
                    assert!((0.0..=1.0).contains(&inp.p_o));
                }
            }
        }
    }

    fn contributions() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::vec(0u32..=20, 4)
    }

    proptest! {
        #[test]
        fn round_matches_the_payoff_definition(cs in contributions(), nominal in any::<bool>()) {
            let cfg = if nominal { ScenarioConfig::default() } else { attainable() };
            let out = play_round(&members(4), &cs, &cfg).unwrap();
            let total: u32 = cs.iter().sum();
            for (i, &c) in cs.iter().enumerate() {
                let expected = 20.0 - c as f64 + 1.4 * total as f64 / 4.0;
                prop_assert!((out.payoffs[i] - expected).abs() < 1e-9);
                prop_assert!((out.observations[i] - (total - c) as f64 / 3.0).abs() < 1e-12);
                let inp = out.utility_inputs[i];
                prop_assert!((0.0..=1.0).contains(&inp.p_s));
                prop_assert!((0.0..=1.0).contains(&inp.p_o));
                prop_assert!((0.0..=0.75).contains(&inp.gini));
            }
        }

        #[test]
        fn both_payoff_forms_agree(cs in contributions(), own in 0usize..4) {
            let cfg = ScenarioConfig::default();
            let others: u32 = cs.iter().sum::<u32>() - cs[own];
            let a = payoff(own, &cs, &cfg).unwrap();
            let b = payoff_from_average(cs[own], others as f64 / 3.0, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn contributing_more_always_pays_less(cs in contributions(), own in 0usize..4) {
            prop_assume!(cs[own] < 20);
            let cfg = ScenarioConfig::default();
            let mut more = cs.clone();
            more[own] += 1;
            prop_assert!(payoff(own, &more, &cfg).unwrap() < payoff(own, &cs, &cfg).unwrap());
        }
    }
}

//! Value-driven utility: three threshold cost terms (self interest,
//! altruism, conformity) and a fairness-weighted reward, combined as
//! `U = −λ·(C_si + C_al + C_co) + reward`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 10.0;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::input(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// An agent's personal values, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonalValues {
    /// Self interest: own payoff the agent wants, relative to the maximum.
    pub si: f64,
    /// Altruism: payoff the agent wants the others to get.
    pub al: f64,
    /// Conformity: minimal acceptable ratio between own and others' payoff.
    pub co: f64,
    /// Fairness: weight of payoff equality against own payoff in the reward.
    pub fa: f64,
}

impl PersonalValues {
    pub fn new(si: f64, al: f64, co: f64, fa: f64) -> Result<Self> {
        let v = PersonalValues { si, al, co, fa };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("si", self.si)?;
        check_unit("al", self.al)?;
        check_unit("co", self.co)?;
        check_unit("fa", self.fa)
    }
}

/// Normalised observables a utility evaluation needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityInputs {
    /// Own payoff relative to the reference maximum.
    pub p_s: f64,
    /// Mean payoff of the other group members, relative.
    pub p_o: f64,
    /// Gini coefficient of the group's payoffs.
    pub gini: f64,
}

impl UtilityInputs {
    pub fn new(p_s: f64, p_o: f64, gini: f64) -> Result<Self> {
        check_unit("p_s", p_s)?;
        check_unit("p_o", p_o)?;
        check_unit("gini", gini)?;
        Ok(UtilityInputs { p_s, p_o, gini })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub cost_si: f64,
    pub cost_al: f64,
    pub cost_co: f64,
    pub prop: f64,
    pub reward: f64,
    pub total: f64,
    pub lambda: f64,
}

/// `min(p_s, p_o) / max(p_s, p_o)`, with `proportion(0, 0) = 1`.
pub fn proportion(p_s: f64, p_o: f64) -> Result<f64> {
    check_unit("p_s", p_s)?;
    check_unit("p_o", p_o)?;
    let hi = p_s.max(p_o);
    if hi == 0.0 {
        return Ok(1.0);
    }
    Ok(p_s.min(p_o) / hi)
}

/// Gini coefficient `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² μ)`, evaluated through the
/// sorted-rank identity `Σᵢ (2i − n − 1)·x₍ᵢ₎ / (n·Σx)`. Zero for an
/// all-zero vector.
pub fn gini(payoffs: &[f64]) -> Result<f64> {
    if payoffs.is_empty() {
        return Err(Error::input("gini of an empty list"));
    }
    if payoffs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::input("gini requires finite non-negative entries"));
    }
    let total: f64 = payoffs.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut sorted = payoffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    // Rounding can leave a tiny negative value for near-equal entries.
    Ok((weighted / (n * total)).max(0.0))
}

/// Evaluates the full utility for one agent.
pub fn utility(
    values: &PersonalValues,
    inputs: &UtilityInputs,
    lambda: f64,
) -> Result<UtilityBreakdown> {
    values.validate()?;
    let UtilityInputs { p_s, p_o, gini } = UtilityInputs::new(inputs.p_s, inputs.p_o, inputs.gini)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::input(format!("lambda = {lambda} must be positive")));
    }
    let prop = proportion(p_s, p_o)?;
    let cost_si = (values.si - p_s).max(0.0);
    let cost_al = (values.al - p_o).max(0.0);
    let cost_co = (values.co - prop).max(0.0);
    let reward = values.fa * (1.0 - gini) + (1.0 - values.fa) * p_s;
    let total = -lambda * (cost_si + cost_al + cost_co) + reward;
    Ok(UtilityBreakdown {
        cost_si,
        cost_al,
        cost_co,
        prop,
        reward,
        total,
        lambda,
    })
}

/// `raw / max_payoff`; payoffs outside `[0, max_payoff]` are a model bug.
pub fn normalize_payoff(raw: f64, max_payoff: f64) -> Result<f64> {
    if !(max_payoff > 0.0 && max_payoff.is_finite()) {
        return Err(Error::input(format!(
            "max_payoff = {max_payoff} must be positive"
        )));
    }
    if !(0.0..=max_payoff).contains(&raw) {
        return Err(Error::input(format!(
            "payoff {raw} is outside [0, {max_payoff}]"
        )));
    }
    Ok(raw / max_payoff)
}

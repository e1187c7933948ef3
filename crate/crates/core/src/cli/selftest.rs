//! Fast property checks runnable from the command line.

use std::fmt::Write as _;

use rand::Rng;

use crate::experiments;
use crate::nnet::Network;
use crate::pgg::{self, PayoffReference, ScenarioConfig};
use crate::seed;
use crate::values::{self, PersonalValues, UtilityInputs};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, failures: usize, cases: usize) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: failures == 0,
        detail: format!("{failures} failures in {cases} cases"),
    }
}

fn utility_bounds(master: u64) -> CheckOutcome {
    let mut rng = seed::rng(master, "selftest-utility", 0);
    let cases = 10_000;
    let mut failures = 0;
    for _ in 0..cases {
        let v = PersonalValues {
            si: rng.random(),
            al: rng.random(),
            co: rng.random(),
            fa: rng.random(),
        };
        let inputs = UtilityInputs {
            p_s: rng.random(),
            p_o: rng.random(),
            gini: rng.random(),
        };
        let u = values::utility(&v, &inputs, values::DEFAULT_LAMBDA);
        let ok = u.is_ok_and(|u| {
            (-3.0 * u.lambda..=1.0).contains(&u.total) && (0.0..=1.0).contains(&u.reward)
        });
        if !ok {
            failures += 1;
        }
    }
    outcome("utility bounds", failures, cases)
}

fn gini_pairwise(master: u64) -> CheckOutcome {
    let mut rng = seed::rng(master, "selftest-gini", 0);
    let cases = 1_000;
    let mut failures = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut s = 0.0;
        for a in &x {
            for b in &x {
                s += (a - b).abs();
            }
        }
        let reference = if mean == 0.0 {
            0.0
        } else {
            s / (2.0 * (n * n) as f64 * mean)
        };
        if !values::gini(&x).is_ok_and(|g| (g - reference).abs() < 1e-12) {
            failures += 1;
        }
    }
    outcome("gini vs pairwise sum", failures, cases)
}

fn payoff_identities() -> CheckOutcome {
    let cfg = ScenarioConfig {
        payoff_reference: PayoffReference::Attainable,
        ..ScenarioConfig::default()
    };
    let e = cfg.endowment;
    let mut failures = usize::from(pgg::max_payoff(&cfg) != 41.0);
    let mut cases = 1;
    for a in 0..=e {
        for b in 0..=e {
            for c in 0..=e {
                for d in 0..=e {
                    let contributions = [a, b, c, d];
                    let sum = pgg::payoff(0, &contributions, &cfg);
                    let avg = pgg::payoff_from_average(a, (b + c + d) as f64 / 3.0, &cfg);
                    let agree = matches!((&sum, &avg), (Ok(s), Ok(v)) if (s - v).abs() < 1e-9);
                    let dominated = a == e
                        || matches!(
                            (&sum, pgg::payoff(0, &[a + 1, b, c, d], &cfg)),
                            (Ok(lo), Ok(hi)) if hi < *lo
                        );
                    cases += 1;
                    if !(agree && dominated) {
                        failures += 1;
                    }
                }
            }
        }
    }
    outcome("payoff identities", failures, cases)
}

fn gradient_check(master: u64) -> CheckOutcome {
    let cases = 100;
    let mut failures = 0;
    for k in 0..cases {
        let mut rng = seed::rng(master, "selftest-gradient", k as u64);
        let hidden = rng.random_range(1..=12);
        let Ok(net) = Network::new(2, hidden, rng.random()) else {
            failures += 1;
            continue;
        };
        let input = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let target = rng.random_range(-1.0..1.0);
        let Ok(analytic) = net.gradient(&input, target).map(|g| g.flatten()) else {
            failures += 1;
            continue;
        };
        let loss = |p: &[f64]| {
            let mut probe = net.clone();
            probe.set_parameters(p).ok()?;
            probe.forward(&input).ok().map(|y| (y - target).powi(2))
        };
        let params = net.parameters();
        let h = 1e-5;
        let bad = (0..params.len()).any(|j| {
            let mut p = params.clone();
            p[j] += h;
            let up = loss(&p);
            p[j] -= 2.0 * h;
            let down = loss(&p);
            match (up, down) {
                (Some(u), Some(d)) => {
                    let numeric = (u - d) / (2.0 * h);
                    let denom = analytic[j].abs().max(numeric.abs()).max(1e-8);
                    (analytic[j] - numeric).abs() / denom >= 1e-4
                }
                _ => true,
            }
        });
        if bad {
            failures += 1;
        }
    }
    outcome("gradient vs finite differences", failures, cases)
}

fn free_rider_oracle() -> CheckOutcome {
    let scen = ScenarioConfig::default();
    let v = PersonalValues {
        si: 1.0,
        al: 0.0,
        co: 0.0,
        fa: 0.0,
    };
    let failures = match experiments::oracle_curve(&v, &scen) {
        Ok(c) => c.as_slice().iter().filter(|&&a| a != 0).count(),
        Err(_) => scen.action_count(),
    };
    outcome(
        "free rider never contributes",
        failures,
        scen.action_count(),
    )
}

/// Runs every check with streams derived from `master`.
pub fn run_checks(master: u64) -> Vec<CheckOutcome> {
    vec![
        utility_bounds(master),
        gini_pairwise(master),
        payoff_identities(),
        gradient_check(master),
        free_rider_oracle(),
    ]
}

pub(super) fn render(checks: &[CheckOutcome]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status}  {:width$}  {}", c.name, c.detail);
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(out, "{passed}/{} checks passed", checks.len());
    out
}

use socialabm::engine::{self, Agent, CoPlayers, PhaseConfig, ResponseCurve};
use socialabm::experiments::{self, ProfileLabel, RlMode, Settings, StrategyLabel};
use socialabm::pgg::ScenarioConfig;
use socialabm::values::PersonalValues;

fn builtin(label: ProfileLabel) -> PersonalValues {
    label.builtin_values().unwrap()
}

fn trained(
    values: PersonalValues,
    co_players: CoPlayers,
    phases: &PhaseConfig,
    seed: u64,
) -> Agent {
    let scen = ScenarioConfig::default();
    let mut agent = Agent::new(0, values);
    engine::experience_with_scripted(&mut agent, co_players, &scen, phases, seed).unwrap();
    engine::training_phase(&mut agent, &scen, phases, seed).unwrap();
    agent
}

fn distance(a: &ResponseCurve, b: &ResponseCurve) -> f64 {
    let total: u32 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.abs_diff(*y))
        .sum();
    total as f64 / a.len() as f64
}

#[test]
fn constant_environment_is_learned_closely() {
    let scen = ScenarioConfig::default();
    let mut phases = PhaseConfig::default();
    phases.network.accuracy_threshold = 0.999;
    let labels = [
        ProfileLabel::ConditionalCooperator,
        ProfileLabel::HumpShaped,
    ];
    for (label, seed) in labels.into_iter().flat_map(|l| (0..4).map(move |s| (l, s))) {
        let values = builtin(label);
        let agent = trained(values, CoPlayers::Constant(10), &phases, seed);
        let predicted = engine::predicted_utilities(&agent, 10.0, &scen).unwrap();
        let exact = experiments::exact_utilities(&values, 10.0, &scen).unwrap();
        let lo = exact.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = exact.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, (p, e)) in predicted.iter().zip(&exact).enumerate() {
            assert!(
                (p - e).abs() <= 0.05 * (hi - lo),
                "{}: action {a} predicted {p:.3} exact {e:.3}",
                label.as_str()
            );
        }
    }
}

#[test]
fn trained_free_riders_never_contribute() {
    let settings = Settings::default();
    let r = experiments::compare_rl(
        &settings,
        builtin(ProfileLabel::FreeRider),
        4,
        RlMode::Analytic,
        2,
    )
    .unwrap();
    for c in &r.framework {
        assert!(c.as_slice().iter().all(|&a| a == 0), "{:?}", c.as_slice());
    }
}

#[test]
fn replication_labels_survive_a_stricter_threshold() {
    let labels = |t: f64| {
        let mut settings = Settings::default();
        settings.phases.network.accuracy_threshold = t;
        let r = experiments::replicate_experiment(&settings, &experiments::default_profiles(), 4)
            .unwrap();
        r.profiles.iter().map(|p| p.label).collect::<Vec<_>>()
    };
    let base = labels(0.99);
    assert_eq!(base, labels(0.999));
    assert_eq!(base[0], StrategyLabel::ConditionalCooperator);
    assert_eq!(base[1], StrategyLabel::FreeRider);
}

#[test]
fn hump_agents_invest_about_ten_at_ten() {
    let settings = Settings::default();
    let r =
        experiments::replicate_experiment(&settings, &experiments::default_profiles(), 0).unwrap();
    let hump = r
        .agents
        .iter()
        .filter(|a| r.profiles[a.profile].profile.label == ProfileLabel::HumpShaped);
    for a in hump {
        let at_ten = a.curve.as_slice()[10];
        assert!(
            (7..=13).contains(&at_ten),
            "agent {} gives {at_ten}",
            a.agent_id
        );
    }
}

#[test]
fn identical_values_learn_different_curves() {
    let settings = Settings::default();
    let values = builtin(ProfileLabel::ConditionalCooperator);
    let diverse = (0..3)
        .filter(|&s| {
            experiments::compare_rl(&settings, values, 4, RlMode::Analytic, s)
                .unwrap()
                .framework_max_divergence
                >= 1
        })
        .count();
    assert!(diverse >= 2);
}

#[test]
fn pipeline_is_a_function_of_the_seed() {
    let settings = Settings::default();
    let run = |s| {
        experiments::sweep_altruism(&settings, &[0.5], 4, s)
            .unwrap()
            .points[0]
            .curves
            .clone()
    };
    assert_eq!(run(21), run(21));
}

#[test]
fn tighter_fits_approach_the_exact_optimum() {
    let scen = ScenarioConfig::default();
    let values = builtin(ProfileLabel::ConditionalCooperator);
    let exact = experiments::oracle_curve(&values, &scen).unwrap();
    let seeds = 0..5u64;
    let mut averages = Vec::new();
    let mut last_close = Vec::new();
    for threshold in [0.99, 0.999, 0.9999] {
        let phases = PhaseConfig {
            experience_rounds: 5000,
            network: experiments::converged_network(&PhaseConfig::default().network, threshold),
            ..PhaseConfig::default()
        };
        let mut sum = 0.0;
        last_close.clear();
        for s in seeds.clone() {
            let agent = trained(values, CoPlayers::UniformHomogeneous, &phases, s);
            let curve = engine::response_curve(&agent, &scen).unwrap();
            sum += distance(&curve, &exact);
            let close = curve
                .as_slice()
                .iter()
                .zip(exact.as_slice())
                .filter(|(a, b)| a.abs_diff(**b) <= 1)
                .count();
            last_close.push(close);
        }
        averages.push(sum / seeds.clone().count() as f64);
    }
    assert!(
        averages.windows(2).all(|w| w[1] <= w[0]),
        "mean distances {averages:?}"
    );
    assert!(
        last_close.iter().all(|&c| c * 10 >= 9 * 21),
        "{last_close:?}"
    );
}

#[test]
fn converged_baseline_is_near_the_exact_optimum() {
    let mut settings = Settings::default();
    settings.phases.experience_rounds = 5000;
    let values = builtin(ProfileLabel::ConditionalCooperator);
    let r = experiments::compare_rl(
        &settings,
        values,
        4,
        RlMode::Converged { threshold: 0.9999 },
        1,
    )
    .unwrap();
    let exact = experiments::oracle_curve(&values, &settings.scenario).unwrap();
    for c in &r.oracle {
        assert!(distance(c, &exact) <= 0.5, "{:?}", c.as_slice());
    }
}

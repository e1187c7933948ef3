//! Command-line front end: configuration loading, experiment dispatch and
//! CSV plus manifest output.

mod selftest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::engine::{self, Agent, PhaseConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    self, ClassifierConfig, CompareResult, ProfileLabel, ReplicationResult, RlMode, Settings,
    StrategyProfile, SweepResult,
};
use crate::nnet::TrainReport;
use crate::pgg::ScenarioConfig;
use crate::values::PersonalValues;

pub use selftest::{run_checks, CheckOutcome};

/// Environment variable consulted when `--output-dir` is not given.
pub const OUTPUT_DIR_ENV: &str = "SOCIALABM_OUTPUT_DIR";

const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(
    name = "socialabm",
    version,
    about = "Value-driven learning agents in the public goods game"
)]
struct Cli {
    /// TOML run configuration. Flags override values from the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, env = OUTPUT_DIR_ENV, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Worker threads for per-agent training.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Validation R² at which network training stops.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean response curves of self-interested agents over altruism levels.
    Sweep(SweepArgs),
    /// Train the mixed strategy population and report per-profile curves.
    Replicate,
    /// Learned agents against full-information optimisers.
    CompareRl(CompareArgs),
    /// Response curve and predicted utilities of one agent.
    Respond(RespondArgs),
    /// Run the built-in property checks.
    Selftest,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated altruism levels.
    #[arg(long, value_delimiter = ',')]
    al: Option<Vec<f64>>,
    #[arg(long)]
    agents_per_value: Option<usize>,
}

#[derive(Debug, Args)]
struct ValueArgs {
    #[arg(long)]
    si: Option<f64>,
    #[arg(long)]
    al: Option<f64>,
    #[arg(long)]
    co: Option<f64>,
    #[arg(long)]
    fa: Option<f64>,
}

impl ValueArgs {
    fn apply(&self, v: &mut PersonalValues) {
        if let Some(x) = self.si {
            v.si = x;
        }
        if let Some(x) = self.al {
            v.al = x;
        }
        if let Some(x) = self.co {
            v.co = x;
        }
        if let Some(x) = self.fa {
            v.fa = x;
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RlModeArg {
    Analytic,
    Converged,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    values: ValueArgs,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long, value_enum)]
    rl_mode: Option<RlModeArg>,
    /// Validation R² for the converged baseline.
    #[arg(long)]
    rl_threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct RespondArgs {
    #[command(flatten)]
    values: ValueArgs,
    /// Answer with exact utilities instead of a trained network.
    #[arg(long)]
    oracle: bool,
}

fn zero_values() -> PersonalValues {
    PersonalValues {
        si: 0.0,
        al: 0.0,
        co: 0.0,
        fa: 0.0,
    }
}

/// Everything a run needs. Every section is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub scenario: ScenarioConfig,
    pub phases: PhaseConfig,
    pub classifier: ClassifierConfig,
    pub sweep: SweepConfig,
    pub replicate: ReplicateConfig,
    pub compare_rl: CompareConfig,
    pub respond: RespondConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub al_values: Vec<f64>,
    pub agents_per_value: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            al_values: experiments::DEFAULT_AL_GRID.to_vec(),
            agents_per_value: 10,
        }
    }
}

/// One population block as written in a config file. Built-in labels take
/// their values from the label; `custom` blocks must give `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub label: ProfileLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<PersonalValues>,
    pub count: usize,
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<StrategyProfile> {
        let mut profile = match (self.label, self.values) {
            (ProfileLabel::Custom, Some(v)) => StrategyProfile::custom("custom", v, self.count)?,
            (ProfileLabel::Custom, None) => {
                return Err(Error::config(
                    "replicate.profiles.values",
                    "custom profiles need explicit values",
                ))
            }
            (label, values) => {
                let mut p = StrategyProfile::builtin(label, self.count)?;
                if let Some(v) = values {
                    p.values = v;
                }
                p
            }
        };
        if let Some(name) = &self.name {
            profile.name = name.clone();
        }
        profile.validate()?;
        Ok(profile)
    }
}

impl From<&StrategyProfile> for ProfileSpec {
    fn from(p: &StrategyProfile) -> Self {
        let builtin = p.label != ProfileLabel::Custom;
        ProfileSpec {
            label: p.label,
            name: (p.name != p.label.as_str()).then(|| p.name.clone()),
            values: (!builtin).then_some(p.values),
            count: p.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    pub profiles: Vec<ProfileSpec>,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        ReplicateConfig {
            profiles: experiments::default_profiles()
                .iter()
                .map(ProfileSpec::from)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub values: PersonalValues,
    pub n_agents: usize,
    pub rl_mode: RlMode,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            values: PersonalValues {
                co: 0.8,
                ..zero_values()
            },
            n_agents: 4,
            rl_mode: RlMode::Analytic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RespondConfig {
    pub values: PersonalValues,
    pub oracle: bool,
}

impl Default for RespondConfig {
    fn default() -> Self {
        RespondConfig {
            values: zero_values(),
            oracle: false,
        }
    }
}

impl RunConfig {
    pub fn settings(&self) -> Settings {
        Settings {
            scenario: self.scenario.clone(),
            phases: self.phases.clone(),
            classifier: self.classifier.clone(),
        }
    }

    pub fn profiles(&self) -> Result<Vec<StrategyProfile>> {
        self.replicate
            .profiles
            .iter()
            .map(ProfileSpec::resolve)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        let t = self.phases.network.accuracy_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(
                "phases.network.accuracy_threshold",
                "must lie in (0, 1]",
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        if self.sweep.al_values.is_empty() {
            return Err(Error::config("sweep.al_values", "must not be empty"));
        }
        for &al in &self.sweep.al_values {
            if !(0.0..=1.0).contains(&al) {
                return Err(Error::config(
                    "sweep.al_values",
                    format!("{al} is outside [0, 1]"),
                ));
            }
        }
        if self.sweep.agents_per_value == 0 {
            return Err(Error::config(
                "sweep.agents_per_value",
                "must be at least 1",
            ));
        }
        if self.replicate.profiles.is_empty() {
            return Err(Error::config("replicate.profiles", "must not be empty"));
        }
        let total: usize = self.profiles()?.iter().map(|p| p.count).sum();
        if !total.is_multiple_of(self.scenario.group_size) {
            return Err(Error::config(
                "replicate.profiles",
                format!(
                    "{total} agents cannot be split into groups of {}",
                    self.scenario.group_size
                ),
            ));
        }
        self.compare_rl.values.validate()?;
        if self.compare_rl.n_agents == 0 {
            return Err(Error::config("compare_rl.n_agents", "must be at least 1"));
        }
        if let RlMode::Converged { threshold } = self.compare_rl.rl_mode {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(Error::config(
                    "compare_rl.rl_mode.threshold",
                    "must lie in (0, 1]",
                ));
            }
        }
        self.respond.values.validate()
    }
}

/// Reads and parses a TOML run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Entry point used by the binary. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cli.threshold {
        cfg.phases.network.accuracy_threshold = t;
    }
    match &cli.command {
        Command::Sweep(a) => {
            if let Some(al) = &a.al {
                cfg.sweep.al_values = al.clone();
            }
            if let Some(n) = a.agents_per_value {
                cfg.sweep.agents_per_value = n;
            }
        }
        Command::CompareRl(a) => {
            a.values.apply(&mut cfg.compare_rl.values);
            if let Some(n) = a.n_agents {
                cfg.compare_rl.n_agents = n;
            }
            let threshold = a.rl_threshold.or(match cfg.compare_rl.rl_mode {
                RlMode::Converged { threshold } => Some(threshold),
                RlMode::Analytic => None,
            });
            match (a.rl_mode, threshold) {
                (Some(RlModeArg::Analytic), _) => cfg.compare_rl.rl_mode = RlMode::Analytic,
                (Some(RlModeArg::Converged), t) => {
                    cfg.compare_rl.rl_mode = RlMode::Converged {
                        threshold: t.unwrap_or(0.9999),
                    }
                }
                (None, Some(t)) if a.rl_threshold.is_some() => {
                    cfg.compare_rl.rl_mode = RlMode::Converged { threshold: t }
                }
                (None, _) => {}
            }
        }
        Command::Respond(a) => {
            a.values.apply(&mut cfg.respond.values);
            if a.oracle {
                cfg.respond.oracle = true;
            }
        }
        Command::Replicate | Command::Selftest => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<i32> {
    let cfg = resolve(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<i32> {
    if let Command::Selftest = command {
        let checks = run_checks(cfg.seed);
        print!("{}", selftest::render(&checks));
        return Ok(if checks.iter().all(|c| c.passed) {
            0
        } else {
            1
        });
    }
    let out_dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let start = Instant::now();
    let (name, csv, summary) = match command {
        Command::Sweep(_) => {
            let r = experiments::sweep_altruism(
                &cfg.settings(),
                &cfg.sweep.al_values,
                cfg.sweep.agents_per_value,
                cfg.seed,
            )?;
            ("sweep", sweep_csv(&r)?, sweep_summary(&r))
        }
        Command::Replicate => {
            let r = experiments::replicate_experiment(&cfg.settings(), &cfg.profiles()?, cfg.seed)?;
            ("replicate", replicate_csv(&r)?, replicate_summary(&r))
        }
        Command::CompareRl(_) => {
            let c = &cfg.compare_rl;
            let r = experiments::compare_rl(
                &cfg.settings(),
                c.values,
                c.n_agents,
                c.rl_mode,
                cfg.seed,
            )?;
            ("compare_rl", compare_csv(&r)?, compare_summary(&r))
        }
        Command::Respond(_) => {
            let r = respond(cfg)?;
            (
                "respond",
                respond_csv(&r)?,
                serde_json::to_value(&r.report)?,
            )
        }
        Command::Selftest => unreachable!("handled above"),
    };
    fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join(format!("{name}.csv"));
    fs::write(&csv_path, csv)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: version_string(),
        command: name,
        master_seed: cfg.seed,
        seed_derivation: "first 8 bytes (LE) of sha256(master_le || domain || 0x00 || index_le)",
        csv: format!("{name}.csv"),
        config: cfg,
        summary,
        elapsed_ms: start.elapsed().as_millis(),
    };
    let manifest_path = out_dir.join(format!("{name}.manifest.json"));
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    println!(
        "wrote {} and {}",
        csv_path.display(),
        manifest_path.display()
    );
    Ok(0)
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: String,
    command: &'a str,
    master_seed: u64,
    seed_derivation: &'static str,
    csv: String,
    config: &'a RunConfig,
    summary: serde_json::Value,
    elapsed_ms: u128,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// `al, x, mean_action, std_action, n_agents`
pub fn sweep_csv(r: &SweepResult) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["al", "x", "mean_action", "std_action", "n_agents"])?;
    for p in &r.points {
        for (x, (m, s)) in p.mean.iter().zip(&p.std).enumerate() {
            w.write_record([
                p.al.to_string(),
                x.to_string(),
                m.to_string(),
                s.to_string(),
                p.curves.len().to_string(),
            ])?;
        }
    }
    finish(w)
}

/// `profile, agent_id, x, action`
pub fn replicate_csv(r: &ReplicationResult) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["profile", "agent_id", "x", "action"])?;
    for a in &r.agents {
        let name = &r.profiles[a.profile].profile.name;
        for (x, action) in a.curve.as_slice().iter().enumerate() {
            w.write_record([
                name.clone(),
                a.agent_id.to_string(),
                x.to_string(),
                action.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// `mode, agent_id, x, action`
pub fn compare_csv(r: &CompareResult) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["mode", "agent_id", "x", "action"])?;
    for (mode, curves) in [("framework", &r.framework), ("oracle", &r.oracle)] {
        for (id, c) in curves.iter().enumerate() {
            for (x, action) in c.as_slice().iter().enumerate() {
                w.write_record([mode, &id.to_string(), &x.to_string(), &action.to_string()])?;
            }
        }
    }
    finish(w)
}

fn sweep_summary(r: &SweepResult) -> serde_json::Value {
    let points: Vec<_> = r
        .points
        .iter()
        .map(|p| {
            serde_json::json!({
                "al": p.al,
                "seed": p.seed,
                "label": p.label.as_str(),
                "mean_contribution": p.mean.iter().sum::<f64>() / p.mean.len() as f64,
            })
        })
        .collect();
    serde_json::json!({ "si": r.si, "points": points })
}

fn replicate_summary(r: &ReplicationResult) -> serde_json::Value {
    let profiles: Vec<_> = r
        .profiles
        .iter()
        .map(|p| {
            serde_json::json!({
                "name": p.profile.name,
                "values": p.profile.values,
                "count": p.profile.count,
                "classified_as": p.label.as_str(),
                "mean_curve": p.mean,
            })
        })
        .collect();
    serde_json::json!({ "profiles": profiles, "population_mean": r.population_mean })
}

fn compare_summary(r: &CompareResult) -> serde_json::Value {
    let mean =
        |cs: &[engine::ResponseCurve]| cs.iter().map(|c| c.mean()).sum::<f64>() / cs.len() as f64;
    serde_json::json!({
        "values": r.values,
        "framework_mean_contribution": mean(&r.framework),
        "oracle_mean_contribution": mean(&r.oracle),
        "framework_max_divergence": r.framework_max_divergence,
        "oracle_max_divergence": r.oracle_max_divergence,
        "framework_mean_divergence": r.framework_mean_divergence,
        "oracle_mean_divergence": r.oracle_mean_divergence,
    })
}

/// One agent's answers to the hypothetical question, with the utility it
/// expects from every action.
#[derive(Debug, Clone, Serialize)]
pub struct RespondResult {
    pub curve: engine::ResponseCurve,
    pub utilities: Vec<Vec<f64>>,
    pub report: Option<TrainReport>,
}

/// Trains agent 0 of a homogeneous group (or consults the exact utility
/// when `respond.oracle` is set) and queries every `x`.
pub fn respond(cfg: &RunConfig) -> Result<RespondResult> {
    let settings = cfg.settings();
    settings.validate()?;
    let scen = &settings.scenario;
    let values = cfg.respond.values;
    let agent = if cfg.respond.oracle {
        Agent::oracle(0, values)
    } else {
        let mut group: Vec<Agent> = (0..scen.group_size)
            .map(|i| Agent::new(i, values))
            .collect();
        engine::experience_phase(&mut group, scen, &settings.phases, cfg.seed)?;
        let mut agent = group.swap_remove(0);
        engine::training_phase(&mut agent, scen, &settings.phases, cfg.seed)?;
        agent
    };
    let mut utilities = Vec::with_capacity(scen.action_count());
    for x in scen.actions() {
        let u = if cfg.respond.oracle {
            experiments::exact_utilities(&values, x as f64, scen)?
        } else {
            engine::predicted_utilities(&agent, x as f64, scen)?
        };
        utilities.push(u);
    }
    Ok(RespondResult {
        curve: engine::response_curve(&agent, scen)?,
        utilities,
        report: agent.model().map(|m| m.report.clone()),
    })
}

/// `x, action, u_0 … u_endowment`
pub fn respond_csv(r: &RespondResult) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    let n = r.utilities.first().map_or(0, Vec::len);
    let mut header = vec!["x".to_string(), "action".to_string()];
    header.extend((0..n).map(|a| format!("u_{a}")));
    w.write_record(&header)?;
    for (x, (action, u)) in r.curve.as_slice().iter().zip(&r.utilities).enumerate() {
        let mut row = vec![x.to_string(), action.to_string()];
        row.extend(u.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    finish(w)
}

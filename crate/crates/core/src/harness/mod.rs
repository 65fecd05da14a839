//! Experiment orchestration: training runs with periodic evaluation,
//! seed aggregation, comparison and on-disk artifacts.
//!
//! Every (agent, seed) run owns its environment, agent and random streams,
//! so runs execute in parallel without sharing state and produce identical
//! output regardless of scheduling.

mod compare;
mod curve;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use compare::{auc, compare, mid_training_success, AgentSummary, Comparison, PairwiseComparison};
pub use curve::{mean, stderr, EvalPoint, LearningCurve, RunCurve};

use crate::agents::{build_agent, merge_json, run_episode, Agent, AgentConfig, Algorithm, Mode};
use crate::env::{rule_policy, BeliefLayout, DialogueEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::gpsarsa::{mean_self_similarity, KernelSpec};

/// Which checkpoints a run writes to disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointPolicy {
    /// One per evaluation point.
    All,
    /// Only after the last training dialogue.
    Final,
    None,
}

/// Settings for a benchmark: the agents to train, their hyperparameters and
/// the train/evaluation protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Agents trained by a full benchmark.
    pub agents: Vec<Algorithm>,
    /// Agent settings merged over each preset: the `"*"` entry applies to
    /// every agent, an entry keyed by tag to that agent only.
    pub agent_overrides: BTreeMap<String, serde_json::Value>,
    /// Environment settings; the channel error rate is replaced by
    /// `train_error` or `eval_error`.
    pub env: EnvConfig,
    pub train_error: f64,
    pub eval_error: f64,
    /// Training dialogues per run.
    pub budget: usize,
    /// Evaluate after every `cadence` training dialogues.
    pub cadence: usize,
    pub eval_dialogues: usize,
    pub seeds: Vec<u64>,
    /// Random-policy dialogues used to calibrate the GP admission threshold.
    pub reference_dialogues: usize,
    pub checkpoints: CheckpointPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agents: Algorithm::ALL.to_vec(),
            agent_overrides: BTreeMap::new(),
            env: EnvConfig::default(),
            train_error: 0.0,
            eval_error: 0.0,
            budget: 4000,
            cadence: 200,
            eval_dialogues: 200,
            seeds: vec![1, 2, 3],
            reference_dialogues: 100,
            checkpoints: CheckpointPolicy::All,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if self.cadence == 0 || self.budget % self.cadence != 0 {
            return bad(format!("cadence {} must divide budget {}", self.cadence, self.budget));
        }
        if self.eval_dialogues == 0 {
            return bad("eval_dialogues must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        for e in [self.train_error, self.eval_error] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("error rate {e} outside [0, 1]"));
            }
        }
        for key in self.agent_overrides.keys() {
            if key != "*" && key.parse::<Algorithm>().is_err() {
                return bad(format!("agent_overrides key `{key}` is neither `*` nor an agent tag"));
            }
        }
        self.env_config(self.train_error).validate()?;
        for &a in &self.agents {
            self.agent_config(a)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn env_config(&self, error_rate: f64) -> EnvConfig {
        let mut c = self.env.clone();
        c.channel.error_rate = error_rate;
        c
    }

    /// The preset for `algorithm` with the overrides applied. Unless set
    /// explicitly, ε decays over the whole budget.
    pub fn agent_config(&self, algorithm: Algorithm) -> Result<AgentConfig> {
        let mut patch = serde_json::json!({});
        for key in ["*", algorithm.tag()] {
            if let Some(o) = self.agent_overrides.get(key) {
                merge_json(&mut patch, o);
            }
        }
        if patch.get("algorithm").is_some_and(|a| a != &serde_json::json!(algorithm.tag())) {
            return Err(Error::Config(format!("overrides for `{algorithm}` change its algorithm")));
        }
        if patch.get("epsilon_horizon").is_none() {
            patch["epsilon_horizon"] = serde_json::json!(self.budget);
        }
        AgentConfig::from_overrides(algorithm, &patch)
    }

    /// Evaluation points, including the untrained policy.
    pub fn grid(&self) -> Vec<usize> {
        (0..=self.budget / self.cadence).map(|i| i * self.cadence).collect()
    }
}

/// Independent random streams of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    TrainEnv = 2,
    Agent = 3,
    Eval = 4,
    Reference = 5,
}

/// Seed of `stream` for run `seed`, at position `index` (the dialogue count
/// for evaluation streams).
pub fn stream_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Something that picks summary actions from beliefs without learning.
pub trait Policy {
    fn act(&mut self, belief: &[f64], rng: &mut dyn RngCore) -> Result<usize>;
}

/// Exploitative action of an agent. Borrowing immutably guarantees that
/// evaluation cannot change the agent.
pub struct GreedyPolicy<'a>(pub &'a dyn Agent);

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, belief: &[f64], _rng: &mut dyn RngCore) -> Result<usize> {
        self.0.greedy(belief)
    }
}

/// Hand-written dialogue policy; an upper reference for learners.
pub struct RulePolicy(pub BeliefLayout);

impl Policy for RulePolicy {
    fn act(&mut self, belief: &[f64], _rng: &mut dyn RngCore) -> Result<usize> {
        Ok(rule_policy(&self.0, belief))
    }
}

/// Uniform over summary actions.
pub struct RandomPolicy(pub usize);

impl Policy for RandomPolicy {
    fn act(&mut self, _belief: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        Ok(rng.random_range(0..self.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_reward: f64,
}

/// Runs `n` dialogues of `policy` on a fresh environment seeded from `rng`.
pub fn evaluate(policy: &mut dyn Policy, env_cfg: &EnvConfig, n: usize, rng: &mut dyn RngCore) -> Result<EvalResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one dialogue".into()));
    }
    let mut env = DialogueEnv::builtin(env_cfg.clone(), rng.next_u64())?;
    let (mut successes, mut reward) = (0usize, 0.0);
    for _ in 0..n {
        let mut b = env.reset()?;
        loop {
            let out = env.step(policy.act(&b, rng)?)?;
            reward += out.reward;
            if out.done {
                successes += usize::from(out.info.success);
                break;
            }
            b = out.belief;
        }
    }
    Ok(EvalResult {
        success_rate: successes as f64 / n as f64,
        mean_reward: reward / n as f64,
    })
}

/// Beliefs visited by a uniform-random policy.
pub fn reference_beliefs(env_cfg: &EnvConfig, dialogues: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = DialogueEnv::builtin(env_cfg.clone(), rng.next_u64())?;
    let mut out = vec![];
    for _ in 0..dialogues {
        let mut b = env.reset()?;
        loop {
            let a = rng.random_range(0..env.num_actions());
            let step = env.step(a)?;
            out.push(std::mem::replace(&mut b, step.belief));
            if step.done {
                break;
            }
        }
    }
    Ok(out)
}

/// GP admission threshold: `nu_fraction` times the mean kernel
/// self-similarity of random-policy beliefs.
pub fn calibrate_nu(cfg: &AgentConfig, env_cfg: &EnvConfig, dialogues: usize, seed: u64) -> Result<f64> {
    let beliefs = reference_beliefs(env_cfg, dialogues.max(1), seed)?;
    let kernel = KernelSpec {
        prior_scale: cfg.gp.prior_scale,
    };
    Ok(cfg.gp.nu_fraction * mean_self_similarity(&kernel, &beliefs))
}

/// Artifact locations under an output directory.
pub fn curve_path(out: &Path, agent: &str, seed: u64) -> PathBuf {
    out.join("curves").join(format!("{agent}_{seed}.csv"))
}

pub fn mean_curve_path(out: &Path, agent: &str) -> PathBuf {
    out.join("curves").join(format!("{agent}_mean.csv"))
}

pub fn checkpoint_path(out: &Path, agent: &str, seed: u64, dialogues: usize) -> PathBuf {
    out.join("checkpoints").join(format!("{agent}_{seed}")).join(format!("{dialogues:06}.json"))
}

/// A finished training run.
pub struct TrainedRun {
    pub curve: RunCurve,
    pub agent: Box<dyn Agent>,
}

/// Trains one agent for the configured budget, evaluating at every
/// cadence point. With `out` set, the curve and checkpoints are written
/// there.
pub fn train_run(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64, out: Option<&Path>) -> Result<TrainedRun> {
    cfg.validate()?;
    let train_env = cfg.env_config(cfg.train_error);
    let eval_env = cfg.env_config(cfg.eval_error);
    let mut acfg = cfg.agent_config(algorithm)?;
    if algorithm == Algorithm::Gpsarsa && acfg.gp.nu.is_none() {
        let nu = calibrate_nu(&acfg, &train_env, cfg.reference_dialogues, stream_seed(seed, Stream::Reference, 0))?;
        log::debug!("{algorithm} seed {seed}: calibrated nu = {nu}");
        acfg.gp.nu = Some(nu);
    }
    let mut env = DialogueEnv::builtin(train_env, stream_seed(seed, Stream::TrainEnv, 0))?;
    let mut init = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Init, 0));
    let mut agent = build_agent(&acfg, env.belief_dim(), env.num_actions(), &mut init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Agent, 0));
    let tag = algorithm.tag();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir.join("curves"))?;
    }

    let mut points = vec![];
    let checkpoint = |agent: &dyn Agent, d: usize, points: &mut Vec<EvalPoint>| -> Result<()> {
        let mut erng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Eval, d as u64));
        let r = evaluate(&mut GreedyPolicy(agent), &eval_env, cfg.eval_dialogues, &mut erng)?;
        log::info!("{tag} seed {seed}: {d} dialogues, success {:.3}, reward {:.2}", r.success_rate, r.mean_reward);
        points.push(EvalPoint {
            dialogues: d,
            success_rate: r.success_rate,
            mean_reward: r.mean_reward,
        });
        let keep = match cfg.checkpoints {
            CheckpointPolicy::All => true,
            CheckpointPolicy::Final => d == cfg.budget,
            CheckpointPolicy::None => false,
        };
        if let (Some(dir), true) = (out, keep) {
            let path = checkpoint_path(dir, tag, seed, d);
            std::fs::create_dir_all(path.parent().expect("checkpoint path has a parent"))?;
            agent.checkpoint()?.save(&path)?;
        }
        Ok(())
    };
    checkpoint(agent.as_ref(), 0, &mut points)?;
    for d in 1..=cfg.budget {
        run_episode(agent.as_mut(), &mut env, Mode::Train, &mut rng)?;
        if d % cfg.cadence == 0 {
            checkpoint(agent.as_ref(), d, &mut points)?;
        }
    }
    let curve = RunCurve {
        agent: tag.to_string(),
        seed,
        points,
    };
    if let Some(dir) = out {
        curve.save(&curve_path(dir, tag, seed))?;
    }
    Ok(TrainedRun { curve, agent })
}

/// Result of a benchmark. Runs that failed are listed with their error;
/// everything that finished has been persisted.
pub struct BenchOutcome {
    pub curves: Vec<LearningCurve>,
    pub failures: Vec<(String, u64, String)>,
    pub comparison: Option<Comparison>,
}

/// Trains every configured agent on every seed (in parallel), then writes
/// per-seed and mean curves, `report.md` and a plotting script to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<BenchOutcome> {
    cfg.validate()?;
    if cfg.agents.is_empty() {
        return Err(Error::Config("no agents to benchmark".into()));
    }
    std::fs::create_dir_all(out.join("curves"))?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let jobs: Vec<(Algorithm, u64)> = cfg.agents.iter().flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s))).collect();
    let results: Vec<Result<RunCurve>> = jobs
        .par_iter()
        .map(|&(a, s)| train_run(cfg, a, s, Some(out)).map(|r| r.curve))
        .collect();

    let mut failures = vec![];
    let mut by_agent: BTreeMap<Algorithm, Vec<RunCurve>> = BTreeMap::new();
    for ((a, s), r) in jobs.into_iter().zip(results) {
        match r {
            Ok(c) => by_agent.entry(a).or_default().push(c),
            Err(e) => {
                log::error!("{a} seed {s} failed: {e}");
                failures.push((a.tag().to_string(), s, e.to_string()));
            }
        }
    }
    let mut curves = vec![];
    for &a in &cfg.agents {
        if let Some(runs) = by_agent.get(&a) {
            let c = LearningCurve::from_runs(runs)?;
            c.save(&mean_curve_path(out, a.tag()))?;
            curves.push(c);
        }
    }
    let comparison = if curves.is_empty() { None } else { Some(compare(&curves)?) };
    std::fs::write(out.join("report.md"), render_report(cfg, comparison.as_ref(), &failures))?;
    std::fs::write(out.join("curves").join("plot.py"), PLOT_SCRIPT)?;
    Ok(BenchOutcome {
        curves,
        failures,
        comparison,
    })
}

/// Rebuilds `<agent>_mean.csv` for every agent with per-seed curves in
/// `out/curves`.
pub fn aggregate_dir(out: &Path) -> Result<Vec<LearningCurve>> {
    let dir = out.join("curves");
    let mut by_agent: BTreeMap<String, Vec<RunCurve>> = BTreeMap::new();
    for entry in std::fs::read_dir(&dir)? {
        let path = entry?.path();
        let is_csv = path.extension().is_some_and(|e| e == "csv");
        let is_mean = path.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.ends_with("_mean"));
        if is_csv && !is_mean {
            let c = RunCurve::load(&path)?;
            by_agent.entry(c.agent.clone()).or_default().push(c);
        }
    }
    if by_agent.is_empty() {
        return Err(Error::InvalidArgument(format!("no per-seed curves in {}", dir.display())));
    }
    let mut curves = vec![];
    for (agent, mut runs) in by_agent {
        runs.sort_by_key(|r| r.seed);
        let c = LearningCurve::from_runs(&runs)?;
        c.save(&mean_curve_path(out, &agent))?;
        curves.push(c);
    }
    Ok(curves)
}

/// Loads every `<agent>_mean.csv` in `out/curves`, compares them and writes
/// `report.md`.
pub fn compare_dir(out: &Path) -> Result<Comparison> {
    let dir = out.join("curves");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.file_name().and_then(|s| s.to_str()).is_some_and(|s| s.ends_with("_mean.csv")));
    paths.sort();
    let curves = paths.iter().map(|p| LearningCurve::load(p)).collect::<Result<Vec<_>>>()?;
    let cmp = compare(&curves)?;
    let budget = curves.first().and_then(|c| c.dialogues.last().copied()).unwrap_or(0);
    let mut report = String::from("# Benchmark report\n\n");
    report.push_str(&cmp.to_markdown(budget));
    std::fs::write(out.join("report.md"), report)?;
    Ok(cmp)
}

fn render_report(cfg: &ExperimentConfig, cmp: Option<&Comparison>, failures: &[(String, u64, String)]) -> String {
    let mut s = String::from("# Benchmark report\n\n");
    let _ = writeln!(
        s,
        "Trained at semantic error rate {}, evaluated at {}; {} dialogues per run, evaluation every {} with {} dialogues; seeds {:?}.\n",
        cfg.train_error, cfg.eval_error, cfg.budget, cfg.cadence, cfg.eval_dialogues, cfg.seeds
    );
    if let Some(c) = cmp {
        s.push_str(&c.to_markdown(cfg.budget));
    }
    if !failures.is_empty() {
        s.push_str("\n## Failed runs\n\n");
        for (a, seed, e) in failures {
            let _ = writeln!(s, "- {a} seed {seed}: {e}");
        }
    }
    s
}

const PLOT_SCRIPT: &str = r#"# Plots every <agent>_mean.csv in this directory: python plot.py [out.png]
import csv, glob, os, sys
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "*_mean.csv"))):
    rows = list(csv.DictReader(open(path)))
    x = [int(r["dialogues"]) for r in rows]
    m = [float(r["success_mean"]) for r in rows]
    e = [float(r["success_stderr"]) for r in rows]
    label = os.path.basename(path)[: -len("_mean.csv")]
    plt.plot(x, m, label=label)
    plt.fill_between(x, [a - b for a, b in zip(m, e)], [a + b for a, b in zip(m, e)], alpha=0.2)
plt.xlabel("training dialogues")
plt.ylabel("success rate")
plt.ylim(0, 1)
plt.legend()
plt.savefig(sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "success.png"), dpi=150)
"#;

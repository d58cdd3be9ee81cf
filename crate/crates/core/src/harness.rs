//! Seeded Monte Carlo experiments on a shared annotation-cost grid.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{train, AlgorithmKind, AlgorithmSpec, Observer, Problem, Progress, TrainSettings};
use crate::cliff::{build_cliff, coverage_stats, memorizing_return, CliffConfig, CliffWorld, MemorizedCounts, RewardVariant};
use crate::error::{config, Error, Result};
use crate::mdp::{exact_return, DetPolicy, MdpBundle, PolicyClass, TabularMdp};
use crate::online::{Learner, LearnerKind};
use crate::oracle::{AnnotationKey, AnnotationLedger, TrajectoryBilling};
use crate::seed::{derive_seed, rng_for, rng_from_seed};
use crate::svg;

pub const CSV_HEADER: &str =
    "algorithm,run_group,cost,annotations,return_mean,return_p10,return_p90,cov_E,cov_Eprime,b_prime_annotated_frac";
pub const LEDGER_HEADER: &str = "algorithm,run_group,cost,cost_offline,cost_interactive,cost_total";

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Cliff {
        #[serde(default = "default_preset")]
        preset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward_variant: Option<RewardVariant>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        N0: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        N1: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        H: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        A: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theoretical_mode: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expert_seed: Option<u64>,
    },
    /// An [`MdpBundle`] file with an expert and, for class-based learners, a class.
    MdpFile { path: PathBuf },
}

fn default_preset() -> String {
    "figure2".into()
}

impl EnvSpec {
    pub fn cliff_preset(preset: &str) -> Self {
        EnvSpec::Cliff {
            preset: preset.into(),
            reward_variant: None,
            N0: None,
            N1: None,
            H: None,
            A: None,
            beta: None,
            theoretical_mode: None,
            expert_seed: None,
        }
    }

    pub fn cliff_config(&self) -> Result<Option<CliffConfig>> {
        let EnvSpec::Cliff { preset, reward_variant, N0, N1, H, A, beta, theoretical_mode, expert_seed } = self else {
            return Ok(None);
        };
        let mut c = CliffConfig::preset(preset)?;
        c.N0 = N0.unwrap_or(c.N0);
        c.N1 = N1.unwrap_or(c.N1);
        c.A = A.unwrap_or(c.A);
        c.theoretical_mode = theoretical_mode.unwrap_or(c.theoretical_mode);
        if let Some(h) = H {
            c.H = *h;
            if c.theoretical_mode && beta.is_none() {
                c.beta = 8.0 / (c.H as f64 - 8.0);
            }
        }
        c.beta = beta.unwrap_or(c.beta);
        c.reward_variant = reward_variant.unwrap_or(c.reward_variant);
        c.expert_seed = expert_seed.or(c.expert_seed);
        Ok(Some(c))
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmEntry {
    /// Run-group label, e.g. `WS(800)`.
    pub name: String,
    pub algorithm: AlgorithmKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offline_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub N_int: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Exact dynamic programming.
    #[default]
    Exact,
    /// Mean return of `rollouts` episodes.
    MonteCarlo { rollouts: usize },
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default = "one")]
    pub C: f64,
    pub num_runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "fifty")]
    pub eval_every_cost: f64,
    /// Shared budget used to fill in missing per-algorithm budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<f64>,
    #[serde(default)]
    pub equal_cost: bool,
    #[serde(default)]
    pub learner: LearnerKind,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default = "thousand")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub trajectory_billing: TrajectoryBilling,
    #[serde(default)]
    pub dedup_queries: bool,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn fifty() -> f64 {
    50.0
}

fn thousand() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The Figure-2 comparison: BC, STAGGER and WARM-STAGGER with 200, 800
    /// and 3200 offline pairs at equal total cost.
    pub fn figure2(num_runs: usize, master_seed: u64, total_cost: f64) -> Self {
        let entry = |name: &str, algorithm, offline_pairs| AlgorithmEntry {
            name: name.into(),
            algorithm,
            offline_pairs,
            N_int: None,
        };
        Self {
            env: EnvSpec::cliff_preset("figure2"),
            algorithms: vec![
                entry("BC", AlgorithmKind::Bc, None),
                entry("STAGGER", AlgorithmKind::Stagger, None),
                entry("WS(200)", AlgorithmKind::WarmStagger, Some(200)),
                entry("WS(800)", AlgorithmKind::WarmStagger, Some(800)),
                entry("WS(3200)", AlgorithmKind::WarmStagger, Some(3200)),
            ],
            C: 1.0,
            num_runs,
            master_seed,
            eval_every_cost: 50.0,
            total_cost: Some(total_cost),
            equal_cost: true,
            learner: LearnerKind::Memorizing,
            eta: 1.0,
            bootstrap_resamples: 1000,
            trajectory_billing: TrajectoryBilling::PerState,
            dedup_queries: false,
            evaluation: Evaluation::Exact,
            output_dir: None,
        }
    }
}

enum Env {
    Cliff(CliffWorld),
    Tabular { mdp: TabularMdp, expert: DetPolicy, class: Option<Arc<PolicyClass>> },
}

impl Env {
    fn mdp(&self) -> &TabularMdp {
        match self {
            Env::Cliff(w) => &w.mdp,
            Env::Tabular { mdp, .. } => mdp,
        }
    }

    fn expert(&self) -> &DetPolicy {
        match self {
            Env::Cliff(w) => &w.expert,
            Env::Tabular { expert, .. } => expert,
        }
    }

    fn class(&self) -> Option<Arc<PolicyClass>> {
        match self {
            Env::Cliff(_) => None,
            Env::Tabular { class, .. } => class.clone(),
        }
    }
}

/// A config after validation, with every budget resolved.
struct Plan {
    env: Env,
    specs: Vec<AlgorithmSpec>,
    budgets: Vec<f64>,
    grid: Vec<f64>,
    settings: TrainSettings,
}

fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    let mut problems = Vec::new();
    if cfg.num_runs == 0 {
        problems.push("num_runs must be at least 1".to_string());
    }
    if !(cfg.C >= 1.0 && cfg.C.is_finite()) {
        problems.push(format!("C = {} must be a finite number >= 1", cfg.C));
    }
    if !(cfg.eval_every_cost > 0.0 && cfg.eval_every_cost.is_finite()) {
        problems.push("eval_every_cost must be positive".to_string());
    }
    if cfg.algorithms.is_empty() {
        problems.push("no algorithms configured".to_string());
    }
    let mut names = HashSet::new();
    for a in &cfg.algorithms {
        if !names.insert(a.name.as_str()) {
            problems.push(format!("duplicate algorithm name `{}`", a.name));
        }
    }

    let env = match cfg.env.cliff_config()? {
        Some(c) => {
            if cfg.learner != LearnerKind::Memorizing {
                problems.push(
                    "the cliff policy class has A^S members and cannot be enumerated; use \"learner\": \"memorizing\"".into(),
                );
            }
            if let Evaluation::MonteCarlo { .. } = cfg.evaluation {
                problems.push("cliff experiments are evaluated exactly".into());
            }
            Env::Cliff(build_cliff(&c)?)
        }
        None => {
            let EnvSpec::MdpFile { path } = &cfg.env else { unreachable!() };
            let bundle = MdpBundle::read(path)?;
            let mdp = bundle.mdp.to_mdp()?;
            let expert = bundle.expert()?.ok_or_else(|| config("the MDP file has no expert policy"))?;
            let class = bundle.policy_class()?.map(Arc::new);
            if class.is_none() && cfg.learner != LearnerKind::Memorizing {
                problems.push("class-based learners need a \"class\" in the MDP file".into());
            }
            Env::Tabular { mdp, expert, class }
        }
    };
    let h = env.mdp().horizon();

    let mut specs = Vec::new();
    let mut budgets = Vec::new();
    for a in &cfg.algorithms {
        let kind = a.algorithm;
        let offline = match (kind, a.offline_pairs, cfg.total_cost) {
            (AlgorithmKind::Bc, None, Some(t)) => t.round() as usize,
            (_, Some(k), _) => k,
            (_, None, _) => 0,
        };
        let n_int = match (kind.uses_interactive(), a.N_int, cfg.total_cost) {
            (false, _, _) => 0,
            (true, Some(n), _) => n,
            (true, None, Some(t)) => {
                let left = (t - offline as f64) / cfg.C;
                if left < 0.0 {
                    problems.push(format!("{}: {offline} offline pairs exceed total_cost {t}", a.name));
                    0
                } else {
                    left.floor() as usize
                }
            }
            (true, None, None) => {
                problems.push(format!("{}: N_int missing and no total_cost to derive it from", a.name));
                0
            }
        };
        let spec = AlgorithmSpec { kind, offline_pairs: offline, n_int };
        if let Err(e) = spec.validate() {
            problems.push(format!("{}: {e}", a.name));
        }
        let interactive = if kind.trajectory_wise() {
            let rounds = n_int / h;
            match cfg.trajectory_billing {
                TrajectoryBilling::PerState => (rounds * h) as f64,
                TrajectoryBilling::FlatFee => rounds as f64,
            }
        } else {
            n_int as f64
        };
        budgets.push(offline as f64 + cfg.C * interactive);
        specs.push(spec);
    }
    if cfg.equal_cost && !cfg.dedup_queries {
        let target = cfg.total_cost.or(budgets.first().copied()).unwrap_or(0.0);
        for (a, b) in cfg.algorithms.iter().zip(&budgets) {
            if (b - target).abs() >= 1.0 {
                problems.push(format!("{}: total cost {b} differs from the shared budget {target}", a.name));
            }
        }
    }
    if cfg.equal_cost && cfg.dedup_queries {
        problems.push("equal_cost cannot be enforced when repeated queries are free".into());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let max_cost = budgets.iter().copied().fold(0.0, f64::max);
    let steps = (max_cost / cfg.eval_every_cost + 1e-9).floor() as usize;
    let grid = (0..=steps).map(|k| k as f64 * cfg.eval_every_cost).collect();
    let settings = TrainSettings {
        learner: cfg.learner,
        eta: cfg.eta,
        cost_ratio: cfg.C,
        billing: cfg.trajectory_billing,
        dedup: cfg.dedup_queries,
        key: if env.expert().is_stationary() { AnnotationKey::State } else { AnnotationKey::StepState },
        keep_snapshots: false,
    };
    Ok(Plan { env, specs, budgets, grid, settings })
}

/// Values observed by one run at one cost checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPoint {
    pub annotations: f64,
    pub ret: f64,
    pub cost_offline: f64,
    pub cost_interactive: f64,
    pub cov_e: f64,
    pub cov_eprime: f64,
    pub b_prime: f64,
}

struct Recorder<'p> {
    env: &'p Env,
    grid: &'p [f64],
    evaluation: Evaluation,
    eval_seed: u64,
    points: Vec<RunPoint>,
}

impl Recorder<'_> {
    fn measure(&self, ledger: &AnnotationLedger, learner: &Learner) -> Result<RunPoint> {
        let (ret, cov) = match self.env {
            Env::Cliff(w) => {
                let m = learner.memorizer().ok_or_else(|| config("cliff runs need the memorizing learner"))?;
                let known: Vec<bool> = m.table().iter().map(Option::is_some).collect();
                let ret = memorizing_return(&w.config, MemorizedCounts::from_annotated(&known, &w.config));
                (ret, Some(coverage_stats(ledger.annotated_states(), &w.config)))
            }
            Env::Tabular { mdp, .. } => {
                let policy = learner.markov_policy()?;
                let ret = match self.evaluation {
                    Evaluation::Exact => exact_return(mdp, &policy)?,
                    Evaluation::MonteCarlo { rollouts } => {
                        let mut rng = rng_from_seed(self.eval_seed ^ self.points.len() as u64);
                        let mut total = 0.0;
                        for _ in 0..rollouts.max(1) {
                            total += crate::mdp::rollout(mdp, &policy, &mut rng)?.total_reward();
                        }
                        total / rollouts.max(1) as f64
                    }
                };
                (ret, None)
            }
        };
        Ok(RunPoint {
            annotations: ledger.annotations() as f64,
            ret,
            cost_offline: ledger.offline_cost(),
            cost_interactive: ledger.interactive_cost(),
            cov_e: cov.map_or(f64::NAN, |c| c.frac_e),
            cov_eprime: cov.map_or(f64::NAN, |c| c.frac_eprime),
            b_prime: cov.map_or(f64::NAN, |c| f64::from(u8::from(c.b_prime_annotated))),
        })
    }

    fn flush_below(&mut self, bound: f64, ledger: &AnnotationLedger, learner: &Learner) -> Result<()> {
        let pending = |k: usize| k < self.grid.len() && self.grid[k] < bound - 1e-9;
        if !pending(self.points.len()) {
            return Ok(());
        }
        let point = self.measure(ledger, learner)?;
        while pending(self.points.len()) {
            self.points.push(point);
        }
        Ok(())
    }
}

impl Observer for Recorder<'_> {
    fn before_event(&mut self, next_cost: f64, now: Progress<'_>) -> Result<()> {
        self.flush_below(next_cost, now.ledger, now.learner)
    }
}

fn run_one(plan: &Plan, cfg: &ExperimentConfig, index: usize, run: usize) -> Result<Vec<RunPoint>> {
    let entry = &cfg.algorithms[index];
    let mut rng = rng_for(cfg.master_seed, &entry.name, run as u64);
    let problem = Problem { mdp: plan.env.mdp(), expert: Arc::new(plan.env.expert().clone()), class: plan.env.class() };
    let end = plan.budgets[index];
    let checkpoints = plan.grid.iter().take_while(|&&g| g <= end + 1e-9).count();
    let mut recorder = Recorder {
        env: &plan.env,
        grid: &plan.grid[..checkpoints],
        evaluation: cfg.evaluation,
        eval_seed: derive_seed(cfg.master_seed, &format!("eval/{}", entry.name), run as u64),
        points: Vec::with_capacity(checkpoints),
    };
    let out = train(&problem, &plan.specs[index], &plan.settings, &mut rng, &mut recorder)?;
    recorder.flush_below(f64::INFINITY, &out.ledger, &out.learner)?;
    Ok(recorder.points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub p10: f64,
    pub p90: f64,
    /// Fewer than two samples: the band collapsed to a point.
    pub degenerate: bool,
}

/// Percentile bootstrap of the mean with nearest-rank 10th/90th percentiles.
pub fn bootstrap_band<R: Rng + ?Sized>(samples: &[f64], resamples: usize, rng: &mut R) -> Band {
    let n = samples.len();
    if n < 2 || resamples == 0 {
        let v = samples.first().copied().unwrap_or(f64::NAN);
        return Band { p10: v, p90: v, degenerate: true };
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let rank = |p: f64| means[((p * resamples as f64).ceil() as usize).clamp(1, resamples) - 1];
    Band { p10: rank(0.1), p90: rank(0.9), degenerate: false }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub cost: f64,
    pub annotations: f64,
    pub return_mean: f64,
    pub band: Band,
    pub cov_e: f64,
    pub cov_eprime: f64,
    pub b_prime_frac: f64,
    pub cost_offline: f64,
    pub cost_interactive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCurve {
    /// Algorithm kind, e.g. `warm_stagger`.
    pub algorithm: String,
    /// Config label, e.g. `WS(800)`.
    pub run_group: String,
    pub points: Vec<CurvePoint>,
    /// `runs[r][k]`: run `r` at checkpoint `k`.
    pub runs: Vec<Vec<RunPoint>>,
}

impl ExperimentCurve {
    /// First checkpoint whose mean return reaches `target`.
    pub fn first_cost_reaching(&self, target: f64) -> Option<f64> {
        self.points.iter().find(|p| p.return_mean >= target).map(|p| p.cost)
    }

    pub fn at_cost(&self, cost: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| (p.cost - cost).abs() < 1e-9)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub curves: Vec<ExperimentCurve>,
    /// Expert return in the evaluated environment.
    pub expert_return: f64,
    pub is_cliff: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Runs every `(algorithm, run)` pair on a pool of `threads` workers (all
/// cores when `None`). Output does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let plan = plan(cfg)?;
    let tasks: Vec<(usize, usize)> =
        (0..cfg.algorithms.len()).flat_map(|i| (0..cfg.num_runs).map(move |r| (i, r))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k.max(1));
    }
    let pool = builder.build().map_err(|e| config(format!("thread pool: {e}")))?;
    let mut results: Vec<((usize, usize), Vec<RunPoint>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, r)| run_one(&plan, cfg, i, r).map(|pts| ((i, r), pts)))
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by_key(|(key, _)| *key);

    let mut curves = Vec::new();
    for (i, entry) in cfg.algorithms.iter().enumerate() {
        let runs: Vec<Vec<RunPoint>> =
            results.iter().filter(|((a, _), _)| *a == i).map(|(_, pts)| pts.clone()).collect();
        let checkpoints = runs.iter().map(Vec::len).min().unwrap_or(0);
        let points = (0..checkpoints)
            .map(|k| {
                let returns: Vec<f64> = runs.iter().map(|r| r[k].ret).collect();
                let mut rng = rng_for(cfg.master_seed, &format!("bootstrap/{}", entry.name), k as u64);
                CurvePoint {
                    cost: plan.grid[k],
                    annotations: mean(runs.iter().map(|r| r[k].annotations)),
                    return_mean: mean(returns.iter().copied()),
                    band: bootstrap_band(&returns, cfg.bootstrap_resamples, &mut rng),
                    cov_e: mean(runs.iter().map(|r| r[k].cov_e)),
                    cov_eprime: mean(runs.iter().map(|r| r[k].cov_eprime)),
                    b_prime_frac: mean(runs.iter().map(|r| r[k].b_prime)),
                    cost_offline: mean(runs.iter().map(|r| r[k].cost_offline)),
                    cost_interactive: mean(runs.iter().map(|r| r[k].cost_interactive)),
                }
            })
            .collect();
        curves.push(ExperimentCurve {
            algorithm: entry.algorithm.name().to_string(),
            run_group: entry.name.clone(),
            points,
            runs,
        });
    }
    let expert_return = match &plan.env {
        Env::Cliff(w) => w.config.expert_return(),
        Env::Tabular { mdp, expert, .. } => exact_return(mdp, &crate::mdp::Policy::Det(expert.clone()))?,
    };
    Ok(ExperimentResult { curves, expert_return, is_cliff: matches!(plan.env, Env::Cliff(_)) })
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn results_csv(curves: &[ExperimentCurve]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                csv_field(&c.algorithm),
                csv_field(&c.run_group),
                p.cost,
                p.annotations,
                fmt_num(p.return_mean),
                fmt_num(p.band.p10),
                fmt_num(p.band.p90),
                fmt_num(p.cov_e),
                fmt_num(p.cov_eprime),
                fmt_num(p.b_prime_frac),
            );
        }
    }
    out
}

pub fn ledger_csv(curves: &[ExperimentCurve]) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&c.algorithm),
                csv_field(&c.run_group),
                p.cost,
                fmt_num(p.cost_offline),
                fmt_num(p.cost_interactive),
                fmt_num(p.cost_offline + p.cost_interactive),
            );
        }
    }
    out
}

/// Writes `results.csv`, `ledger.csv`, `config.json` and one SVG chart per panel.
pub fn emit_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("results.csv", results_csv(&result.curves))?;
    put("ledger.csv", ledger_csv(&result.curves))?;
    put("config.json", serde_json::to_string_pretty(cfg)? + "\n")?;

    let series = |f: &dyn Fn(&CurvePoint) -> (f64, Option<(f64, f64)>)| -> Vec<svg::Series> {
        result
            .curves
            .iter()
            .map(|c| svg::Series {
                name: c.run_group.clone(),
                points: c.points.iter().map(|p| (p.cost, f(p).0, f(p).1)).collect(),
            })
            .collect()
    };
    put(
        "return.svg",
        svg::line_chart("Expected return", "return", &series(&|p| (p.return_mean, Some((p.band.p10, p.band.p90))))),
    )?;
    if result.is_cliff {
        put("cov_E.svg", svg::line_chart("Coverage of E", "fraction annotated", &series(&|p| (p.cov_e, None))))?;
        put("cov_Eprime.svg", svg::line_chart("Coverage of E'", "fraction annotated", &series(&|p| (p.cov_eprime, None))))?;
        put(
            "b_prime.svg",
            svg::line_chart("Runs with b' annotated", "fraction of runs", &series(&|p| (p.b_prime_frac, None))),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn band_of_constant_samples_is_a_point() {
        let b = bootstrap_band(&[3.0; 50], 1000, &mut rng_from_seed(1));
        assert_eq!((b.p10, b.p90), (3.0, 3.0));
        assert!(!b.degenerate);
        let b = bootstrap_band(&[2.0], 1000, &mut rng_from_seed(1));
        assert!(b.degenerate);
        assert_eq!(b.p10, 2.0);
    }

    #[test]
    fn band_is_reproducible() {
        let samples: Vec<f64> = (0..200).map(|i| f64::from(i % 2)).collect();
        let a = bootstrap_band(&samples, 1000, &mut rng_from_seed(5));
        let b = bootstrap_band(&samples, 1000, &mut rng_from_seed(5));
        assert_eq!(a, b);
        assert!(a.p10 < 0.5 && 0.5 < a.p90);
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(results_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_json(
            r#"{"env":{"kind":"cliff","preset":"figure2"},"algorithms":[{"name":"S","algorithm":"stagger","N_int":10}],"num_runs":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.C, 1.0);
        assert_eq!(cfg.eval_every_cost, 50.0);
        assert_eq!(cfg.bootstrap_resamples, 1000);
        match plan(&cfg) {
            Err(Error::Validation(list)) => assert!(list.iter().any(|m| m.contains("memorizing"))),
            other => panic!("expected validation error, got {:?}", other.err()),
        }
    }

    #[test]
    fn unequal_budgets_are_rejected() {
        let mut cfg = ExperimentConfig::figure2(1, 0, 1000.0);
        cfg.algorithms[1].N_int = Some(10);
        assert!(matches!(plan(&cfg), Err(Error::Validation(_))));
    }
}

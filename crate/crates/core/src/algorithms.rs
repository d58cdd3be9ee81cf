//! Behavior cloning, STAGGER, TRAGGER and their warm-started variants.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::mdp::{DetPolicy, FirstStepMixture, Policy, PolicyClass, TabularMdp};
use crate::online::{Learner, LearnerKind};
use crate::oracle::{prefix_reveal, AnnotationKey, AnnotationLedger, ExpertOracle, OfflineDataset, TrajectoryBilling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Bc,
    Stagger,
    WarmStagger,
    Tragger,
    WarmTragger,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Bc => "bc",
            AlgorithmKind::Stagger => "stagger",
            AlgorithmKind::WarmStagger => "warm_stagger",
            AlgorithmKind::Tragger => "tragger",
            AlgorithmKind::WarmTragger => "warm_tragger",
        }
    }

    pub fn uses_offline(self) -> bool {
        matches!(self, AlgorithmKind::Bc | AlgorithmKind::WarmStagger | AlgorithmKind::WarmTragger)
    }

    pub fn uses_interactive(self) -> bool {
        !matches!(self, AlgorithmKind::Bc)
    }

    pub fn trajectory_wise(self) -> bool {
        matches!(self, AlgorithmKind::Tragger | AlgorithmKind::WarmTragger)
    }
}

/// Budget of one training run. `n_int` counts interactive state annotations;
/// trajectory-wise algorithms run `n_int / H` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub offline_pairs: usize,
    pub n_int: usize,
}

impl AlgorithmSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.kind.uses_offline() && self.offline_pairs > 0 {
            return Err(config(format!("{} takes no offline pairs", self.kind.name())));
        }
        if !self.kind.uses_interactive() && self.n_int > 0 {
            return Err(config(format!("{} takes no interactive budget", self.kind.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub learner: LearnerKind,
    pub eta: f64,
    pub cost_ratio: f64,
    pub billing: TrajectoryBilling,
    pub dedup: bool,
    pub key: AnnotationKey,
    /// Keep every per-round policy so the output mixture can be rebuilt.
    pub keep_snapshots: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learner: LearnerKind::ExpWeights,
            eta: 1.0,
            cost_ratio: 1.0,
            billing: TrajectoryBilling::PerState,
            dedup: false,
            key: AnnotationKey::State,
            keep_snapshots: true,
        }
    }
}

/// The environment side of a training run.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub mdp: &'a TabularMdp,
    pub expert: Arc<DetPolicy>,
    pub class: Option<Arc<PolicyClass>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub round: usize,
    pub snapshot: usize,
    pub annotations: usize,
    pub cost: f64,
    /// `(step, state, expert action)` for every state queried this round.
    pub queries: Vec<(usize, usize, usize)>,
}

/// Per-round policies, stored once per distinct snapshot.
#[derive(Debug, Clone, Default)]
pub struct MixturePolicyOutput {
    pub snapshots: Vec<Policy>,
    pub round_snapshot: Vec<usize>,
}

impl MixturePolicyOutput {
    pub fn rounds(&self) -> usize {
        self.round_snapshot.len()
    }

    pub fn member(&self, round: usize) -> &Policy {
        &self.snapshots[self.round_snapshot[round]]
    }

    /// Uniform first-step mixture with one member per round.
    pub fn uniform_mixture(&self) -> Result<FirstStepMixture> {
        if self.rounds() == 0 {
            return Err(config("no rounds were run"));
        }
        if self.snapshots.is_empty() {
            return Err(config("per-round snapshots were not kept"));
        }
        FirstStepMixture::uniform((0..self.rounds()).map(|n| self.member(n).clone()).collect())
    }

    /// The same law as [`Self::uniform_mixture`] with repeated members merged.
    pub fn compact_mixture(&self) -> Result<FirstStepMixture> {
        if self.rounds() == 0 || self.snapshots.is_empty() {
            return self.uniform_mixture();
        }
        let mut counts = vec![0usize; self.snapshots.len()];
        for &i in &self.round_snapshot {
            counts[i] += 1;
        }
        let n = self.rounds() as f64;
        let (weights, members) = counts
            .iter()
            .zip(&self.snapshots)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, p)| (c as f64 / n, p.clone()))
            .unzip();
        FirstStepMixture::new(weights, members)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub mixture: MixturePolicyOutput,
    pub records: Vec<TrainRecord>,
    pub ledger: AnnotationLedger,
    pub learner: Learner,
}

impl TrainOutput {
    /// The returned policy: the uniform mixture over rounds, or the learner's
    /// current policy when no interactive round ran.
    pub fn policy(&self) -> Result<Policy> {
        if self.mixture.rounds() == 0 {
            self.learner.markov_policy()
        } else {
            Ok(Policy::FirstStep(self.mixture.compact_mixture()?))
        }
    }
}

/// Snapshot of a run just before an annotation is billed.
pub struct Progress<'a> {
    pub ledger: &'a AnnotationLedger,
    pub learner: &'a Learner,
}

/// Called before every billed annotation event with the cost it will reach.
pub trait Observer {
    fn before_event(&mut self, next_cost: f64, now: Progress<'_>) -> Result<()>;
}

impl Observer for () {
    fn before_event(&mut self, _: f64, _: Progress<'_>) -> Result<()> {
        Ok(())
    }
}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn before_event(&mut self, next_cost: f64, now: Progress<'_>) -> Result<()> {
        (**self).before_event(next_cost, now)
    }
}

struct Session<'a, O: Observer> {
    problem: &'a Problem<'a>,
    oracle: ExpertOracle,
    learner: Learner,
    keep: bool,
    dirty: bool,
    mixture: MixturePolicyOutput,
    records: Vec<TrainRecord>,
    observer: O,
}

impl<'a, O: Observer> Session<'a, O> {
    fn new(problem: &'a Problem<'a>, settings: &TrainSettings, observer: O) -> Result<Self> {
        let mdp = problem.mdp;
        let (s, a) = (mdp.num_states(), mdp.num_actions());
        if problem.expert.num_states() != s || problem.expert.num_actions() != a {
            return Err(config("expert dimensions do not match the MDP"));
        }
        if let Some(class) = &problem.class {
            if class.dims() != (s, a) {
                return Err(config("policy class dimensions do not match the MDP"));
            }
        }
        let horizon = (settings.key == AnnotationKey::StepState).then_some(mdp.horizon());
        let learner = Learner::new(settings.learner, problem.class.clone(), settings.eta, (s, a), horizon)?;
        let ledger = AnnotationLedger::new(s, mdp.horizon(), settings.cost_ratio)?
            .with_billing(settings.billing)
            .with_dedup(settings.dedup)
            .with_key(settings.key);
        Ok(Self {
            problem,
            oracle: ExpertOracle::new(problem.expert.clone(), mdp.horizon(), ledger),
            learner,
            keep: settings.keep_snapshots,
            dirty: true,
            mixture: MixturePolicyOutput::default(),
            records: Vec::new(),
            observer,
        })
    }

    fn notify(&mut self, next_cost: f64) -> Result<()> {
        self.observer.before_event(next_cost, Progress { ledger: self.oracle.ledger(), learner: &self.learner })
    }

    fn offline(&mut self, pairs: &[(usize, usize, usize)]) -> Result<()> {
        for &(h, s, a) in pairs {
            if a != self.problem.expert.action(h, s) {
                return Err(Error::Realizability(format!("offline pair ({h}, {s}, {a}) disagrees with the expert")));
            }
            let next = self.oracle.ledger().total_cost() + 1.0;
            self.notify(next)?;
            self.oracle.ledger_mut().record_offline_pairs(&[(h, s, a)]);
            let changed = self.learner.observe_state(h, s, a).map_err(|e| match e {
                Error::EmptyModel => Error::Realizability("offline pairs eliminate every member of the class".into()),
                other => other,
            })?;
            self.dirty |= changed;
        }
        Ok(())
    }

    fn snapshot(&mut self, first_step: bool) -> Result<usize> {
        if self.dirty {
            if self.keep {
                let p = if first_step { self.learner.first_step_policy()? } else { self.learner.markov_policy()? };
                self.mixture.snapshots.push(p);
            }
            self.dirty = false;
            return Ok(self.mixture.round_snapshot.last().map_or(0, |&i| i + 1));
        }
        Ok(self.mixture.round_snapshot.last().copied().unwrap_or(0))
    }

    fn record(&mut self, round: usize, snapshot: usize, queries: Vec<(usize, usize, usize)>) {
        self.mixture.round_snapshot.push(snapshot);
        let ledger = self.oracle.ledger();
        self.records.push(TrainRecord { round, snapshot, annotations: ledger.annotations(), cost: ledger.total_cost(), queries });
    }

    fn stagger_rounds<R: Rng + ?Sized>(&mut self, rounds: usize, rng: &mut R) -> Result<()> {
        let mdp = self.problem.mdp;
        for n in 0..rounds {
            let snapshot = self.snapshot(false)?;
            // s_h for a uniform h is a draw from d^{pi^n}; steps after h are never used
            let h = rng.gen_range(0..mdp.horizon());
            let mut s = mdp.initial().sample(rng);
            for t in 0..h {
                let a = self.learner.sample_action(t, s, rng);
                s = mdp.transition(t, s, a).sample(rng);
            }
            let ledger = self.oracle.ledger();
            let next = ledger.cost_after(ledger.state_query_units(h, s));
            self.notify(next)?;
            let a = self.oracle.query_state(n, h, s)?;
            self.dirty |= self.learner.observe_state(h, s, a)?;
            self.record(n, snapshot, vec![(h, s, a)]);
        }
        Ok(())
    }

    fn tragger_rounds<R: Rng + ?Sized>(&mut self, rounds: usize, rng: &mut R) -> Result<()> {
        let mdp = self.problem.mdp;
        let h_n = mdp.horizon();
        for n in 0..rounds {
            let snapshot = self.snapshot(true)?;
            let member = self.learner.sample_member(rng);
            let class = self.problem.class.clone();
            let mut states = Vec::with_capacity(h_n);
            let mut s = mdp.initial().sample(rng);
            for t in 0..h_n {
                states.push(s);
                let a = match (member, &class) {
                    (Some(i), Some(c)) => c.get(i).action(t, s),
                    _ => self.learner.sample_action(t, s, rng),
                };
                if t + 1 < h_n {
                    s = mdp.transition(t, s, a).sample(rng);
                }
            }
            let ledger = self.oracle.ledger();
            let next = ledger.cost_after(ledger.trajectory_query_units(&states));
            self.notify(next)?;
            let answers = self.oracle.query_trajectory(n, &states)?;
            self.dirty |= self.learner.observe_trajectory(&states, &answers)?;
            let queries = states.iter().zip(&answers).enumerate().map(|(h, (&s, &a))| (h, s, a)).collect();
            self.record(n, snapshot, queries);
        }
        Ok(())
    }

    fn finish(self) -> TrainOutput {
        TrainOutput { mixture: self.mixture, records: self.records, ledger: self.oracle.into_ledger(), learner: self.learner }
    }
}

/// Runs one algorithm end to end, sampling offline demonstrations from the
/// expert when the spec asks for them.
pub fn train<R: Rng + ?Sized, O: Observer>(
    problem: &Problem<'_>,
    spec: &AlgorithmSpec,
    settings: &TrainSettings,
    rng: &mut R,
    observer: &mut O,
) -> Result<TrainOutput> {
    spec.validate()?;
    let mut session = Session::new(problem, settings, observer)?;
    if spec.offline_pairs > 0 {
        let h_n = problem.mdp.horizon();
        let data = OfflineDataset::sample(problem.mdp, &problem.expert, spec.offline_pairs.div_ceil(h_n), rng);
        session.offline(&prefix_reveal(&data, spec.offline_pairs)?)?;
    }
    match spec.kind {
        AlgorithmKind::Bc => {}
        AlgorithmKind::Stagger | AlgorithmKind::WarmStagger => session.stagger_rounds(spec.n_int, rng)?,
        AlgorithmKind::Tragger | AlgorithmKind::WarmTragger => {
            session.tragger_rounds(spec.n_int / problem.mdp.horizon(), rng)?
        }
    }
    Ok(session.finish())
}

/// Zero-loss fit to the pairs: uniform over the surviving class members, or
/// the memorizing policy.
pub fn run_bc(problem: &Problem<'_>, pairs: &[(usize, usize, usize)], settings: &TrainSettings) -> Result<Policy> {
    let mut session = Session::new(problem, settings, ())?;
    session.offline(pairs)?;
    session.learner.markov_policy()
}

pub fn run_stagger<R: Rng + ?Sized>(problem: &Problem<'_>, n_int: usize, settings: &TrainSettings, rng: &mut R) -> Result<TrainOutput> {
    let mut session = Session::new(problem, settings, ())?;
    session.stagger_rounds(n_int, rng)?;
    Ok(session.finish())
}

pub fn run_warm_stagger<R: Rng + ?Sized>(
    problem: &Problem<'_>,
    offline_pairs: &[(usize, usize, usize)],
    n_int: usize,
    settings: &TrainSettings,
    rng: &mut R,
) -> Result<TrainOutput> {
    let mut session = Session::new(problem, settings, ())?;
    session.offline(offline_pairs)?;
    session.stagger_rounds(n_int, rng)?;
    Ok(session.finish())
}

pub fn run_tragger<R: Rng + ?Sized>(problem: &Problem<'_>, rounds: usize, settings: &TrainSettings, rng: &mut R) -> Result<TrainOutput> {
    let mut session = Session::new(problem, settings, ())?;
    session.tragger_rounds(rounds, rng)?;
    Ok(session.finish())
}

/// Runs `budget / H` trajectory rounds after the offline pairs.
pub fn run_warm_tragger<R: Rng + ?Sized>(
    problem: &Problem<'_>,
    offline_pairs: &[(usize, usize, usize)],
    budget: usize,
    settings: &TrainSettings,
    rng: &mut R,
) -> Result<TrainOutput> {
    let mut session = Session::new(problem, settings, ())?;
    session.offline(offline_pairs)?;
    session.tragger_rounds(budget / problem.mdp.horizon(), rng)?;
    Ok(session.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::exact_return;
    use crate::seed::rng_from_seed;

    fn single_state(h: usize) -> TabularMdp {
        TabularMdp::from_dense(1, 2, h, &[1.0], true, &[1.0, 1.0], vec![1.0, 0.0], h as f64).unwrap()
    }

    fn two_policies() -> Arc<PolicyClass> {
        Arc::new(
            PolicyClass::new(vec![DetPolicy::stationary(2, vec![0]).unwrap(), DetPolicy::stationary(2, vec![1]).unwrap()]).unwrap(),
        )
    }

    fn problem(mdp: &TabularMdp) -> Problem<'_> {
        Problem { mdp, expert: Arc::new(DetPolicy::stationary(2, vec![0]).unwrap()), class: Some(two_policies()) }
    }

    #[test]
    fn one_stagger_round_identifies_expert() {
        let mdp = single_state(1);
        let out = run_stagger(&problem(&mdp), 1, &TrainSettings::default(), &mut rng_from_seed(1)).unwrap();
        assert_eq!(out.learner.weights().unwrap(), vec![1.0, 0.0]);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.ledger.total_cost(), 1.0);
        // the single round played the uniform proposal
        let j = exact_return(&mdp, &out.policy().unwrap()).unwrap();
        assert!((j - 0.5).abs() < 1e-12);
    }

    #[test]
    fn warm_start_without_pairs_matches_cold_start() {
        let mdp = single_state(3);
        let p = problem(&mdp);
        let s = TrainSettings::default();
        let a = run_stagger(&p, 5, &s, &mut rng_from_seed(4)).unwrap();
        let b = run_warm_stagger(&p, &[], 5, &s, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a.records, b.records);
        let a = run_tragger(&p, 2, &s, &mut rng_from_seed(4)).unwrap();
        let b = run_warm_tragger(&p, &[], 6, &s, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn inconsistent_pairs_are_rejected() {
        let mdp = single_state(2);
        let p = problem(&mdp);
        for learner in [LearnerKind::ExpWeights, LearnerKind::VersionSpace, LearnerKind::Memorizing] {
            let s = TrainSettings { learner, ..TrainSettings::default() };
            assert!(matches!(run_bc(&p, &[(0, 0, 1)], &s), Err(Error::Realizability(_))));
        }
    }

    #[test]
    fn bc_without_data_is_uniform() {
        let mdp = single_state(2);
        let s = TrainSettings { learner: LearnerKind::Memorizing, ..TrainSettings::default() };
        let pi = run_bc(&problem(&mdp), &[], &s).unwrap();
        assert_eq!(pi.action_probs(0, 0), vec![0.5, 0.5]);
        let pi = run_bc(&problem(&mdp), &[(1, 0, 0)], &s).unwrap();
        assert_eq!(pi.action_probs(0, 0), vec![1.0, 0.0]);
    }

    #[test]
    fn tragger_budget_below_horizon_falls_back_to_bc() {
        let mdp = single_state(4);
        let p = problem(&mdp);
        let out = run_warm_tragger(&p, &[(0, 0, 0)], 3, &TrainSettings::default(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(out.mixture.rounds(), 0);
        let j = exact_return(&mdp, &out.policy().unwrap()).unwrap();
        assert!((j - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_costs_track_rounds() {
        let mdp = single_state(3);
        let p = problem(&mdp);
        let s = TrainSettings { cost_ratio: 2.0, ..TrainSettings::default() };
        let out = run_warm_stagger(&p, &[(0, 0, 0), (1, 0, 0)], 4, &s, &mut rng_from_seed(2)).unwrap();
        for (n, r) in out.records.iter().enumerate() {
            assert_eq!(r.cost, 2.0 + 2.0 * (n + 1) as f64);
        }
        let out = run_tragger(&p, 2, &s, &mut rng_from_seed(2)).unwrap();
        assert_eq!(out.records[1].cost, 12.0);
    }

    #[test]
    fn output_mixture_is_uniform_over_rounds() {
        let mdp = single_state(2);
        let out = run_stagger(&problem(&mdp), 6, &TrainSettings::default(), &mut rng_from_seed(3)).unwrap();
        let full = out.mixture.uniform_mixture().unwrap();
        assert_eq!(full.members().len(), 6);
        assert!(full.weights().iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
        let mean: f64 = full.members().iter().map(|m| exact_return(&mdp, m).unwrap()).sum::<f64>() / 6.0;
        let j = exact_return(&mdp, &Policy::FirstStep(full)).unwrap();
        assert!((j - mean).abs() < 1e-12);
        let compact = exact_return(&mdp, &out.policy().unwrap()).unwrap();
        assert!((compact - mean).abs() < 1e-12);
    }
}

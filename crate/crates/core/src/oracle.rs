//! Expert annotation oracles, offline demonstrations and cost accounting.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::mdp::{rollout_with, DetPolicy, TabularMdp};

/// How a trajectory-wise query is billed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryBilling {
    /// `C * H`, as if each state had been queried separately.
    #[default]
    PerState,
    /// `C` per trajectory regardless of its length.
    FlatFee,
}

/// Key under which annotations are de-duplicated and counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKey {
    #[default]
    State,
    StepState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveQuery {
    pub round: usize,
    /// `(step, state)` pairs; one entry for a state-wise query.
    pub states: Vec<(usize, usize)>,
    pub answers: Vec<usize>,
    pub billed_units: f64,
}

#[derive(Debug, Clone)]
pub struct AnnotationLedger {
    horizon: usize,
    cost_ratio: f64,
    billing: TrajectoryBilling,
    dedup: bool,
    key: AnnotationKey,
    offline_pairs: Vec<(usize, usize, usize)>,
    offline_trajectories: usize,
    interactive: Vec<InteractiveQuery>,
    interactive_units: f64,
    interactive_states: usize,
    seen: HashSet<(usize, usize)>,
    annotated: Vec<bool>,
}

impl AnnotationLedger {
    pub fn new(num_states: usize, horizon: usize, cost_ratio: f64) -> Result<Self> {
        if !(cost_ratio >= 1.0) || !cost_ratio.is_finite() {
            return Err(input(format!("cost ratio C must be a finite number >= 1, got {cost_ratio}")));
        }
        Ok(Self {
            horizon,
            cost_ratio,
            billing: TrajectoryBilling::PerState,
            dedup: false,
            key: AnnotationKey::State,
            offline_pairs: Vec::new(),
            offline_trajectories: 0,
            interactive: Vec::new(),
            interactive_units: 0.0,
            interactive_states: 0,
            seen: HashSet::new(),
            annotated: vec![false; num_states],
        })
    }

    pub fn with_billing(mut self, billing: TrajectoryBilling) -> Self {
        self.billing = billing;
        self
    }

    /// Repeated interactive queries on an already annotated key are free.
    pub fn with_dedup(mut self, dedup: bool) -> Self {
        self.dedup = dedup;
        self
    }

    pub fn with_key(mut self, key: AnnotationKey) -> Self {
        self.key = key;
        self
    }

    fn key_of(&self, step: usize, state: usize) -> (usize, usize) {
        match self.key {
            AnnotationKey::State => (0, state),
            AnnotationKey::StepState => (step, state),
        }
    }

    fn mark(&mut self, step: usize, state: usize) {
        self.annotated[state] = true;
        self.seen.insert(self.key_of(step, state));
    }

    /// Bills each pair as one offline annotation.
    pub fn record_offline_pairs(&mut self, pairs: &[(usize, usize, usize)]) {
        for &(h, s, _) in pairs {
            self.mark(h, s);
        }
        self.offline_pairs.extend_from_slice(pairs);
    }

    /// Bills whole trajectories, `H` pairs each.
    pub fn record_offline_trajectory(&mut self, states: &[usize], actions: &[usize]) {
        let pairs: Vec<_> = states.iter().zip(actions).enumerate().map(|(h, (&s, &a))| (h, s, a)).collect();
        self.record_offline_pairs(&pairs);
        self.offline_trajectories += 1;
    }

    /// Units a state-wise query at `(step, state)` would be billed.
    pub fn state_query_units(&self, step: usize, state: usize) -> f64 {
        if self.dedup && self.is_annotated(step, state) {
            0.0
        } else {
            1.0
        }
    }

    /// Units a trajectory-wise query on `states` would be billed.
    pub fn trajectory_query_units(&self, states: &[usize]) -> f64 {
        let fresh = if self.dedup {
            let mut keys: Vec<_> = states.iter().enumerate().map(|(h, &s)| self.key_of(h, s)).collect();
            keys.sort_unstable();
            keys.dedup();
            keys.iter().filter(|k| !self.seen.contains(k)).count()
        } else {
            states.len()
        };
        match (self.billing, self.dedup) {
            (TrajectoryBilling::PerState, _) => fresh as f64,
            (TrajectoryBilling::FlatFee, false) => 1.0,
            (TrajectoryBilling::FlatFee, true) => f64::from(u8::from(fresh > 0)),
        }
    }

    pub fn record_state_query(&mut self, round: usize, step: usize, state: usize, answer: usize) {
        let units = self.state_query_units(step, state);
        self.mark(step, state);
        self.interactive_units += units;
        self.interactive_states += 1;
        self.interactive.push(InteractiveQuery { round, states: vec![(step, state)], answers: vec![answer], billed_units: units });
    }

    pub fn record_trajectory_query(&mut self, round: usize, states: &[usize], answers: &[usize]) {
        let units = self.trajectory_query_units(states);
        for (h, &s) in states.iter().enumerate() {
            self.mark(h, s);
        }
        self.interactive_units += units;
        self.interactive_states += states.len();
        self.interactive.push(InteractiveQuery {
            round,
            states: states.iter().copied().enumerate().collect(),
            answers: answers.to_vec(),
            billed_units: units,
        });
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cost_ratio(&self) -> f64 {
        self.cost_ratio
    }

    pub fn offline_pairs(&self) -> &[(usize, usize, usize)] {
        &self.offline_pairs
    }

    pub fn interactive_queries(&self) -> &[InteractiveQuery] {
        &self.interactive
    }

    /// Whole offline trajectories billed through [`Self::record_offline_trajectory`].
    pub fn n_off(&self) -> usize {
        self.offline_trajectories
    }

    /// Billed interactive state annotations.
    pub fn n_int(&self) -> f64 {
        self.interactive_units
    }

    pub fn offline_cost(&self) -> f64 {
        self.offline_pairs.len() as f64
    }

    pub fn interactive_cost(&self) -> f64 {
        self.cost_ratio * self.interactive_units
    }

    pub fn total_cost(&self) -> f64 {
        self.offline_cost() + self.interactive_cost()
    }

    /// Cost after billing `units` more interactive annotations.
    pub fn cost_after(&self, units: f64) -> f64 {
        self.total_cost() + self.cost_ratio * units
    }

    /// Offline pairs plus interactive state annotations, billed or not.
    pub fn annotations(&self) -> usize {
        self.offline_pairs.len() + self.interactive_states
    }

    /// `annotated[s]` is true once `s` has been annotated at any step.
    pub fn annotated_states(&self) -> &[bool] {
        &self.annotated
    }

    pub fn is_annotated(&self, step: usize, state: usize) -> bool {
        self.seen.contains(&self.key_of(step, state))
    }
}

/// Deterministic expert answering state-wise and trajectory-wise queries.
#[derive(Debug, Clone)]
pub struct ExpertOracle {
    expert: Arc<DetPolicy>,
    horizon: usize,
    ledger: AnnotationLedger,
    state_queries: usize,
    trajectory_queries: usize,
}

impl ExpertOracle {
    pub fn new(expert: Arc<DetPolicy>, horizon: usize, ledger: AnnotationLedger) -> Self {
        Self { expert, horizon, ledger, state_queries: 0, trajectory_queries: 0 }
    }

    pub fn expert(&self) -> &DetPolicy {
        &self.expert
    }

    pub fn ledger(&self) -> &AnnotationLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut AnnotationLedger {
        &mut self.ledger
    }

    pub fn into_ledger(self) -> AnnotationLedger {
        self.ledger
    }

    pub fn state_queries(&self) -> usize {
        self.state_queries
    }

    pub fn trajectory_queries(&self) -> usize {
        self.trajectory_queries
    }

    fn answer(&self, step: usize, state: usize) -> Result<usize> {
        if state >= self.expert.num_states() {
            return Err(crate::error::config(format!("state {state} out of range for {} states", self.expert.num_states())));
        }
        Ok(self.expert.action(step, state))
    }

    pub fn query_state(&mut self, round: usize, step: usize, state: usize) -> Result<usize> {
        let a = self.answer(step, state)?;
        self.state_queries += 1;
        self.ledger.record_state_query(round, step, state, a);
        Ok(a)
    }

    pub fn query_trajectory(&mut self, round: usize, states: &[usize]) -> Result<Vec<usize>> {
        if states.len() != self.horizon {
            return Err(input(format!("trajectory query of length {} with horizon {}", states.len(), self.horizon)));
        }
        let answers = states.iter().enumerate().map(|(h, &s)| self.answer(h, s)).collect::<Result<Vec<_>>>()?;
        self.trajectory_queries += 1;
        self.ledger.record_trajectory_query(round, states, &answers);
        Ok(answers)
    }
}

/// A reward-free expert trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OfflineDataset {
    pub trajectories: Vec<Demonstration>,
}

impl OfflineDataset {
    /// Draws `n` expert trajectories without billing them.
    pub fn sample<R: Rng + ?Sized>(mdp: &TabularMdp, expert: &DetPolicy, n: usize, rng: &mut R) -> Self {
        let trajectories = (0..n)
            .map(|_| {
                let t = rollout_with(mdp, rng, |h, s, _| expert.action(h, s));
                Demonstration { states: t.states, actions: t.actions }
            })
            .collect();
        Self { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_pairs(&self) -> usize {
        self.trajectories.iter().map(|t| t.states.len()).sum()
    }

    /// All `(step, state, action)` pairs in trajectory order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.trajectories
            .iter()
            .flat_map(|t| t.states.iter().zip(&t.actions).enumerate().map(|(h, (&s, &a))| (h, s, a)))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.trajectories {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut trajectories = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Demonstration = serde_json::from_str(&line)?;
            if t.states.len() != t.actions.len() {
                return Err(input("demonstration has different numbers of states and actions"));
            }
            trajectories.push(t);
        }
        Ok(Self { trajectories })
    }
}

/// Samples `n` expert trajectories and bills them as whole offline demonstrations.
pub fn generate_offline<R: Rng + ?Sized>(mdp: &TabularMdp, oracle: &mut ExpertOracle, n: usize, rng: &mut R) -> OfflineDataset {
    let data = OfflineDataset::sample(mdp, oracle.expert(), n, rng);
    for t in &data.trajectories {
        oracle.ledger_mut().record_offline_trajectory(&t.states, &t.actions);
    }
    data
}

/// The first `k` `(step, state, action)` pairs in trajectory order.
pub fn prefix_reveal(dataset: &OfflineDataset, k: usize) -> Result<Vec<(usize, usize, usize)>> {
    let total = dataset.num_pairs();
    if k > total {
        return Err(input(format!("cannot reveal {k} pairs from a dataset of {total}")));
    }
    Ok(dataset.pairs().take(k).collect())
}

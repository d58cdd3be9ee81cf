//! Finite episodic MDPs, tabular policies, rollouts and exact evaluation.
//!
//! Steps are 0-based throughout the crate: a horizon-`H` episode visits steps
//! `0..H`, and the transition applied after step `h` is `P_h` for
//! `h in 0..H-1`.

mod eval;
mod json;
mod policy;

pub use eval::{
    exact_return, recoverability_mu, rollout, rollout_with, value_functions,
    visitation_distribution, ValueFunctions, Visitation,
};
pub use json::{MdpBundle, MdpJson, PolicyJson};
pub use policy::{ActionDist, DetPolicy, EachStepMixture, FirstStepMixture, Policy, PolicyClass, StochPolicy};
pub(crate) use policy::sample_index;

use std::collections::HashMap;

use rand::Rng;

use crate::error::{config, Error, Result};

/// Tolerance for probability-vector validation.
pub const PROB_TOL: f64 = 1e-12;

/// Default absolute tolerance for float comparisons.
pub const FLOAT_TOL: f64 = 1e-9;

/// A categorical distribution over next states, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    targets: Vec<u32>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SparseRow {
    /// Builds a row from `(next_state, probability)` pairs. Zero entries are
    /// dropped and duplicate targets merged.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|&(s, _)| s);
        let mut targets: Vec<u32> = Vec::with_capacity(entries.len());
        let mut probs: Vec<f64> = Vec::with_capacity(entries.len());
        for (s, p) in entries {
            if p == 0.0 {
                continue;
            }
            if targets.last() == Some(&(s as u32)) {
                *probs.last_mut().unwrap() += p;
            } else {
                targets.push(s as u32);
                probs.push(p);
            }
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { targets, probs, cumulative }
    }

    pub fn from_dense(probs: &[f64]) -> Self {
        Self::new(probs.iter().copied().enumerate().collect())
    }

    pub fn point(target: usize) -> Self {
        Self::new(vec![(target, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.targets.iter().zip(&self.probs).map(|(&s, &p)| (s as usize, p))
    }

    pub fn prob(&self, target: usize) -> f64 {
        match self.targets.binary_search(&(target as u32)) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        self.iter().map(|(s, p)| p * values[s]).sum()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("sampling from an empty row");
        let u: f64 = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.targets[i.min(self.targets.len() - 1)] as usize
    }

    fn key(&self) -> (Vec<u32>, Vec<u64>) {
        (self.targets.clone(), self.probs.iter().map(|p| p.to_bits()).collect())
    }
}

/// Transition dynamics as deduplicated sparse rows plus an `(step, s, a)`
/// index. Homogeneous kernels store a single step reused at every `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    homogeneous: bool,
    stored_steps: usize,
    rows: Vec<SparseRow>,
    index: Vec<u32>,
}

impl TransitionKernel {
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// Number of distinct rows after deduplication.
    pub fn num_distinct_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn stored_steps(&self) -> usize {
        self.stored_steps
    }

    fn slot(&self, step: usize, state: usize, action: usize) -> usize {
        let step = if self.homogeneous { 0 } else { step };
        (step * self.num_states + state) * self.num_actions + action
    }

    /// Distinct-row id used at `(step, state, action)`.
    pub fn row_id(&self, step: usize, state: usize, action: usize) -> usize {
        self.index[self.slot(step, state, action)] as usize
    }

    pub fn row(&self, step: usize, state: usize, action: usize) -> &SparseRow {
        &self.rows[self.row_id(step, state, action)]
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }
}

/// Incrementally assembles a [`TransitionKernel`], sharing identical rows.
#[derive(Debug)]
pub struct KernelBuilder {
    num_states: usize,
    num_actions: usize,
    homogeneous: bool,
    stored_steps: usize,
    rows: Vec<SparseRow>,
    index: Vec<u32>,
    dedupe: HashMap<(Vec<u32>, Vec<u64>), u32>,
}

impl KernelBuilder {
    /// `horizon` is the episode length; a non-homogeneous kernel stores
    /// `horizon - 1` steps.
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, homogeneous: bool) -> Self {
        let stored_steps = if homogeneous { 1 } else { horizon.saturating_sub(1) };
        Self {
            num_states,
            num_actions,
            homogeneous,
            stored_steps,
            rows: Vec::new(),
            index: vec![u32::MAX; stored_steps * num_states * num_actions],
            dedupe: HashMap::new(),
        }
    }

    pub fn stored_steps(&self) -> usize {
        self.stored_steps
    }

    /// Registers a row and returns its id, reusing an identical one if present.
    pub fn intern(&mut self, row: SparseRow) -> u32 {
        let key = row.key();
        if let Some(&id) = self.dedupe.get(&key) {
            return id;
        }
        let id = self.rows.len() as u32;
        self.rows.push(row);
        self.dedupe.insert(key, id);
        id
    }

    pub fn set_row_id(&mut self, step: usize, state: usize, action: usize, id: u32) {
        let slot = (step * self.num_states + state) * self.num_actions + action;
        self.index[slot] = id;
    }

    pub fn set_row(&mut self, step: usize, state: usize, action: usize, row: SparseRow) {
        let id = self.intern(row);
        self.set_row_id(step, state, action, id);
    }

    pub fn build(self) -> Result<TransitionKernel> {
        let mut problems = Vec::new();
        if let Some(slot) = self.index.iter().position(|&i| i == u32::MAX) {
            let a = slot % self.num_actions;
            let s = (slot / self.num_actions) % self.num_states;
            let h = slot / (self.num_actions * self.num_states);
            problems.push(format!("transition row (step {h}, state {s}, action {a}) was never set"));
        }
        for (id, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                problems.push(format!("row {id} has no mass"));
                continue;
            }
            if let Some((s, p)) = row.iter().find(|&(s, p)| s >= self.num_states || !(p >= 0.0) || !p.is_finite()) {
                problems.push(format!("row {id} has invalid entry ({s}, {p})"));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > PROB_TOL {
                problems.push(format!("row {id} sums to {sum}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(TransitionKernel {
            num_states: self.num_states,
            num_actions: self.num_actions,
            homogeneous: self.homogeneous,
            stored_steps: self.stored_steps,
            rows: self.rows,
            index: self.index,
        })
    }
}

/// Finite-horizon episodic MDP with deterministic rewards `R(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial: SparseRow,
    kernel: TransitionKernel,
    rewards: Vec<f64>,
    return_bound: f64,
}

pub(crate) fn validate_distribution(what: &str, probs: &[f64]) -> Result<()> {
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
        return Err(config(format!("{what}: entry {i} = {p} is not a probability")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(config(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    /// `rewards` is row-major `S x A`.
    pub fn new(
        horizon: usize,
        initial_dist: &[f64],
        kernel: TransitionKernel,
        rewards: Vec<f64>,
        return_bound: f64,
    ) -> Result<Self> {
        let num_states = kernel.num_states;
        let num_actions = kernel.num_actions;
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(config("S, A and H must be positive"));
        }
        let expected_steps = if kernel.homogeneous { 1 } else { horizon - 1 };
        if kernel.stored_steps != expected_steps {
            return Err(config(format!(
                "kernel stores {} steps, horizon {horizon} needs {expected_steps}",
                kernel.stored_steps
            )));
        }
        if initial_dist.len() != num_states {
            return Err(config(format!("rho has length {}, expected {num_states}", initial_dist.len())));
        }
        validate_distribution("rho", initial_dist)?;
        if rewards.len() != num_states * num_actions {
            return Err(config(format!("R has {} entries, expected {}", rewards.len(), num_states * num_actions)));
        }
        if let Some((i, r)) = rewards.iter().enumerate().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
            return Err(config(format!("reward entry {i} = {r} outside [0, 1]")));
        }
        if !(return_bound.is_finite() && return_bound >= 0.0) {
            return Err(config(format!("R_max = {return_bound} must be finite and non-negative")));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            initial: SparseRow::from_dense(initial_dist),
            kernel,
            rewards,
            return_bound,
        })
    }

    /// Convenience constructor from a dense, row-major kernel: `[s][a][s']`
    /// when homogeneous, `[h][s][a][s']` with `H - 1` steps otherwise.
    pub fn from_dense(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_dist: &[f64],
        homogeneous: bool,
        transitions: &[f64],
        rewards: Vec<f64>,
        return_bound: f64,
    ) -> Result<Self> {
        let mut builder = KernelBuilder::new(num_states, num_actions, horizon, homogeneous);
        let block = num_states * num_actions * num_states;
        if transitions.len() != builder.stored_steps() * block {
            return Err(config(format!(
                "P has {} entries, expected {}",
                transitions.len(),
                builder.stored_steps() * block
            )));
        }
        for h in 0..builder.stored_steps() {
            for s in 0..num_states {
                for a in 0..num_actions {
                    let start = h * block + (s * num_actions + a) * num_states;
                    builder.set_row(h, s, a, SparseRow::from_dense(&transitions[start..start + num_states]));
                }
            }
        }
        Self::new(horizon, initial_dist, builder.build()?, rewards, return_bound)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn return_bound(&self) -> f64 {
        self.return_bound
    }

    pub fn initial(&self) -> &SparseRow {
        &self.initial
    }

    pub fn initial_dist(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_states];
        for (s, p) in self.initial.iter() {
            d[s] = p;
        }
        d
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn is_homogeneous(&self) -> bool {
        self.kernel.homogeneous
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Next-state distribution after acting at `step` (`step < H - 1`).
    pub fn transition(&self, step: usize, state: usize, action: usize) -> &SparseRow {
        self.kernel.row(step, state, action)
    }

    pub fn transition_prob(&self, step: usize, state: usize, action: usize, next: usize) -> f64 {
        self.transition(step, state, action).prob(next)
    }

    /// Largest summed reward over trajectories with positive probability.
    pub fn max_trajectory_reward(&self) -> f64 {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let mut next = vec![0.0; s_n];
        for h in (0..self.horizon).rev() {
            let mut cur = vec![0.0; s_n];
            let row_best: Vec<f64> = if h + 1 < self.horizon {
                self.kernel.rows.iter().map(|r| r.iter().map(|(s, _)| next[s]).fold(f64::MIN, f64::max)).collect()
            } else {
                Vec::new()
            };
            for (s, slot) in cur.iter_mut().enumerate() {
                let mut best = f64::MIN;
                for a in 0..a_n {
                    let future = if h + 1 < self.horizon { row_best[self.kernel.row_id(h, s, a)] } else { 0.0 };
                    best = best.max(self.reward(s, a) + future);
                }
                *slot = best;
            }
            next = cur;
        }
        self.initial.iter().map(|(s, _)| next[s]).fold(f64::MIN, f64::max)
    }

    /// Checks the normalized-return invariant `sum_h r_h <= R_max` on every
    /// realizable trajectory.
    pub fn check_return_bound(&self) -> Result<()> {
        let best = self.max_trajectory_reward();
        if best > self.return_bound + FLOAT_TOL {
            return Err(config(format!("a trajectory earns {best} > R_max = {}", self.return_bound)));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        let (s, a) = policy.dims();
        if s != self.num_states || a != self.num_actions {
            return Err(config(format!(
                "policy is {s}x{a} but the MDP has S = {}, A = {}",
                self.num_states, self.num_actions
            )));
        }
        if let Some(steps) = policy.steps() {
            if steps < self.horizon {
                return Err(config(format!("step-indexed policy covers {steps} steps, horizon is {}", self.horizon)));
            }
        }
        Ok(())
    }
}

/// One episode: `states[h]`, `actions[h]`, `rewards[h]` for `h in 0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn sparse_row_merges_and_drops_zeros() {
        let row = SparseRow::new(vec![(2, 0.25), (0, 0.0), (2, 0.25), (1, 0.5)]);
        assert_eq!(row.iter().collect::<Vec<_>>(), vec![(1, 0.5), (2, 0.5)]);
        assert_eq!(row.prob(0), 0.0);
        assert_eq!(row.prob(2), 0.5);
    }

    #[test]
    fn sparse_row_sampling_frequencies() {
        let row = SparseRow::new(vec![(0, 0.2), (3, 0.8)]);
        let mut rng = rng_from_seed(11);
        let n = 20_000;
        let hits = (0..n).filter(|_| row.sample(&mut rng) == 3).count() as f64;
        let sd = (n as f64 * 0.8 * 0.2).sqrt();
        assert!((hits - 0.8 * n as f64).abs() < 4.0 * sd);
    }

    #[test]
    fn builder_dedupes_identical_rows() {
        let mut b = KernelBuilder::new(2, 2, 5, true);
        for s in 0..2 {
            for a in 0..2 {
                b.set_row(0, s, a, SparseRow::new(vec![(0, 0.5), (1, 0.5)]));
            }
        }
        let k = b.build().unwrap();
        assert_eq!(k.num_distinct_rows(), 1);
    }

    #[test]
    fn builder_rejects_missing_and_unnormalized_rows() {
        let mut b = KernelBuilder::new(2, 1, 2, false);
        b.set_row(0, 0, 0, SparseRow::new(vec![(0, 0.6)]));
        match b.build() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_rho_and_rewards() {
        let p = [1.0, 0.0, 0.0, 1.0];
        assert!(TabularMdp::from_dense(2, 1, 2, &[0.5, 0.4], true, &p, vec![0.0; 2], 2.0).is_err());
        assert!(TabularMdp::from_dense(2, 1, 2, &[0.5, 0.5], true, &p, vec![1.5, 0.0], 2.0).is_err());
        assert!(TabularMdp::from_dense(2, 1, 2, &[0.5, 0.5], true, &p[..3], vec![0.0; 2], 2.0).is_err());
        assert!(TabularMdp::from_dense(2, 1, 2, &[0.5, 0.5], true, &p, vec![0.0; 2], 2.0).is_ok());
    }

    #[test]
    fn max_trajectory_reward_respects_reachability() {
        // state 1 pays 1 but is unreachable from state 0 under either action
        let p = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let mdp = TabularMdp::from_dense(2, 2, 3, &[1.0, 0.0], true, &p, vec![0.0, 0.5, 1.0, 1.0], 3.0).unwrap();
        assert!((mdp.max_trajectory_reward() - 1.5).abs() < 1e-12);
        assert!(mdp.check_return_bound().is_ok());
        let tight = TabularMdp::from_dense(2, 2, 3, &[1.0, 0.0], true, &p, vec![0.0, 0.5, 1.0, 1.0], 1.0).unwrap();
        assert!(tight.check_return_bound().is_err());
    }
}

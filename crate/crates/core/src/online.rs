//! Online learners over a finite deterministic policy class, and the
//! memorizing learner used on classes too large to enumerate.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::mdp::{sample_index, ActionDist, EachStepMixture, FirstStepMixture, Policy, PolicyClass, StochPolicy};

/// Exponential weights with hard-zeroed infinite losses.
#[derive(Debug, Clone)]
pub struct ExpWeightsState {
    class: Arc<PolicyClass>,
    eta: f64,
    cumulative: Vec<f64>,
    weights: Vec<f64>,
}

impl ExpWeightsState {
    pub fn new(class: Arc<PolicyClass>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(input(format!("learning rate must be positive and finite, got {eta}")));
        }
        let b = class.size();
        Ok(Self { class, eta, cumulative: vec![0.0; b], weights: vec![1.0 / b as f64; b] })
    }

    pub fn class(&self) -> &Arc<PolicyClass> {
        &self.class
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn cumulative_losses(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.iter().all(|l| l.is_infinite())
    }

    /// Each-step mixture with the current weights.
    pub fn propose(&self) -> Result<EachStepMixture> {
        if self.is_empty() {
            return Err(Error::EmptyModel);
        }
        EachStepMixture::new(self.class.clone(), self.weights.clone())
    }

    /// First-step mixture over the class with the current weights.
    pub fn propose_first_step(&self) -> Result<FirstStepMixture> {
        if self.is_empty() {
            return Err(Error::EmptyModel);
        }
        let (weights, members) = self
            .weights
            .iter()
            .zip(self.class.members())
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, m)| (w, Policy::Det(m.clone())))
            .unzip();
        FirstStepMixture::new(weights, members)
    }

    /// Adds one loss per member and renormalizes. Returns whether any weight changed.
    pub fn update(&mut self, losses: &[f64]) -> Result<bool> {
        if losses.len() != self.cumulative.len() {
            return Err(input(format!("{} losses for {} members", losses.len(), self.cumulative.len())));
        }
        if let Some(bad) = losses.iter().find(|l| l.is_nan() || **l < 0.0) {
            return Err(input(format!("losses must be non-negative, got {bad}")));
        }
        for (c, l) in self.cumulative.iter_mut().zip(losses) {
            *c += l;
        }
        if self.is_empty() {
            return Err(Error::EmptyModel);
        }
        let fresh = normalized_weights(&self.cumulative, self.eta);
        let changed = fresh != self.weights;
        self.weights = fresh;
        Ok(changed)
    }
}

/// `exp(-eta * L) / sum`, shifted by the smallest finite loss; infinite losses get weight 0.
fn normalized_weights(cumulative: &[f64], eta: f64) -> Vec<f64> {
    let min = cumulative.iter().copied().filter(|l| l.is_finite()).fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = cumulative
        .iter()
        .map(|&l| if l.is_finite() { (-eta * (l - min)).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `log(1 / sum_i u_i p_i)`: the log loss of a mixture whose members assign
/// probability `p_i` to the observed outcome.
pub fn mixture_log_loss(weights: &[f64], likelihoods: &[f64]) -> f64 {
    let p: f64 = weights.iter().zip(likelihoods).map(|(u, p)| u * p).sum();
    -p.ln()
}

/// Members consistent with every recorded `(step, state, action)` constraint.
#[derive(Debug, Clone)]
pub struct VersionSpace {
    class: Arc<PolicyClass>,
    alive: Vec<bool>,
}

impl VersionSpace {
    pub fn new(class: Arc<PolicyClass>) -> Self {
        let alive = vec![true; class.size()];
        Self { class, alive }
    }

    pub fn class(&self) -> &Arc<PolicyClass> {
        &self.class
    }

    pub fn alive(&self) -> &[bool] {
        &self.alive
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// Kills members disagreeing with the expert at `(step, state)`.
    /// Returns whether any member died.
    pub fn update(&mut self, step: usize, state: usize, expert_action: usize) -> Result<bool> {
        let mut changed = false;
        for (alive, member) in self.alive.iter_mut().zip(self.class.members()) {
            if *alive && member.action(step, state) != expert_action {
                *alive = false;
                changed = true;
            }
        }
        if self.alive_count() == 0 {
            return Err(Error::Realizability(format!(
                "no member of the class takes action {expert_action} in state {state} at step {step} together with earlier answers"
            )));
        }
        Ok(changed)
    }

    /// Uniform weights over the alive members.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.alive_count() as f64;
        self.alive.iter().map(|&a| if a { 1.0 / n } else { 0.0 }).collect()
    }

    pub fn propose(&self) -> Result<EachStepMixture> {
        EachStepMixture::new(self.class.clone(), self.weights())
    }
}

/// Delta mass on annotated states, uniform over actions elsewhere.
/// `annotated` is indexed by state, or by `step * S + state` for step-indexed tables.
pub fn memorizing_policy(annotated: &[Option<usize>], num_states: usize, num_actions: usize) -> Result<StochPolicy> {
    let table = annotated
        .iter()
        .map(|a| match a {
            Some(a) => ActionDist::Point(*a),
            None => ActionDist::Uniform,
        })
        .collect();
    if annotated.len() == num_states {
        StochPolicy::stationary(num_actions, table)
    } else if num_states > 0 && annotated.len().is_multiple_of(num_states) {
        StochPolicy::step_indexed(num_states, num_actions, annotated.len() / num_states, table)
    } else {
        Err(input(format!("annotation table of length {} does not fit {num_states} states", annotated.len())))
    }
}

/// Which online learner an algorithm drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    ExpWeights,
    VersionSpace,
    Memorizing,
}

/// Remembers expert answers; acts uniformly on unannotated states.
#[derive(Debug, Clone)]
pub struct Memorizer {
    num_states: usize,
    num_actions: usize,
    step_indexed: bool,
    table: Vec<Option<usize>>,
    annotated: usize,
}

impl Memorizer {
    pub fn new(num_states: usize, num_actions: usize, horizon: Option<usize>) -> Self {
        let len = num_states * horizon.unwrap_or(1);
        Self { num_states, num_actions, step_indexed: horizon.is_some(), table: vec![None; len], annotated: 0 }
    }

    fn slot(&self, step: usize, state: usize) -> usize {
        if self.step_indexed {
            step * self.num_states + state
        } else {
            state
        }
    }

    pub fn get(&self, step: usize, state: usize) -> Option<usize> {
        self.table[self.slot(step, state)]
    }

    /// Returns whether the entry was new.
    pub fn insert(&mut self, step: usize, state: usize, action: usize) -> bool {
        let slot = self.slot(step, state);
        let fresh = self.table[slot].is_none();
        if fresh {
            self.annotated += 1;
        }
        self.table[slot] = Some(action);
        fresh
    }

    pub fn annotated_count(&self) -> usize {
        self.annotated
    }

    pub fn table(&self) -> &[Option<usize>] {
        &self.table
    }

    pub fn policy(&self) -> StochPolicy {
        memorizing_policy(&self.table, self.num_states, self.num_actions).expect("memorizer table has a valid shape")
    }
}

/// The online learning oracle driven by the training loops.
#[derive(Debug, Clone)]
pub enum Learner {
    ExpWeights(ExpWeightsState),
    VersionSpace(VersionSpace),
    Memorizing(Memorizer),
}

impl Learner {
    /// `class` is required for the class-based learners; `horizon` makes the
    /// memorizing learner step-indexed.
    pub fn new(
        kind: LearnerKind,
        class: Option<Arc<PolicyClass>>,
        eta: f64,
        dims: (usize, usize),
        horizon: Option<usize>,
    ) -> Result<Self> {
        let need = || class.clone().ok_or_else(|| crate::error::config("this learner needs a finite policy class"));
        Ok(match kind {
            LearnerKind::ExpWeights => Learner::ExpWeights(ExpWeightsState::new(need()?, eta)?),
            LearnerKind::VersionSpace => Learner::VersionSpace(VersionSpace::new(need()?)),
            LearnerKind::Memorizing => Learner::Memorizing(Memorizer::new(dims.0, dims.1, horizon)),
        })
    }

    fn class_weights(&self) -> Option<(&Arc<PolicyClass>, std::borrow::Cow<'_, [f64]>)> {
        match self {
            Learner::ExpWeights(s) => Some((s.class(), s.weights().into())),
            Learner::VersionSpace(v) => Some((v.class(), v.weights().into())),
            Learner::Memorizing(_) => None,
        }
    }

    /// Action of the current each-step proposal.
    pub fn sample_action<R: Rng + ?Sized>(&self, step: usize, state: usize, rng: &mut R) -> usize {
        match self {
            Learner::ExpWeights(s) => s.class().get(sample_index(s.weights(), rng)).action(step, state),
            Learner::VersionSpace(v) => {
                let alive: Vec<usize> = (0..v.alive.len()).filter(|&i| v.alive[i]).collect();
                v.class.get(alive[rng.gen_range(0..alive.len())]).action(step, state)
            }
            Learner::Memorizing(m) => m.get(step, state).unwrap_or_else(|| rng.gen_range(0..m.num_actions)),
        }
    }

    /// Member followed for a whole first-step episode; `None` for the memorizing learner.
    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        self.class_weights().map(|(_, w)| sample_index(&w, rng))
    }

    /// Feeds the state-wise log loss of every member. Returns whether the proposal changed.
    pub fn observe_state(&mut self, step: usize, state: usize, action: usize) -> Result<bool> {
        match self {
            Learner::ExpWeights(s) => {
                let losses: Vec<f64> = s
                    .class()
                    .members()
                    .iter()
                    .map(|m| if m.action(step, state) == action { 0.0 } else { f64::INFINITY })
                    .collect();
                s.update(&losses)
            }
            Learner::VersionSpace(v) => v.update(step, state, action),
            Learner::Memorizing(m) => Ok(m.insert(step, state, action)),
        }
    }

    /// Feeds the trajectory-wise log loss `log 1/prod_h 1[pi(s_h) = a_h]`.
    pub fn observe_trajectory(&mut self, states: &[usize], actions: &[usize]) -> Result<bool> {
        let agrees = |m: &crate::mdp::DetPolicy| states.iter().zip(actions).enumerate().all(|(h, (&s, &a))| m.action(h, s) == a);
        match self {
            Learner::ExpWeights(s) => {
                let losses: Vec<f64> =
                    s.class().members().iter().map(|m| if agrees(m) { 0.0 } else { f64::INFINITY }).collect();
                s.update(&losses)
            }
            Learner::VersionSpace(v) => {
                let mut changed = false;
                for (h, (&s, &a)) in states.iter().zip(actions).enumerate() {
                    changed |= v.update(h, s, a)?;
                }
                Ok(changed)
            }
            Learner::Memorizing(m) => {
                let mut changed = false;
                for (h, (&s, &a)) in states.iter().zip(actions).enumerate() {
                    changed |= m.insert(h, s, a);
                }
                Ok(changed)
            }
        }
    }

    /// Current each-step proposal (memorizing policy for the memorizing learner).
    pub fn markov_policy(&self) -> Result<Policy> {
        Ok(match self {
            Learner::ExpWeights(s) => Policy::EachStep(s.propose()?),
            Learner::VersionSpace(v) => Policy::EachStep(v.propose()?),
            Learner::Memorizing(m) => Policy::Stoch(m.policy()),
        })
    }

    /// Current first-step proposal; the memorizing learner is already Markovian.
    pub fn first_step_policy(&self) -> Result<Policy> {
        match self.class_weights() {
            Some((class, w)) => {
                let (weights, members) = w
                    .iter()
                    .zip(class.members())
                    .filter(|(&u, _)| u > 0.0)
                    .map(|(&u, m)| (u, Policy::Det(m.clone())))
                    .unzip();
                Ok(Policy::FirstStep(FirstStepMixture::new(weights, members)?))
            }
            None => self.markov_policy(),
        }
    }

    pub fn memorizer(&self) -> Option<&Memorizer> {
        match self {
            Learner::Memorizing(m) => Some(m),
            _ => None,
        }
    }

    /// Weights over the class, when there is one.
    pub fn weights(&self) -> Option<Vec<f64>> {
        self.class_weights().map(|(_, w)| w.into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DetPolicy;

    fn class(tables: &[&[usize]], a: usize) -> Arc<PolicyClass> {
        Arc::new(PolicyClass::new(tables.iter().map(|t| DetPolicy::stationary(a, t.to_vec()).unwrap()).collect()).unwrap())
    }

    #[test]
    fn weights_start_uniform_and_follow_losses() {
        let mut s = ExpWeightsState::new(class(&[&[0], &[1]], 2), 1.0).unwrap();
        assert_eq!(s.weights(), &[0.5, 0.5]);
        s.update(&[0.0, 2f64.ln()]).unwrap();
        assert!((s.weights()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.weights()[1] - 1.0 / 3.0).abs() < 1e-12);
        let before = s.weights().to_vec();
        s.update(&[5.0, 5.0]).unwrap();
        assert!(before.iter().zip(s.weights()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn infinite_loss_zeroes_permanently() {
        let mut s = ExpWeightsState::new(class(&[&[0], &[1], &[2]], 3), 1.0).unwrap();
        s.update(&[0.0, f64::INFINITY, 0.0]).unwrap();
        s.update(&[100.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.weights()[1], 0.0);
        assert!(s.weights()[2] > 0.99);
        assert!(matches!(s.update(&[f64::NAN, 0.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn all_infinite_is_empty_model() {
        let mut s = ExpWeightsState::new(class(&[&[0], &[1]], 2), 1.0).unwrap();
        assert!(matches!(s.update(&[f64::INFINITY, f64::INFINITY]), Err(Error::EmptyModel)));
        assert!(matches!(s.propose(), Err(Error::EmptyModel)));
    }

    #[test]
    fn version_space_filters_and_keeps_expert() {
        let c = class(&[&[0, 0], &[0, 1], &[1, 1]], 2);
        let mut v = VersionSpace::new(c.clone());
        assert!(!v.update(0, 0, 0).unwrap() || v.alive() == [true, true, false]);
        assert_eq!(v.alive(), &[true, true, false]);
        assert!(!v.update(0, 0, 0).unwrap());
        v.update(0, 1, 1).unwrap();
        assert_eq!(v.alive(), &[false, true, false]);
        assert!(matches!(v.update(0, 1, 0), Err(Error::Realizability(_))));

        let mut w = VersionSpace::new(c);
        w.update(0, 1, 1).unwrap();
        w.update(0, 0, 0).unwrap();
        assert_eq!(w.alive(), &[false, true, false]);
    }

    #[test]
    fn memorizing_policy_cases() {
        let p = Policy::Stoch(memorizing_policy(&[None, None], 2, 4).unwrap());
        assert_eq!(p.action_probs(0, 1), vec![0.25; 4]);
        let p = Policy::Stoch(memorizing_policy(&[Some(3), Some(1)], 2, 4).unwrap());
        assert_eq!(p.action_probs(0, 0), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.prob(2, 1, 1), 1.0);
        assert!(memorizing_policy(&[None; 3], 2, 4).is_err());
    }

    #[test]
    fn mixture_loss_of_indicators() {
        assert!((mixture_log_loss(&[0.25, 0.75], &[1.0, 0.0]) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(mixture_log_loss(&[1.0, 0.0], &[0.0, 1.0]), f64::INFINITY);
    }
}

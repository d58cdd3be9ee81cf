use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;

use super::{validate_distribution, PROB_TOL};
use crate::error::{config, Error, Result};

/// Deterministic tabular policy. Stationary tables are indexed by state and
/// broadcast across steps; step-indexed tables are `[h][s]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetPolicy {
    num_states: usize,
    num_actions: usize,
    steps: Option<usize>,
    actions: Vec<u32>,
}

impl DetPolicy {
    pub fn stationary(num_actions: usize, actions: Vec<usize>) -> Result<Self> {
        let num_states = actions.len();
        Self::build(num_states, num_actions, None, actions)
    }

    /// `actions` is row-major `[h][s]` with `steps` rows.
    pub fn step_indexed(num_states: usize, num_actions: usize, steps: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != steps * num_states {
            return Err(config(format!("action table has {} entries, expected {}", actions.len(), steps * num_states)));
        }
        Self::build(num_states, num_actions, Some(steps), actions)
    }

    fn build(num_states: usize, num_actions: usize, steps: Option<usize>, actions: Vec<usize>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(config("policy dimensions must be positive"));
        }
        if let Some(a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(config(format!("action {a} out of range (A = {num_actions})")));
        }
        Ok(Self {
            num_states,
            num_actions,
            steps,
            actions: actions.into_iter().map(|a| a as u32).collect(),
        })
    }

    /// Constant action everywhere.
    pub fn constant(num_states: usize, num_actions: usize, action: usize) -> Result<Self> {
        Self::build(num_states, num_actions, None, vec![action; num_states])
    }

    pub fn action(&self, step: usize, state: usize) -> usize {
        match self.steps {
            None => self.actions[state] as usize,
            Some(_) => self.actions[step * self.num_states + state] as usize,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn is_stationary(&self) -> bool {
        self.steps.is_none()
    }

    pub fn steps(&self) -> Option<usize> {
        self.steps
    }

    pub fn table(&self) -> &[u32] {
        &self.actions
    }

    /// The step-`h` projection as a state-indexed table.
    pub fn projection(&self, step: usize) -> Vec<u32> {
        (0..self.num_states).map(|s| self.action(step, s) as u32).collect()
    }

    /// Same behaviour as a step-indexed table over `steps` steps.
    pub fn to_step_indexed(&self, steps: usize) -> DetPolicy {
        let actions = (0..steps).flat_map(|h| self.projection(h)).collect();
        DetPolicy { num_states: self.num_states, num_actions: self.num_actions, steps: Some(steps), actions }
    }
}

/// Per-state action distribution in a stochastic tabular policy.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Point(usize),
    Uniform,
    Probs(Vec<f64>),
}

/// Stochastic tabular policy, stationary or step-indexed like [`DetPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct StochPolicy {
    num_states: usize,
    num_actions: usize,
    steps: Option<usize>,
    table: Vec<ActionDist>,
}

impl StochPolicy {
    pub fn stationary(num_actions: usize, table: Vec<ActionDist>) -> Result<Self> {
        let num_states = table.len();
        Self::build(num_states, num_actions, None, table)
    }

    pub fn step_indexed(num_states: usize, num_actions: usize, steps: usize, table: Vec<ActionDist>) -> Result<Self> {
        if table.len() != steps * num_states {
            return Err(config(format!("policy table has {} rows, expected {}", table.len(), steps * num_states)));
        }
        Self::build(num_states, num_actions, Some(steps), table)
    }

    /// Dense stationary policy from `S` probability vectors.
    pub fn from_probs(num_actions: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::stationary(num_actions, rows.into_iter().map(ActionDist::Probs).collect())
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Result<Self> {
        Self::build(num_states, num_actions, None, vec![ActionDist::Uniform; num_states])
    }

    fn build(num_states: usize, num_actions: usize, steps: Option<usize>, table: Vec<ActionDist>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(config("policy dimensions must be positive"));
        }
        for (i, d) in table.iter().enumerate() {
            match d {
                ActionDist::Point(a) if *a >= num_actions => {
                    return Err(config(format!("row {i}: action {a} out of range (A = {num_actions})")))
                }
                ActionDist::Probs(p) => {
                    if p.len() != num_actions {
                        return Err(config(format!("row {i} has {} entries, expected {num_actions}", p.len())));
                    }
                    validate_distribution(&format!("policy row {i}"), p)?;
                }
                _ => {}
            }
        }
        Ok(Self { num_states, num_actions, steps, table })
    }

    pub fn dist(&self, step: usize, state: usize) -> &ActionDist {
        match self.steps {
            None => &self.table[state],
            Some(_) => &self.table[step * self.num_states + state],
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.steps.is_none()
    }

    pub fn steps(&self) -> Option<usize> {
        self.steps
    }

    pub fn table(&self) -> &[ActionDist] {
        &self.table
    }
}

/// Finite ordered class of deterministic policies; weight vectors align with
/// member indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyClass {
    members: Vec<DetPolicy>,
}

impl PolicyClass {
    pub fn new(members: Vec<DetPolicy>) -> Result<Self> {
        let first = members.first().ok_or_else(|| config("policy class must be non-empty"))?;
        let dims = (first.num_states, first.num_actions, first.steps);
        let mut seen = HashSet::with_capacity(members.len());
        for (i, m) in members.iter().enumerate() {
            if (m.num_states, m.num_actions, m.steps) != dims {
                return Err(config(format!("member {i} has mismatched dimensions")));
            }
            if !seen.insert(&m.actions) {
                return Err(config(format!("member {i} duplicates an earlier member")));
            }
        }
        Ok(Self { members })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[DetPolicy] {
        &self.members
    }

    pub fn get(&self, index: usize) -> &DetPolicy {
        &self.members[index]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.members[0].num_states, self.members[0].num_actions)
    }

    pub fn position(&self, policy: &DetPolicy) -> Option<usize> {
        self.members.iter().position(|m| m == policy)
    }

    /// Indices of members agreeing with every `(step, state, action)` pair.
    pub fn consistent_indices(&self, pairs: &[(usize, usize, usize)]) -> Vec<usize> {
        (0..self.members.len())
            .filter(|&i| pairs.iter().all(|&(h, s, a)| self.members[i].action(h, s) == a))
            .collect()
    }

    /// The sub-class agreeing with every pair (`B_bc`).
    pub fn filter_consistent(&self, pairs: &[(usize, usize, usize)]) -> Result<PolicyClass> {
        let keep = self.consistent_indices(pairs);
        if keep.is_empty() {
            return Err(Error::Realizability("no member of the class agrees with the offline data".into()));
        }
        Ok(PolicyClass { members: keep.into_iter().map(|i| self.members[i].clone()).collect() })
    }

    /// Each-step completion over `horizon` steps: every combination of
    /// per-step projections, as step-indexed policies. Fails when the
    /// completion would exceed `limit` members.
    pub fn each_step_completion(&self, horizon: usize, limit: usize) -> Result<PolicyClass> {
        let projections: Vec<Vec<Vec<u32>>> = (0..horizon)
            .map(|h| {
                let mut seen = HashSet::new();
                self.members.iter().map(|m| m.projection(h)).filter(|p| seen.insert(p.clone())).collect()
            })
            .collect();
        let total: f64 = projections.iter().map(|p| p.len() as f64).product();
        if total > limit as f64 {
            return Err(Error::Size { requested: total, limit: limit as f64 });
        }
        let (num_states, num_actions) = self.dims();
        let mut members = Vec::with_capacity(total as usize);
        let mut choice = vec![0usize; horizon];
        loop {
            let actions: Vec<u32> = choice.iter().enumerate().flat_map(|(h, &c)| projections[h][c].iter().copied()).collect();
            members.push(DetPolicy { num_states, num_actions, steps: Some(horizon), actions });
            let mut h = horizon;
            loop {
                if h == 0 {
                    return Ok(PolicyClass { members });
                }
                h -= 1;
                choice[h] += 1;
                if choice[h] < projections[h].len() {
                    break;
                }
                choice[h] = 0;
            }
        }
    }
}

/// `sum_pi u(pi) pi(a|s)`, redrawing the member at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct EachStepMixture {
    weights: Vec<f64>,
    class: Arc<PolicyClass>,
}

impl EachStepMixture {
    pub fn new(class: Arc<PolicyClass>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != class.size() {
            return Err(config(format!("{} weights for a class of size {}", weights.len(), class.size())));
        }
        validate_distribution("mixture weights", &weights)?;
        Ok(Self { weights, class })
    }

    pub fn uniform(class: Arc<PolicyClass>) -> Self {
        let b = class.size();
        Self { weights: vec![1.0 / b as f64; b], class }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn class(&self) -> &Arc<PolicyClass> {
        &self.class
    }

    /// Equivalent first-step mixture over the each-step completion: one
    /// step-indexed member per tuple of class indices, weighted by the product
    /// of the tuple's weights. Zero-weight members are skipped.
    pub fn first_step_equivalent(&self, horizon: usize, limit: usize) -> Result<FirstStepMixture> {
        let live: Vec<usize> = (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect();
        let total = (live.len() as f64).powi(horizon as i32);
        if total > limit as f64 {
            return Err(Error::Size { requested: total, limit: limit as f64 });
        }
        let (num_states, num_actions) = self.class.dims();
        let mut members = Vec::new();
        let mut weights = Vec::new();
        let mut choice = vec![0usize; horizon];
        'outer: loop {
            let mut w = 1.0;
            let mut actions = Vec::with_capacity(horizon * num_states);
            for (h, &c) in choice.iter().enumerate() {
                let m = self.class.get(live[c]);
                w *= self.weights[live[c]];
                actions.extend(m.projection(h));
            }
            members.push(Policy::Det(DetPolicy { num_states, num_actions, steps: Some(horizon), actions }));
            weights.push(w);
            let mut h = horizon;
            loop {
                if h == 0 {
                    break 'outer;
                }
                h -= 1;
                choice[h] += 1;
                if choice[h] < live.len() {
                    break;
                }
                choice[h] = 0;
            }
        }
        FirstStepMixture::new_unchecked_sum(weights, members)
    }
}

/// Draw one member at the start of the episode and follow it throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStepMixture {
    weights: Vec<f64>,
    members: Vec<Policy>,
}

impl FirstStepMixture {
    pub fn new(weights: Vec<f64>, members: Vec<Policy>) -> Result<Self> {
        validate_distribution("first-step mixture weights", &weights)?;
        Self::new_unchecked_sum(weights, members)
    }

    // Product weights over many tuples accumulate more rounding than PROB_TOL.
    fn new_unchecked_sum(weights: Vec<f64>, members: Vec<Policy>) -> Result<Self> {
        if weights.len() != members.len() || members.is_empty() {
            return Err(config("first-step mixture needs one weight per member and at least one member"));
        }
        let dims = members[0].dims();
        if members.iter().any(|m| m.dims() != dims) {
            return Err(config("first-step mixture members have mismatched dimensions"));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(config(format!("first-step mixture weights sum to {sum}")));
        }
        Ok(Self { weights, members })
    }

    pub fn uniform(members: Vec<Policy>) -> Result<Self> {
        let n = members.len();
        Self::new(vec![1.0 / n as f64; n], members)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn members(&self) -> &[Policy] {
        &self.members
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Det(DetPolicy),
    Stoch(StochPolicy),
    EachStep(EachStepMixture),
    FirstStep(FirstStepMixture),
}

impl From<DetPolicy> for Policy {
    fn from(p: DetPolicy) -> Self {
        Policy::Det(p)
    }
}

impl From<StochPolicy> for Policy {
    fn from(p: StochPolicy) -> Self {
        Policy::Stoch(p)
    }
}

impl Policy {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Policy::Det(p) => (p.num_states, p.num_actions),
            Policy::Stoch(p) => (p.num_states, p.num_actions),
            Policy::EachStep(m) => m.class.dims(),
            Policy::FirstStep(m) => m.members[0].dims(),
        }
    }

    /// Fewest steps covered by any step-indexed component; `None` when every
    /// component is stationary.
    pub fn steps(&self) -> Option<usize> {
        match self {
            Policy::Det(p) => p.steps,
            Policy::Stoch(p) => p.steps,
            Policy::EachStep(m) => m.class.members[0].steps,
            Policy::FirstStep(m) => m.members.iter().filter_map(Policy::steps).min(),
        }
    }

    pub fn is_markovian(&self) -> bool {
        !matches!(self, Policy::FirstStep(_))
    }

    pub fn is_stationary(&self) -> bool {
        self.steps().is_none()
    }

    /// Calls `f(a, pi(a|s))` for every action with positive probability.
    /// Panics on first-step mixtures, which have no per-state law.
    pub fn for_each_action<F: FnMut(usize, f64)>(&self, step: usize, state: usize, mut f: F) {
        match self {
            Policy::Det(p) => f(p.action(step, state), 1.0),
            Policy::Stoch(p) => match p.dist(step, state) {
                ActionDist::Point(a) => f(*a, 1.0),
                ActionDist::Uniform => {
                    let w = 1.0 / p.num_actions as f64;
                    (0..p.num_actions).for_each(|a| f(a, w));
                }
                ActionDist::Probs(probs) => probs.iter().enumerate().filter(|(_, &q)| q > 0.0).for_each(|(a, &q)| f(a, q)),
            },
            Policy::EachStep(m) => {
                let mut probs = vec![0.0; m.class.dims().1];
                for (member, &w) in m.class.members.iter().zip(&m.weights) {
                    probs[member.action(step, state)] += w;
                }
                probs.iter().enumerate().filter(|(_, &q)| q > 0.0).for_each(|(a, &q)| f(a, q));
            }
            Policy::FirstStep(_) => panic!("first-step mixtures have no per-state action law"),
        }
    }

    /// Dense `pi(.|s)` for Markovian policies.
    pub fn action_probs(&self, step: usize, state: usize) -> Vec<f64> {
        let mut probs = vec![0.0; self.dims().1];
        self.for_each_action(step, state, |a, p| probs[a] += p);
        probs
    }

    pub fn prob(&self, step: usize, state: usize, action: usize) -> f64 {
        match self {
            Policy::Det(p) => f64::from(u8::from(p.action(step, state) == action)),
            Policy::Stoch(p) => match p.dist(step, state) {
                ActionDist::Point(a) => f64::from(u8::from(*a == action)),
                ActionDist::Uniform => 1.0 / p.num_actions as f64,
                ActionDist::Probs(probs) => probs[action],
            },
            Policy::EachStep(m) => m
                .class
                .members
                .iter()
                .zip(&m.weights)
                .filter(|(member, _)| member.action(step, state) == action)
                .map(|(_, w)| w)
                .sum(),
            Policy::FirstStep(_) => panic!("first-step mixtures have no per-state action law"),
        }
    }

    /// Causally-conditioned probability `pi(a_{1:H} || s_{1:H})`; for
    /// first-step mixtures the weighted sum over members.
    pub fn sequence_prob(&self, states: &[usize], actions: &[usize]) -> f64 {
        match self {
            Policy::FirstStep(m) => {
                m.weights.iter().zip(&m.members).map(|(w, p)| w * p.sequence_prob(states, actions)).sum()
            }
            _ => states.iter().zip(actions).enumerate().map(|(h, (&s, &a))| self.prob(h, s, a)).product(),
        }
    }

    /// Draws an action from a Markovian policy. Each-step mixtures draw a
    /// fresh member index first.
    pub fn sample_action<R: Rng + ?Sized>(&self, step: usize, state: usize, rng: &mut R) -> usize {
        match self {
            Policy::Det(p) => p.action(step, state),
            Policy::Stoch(p) => match p.dist(step, state) {
                ActionDist::Point(a) => *a,
                ActionDist::Uniform => rng.gen_range(0..p.num_actions),
                ActionDist::Probs(probs) => sample_index(probs, rng),
            },
            Policy::EachStep(m) => {
                let i = sample_index(&m.weights, rng);
                m.class.members[i].action(step, state)
            }
            Policy::FirstStep(_) => panic!("resolve a first-step mixture with `resolve_episode` before sampling"),
        }
    }

    /// The Markovian policy followed for one episode: first-step mixtures
    /// draw a member (recursively), everything else is returned as is.
    pub fn resolve_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> &Policy {
        match self {
            Policy::FirstStep(m) => m.members[sample_index(&m.weights, rng)].resolve_episode(rng),
            other => other,
        }
    }

    /// True when every action distribution is a point mass.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Policy::Det(_) => true,
            Policy::Stoch(p) => p.table.iter().all(|d| match d {
                ActionDist::Point(_) => true,
                ActionDist::Uniform => p.num_actions == 1,
                ActionDist::Probs(q) => q.iter().any(|&x| (x - 1.0).abs() <= PROB_TOL),
            }),
            Policy::EachStep(m) => m.weights.iter().filter(|&&w| w > 0.0).count() == 1,
            Policy::FirstStep(m) => m.members.len() == 1 && m.members[0].is_deterministic(),
        }
    }
}

/// Inverse-CDF draw from unnormalized-safe weights summing to ~1.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(actions: &[usize], a: usize) -> DetPolicy {
        DetPolicy::stationary(a, actions.to_vec()).unwrap()
    }

    #[test]
    fn det_policy_rejects_out_of_range_actions() {
        assert!(DetPolicy::stationary(2, vec![0, 2]).is_err());
        assert!(DetPolicy::step_indexed(2, 2, 2, vec![0, 1, 1]).is_err());
    }

    #[test]
    fn class_rejects_duplicates() {
        assert!(PolicyClass::new(vec![det(&[0, 1], 2), det(&[0, 1], 2)]).is_err());
        assert!(PolicyClass::new(vec![det(&[0, 1], 2), det(&[1, 1], 2)]).is_ok());
    }

    #[test]
    fn each_step_mixture_law_matches_definition() {
        let class = Arc::new(PolicyClass::new(vec![det(&[0, 1], 3), det(&[2, 1], 3), det(&[0, 0], 3)]).unwrap());
        let p = Policy::EachStep(EachStepMixture::new(class, vec![0.5, 0.3, 0.2]).unwrap());
        assert_eq!(p.action_probs(0, 0), vec![0.7, 0.0, 0.3]);
        assert_eq!(p.action_probs(4, 1), vec![0.2, 0.8, 0.0]);
        assert!((p.prob(0, 0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn stochastic_rows_must_be_distributions() {
        assert!(StochPolicy::from_probs(2, vec![vec![0.5, 0.4]]).is_err());
        assert!(StochPolicy::from_probs(2, vec![vec![0.5, 0.5, 0.0]]).is_err());
        assert!(StochPolicy::from_probs(2, vec![vec![0.25, 0.75]]).is_ok());
    }

    #[test]
    fn completion_size_and_guard() {
        let class = PolicyClass::new(vec![det(&[0, 1], 2), det(&[1, 1], 2), det(&[1, 0], 2)]).unwrap();
        let completed = class.each_step_completion(3, 1000).unwrap();
        assert_eq!(completed.size(), 27);
        assert!(class.each_step_completion(3, 10).is_err());
    }

    #[test]
    fn first_step_equivalent_weights_sum_to_one() {
        let class = Arc::new(PolicyClass::new(vec![det(&[0], 2), det(&[1], 2)]).unwrap());
        let m = EachStepMixture::new(class, vec![0.25, 0.75]).unwrap();
        let f = m.first_step_equivalent(3, 100).unwrap();
        assert_eq!(f.members().len(), 8);
        assert!((f.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sequence_prob_of_mixture() {
        let a = Policy::Det(det(&[0, 0], 2));
        let b = Policy::Det(det(&[1, 0], 2));
        let mix = Policy::FirstStep(FirstStepMixture::uniform(vec![a, b]).unwrap());
        assert!((mix.sequence_prob(&[0, 1], &[0, 0]) - 0.5).abs() < 1e-15);
        assert!((mix.sequence_prob(&[0, 0], &[0, 1]) - 0.0).abs() < 1e-15);
    }
}

//! Exact policy distances by brute-force trajectory enumeration.

use std::collections::HashMap;

use crate::error::{input, Error, Result};
use crate::mdp::{visitation_distribution, DetPolicy, Policy, TabularMdp};

/// Largest `(S * A)^H` accepted by the enumerators.
pub const ENUMERATION_LIMIT: f64 = 1e6;

pub fn hellinger_sq(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(input(format!("distributions of lengths {} and {}", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(input("distributions must have finite non-negative entries"));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum())
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// `D_H^2(p, delta_a) = 2 - 2 sqrt(p(a))` for a probability vector `p`.
pub fn hellinger_sq_to_point(p_of_a: f64) -> f64 {
    2.0 - 2.0 * p_of_a.max(0.0).sqrt()
}

fn check_size(mdp: &TabularMdp) -> Result<()> {
    let requested = ((mdp.num_states() * mdp.num_actions()) as f64).powi(mdp.horizon() as i32);
    if requested > ENUMERATION_LIMIT {
        return Err(Error::Size { requested, limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

/// One weighted path `(s_{1:H}, a_{1:H})`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub prob: f64,
}

/// The full law of `(s_{1:H}, a_{1:H})` under a policy.
#[derive(Debug, Clone)]
pub struct TrajectoryLaw {
    paths: Vec<WeightedPath>,
}

impl TrajectoryLaw {
    /// Accepts Markovian policies and first-step mixtures of them.
    pub fn enumerate(mdp: &TabularMdp, policy: &Policy) -> Result<Self> {
        check_size(mdp)?;
        mdp.check_policy(policy)?;
        let mut acc: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
        accumulate(mdp, policy, 1.0, &mut acc);
        let mut paths: Vec<WeightedPath> =
            acc.into_iter().map(|((states, actions), prob)| WeightedPath { states, actions, prob }).collect();
        paths.sort_by(|a, b| (&a.states, &a.actions).cmp(&(&b.states, &b.actions)));
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[WeightedPath] {
        &self.paths
    }

    pub fn total(&self) -> f64 {
        self.paths.iter().map(|p| p.prob).sum()
    }

    pub fn prob(&self, states: &[usize], actions: &[usize]) -> f64 {
        self.paths
            .binary_search_by(|p| (p.states.as_slice(), p.actions.as_slice()).cmp(&(states, actions)))
            .map_or(0.0, |i| self.paths[i].prob)
    }

    /// Marginal law of the state sequence.
    pub fn state_sequences(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
        for p in &self.paths {
            match out.last_mut() {
                Some((s, w)) if *s == p.states => *w += p.prob,
                _ => out.push((p.states.clone(), p.prob)),
            }
        }
        out
    }

    pub fn expectation<F: Fn(&[usize], &[usize]) -> f64>(&self, f: F) -> f64 {
        self.paths.iter().map(|p| p.prob * f(&p.states, &p.actions)).sum()
    }
}

fn accumulate(mdp: &TabularMdp, policy: &Policy, weight: f64, acc: &mut HashMap<(Vec<usize>, Vec<usize>), f64>) {
    if let Policy::FirstStep(m) = policy {
        for (w, member) in m.weights().iter().zip(m.members()) {
            if *w > 0.0 {
                accumulate(mdp, member, weight * w, acc);
            }
        }
        return;
    }
    let h_n = mdp.horizon();
    let mut states = Vec::with_capacity(h_n);
    let mut actions = Vec::with_capacity(h_n);
    for (s, p) in mdp.initial().iter() {
        states.push(s);
        walk(mdp, policy, weight * p, &mut states, &mut actions, acc);
        states.pop();
    }
}

fn walk(
    mdp: &TabularMdp,
    policy: &Policy,
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    acc: &mut HashMap<(Vec<usize>, Vec<usize>), f64>,
) {
    let h = states.len() - 1;
    let s = states[h];
    let mut choices = Vec::new();
    policy.for_each_action(h, s, |a, q| choices.push((a, q)));
    for (a, q) in choices {
        actions.push(a);
        if h + 1 == mdp.horizon() {
            *acc.entry((states.clone(), actions.clone())).or_insert(0.0) += prob * q;
        } else {
            for (next, pn) in mdp.transition(h, s, a).iter() {
                states.push(next);
                walk(mdp, policy, prob * q * pn, states, actions, acc);
                states.pop();
            }
        }
        actions.pop();
    }
}

/// `P^M(s_{1:H} || a_{1:H-1})`: the dynamics' share of a path probability.
pub fn dynamics_prob(mdp: &TabularMdp, states: &[usize], actions: &[usize]) -> f64 {
    let mut p = mdp.initial().prob(states[0]);
    for h in 1..states.len() {
        p *= mdp.transition_prob(h - 1, states[h - 1], actions[h - 1], states[h]);
    }
    p
}

/// Per-step action marginal `P(a_h = a | s_{1:H})`; for first-step mixtures the
/// weighted member average.
fn step_marginal(policy: &Policy, step: usize, state: usize, action: usize) -> f64 {
    match policy {
        Policy::FirstStep(m) => m.weights().iter().zip(m.members()).map(|(w, p)| w * step_marginal(p, step, state, action)).sum(),
        _ => policy.prob(step, state, action),
    }
}

/// `lambda(pi || pi') = E^pi E_{a' ~ pi'} [sum_h 1(a_h != a'_h)]`.
pub fn traj_l1_divergence(mdp: &TabularMdp, pi: &Policy, pi_prime: &Policy) -> Result<f64> {
    mdp.check_policy(pi_prime)?;
    let law = TrajectoryLaw::enumerate(mdp, pi)?;
    Ok(law.expectation(|s, a| (0..s.len()).map(|h| 1.0 - step_marginal(pi_prime, h, s[h], a[h])).sum()))
}

/// `rho(pi || pi') = E^pi E_{a' ~ pi'} [1(exists h: a_h != a'_h)]`.
pub fn traj_linf_semimetric(mdp: &TabularMdp, pi: &Policy, pi_prime: &Policy) -> Result<f64> {
    mdp.check_policy(pi_prime)?;
    let law = TrajectoryLaw::enumerate(mdp, pi)?;
    Ok(law.expectation(|s, a| 1.0 - pi_prime.sequence_prob(s, a)))
}

/// `sum_n E_{s ~ d^{pi^n}} [D_H^2(pi^n(.|s), pi^E(.|s))]` with `d` the
/// step-averaged visitation.
pub fn statewise_hellinger_error(mdp: &TabularMdp, policies: &[Policy], expert: &DetPolicy) -> Result<f64> {
    let h_n = mdp.horizon();
    let mut total = 0.0;
    for pi in policies {
        let visits = visitation_distribution(mdp, pi)?;
        for h in 0..h_n {
            for (s, &d) in visits.at(h).iter().enumerate() {
                if d > 0.0 {
                    total += d / h_n as f64 * hellinger_sq_to_point(pi.prob(h, s, expert.action(h, s)));
                }
            }
        }
    }
    Ok(total)
}

/// `E_{s_{1:H} ~ P^pi} [D_H^2(pi(.||s_{1:H}), pi^E(.||s_{1:H}))]` for a deterministic expert.
pub fn decoupled_hellinger(mdp: &TabularMdp, pi: &Policy, expert: &DetPolicy) -> Result<f64> {
    let law = TrajectoryLaw::enumerate(mdp, pi)?;
    Ok(law
        .state_sequences()
        .iter()
        .map(|(states, p)| {
            let target: Vec<usize> = states.iter().enumerate().map(|(h, &s)| expert.action(h, s)).collect();
            p * hellinger_sq_to_point(pi.sequence_prob(states, &target))
        })
        .sum())
}

/// `(F(nu; nu'), F(nu'; nu))` where `F(nu; nu') = P^nu(nu' disagrees with the
/// expert somewhere on s_{1:H})`.
pub fn symmetric_f(mdp: &TabularMdp, nu: &DetPolicy, nu_prime: &DetPolicy, expert: &DetPolicy) -> Result<(f64, f64)> {
    let f = |rolled: &DetPolicy, judged: &DetPolicy| -> Result<f64> {
        let law = TrajectoryLaw::enumerate(mdp, &Policy::Det(rolled.clone()))?;
        Ok(law.expectation(|s, _| {
            let off = s.iter().enumerate().any(|(h, &x)| judged.action(h, x) != expert.action(h, x));
            f64::from(u8::from(off))
        }))
    };
    Ok((f(nu, nu_prime)?, f(nu_prime, nu)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_return, StochPolicy};

    fn one_state(h: usize, a: usize) -> TabularMdp {
        TabularMdp::from_dense(1, a, h, &[1.0], true, &vec![1.0; a], vec![0.0; a], h as f64).unwrap()
    }

    #[test]
    fn hellinger_examples() {
        assert_eq!(hellinger_sq(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((hellinger_sq(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
        let d = hellinger_sq(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((d - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!(0.5 * l1_distance(&[0.5, 0.5], &[1.0, 0.0]) <= d && d <= 1.0);
        assert!(hellinger_sq(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn l1_divergence_counts_disagreements() {
        let mdp = one_state(2, 2);
        let a = Policy::Det(DetPolicy::stationary(2, vec![0]).unwrap());
        let b = Policy::Det(DetPolicy::stationary(2, vec![1]).unwrap());
        assert_eq!(traj_l1_divergence(&mdp, &a, &a).unwrap(), 0.0);
        assert_eq!(traj_l1_divergence(&mdp, &a, &b).unwrap(), 2.0);
        assert_eq!(traj_linf_semimetric(&mdp, &a, &b).unwrap(), 1.0);
        assert_eq!(traj_linf_semimetric(&mdp, &b, &b).unwrap(), 0.0);
    }

    #[test]
    fn statewise_error_of_uniform_member() {
        let mdp = one_state(1, 2);
        let expert = DetPolicy::stationary(2, vec![0]).unwrap();
        let uniform = Policy::Stoch(StochPolicy::uniform(1, 2).unwrap());
        let e = statewise_hellinger_error(&mdp, &[uniform], &expert).unwrap();
        assert!((e - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        let e = statewise_hellinger_error(&mdp, &[Policy::Det(expert.clone())], &expert).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(decoupled_hellinger(&mdp, &Policy::Det(expert.clone()), &expert).unwrap(), 0.0);
    }

    #[test]
    fn law_sums_to_one_and_matches_return() {
        let p = [0.25, 0.75, 1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        let mdp = TabularMdp::from_dense(2, 2, 3, &[0.4, 0.6], true, &p, vec![0.0, 1.0, 0.5, 0.25], 3.0).unwrap();
        let pi = Policy::Stoch(StochPolicy::from_probs(2, vec![vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap());
        let law = TrajectoryLaw::enumerate(&mdp, &pi).unwrap();
        assert!((law.total() - 1.0).abs() < 1e-12);
        let j = law.expectation(|s, a| s.iter().zip(a).map(|(&s, &a)| mdp.reward(s, a)).sum());
        assert!((j - exact_return(&mdp, &pi).unwrap()).abs() < 1e-12);
        for path in law.paths() {
            let factored = dynamics_prob(&mdp, &path.states, &path.actions) * pi.sequence_prob(&path.states, &path.actions);
            assert!((factored - path.prob).abs() < 1e-12);
        }
    }

    #[test]
    fn size_guard() {
        let mdp = one_state(21, 2);
        let pi = Policy::Det(DetPolicy::stationary(2, vec![0]).unwrap());
        assert!(matches!(TrajectoryLaw::enumerate(&mdp, &pi), Err(Error::Size { .. })));
    }

    #[test]
    fn symmetric_f_with_expert() {
        let mdp = one_state(3, 2);
        let expert = DetPolicy::stationary(2, vec![0]).unwrap();
        let other = DetPolicy::stationary(2, vec![1]).unwrap();
        let (f, g) = symmetric_f(&mdp, &other, &expert, &expert).unwrap();
        assert_eq!(f, 0.0);
        assert_eq!(g, 1.0);
    }
}

use rand::Rng;

use super::{Policy, TabularMdp, Trajectory};
use crate::error::Result;

/// Samples one episode: `s_0 ~ rho`, `a_h ~ pi(.|s_h)`, `s_{h+1} ~ P_h(s_h, a_h)`.
/// First-step mixtures draw their member once; each-step mixtures redraw a
/// member index at every step.
pub fn rollout<R: Rng + ?Sized>(mdp: &TabularMdp, policy: &Policy, rng: &mut R) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let episode_policy = policy.resolve_episode(rng);
    Ok(rollout_with(mdp, rng, |h, s, rng| episode_policy.sample_action(h, s, rng)))
}

/// Rollout driven by an arbitrary action sampler `act(step, state, rng)`.
pub fn rollout_with<R, F>(mdp: &TabularMdp, rng: &mut R, mut act: F) -> Trajectory
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize, &mut R) -> usize,
{
    let horizon = mdp.horizon();
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut s = mdp.initial().sample(rng);
    for h in 0..horizon {
        let a = act(h, s, rng);
        states.push(s);
        actions.push(a);
        rewards.push(mdp.reward(s, a));
        if h + 1 < horizon {
            s = mdp.transition(h, s, a).sample(rng);
        }
    }
    Trajectory { states, actions, rewards }
}

/// `V_h(s)` for every `(h, s)`, with `Q_h(s, a)` derived on demand.
#[derive(Debug, Clone)]
pub struct ValueFunctions<'m> {
    mdp: &'m TabularMdp,
    values: Vec<f64>,
}

impl ValueFunctions<'_> {
    pub fn v(&self, step: usize, state: usize) -> f64 {
        self.values[step * self.mdp.num_states() + state]
    }

    /// Values at step `h` for every state.
    pub fn v_step(&self, step: usize) -> &[f64] {
        let s = self.mdp.num_states();
        &self.values[step * s..(step + 1) * s]
    }

    pub fn q(&self, step: usize, state: usize, action: usize) -> f64 {
        let mut q = self.mdp.reward(state, action);
        if step + 1 < self.mdp.horizon() {
            q += self.mdp.transition(step, state, action).dot(self.v_step(step + 1));
        }
        q
    }

    /// `V_h(s) - Q_h(s, a)`: the value lost by deviating once at `(h, s)`.
    pub fn deviation_cost(&self, step: usize, state: usize, action: usize) -> f64 {
        self.v(step, state) - self.q(step, state, action)
    }

    /// `J = sum_s rho(s) V_0(s)`.
    pub fn expected_return(&self) -> f64 {
        self.mdp.initial().dot(self.v_step(0))
    }

    /// Dense `H x S x A` table of Q-values; intended for small instances.
    pub fn q_table(&self) -> Vec<f64> {
        let (s_n, a_n) = (self.mdp.num_states(), self.mdp.num_actions());
        let mut out = Vec::with_capacity(self.mdp.horizon() * s_n * a_n);
        for h in 0..self.mdp.horizon() {
            for s in 0..s_n {
                for a in 0..a_n {
                    out.push(self.q(h, s, a));
                }
            }
        }
        out
    }
}

fn require_markovian(policy: &Policy, op: &str) -> Result<()> {
    if !policy.is_markovian() {
        return Err(crate::error::config(format!("{op} requires a Markovian policy")));
    }
    Ok(())
}

/// Backward recursion `V_h(s) = sum_a pi(a|s) (R(s,a) + P_h(s,a) . V_{h+1})`.
pub fn value_functions<'m>(mdp: &'m TabularMdp, policy: &Policy) -> Result<ValueFunctions<'m>> {
    mdp.check_policy(policy)?;
    require_markovian(policy, "value_functions")?;
    let (s_n, horizon) = (mdp.num_states(), mdp.horizon());
    let kernel = mdp.kernel();
    let mut values = vec![0.0; horizon * s_n];
    let mut row_cache = vec![f64::NAN; kernel.num_distinct_rows()];
    for h in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut((h + 1) * s_n);
        let current = &mut head[h * s_n..];
        let has_next = h + 1 < horizon;
        if has_next {
            row_cache.fill(f64::NAN);
        }
        for (s, slot) in current.iter_mut().enumerate() {
            let mut acc = 0.0;
            policy.for_each_action(h, s, |a, p| {
                let mut q = mdp.reward(s, a);
                if has_next {
                    let id = kernel.row_id(h, s, a);
                    if row_cache[id].is_nan() {
                        row_cache[id] = kernel.rows()[id].dot(&tail[..s_n]);
                    }
                    q += row_cache[id];
                }
                acc += p * q;
            });
            *slot = acc;
        }
    }
    Ok(ValueFunctions { mdp, values })
}

/// `J(pi)`; first-step mixtures are the weighted sum of member returns.
pub fn exact_return(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    match policy {
        Policy::FirstStep(m) => {
            mdp.check_policy(policy)?;
            m.weights().iter().zip(m.members()).map(|(w, p)| Ok(w * exact_return(mdp, p)?)).sum()
        }
        _ => Ok(value_functions(mdp, policy)?.expected_return()),
    }
}

/// Smallest `mu >= 0` with `V_h(s) - Q_h(s, a) <= mu` for every `(h, s, a)`
/// under the expert's value functions.
pub fn recoverability_mu(mdp: &TabularMdp, expert: &Policy) -> Result<f64> {
    let vf = value_functions(mdp, expert)?;
    let (s_n, a_n, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let kernel = mdp.kernel();
    let mut row_cache = vec![f64::NAN; kernel.num_distinct_rows()];
    let mut mu: f64 = 0.0;
    for h in 0..horizon {
        let has_next = h + 1 < horizon;
        if has_next {
            row_cache.fill(f64::NAN);
        }
        for s in 0..s_n {
            let v = vf.v(h, s);
            for a in 0..a_n {
                let mut q = mdp.reward(s, a);
                if has_next {
                    let id = kernel.row_id(h, s, a);
                    if row_cache[id].is_nan() {
                        row_cache[id] = kernel.rows()[id].dot(vf.v_step(h + 1));
                    }
                    q += row_cache[id];
                }
                mu = mu.max(v - q);
            }
        }
    }
    Ok(mu)
}

/// Per-step state marginals `P^pi(s_h = s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    num_states: usize,
    marginals: Vec<f64>,
}

impl Visitation {
    pub fn at(&self, step: usize) -> &[f64] {
        &self.marginals[step * self.num_states..(step + 1) * self.num_states]
    }

    pub fn horizon(&self) -> usize {
        self.marginals.len() / self.num_states
    }

    /// The step-averaged form `d^pi(s) = (1/H) sum_h P^pi(s_h = s)`.
    pub fn averaged(&self) -> Vec<f64> {
        let horizon = self.horizon();
        let mut d = vec![0.0; self.num_states];
        for h in 0..horizon {
            for (acc, p) in d.iter_mut().zip(self.at(h)) {
                *acc += p / horizon as f64;
            }
        }
        d
    }
}

/// Forward recursion over the per-step marginals. First-step mixtures give
/// the weighted sum of member marginals.
pub fn visitation_distribution(mdp: &TabularMdp, policy: &Policy) -> Result<Visitation> {
    mdp.check_policy(policy)?;
    let (s_n, horizon) = (mdp.num_states(), mdp.horizon());
    if let Policy::FirstStep(m) = policy {
        let mut marginals = vec![0.0; horizon * s_n];
        for (w, member) in m.weights().iter().zip(m.members()) {
            let v = visitation_distribution(mdp, member)?;
            for (acc, p) in marginals.iter_mut().zip(&v.marginals) {
                *acc += w * p;
            }
        }
        return Ok(Visitation { num_states: s_n, marginals });
    }
    let mut marginals = vec![0.0; horizon * s_n];
    marginals[..s_n].copy_from_slice(&mdp.initial_dist());
    for h in 0..horizon.saturating_sub(1) {
        let (head, tail) = marginals.split_at_mut((h + 1) * s_n);
        let current = &head[h * s_n..];
        let next = &mut tail[..s_n];
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            policy.for_each_action(h, s, |a, p| {
                for (s2, q) in mdp.transition(h, s, a).iter() {
                    next[s2] += mass * p * q;
                }
            });
        }
    }
    Ok(Visitation { num_states: s_n, marginals })
}

//! The cliff MDP separating offline, interactive and hybrid imitation.
//!
//! State ids: `[0, N0)` is E, `[N0, N0 + N1)` is E', then `b`, then `b'`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{DetPolicy, KernelBuilder, SparseRow, TabularMdp};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardVariant {
    /// 1 on E and E', and 1 at b' under the expert action.
    R1,
    /// 1 exactly on E.
    #[serde(rename = "R_E_only")]
    EOnly,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffConfig {
    pub N0: usize,
    pub N1: usize,
    pub H: usize,
    pub A: usize,
    pub beta: f64,
    pub reward_variant: RewardVariant,
    #[serde(default)]
    pub theoretical_mode: bool,
    /// Seed for a random expert-action assignment; action 0 everywhere when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    E,
    EPrime,
    B,
    BPrime,
}

impl CliffConfig {
    pub fn figure2() -> Self {
        Self {
            N0: 200,
            N1: 1000,
            H: 100,
            A: 1001,
            beta: 0.08,
            reward_variant: RewardVariant::EOnly,
            theoretical_mode: false,
            expert_seed: None,
        }
    }

    /// Smallest instance satisfying every theoretical constraint.
    pub fn theorem() -> Self {
        Self::theoretical(3, 500, 50, 500, RewardVariant::R1)
    }

    /// Theoretical-mode config with `beta = 8 / (H - 8)`.
    #[allow(non_snake_case)]
    pub fn theoretical(N0: usize, N1: usize, H: usize, A: usize, reward_variant: RewardVariant) -> Self {
        Self { N0, N1, H, A, beta: 8.0 / (H as f64 - 8.0), reward_variant, theoretical_mode: true, expert_seed: None }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "figure2" => Ok(Self::figure2()),
            "theorem" => Ok(Self::theorem()),
            other => Err(crate::error::config(format!("unknown cliff preset `{other}` (expected figure2 or theorem)"))),
        }
    }

    pub fn num_states(&self) -> usize {
        self.N0 + self.N1 + 2
    }

    pub fn b(&self) -> usize {
        self.N0 + self.N1
    }

    pub fn b_prime(&self) -> usize {
        self.N0 + self.N1 + 1
    }

    pub fn region(&self, state: usize) -> Region {
        if state < self.N0 {
            Region::E
        } else if state < self.N0 + self.N1 {
            Region::EPrime
        } else if state == self.b() {
            Region::B
        } else {
            Region::BPrime
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut failures = Vec::new();
        if self.N0 == 0 || self.N1 == 0 {
            failures.push("N0 and N1 must be positive".to_string());
        }
        if self.H == 0 {
            failures.push("H must be positive".to_string());
        }
        if self.A < 2 {
            failures.push(format!("A = {} but at least two actions are needed", self.A));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            failures.push(format!("beta = {} outside (0, 1)", self.beta));
        }
        if self.theoretical_mode {
            let h = self.H as f64;
            if self.H < 50 {
                failures.push(format!("H = {} < 50", self.H));
            }
            if h < 1.25 * (10.0 * self.N0 as f64).ln() {
                failures.push(format!("H = {} < (5/4) ln(10 N0) = {:.4}", self.H, 1.25 * (10.0 * self.N0 as f64).ln()));
            }
            if self.A < 10 * self.H {
                failures.push(format!("A = {} < 10 H = {}", self.A, 10 * self.H));
            }
            if self.H > 8 && (self.beta - 8.0 / (h - 8.0)).abs() > 1e-12 {
                failures.push(format!("beta = {} differs from 8/(H-8) = {}", self.beta, 8.0 / (h - 8.0)));
            }
            if self.N1 < 500 {
                failures.push(format!("N1 = {} < 500", self.N1));
            }
            if self.N1 < 160 * self.N0 {
                failures.push(format!("N1 = {} < 160 N0 = {}", self.N1, 160 * self.N0));
            }
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(failures))
        }
    }

    /// Initial (and expert-stationary) distribution.
    pub fn rho(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.num_states()];
        let on_e = 1.0 / ((1.0 + self.beta) * self.N0 as f64);
        let on_ep = self.beta / ((1.0 + self.beta) * self.N1 as f64);
        rho[..self.N0].fill(on_e);
        rho[self.N0..self.N0 + self.N1].fill(on_ep);
        rho
    }

    /// Expert return under the configured reward.
    pub fn expert_return(&self) -> f64 {
        match self.reward_variant {
            RewardVariant::R1 => self.H as f64,
            RewardVariant::EOnly => self.H as f64 / (1.0 + self.beta),
        }
    }
}

/// A built cliff MDP and its expert.
#[derive(Debug, Clone)]
pub struct CliffWorld {
    pub config: CliffConfig,
    pub mdp: TabularMdp,
    pub expert: DetPolicy,
}

pub fn build_cliff(config: &CliffConfig) -> Result<CliffWorld> {
    config.validate()?;
    let c = config;
    let s_n = c.num_states();
    let (n0, n1) = (c.N0, c.N1);
    let expert_actions: Vec<usize> = match c.expert_seed {
        None => vec![0; s_n],
        Some(seed) => {
            let mut rng = rng_from_seed(seed);
            (0..s_n).map(|_| rng.gen_range(0..c.A)).collect()
        }
    };

    let mut builder = KernelBuilder::new(s_n, c.A, c.H, true);
    let mut e_next: Vec<(usize, f64)> = (0..n0).map(|s| (s, (1.0 - c.beta) / n0 as f64)).collect();
    e_next.extend((n0..n0 + n1).map(|s| (s, c.beta / n1 as f64)));
    let e_next = builder.intern(SparseRow::new(e_next));
    let uniform_e = builder.intern(SparseRow::new((0..n0).map(|s| (s, 1.0 / n0 as f64)).collect()));
    let to_b = builder.intern(SparseRow::point(c.b()));
    let to_bp = builder.intern(SparseRow::point(c.b_prime()));

    let mut rewards = vec![0.0; s_n * c.A];
    for s in 0..s_n {
        let star = expert_actions[s];
        for a in 0..c.A {
            let row = match c.region(s) {
                Region::E => if a == star { e_next } else { to_b },
                Region::EPrime | Region::BPrime => if a == star { uniform_e } else { to_bp },
                Region::B => to_b,
            };
            builder.set_row_id(0, s, a, row);
            rewards[s * c.A + a] = match (c.reward_variant, c.region(s)) {
                (_, Region::E) => 1.0,
                (RewardVariant::R1, Region::EPrime) => 1.0,
                (RewardVariant::R1, Region::BPrime) if a == star => 1.0,
                _ => 0.0,
            };
        }
    }
    let mdp = TabularMdp::new(c.H, &c.rho(), builder.build()?, rewards, c.H as f64)?;
    let expert = DetPolicy::stationary(c.A, expert_actions)?;
    Ok(CliffWorld { config: config.clone(), mdp, expert })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub frac_e: f64,
    pub frac_eprime: f64,
    pub b_prime_annotated: bool,
}

/// Coverage of E, E' and b' by an annotated-state indicator indexed by state id.
pub fn coverage_stats(annotated: &[bool], config: &CliffConfig) -> Coverage {
    let count = |range: std::ops::Range<usize>| range.filter(|&s| annotated.get(s).copied().unwrap_or(false)).count();
    Coverage {
        frac_e: count(0..config.N0) as f64 / config.N0 as f64,
        frac_eprime: count(config.N0..config.N0 + config.N1) as f64 / config.N1 as f64,
        b_prime_annotated: annotated.get(config.b_prime()).copied().unwrap_or(false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBounds {
    pub bc_threshold: f64,
    pub stagger_threshold: f64,
    pub ws_offline: usize,
    pub ws_interactive: usize,
}

pub fn theorem_bounds(config: &CliffConfig) -> Result<TheoremBounds> {
    if !config.theoretical_mode {
        return Err(Error::Validation(vec!["closed-form bounds need theoretical_mode".to_string()]));
    }
    config.validate()?;
    let (n0, h) = (config.N0 as f64, config.H as f64);
    Ok(TheoremBounds {
        bc_threshold: config.N1 as f64 / 160.0,
        stagger_threshold: h * n0 / 12.0,
        ws_offline: (n0 / ((1.0 - config.beta) * h) * (10.0 * n0).ln()).ceil() as usize,
        ws_interactive: 3,
    })
}

/// How many states of each block a memorizing learner has annotated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemorizedCounts {
    pub e: usize,
    pub e_prime: usize,
    pub b_prime: bool,
}

impl MemorizedCounts {
    pub fn from_annotated(annotated: &[bool], config: &CliffConfig) -> Self {
        let count = |range: std::ops::Range<usize>| range.filter(|&s| annotated[s]).count();
        Self {
            e: count(0..config.N0),
            e_prime: count(config.N0..config.N0 + config.N1),
            b_prime: annotated[config.b_prime()],
        }
    }
}

/// Exact return of the memorizing policy (expert action on annotated states,
/// uniform elsewhere).
///
/// Mass entering E or E' is always spread uniformly over the block, so only
/// the block masses matter and the chain lumps to four states.
pub fn memorizing_return(config: &CliffConfig, counts: MemorizedCounts) -> f64 {
    let inv_a = 1.0 / config.A as f64;
    let hit = |known: usize, size: usize| {
        let f = known as f64 / size as f64;
        f + (1.0 - f) * inv_a
    };
    let p_e = hit(counts.e, config.N0);
    let p_ep = hit(counts.e_prime, config.N1);
    let p_bp = if counts.b_prime { 1.0 } else { inv_a };
    let beta = config.beta;
    let (mut e, mut ep, mut b, mut bp) = (1.0 / (1.0 + beta), beta / (1.0 + beta), 0.0, 0.0);
    let mut total = 0.0;
    for _ in 0..config.H {
        total += match config.reward_variant {
            RewardVariant::EOnly => e,
            RewardVariant::R1 => e + ep + bp * p_bp,
        };
        let next_e = e * p_e * (1.0 - beta) + ep * p_ep + bp * p_bp;
        let next_ep = e * p_e * beta;
        let next_b = b + e * (1.0 - p_e);
        let next_bp = ep * (1.0 - p_ep) + bp * (1.0 - p_bp);
        (e, ep, b, bp) = (next_e, next_ep, next_b, next_bp);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_return, visitation_distribution, Policy};
    use crate::online::memorizing_policy;

    fn small(reward: RewardVariant) -> CliffConfig {
        CliffConfig { N0: 3, N1: 4, H: 6, A: 3, beta: 0.2, reward_variant: reward, theoretical_mode: false, expert_seed: None }
    }

    #[test]
    fn theoretical_beta_and_bounds() {
        let c = CliffConfig::theoretical(3, 500, 50, 500, RewardVariant::R1);
        assert!((c.beta - 0.190476).abs() < 1e-6);
        let b = theorem_bounds(&c).unwrap();
        assert!((b.bc_threshold - 3.125).abs() < 1e-12);
        assert!((b.stagger_threshold - 12.5).abs() < 1e-12);
        assert_eq!(b.ws_offline, 1);
        assert_eq!(b.ws_interactive, 3);
        assert!(theorem_bounds(&CliffConfig::figure2()).is_err());
    }

    #[test]
    fn theoretical_violations_are_listed() {
        let mut c = CliffConfig::figure2();
        c.theoretical_mode = true;
        match c.validate() {
            Err(Error::Validation(list)) => {
                assert!(list.iter().any(|m| m.contains("160 N0")));
                assert!(list.iter().any(|m| m.contains("beta")));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
        assert!(CliffConfig::figure2().validate().is_ok());
    }

    #[test]
    fn rows_follow_the_layout() {
        let c = small(RewardVariant::R1);
        let w = build_cliff(&c).unwrap();
        let m = &w.mdp;
        for s in 0..c.N0 {
            for a in 1..c.A {
                assert_eq!(m.transition_prob(0, s, a, c.b()), 1.0);
            }
            assert!((m.transition_prob(0, s, 0, 0) - 0.8 / 3.0).abs() < 1e-15);
            assert!((m.transition_prob(0, s, 0, c.N0) - 0.2 / 4.0).abs() < 1e-15);
        }
        assert_eq!(m.transition_prob(0, c.N0, 1, c.b_prime()), 1.0);
        assert_eq!(m.transition_prob(0, c.b(), 0, c.b()), 1.0);
        assert_eq!(m.transition_prob(0, c.b_prime(), 2, c.b_prime()), 1.0);
        assert!((m.transition_prob(0, c.b_prime(), 0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.reward(c.b_prime(), 0), 1.0);
        assert_eq!(m.reward(c.b_prime(), 1), 0.0);
        assert!(m.check_return_bound().is_ok());
    }

    #[test]
    fn expert_is_stationary_and_safe() {
        for reward in [RewardVariant::R1, RewardVariant::EOnly] {
            let c = small(reward);
            let w = build_cliff(&c).unwrap();
            let expert = Policy::Det(w.expert.clone());
            let d = visitation_distribution(&w.mdp, &expert).unwrap();
            for h in 0..c.H {
                for (x, y) in d.at(h).iter().zip(c.rho()) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
            assert!((exact_return(&w.mdp, &expert).unwrap() - c.expert_return()).abs() < 1e-9);
        }
    }

    #[test]
    fn random_assignment_keeps_expert_return() {
        let mut c = small(RewardVariant::EOnly);
        c.expert_seed = Some(9);
        let w = build_cliff(&c).unwrap();
        assert!(w.expert.table().iter().any(|&a| a != 0));
        let j = exact_return(&w.mdp, &Policy::Det(w.expert.clone())).unwrap();
        assert!((j - c.expert_return()).abs() < 1e-9);
    }

    #[test]
    fn coverage_cases() {
        let c = small(RewardVariant::R1);
        let none = vec![false; c.num_states()];
        assert_eq!(coverage_stats(&none, &c), Coverage { frac_e: 0.0, frac_eprime: 0.0, b_prime_annotated: false });
        let all = vec![true; c.num_states()];
        assert_eq!(coverage_stats(&all, &c), Coverage { frac_e: 1.0, frac_eprime: 1.0, b_prime_annotated: true });
        let e: Vec<bool> = (0..c.num_states()).map(|s| s < c.N0).collect();
        assert_eq!(coverage_stats(&e, &c), Coverage { frac_e: 1.0, frac_eprime: 0.0, b_prime_annotated: false });
    }

    #[test]
    fn lumped_return_matches_full_dp() {
        let masks: [&[usize]; 5] = [&[], &[0, 1, 2], &[0, 4, 8], &[1, 3, 5, 6, 8], &[0, 1, 2, 3, 4, 5, 6, 7, 8]];
        for reward in [RewardVariant::R1, RewardVariant::EOnly] {
            let c = small(reward);
            let w = build_cliff(&c).unwrap();
            for mask in masks {
                let mut annotated = vec![false; c.num_states()];
                let mut table = vec![None; c.num_states()];
                for &s in mask {
                    annotated[s] = true;
                    table[s] = Some(w.expert.action(0, s));
                }
                let pi = Policy::Stoch(memorizing_policy(&table, c.num_states(), c.A).unwrap());
                let full = exact_return(&w.mdp, &pi).unwrap();
                let lumped = memorizing_return(&c, MemorizedCounts::from_annotated(&annotated, &c));
                assert!((full - lumped).abs() < 1e-12, "{reward:?} {mask:?}: {full} vs {lumped}");
            }
        }
    }
}

//! Randomized property checks of the divergence inequalities, learner
//! guarantees and cliff identities, plus the random instances they run on.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::algorithms::{run_stagger, run_tragger, Problem, TrainSettings};
use crate::cliff::{build_cliff, theorem_bounds, CliffConfig, RewardVariant};
use crate::divergence::{
    decoupled_hellinger, hellinger_sq, l1_distance, statewise_hellinger_error, symmetric_f, traj_l1_divergence,
    traj_linf_semimetric, TrajectoryLaw,
};
use crate::error::Result;
use crate::mdp::{
    exact_return, recoverability_mu, value_functions, visitation_distribution, DetPolicy, EachStepMixture,
    FirstStepMixture, Policy, PolicyClass, StochPolicy, TabularMdp,
};
use crate::online::{mixture_log_loss, ExpWeightsState};
use crate::oracle::OfflineDataset;
use crate::seed::{rng_for, RunRng};

const TOL: f64 = 1e-9;

/// A probability vector with some zero entries.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..k)
            .map(|_| if k > 1 && rng.gen_bool(0.25) { 0.0 } else { -(1.0 - rng.gen::<f64>()).ln() })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            return raw.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Random MDP with rewards in [0, 1]; `R_max` is the largest achievable trajectory reward.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, s: usize, a: usize, h: usize) -> TabularMdp {
    let homogeneous = rng.gen_bool(0.5);
    let steps = if homogeneous { 1 } else { h - 1 };
    let p: Vec<f64> = (0..steps * s * a).flat_map(|_| random_simplex(rng, s)).collect();
    let rho = random_simplex(rng, s);
    let rewards: Vec<f64> = (0..s * a).map(|_| rng.gen::<f64>()).collect();
    let loose = TabularMdp::from_dense(s, a, h, &rho, homogeneous, &p, rewards.clone(), h as f64).expect("valid random MDP");
    let r_max = loose.max_trajectory_reward();
    TabularMdp::from_dense(s, a, h, &rho, homogeneous, &p, rewards, r_max).expect("valid random MDP")
}

fn random_dims<R: Rng + ?Sized>(rng: &mut R) -> (usize, usize, usize) {
    (rng.gen_range(1..=4), rng.gen_range(2..=3), rng.gen_range(1..=4))
}

pub fn random_det_policy<R: Rng + ?Sized>(rng: &mut R, s: usize, a: usize, steps: Option<usize>) -> DetPolicy {
    match steps {
        None => DetPolicy::stationary(a, (0..s).map(|_| rng.gen_range(0..a)).collect()).unwrap(),
        Some(h) => DetPolicy::step_indexed(s, a, h, (0..s * h).map(|_| rng.gen_range(0..a)).collect()).unwrap(),
    }
}

/// Stationary or step-indexed stochastic policy.
pub fn random_stoch_policy<R: Rng + ?Sized>(rng: &mut R, s: usize, a: usize, h: usize) -> Policy {
    let rows = |rng: &mut R, n: usize| (0..n).map(|_| random_simplex(rng, a)).collect::<Vec<_>>();
    if rng.gen_bool(0.5) {
        Policy::Stoch(StochPolicy::from_probs(a, rows(rng, s)).unwrap())
    } else {
        let table = rows(rng, s * h).into_iter().map(crate::mdp::ActionDist::Probs).collect();
        Policy::Stoch(StochPolicy::step_indexed(s, a, h, table).unwrap())
    }
}

/// `b` distinct stationary policies, one of them `expert`, in random order.
pub fn random_class<R: Rng + ?Sized>(rng: &mut R, expert: &DetPolicy, b: usize) -> PolicyClass {
    let (s, a) = (expert.num_states(), expert.num_actions());
    let mut members = vec![expert.clone()];
    while members.len() < b {
        let p = random_det_policy(rng, s, a, None);
        if !members.contains(&p) {
            members.push(p);
        }
    }
    members.shuffle(rng);
    PolicyClass::new(members).unwrap()
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn zero_violations(violations: usize, trials: usize, worst: f64) -> (bool, String) {
    (violations == 0, format!("{violations} violations in {trials} trials (largest slack deficit {worst:.3e})"))
}

/// `0.5 |p - q|_1 <= D_H^2(p, q) <= |p - q|_1` for a point mass `q`.
pub fn check_hellinger_sandwich(trials: usize, seed: u64) -> CheckOutcome {
    timed("hellinger sandwich", || {
        let mut rng = rng_for(seed, "hellinger-sandwich", 0);
        let (mut bad, mut worst) = (0, 0.0f64);
        for _ in 0..trials {
            let k = rng.gen_range(1..=10);
            let p = random_simplex(&mut rng, k);
            let mut q = vec![0.0; k];
            q[rng.gen_range(0..k)] = 1.0;
            let d = hellinger_sq(&p, &q)?;
            let l1 = l1_distance(&p, &q);
            let deficit = (0.5 * l1 - d).max(d - l1);
            worst = worst.max(deficit);
            bad += usize::from(deficit > TOL);
        }
        Ok(zero_violations(bad, trials, worst))
    })
}

/// Exponential weights on realizable log-loss sequences has regret at most `log B`.
pub fn check_exp_weights_regret(sequences: usize, seed: u64) -> CheckOutcome {
    timed("exponential-weights regret", || {
        let mut rng = rng_for(seed, "exp-weights-regret", 0);
        let (mut bad, mut worst) = (0, 0.0f64);
        for _ in 0..sequences {
            let b = rng.gen_range(1..=16);
            let n = rng.gen_range(1..=200);
            let class = Arc::new(PolicyClass::new((0..b).map(|i| DetPolicy::stationary(b, vec![i]).unwrap()).collect())?);
            let mut state = ExpWeightsState::new(class, 1.0)?;
            let good = rng.gen_range(0..b);
            let mut learner_loss = 0.0;
            let mut member_loss = vec![0.0; b];
            for _ in 0..n {
                let likelihoods: Vec<f64> = (0..b)
                    .map(|i| {
                        if i == good {
                            1.0
                        } else if rng.gen_bool(0.1) {
                            0.0
                        } else {
                            1.0 - rng.gen::<f64>()
                        }
                    })
                    .collect();
                learner_loss += mixture_log_loss(state.weights(), &likelihoods);
                let losses: Vec<f64> = likelihoods.iter().map(|p| -p.ln()).collect();
                for (m, l) in member_loss.iter_mut().zip(&losses) {
                    *m += l;
                }
                state.update(&losses)?;
            }
            let best = member_loss.iter().copied().fold(f64::INFINITY, f64::min);
            let deficit = learner_loss - best - (b as f64).ln();
            worst = worst.max(deficit);
            bad += usize::from(deficit > TOL);
        }
        Ok(zero_violations(bad, sequences, worst))
    })
}

/// Exact evaluation against brute-force enumeration of every weighted path.
pub fn check_exact_evaluation(instances: usize, seed: u64) -> CheckOutcome {
    timed("dynamic programming vs enumeration", || {
        let mut rng = rng_for(seed, "exact-evaluation", 0);
        let (mut bad, mut worst) = (0, 0.0f64);
        for _ in 0..instances {
            let (s, a, h) = random_dims(&mut rng);
            let mdp = random_mdp(&mut rng, s, a, h);
            let pi = random_stoch_policy(&mut rng, s, a, h);
            let law = TrajectoryLaw::enumerate(&mdp, &pi)?;
            let mut err = (law.total() - 1.0).abs();
            let j = law.expectation(|st, ac| st.iter().zip(ac).map(|(&x, &y)| mdp.reward(x, y)).sum());
            err = err.max((j - exact_return(&mdp, &pi)?).abs());
            let visits = visitation_distribution(&mdp, &pi)?;
            for step in 0..h {
                let mut marginal = vec![0.0; s];
                for p in law.paths() {
                    marginal[p.states[step]] += p.prob;
                }
                err = err.max(l1_distance(&marginal, visits.at(step)));
            }
            worst = worst.max(err);
            bad += usize::from(err > TOL);
        }
        Ok(zero_violations(bad, instances, worst))
    })
}

/// `J(pi^E) - J(pi) = E^pi sum_h (V^E_h(s_h) - Q^E_h(s_h, a_h))` and
/// `J(pi^E) - J(pi) <= R_max rho(pi || pi^E)`.
pub fn check_performance_difference(instances: usize, seed: u64) -> CheckOutcome {
    timed("performance difference and rho bound", || {
        let mut rng = rng_for(seed, "performance-difference", 0);
        let (mut bad, mut worst) = (0, 0.0f64);
        for _ in 0..instances {
            let (s, a, h) = random_dims(&mut rng);
            let mdp = random_mdp(&mut rng, s, a, h);
            let steps = rng.gen_bool(0.5).then_some(h);
            let expert = Policy::Det(random_det_policy(&mut rng, s, a, steps));
            let pi = random_stoch_policy(&mut rng, s, a, h);
            let ve = value_functions(&mdp, &expert)?;
            let gap = ve.expected_return() - exact_return(&mdp, &pi)?;
            let law = TrajectoryLaw::enumerate(&mdp, &pi)?;
            let rhs = law.expectation(|st, ac| (0..st.len()).map(|k| ve.v(k, st[k]) - ve.q(k, st[k], ac[k])).sum());
            let rho = traj_linf_semimetric(&mdp, &pi, &expert)?;
            let deficit = (gap - rhs).abs().max(gap - mdp.return_bound() * rho);
            worst = worst.max(deficit);
            bad += usize::from(deficit > TOL);
        }
        Ok(zero_violations(bad, instances, worst))
    })
}

/// Divergence inequalities on enumerable instances: the state-wise
/// estimation bound, `rho <= lambda`, the `lambda` identity, `rho/2 <=`
/// decoupled Hellinger, and the symmetric evaluation inequality.
pub fn check_divergence_inequalities(instances: usize, seed: u64) -> CheckOutcome {
    timed("estimation and decoupled-Hellinger inequalities", || {
        let mut rng = rng_for(seed, "divergence-inequalities", 0);
        let (mut bad, mut worst) = (0, 0.0f64);
        for _ in 0..instances {
            let (s, a, h) = random_dims(&mut rng);
            let mdp = random_mdp(&mut rng, s, a, h);
            let expert_det = random_det_policy(&mut rng, s, a, None);
            let expert = Policy::Det(expert_det.clone());
            let mut deficits = Vec::new();

            let n = rng.gen_range(1..=5);
            let seq: Vec<Policy> = (0..n).map(|_| random_stoch_policy(&mut rng, s, a, h)).collect();
            let est = statewise_hellinger_error(&mdp, &seq, &expert_det)?;
            let mu = recoverability_mu(&mdp, &expert)?;
            let mean_j = seq.iter().map(|p| exact_return(&mdp, p)).sum::<Result<f64>>()? / n as f64;
            let hat = Policy::FirstStep(FirstStepMixture::uniform(seq.clone())?);
            let j_hat = exact_return(&mdp, &hat)?;
            deficits.push((j_hat - mean_j).abs());
            deficits.push(exact_return(&mdp, &expert)? - j_hat - mu * h as f64 * est / n as f64);

            let pi = &seq[0];
            let lambda = traj_l1_divergence(&mdp, pi, &expert)?;
            let rho = traj_linf_semimetric(&mdp, pi, &expert)?;
            deficits.push(rho - lambda);
            let visits = visitation_distribution(&mdp, pi)?;
            let tv: f64 = (0..h)
                .map(|k| {
                    visits
                        .at(k)
                        .iter()
                        .enumerate()
                        .map(|(x, d)| d * 0.5 * l1_distance(&pi.action_probs(k, x), &expert.action_probs(k, x)))
                        .sum::<f64>()
                })
                .sum();
            deficits.push((lambda - tv).abs());
            deficits.push(0.5 * rho - decoupled_hellinger(&mdp, pi, &expert_det)?);

            let members: Vec<Policy> = (0..rng.gen_range(2..=3))
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        Policy::Det(random_det_policy(&mut rng, s, a, None))
                    } else {
                        random_stoch_policy(&mut rng, s, a, h)
                    }
                })
                .collect();
            let weights = random_simplex(&mut rng, members.len());
            let weights = if weights.contains(&0.0) { vec![1.0 / members.len() as f64; members.len()] } else { weights };
            let mix = Policy::FirstStep(FirstStepMixture::new(weights, members)?);
            let rho_mix = traj_linf_semimetric(&mdp, &mix, &expert)?;
            deficits.push(0.5 * rho_mix - decoupled_hellinger(&mdp, &mix, &expert_det)?);

            let nu = random_det_policy(&mut rng, s, a, None);
            let nu_prime = random_det_policy(&mut rng, s, a, None);
            let (f1, f2) = symmetric_f(&mdp, &nu, &nu_prime, &expert_det)?;
            let rho_nu = traj_linf_semimetric(&mdp, &Policy::Det(nu.clone()), &expert)?;
            let rho_nu_prime = traj_linf_semimetric(&mdp, &Policy::Det(nu_prime.clone()), &expert)?;
            deficits.push(0.5 * (rho_nu + rho_nu_prime) - (f1 + f2));
            let (self_f, _) = symmetric_f(&mdp, &nu, &nu, &expert_det)?;
            deficits.push((self_f - rho_nu).abs());

            let deficit = deficits.into_iter().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(deficit);
            bad += usize::from(deficit > TOL);
        }
        Ok(zero_violations(bad, instances, worst))
    })
}

/// An each-step mixture and the first-step mixture over its completion induce
/// the same trajectory law.
pub fn check_each_step_completion(instances: usize, seed: u64) -> CheckOutcome {
    timed("each-step mixture equals completed first-step mixture", || {
        let mut rng = rng_for(seed, "each-step-completion", 0);
        let (mut bad, mut worst) = (0, 0.0f64);
        for _ in 0..instances {
            let (s, a, _) = random_dims(&mut rng);
            let h = rng.gen_range(1..=3);
            let mdp = random_mdp(&mut rng, s, a, h);
            let b = rng.gen_range(1..=3).min(a.pow(s as u32));
            let expert = random_det_policy(&mut rng, s, a, None);
            let class = Arc::new(random_class(&mut rng, &expert, b));
            let weights = random_simplex(&mut rng, b);
            let weights = if weights.contains(&0.0) { vec![1.0 / b as f64; b] } else { weights };
            let each = EachStepMixture::new(class, weights)?;
            let first = each.first_step_equivalent(h, 4096)?;
            let a_law = TrajectoryLaw::enumerate(&mdp, &Policy::EachStep(each))?;
            let b_law = TrajectoryLaw::enumerate(&mdp, &Policy::FirstStep(first))?;
            let mut err: f64 = 0.0;
            for p in a_law.paths() {
                err = err.max((p.prob - b_law.prob(&p.states, &p.actions)).abs());
            }
            for p in b_law.paths() {
                err = err.max((p.prob - a_law.prob(&p.states, &p.actions)).abs());
            }
            worst = worst.max(err);
            bad += usize::from(err > 1e-12);
        }
        Ok(zero_violations(bad, instances, worst))
    })
}

struct LearnerInstance {
    mdp: TabularMdp,
    expert: Arc<DetPolicy>,
    class: Arc<PolicyClass>,
}

fn learner_instance(rng: &mut RunRng) -> LearnerInstance {
    let s = rng.gen_range(2..=4);
    let a = rng.gen_range(2..=3);
    let h = rng.gen_range(2..=4);
    let mdp = random_mdp(rng, s, a, h);
    let expert = random_det_policy(rng, s, a, None);
    let b = rng.gen_range(2..=32usize.min(a.pow(s as u32)));
    let class = Arc::new(random_class(rng, &expert, b));
    LearnerInstance { mdp, expert: Arc::new(expert), class }
}

/// STAGGER's suboptimality is within `mu H (log B + 2 log(1/delta)) / N` in at
/// least `min_pass` of the runs.
pub fn check_stagger_bound(runs: usize, min_pass: f64, seed: u64) -> CheckOutcome {
    timed("STAGGER suboptimality bound", || {
        let delta: f64 = 0.1;
        let mut passes = 0;
        for r in 0..runs {
            let mut rng = rng_for(seed, "stagger-bound", r as u64);
            let inst = learner_instance(&mut rng);
            let n = rng.gen_range(20..=200);
            let problem = Problem { mdp: &inst.mdp, expert: inst.expert.clone(), class: Some(inst.class.clone()) };
            let out = run_stagger(&problem, n, &TrainSettings::default(), &mut rng)?;
            let expert = Policy::Det((*inst.expert).clone());
            let mu = recoverability_mu(&inst.mdp, &expert)?;
            let gap = exact_return(&inst.mdp, &expert)? - exact_return(&inst.mdp, &out.policy()?)?;
            let bound = mu * inst.mdp.horizon() as f64 * ((inst.class.size() as f64).ln() + 2.0 * (1.0 / delta).ln()) / n as f64;
            passes += usize::from(gap <= bound + TOL);
        }
        let rate = passes as f64 / runs as f64;
        Ok((rate >= min_pass, format!("{passes}/{runs} runs within the bound (need {:.0}%)", 100.0 * min_pass)))
    })
}

/// TRAGGER's cumulative decoupled-Hellinger error stays below
/// `log B + 2 log(1/delta)` in at least `min_pass` of the runs.
pub fn check_tragger_bound(runs: usize, min_pass: f64, seed: u64) -> CheckOutcome {
    timed("TRAGGER estimation bound", || {
        let delta: f64 = 0.1;
        let mut passes = 0;
        for r in 0..runs {
            let mut rng = rng_for(seed, "tragger-bound", r as u64);
            let inst = learner_instance(&mut rng);
            let n = rng.gen_range(20..=200);
            let problem = Problem { mdp: &inst.mdp, expert: inst.expert.clone(), class: Some(inst.class.clone()) };
            let out = run_tragger(&problem, n, &TrainSettings::default(), &mut rng)?;
            let mut per_snapshot = HashMap::new();
            let mut est = 0.0;
            for round in 0..out.mixture.rounds() {
                let id = out.mixture.round_snapshot[round];
                est += match per_snapshot.entry(id) {
                    Entry::Occupied(e) => *e.get(),
                    Entry::Vacant(e) => *e.insert(decoupled_hellinger(&inst.mdp, out.mixture.member(round), &inst.expert)?),
                };
            }
            let bound = (inst.class.size() as f64).ln() + 2.0 * (1.0 / delta).ln();
            passes += usize::from(est <= bound + TOL);
        }
        let rate = passes as f64 / runs as f64;
        Ok((rate >= min_pass, format!("{passes}/{runs} runs within the bound (need {:.0}%)", 100.0 * min_pass)))
    })
}

/// Under the expert every per-step state marginal equals rho, b and b' are
/// never visited, and the return under R1 is H.
pub fn check_cliff_stationarity() -> CheckOutcome {
    timed("cliff expert stationarity", || {
        let mut worst: f64 = 0.0;
        let mut return_err: f64 = 0.0;
        for mut config in [CliffConfig::figure2(), CliffConfig::theorem()] {
            config.reward_variant = RewardVariant::R1;
            let world = build_cliff(&config)?;
            let expert = Policy::Det(world.expert.clone());
            let rho = config.rho();
            let visits = visitation_distribution(&world.mdp, &expert)?;
            for h in 0..config.H {
                let at = visits.at(h);
                worst = worst.max(at.iter().zip(&rho).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
                worst = worst.max(at[config.b()].abs()).max(at[config.b_prime()].abs());
            }
            return_err = return_err.max((exact_return(&world.mdp, &expert)? - config.H as f64).abs());
        }
        let passed = worst <= 1e-12 && return_err <= TOL;
        Ok((passed, format!("max |d_h - rho| = {worst:.2e}, |J - H| = {return_err:.2e}")))
    })
}

/// Offline expert data of the warm-start size covers all of E in at least
/// `min_rate` of the repetitions.
pub fn check_offline_coverage(repetitions: usize, min_rate: f64, seed: u64) -> CheckOutcome {
    timed("offline coverage of E", || {
        let config = CliffConfig::theoretical(50, 8000, 50, 500, RewardVariant::R1);
        let world = build_cliff(&config)?;
        let n_off = theorem_bounds(&config)?.ws_offline;
        let mut covered = 0;
        for r in 0..repetitions {
            let mut rng = rng_for(seed, "offline-coverage", r as u64);
            let data = OfflineDataset::sample(&world.mdp, &world.expert, n_off, &mut rng);
            let mut seen = vec![false; config.N0];
            for (_, s, _) in data.pairs() {
                if s < config.N0 {
                    seen[s] = true;
                }
            }
            covered += usize::from(seen.iter().all(|&x| x));
        }
        let rate = covered as f64 / repetitions as f64;
        Ok((rate >= min_rate, format!("N_off = {n_off} trajectories: E fully covered in {covered}/{repetitions} repetitions ({rate:.3})")))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Bounds,
    All,
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Lemmas | Suite::All) {
        out.push(check_hellinger_sandwich(10_000, seed));
        out.push(check_exp_weights_regret(1_000, seed));
        out.push(check_exact_evaluation(500, seed));
        out.push(check_performance_difference(500, seed));
        out.push(check_divergence_inequalities(1_000, seed));
        out.push(check_each_step_completion(200, seed));
    }
    if matches!(suite, Suite::Bounds | Suite::All) {
        out.push(check_stagger_bound(100, 0.85, seed));
        out.push(check_tragger_bound(100, 0.85, seed));
        out.push(check_cliff_stationarity());
        out.push(check_offline_coverage(2_000, 0.87, seed));
    }
    out
}

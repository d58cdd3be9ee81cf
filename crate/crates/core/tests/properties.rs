use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use ilbench::cliff::{build_cliff, memorizing_return, CliffConfig, MemorizedCounts, RewardVariant};
use ilbench::divergence::TrajectoryLaw;
use ilbench::mdp::{exact_return, rollout, MdpBundle, MdpJson, Policy, PolicyJson};
use ilbench::online::memorizing_policy;
use ilbench::seed::rng_from_seed;
use ilbench::verify::{random_class, random_det_policy, random_mdp, random_stoch_policy};

fn instance(seed: u64) -> (ilbench::mdp::TabularMdp, Policy) {
    let mut rng = rng_from_seed(seed);
    let (s, a, h) = (rng.gen_range(1..=4), rng.gen_range(2..=3), rng.gen_range(1..=4));
    let mdp = random_mdp(&mut rng, s, a, h);
    let pi = random_stoch_policy(&mut rng, s, a, h);
    (mdp, pi)
}

fn small_cliff() -> CliffConfig {
    CliffConfig { N0: 4, N1: 6, H: 8, A: 3, beta: 0.2, reward_variant: RewardVariant::R1, ..CliffConfig::figure2() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mdp_json_round_trip(seed in any::<u64>()) {
        let (mdp, _) = instance(seed);
        let text = serde_json::to_string(&MdpJson::from_mdp(&mdp)).unwrap();
        let back: MdpJson = serde_json::from_str(&text).unwrap();
        let back = back.to_mdp().unwrap();
        prop_assert_eq!(back.horizon(), mdp.horizon());
        prop_assert_eq!(back.return_bound(), mdp.return_bound());
        for h in 0..mdp.horizon().saturating_sub(1) {
            for s in 0..mdp.num_states() {
                for a in 0..mdp.num_actions() {
                    prop_assert_eq!(back.reward(s, a), mdp.reward(s, a));
                    for t in 0..mdp.num_states() {
                        prop_assert_eq!(back.transition_prob(h, s, a, t), mdp.transition_prob(h, s, a, t));
                    }
                }
            }
        }
        prop_assert_eq!(back.initial_dist(), mdp.initial_dist());
    }

    #[test]
    fn policy_json_round_trip(seed in any::<u64>()) {
        let (mdp, pi) = instance(seed);
        let back = PolicyJson::from_policy(&pi).to_policy().unwrap();
        prop_assert!((exact_return(&mdp, &back).unwrap() - exact_return(&mdp, &pi).unwrap()).abs() < 1e-12);
        for h in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                prop_assert_eq!(back.action_probs(h, s), pi.action_probs(h, s));
            }
        }
    }

    #[test]
    fn rollouts_replay_under_the_same_seed(seed in any::<u64>(), run in any::<u64>()) {
        let (mdp, pi) = instance(seed);
        let a = rollout(&mdp, &pi, &mut rng_from_seed(run)).unwrap();
        let b = rollout(&mdp, &pi, &mut rng_from_seed(run)).unwrap();
        prop_assert_eq!(a.states, b.states);
        prop_assert_eq!(a.actions, b.actions);
    }

    #[test]
    fn first_step_mixture_return_is_member_average(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let (s, a, h) = (rng.gen_range(1..=3), rng.gen_range(2..=3), rng.gen_range(1..=3));
        let mdp = random_mdp(&mut rng, s, a, h);
        let members: Vec<Policy> = (0..3).map(|_| random_stoch_policy(&mut rng, s, a, h)).collect();
        let mean = members.iter().map(|p| exact_return(&mdp, p).unwrap()).sum::<f64>() / 3.0;
        let mix = Policy::FirstStep(ilbench::mdp::FirstStepMixture::uniform(members).unwrap());
        let law = TrajectoryLaw::enumerate(&mdp, &mix).unwrap();
        let enumerated = law.expectation(|st, ac| st.iter().zip(ac).map(|(&x, &y)| mdp.reward(x, y)).sum());
        prop_assert!((exact_return(&mdp, &mix).unwrap() - mean).abs() < 1e-9);
        prop_assert!((enumerated - mean).abs() < 1e-9);
    }

    #[test]
    fn lumped_cliff_return_matches_full_evaluation(mask in proptest::collection::vec(any::<bool>(), 12)) {
        let config = small_cliff();
        let world = build_cliff(&config).unwrap();
        let s = config.num_states();
        let annotated: Vec<bool> = (0..s).map(|x| mask[x]).collect();
        let table: Vec<Option<usize>> =
            (0..s).map(|x| annotated[x].then(|| world.expert.action(0, x))).collect();
        let pi = Policy::Stoch(memorizing_policy(&table, s, config.A).unwrap());
        let full = exact_return(&world.mdp, &pi).unwrap();
        let lumped = memorizing_return(&config, MemorizedCounts::from_annotated(&annotated, &config));
        prop_assert!((full - lumped).abs() < 1e-10, "full {} lumped {}", full, lumped);
    }
}

#[test]
fn monte_carlo_return_agrees_with_exact() {
    for seed in 0..10 {
        let (mdp, pi) = instance(seed);
        let exact = exact_return(&mdp, &pi).unwrap();
        let mut rng = rng_from_seed(1000 + seed);
        let n = 20_000;
        let total: f64 = (0..n)
            .map(|_| {
                let t = rollout(&mdp, &pi, &mut rng).unwrap();
                t.states.iter().zip(&t.actions).map(|(&s, &a)| mdp.reward(s, a)).sum::<f64>()
            })
            .sum();
        let sd = mdp.return_bound() / (n as f64).sqrt();
        assert!((total / n as f64 - exact).abs() < 5.0 * sd, "seed {seed}");
    }
}

#[test]
fn empirical_action_frequencies_match_policy() {
    let (mdp, pi) = instance(42);
    let mut rng = rng_from_seed(7);
    let n = 40_000;
    let (h, s) = (0, 0);
    let mut counts = vec![0usize; mdp.num_actions()];
    for _ in 0..n {
        counts[pi.sample_action(h, s, &mut rng)] += 1;
    }
    for (a, p) in pi.action_probs(h, s).iter().enumerate() {
        let freq = counts[a] as f64 / n as f64;
        assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12, "action {a}");
    }
}

#[test]
fn bundle_round_trip_keeps_expert_and_class() {
    let mut rng = rng_from_seed(3);
    let mdp = random_mdp(&mut rng, 3, 2, 3);
    let expert = random_det_policy(&mut rng, 3, 2, None);
    let class = random_class(&mut rng, &expert, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mdp.json");
    MdpBundle::new(&mdp, Some(&expert), Some(&class)).write(&path).unwrap();
    let back = MdpBundle::read(&path).unwrap();
    assert_eq!(back.expert().unwrap(), Some(expert.clone()));
    let back_class = Arc::new(back.policy_class().unwrap().unwrap());
    assert_eq!(back_class.size(), 4);
    assert!(back_class.position(&expert).is_some());
}

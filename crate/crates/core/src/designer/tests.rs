use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::game::{EndowmentProfile, GROWTH};
use crate::mechanism::{Baseline, MechanismSpec};
use crate::players::{PlayerTrainingConfig, VirtualPlayerModel};
use crate::rng::stream;

fn random_round(rng: &mut impl Rng) -> (Coins, Coins) {
    let e: Coins = std::array::from_fn(|_| rng.random_range(1..=10) as f64);
    let c: Coins = std::array::from_fn(|i| rng.random_range(0..=e[i] as u32) as f64);
    (e, c)
}

#[test]
fn observation_features_and_edges() {
    let obs = build_observation(&[10.0, 2.0, 2.0, 2.0], &[5.0, 2.0, 0.0, 1.0]).unwrap();
    assert_eq!(obs.nodes[0], [1.0, 0.5, 0.5]);
    assert_eq!(obs.nodes[1], [0.2, 0.2, 1.0]);
    assert_eq!(obs.nodes[2], [0.2, 0.0, 0.0]);
    assert_eq!(obs.nodes[3], [0.2, 0.1, 0.5]);
    assert_eq!(obs.edges.len(), 12);
    assert!(obs.edges.iter().all(|(s, r)| s != r));
    let mut sorted = obs.edges.to_vec();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), 12);
    assert!(build_observation(&[10.0, 0.0, 2.0, 2.0], &[0.0; 4]).is_err());
}

#[test]
fn zero_weights_give_uniform_split() {
    let p = GraphNetPolicy::zeros();
    let w = p.weights(&[10.0, 2.0, 4.0, 6.0], &[3.0, 1.0, 4.0, 0.0]).unwrap();
    for v in w {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn identical_nodes_get_identical_weights() {
    let p = GraphNetPolicy::init(3);
    let w = p.weights(&[6.0; 4], &[2.0; 4]).unwrap();
    for v in w {
        assert!((v - 0.25).abs() < 1e-12);
    }
}

#[test]
fn outputs_are_equivariant_simplex_points() {
    let p = GraphNetPolicy::init(11);
    let mut rng = stream(4, &[]);
    let perms = [[1, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1], [1, 2, 3, 0]];
    for k in 0..500 {
        let (e, c) = random_round(&mut rng);
        let w = p.weights(&e, &c).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 0.0));
        let pi = perms[k % perms.len()];
        let pe: Coins = std::array::from_fn(|i| e[pi[i]]);
        let pc: Coins = std::array::from_fn(|i| c[pi[i]]);
        let pw = p.weights(&pe, &pc).unwrap();
        for i in 0..PLAYERS {
            assert!((pw[i] - w[pi[i]]).abs() < 1e-12);
        }
    }
}

#[test]
fn batched_weights_match_single_rounds() {
    let p = GraphNetPolicy::init(2);
    let mut rng = stream(5, &[]);
    let rounds: Vec<_> = (0..7).map(|_| random_round(&mut rng)).collect();
    let e = Array2::from_shape_fn((7, 4), |(b, i)| rounds[b].0[i]);
    let c = Array2::from_shape_fn((7, 4), |(b, i)| rounds[b].1[i]);
    let wb = p.weights_batch(&e, &c).unwrap();
    for (b, (eb, cb)) in rounds.iter().enumerate() {
        let w = p.weights(eb, cb).unwrap();
        for i in 0..4 {
            assert!((wb[[b, i]] - w[i]).abs() < 1e-14);
        }
    }
}

#[test]
fn memoryless_across_rounds() {
    let p = GraphNetPolicy::init(8);
    let mech = MechanismSpec::designer("p", Arc::new(p));
    let e = [10.0, 4.0, 4.0, 4.0];
    let c = [3.0, 2.0, 4.0, 1.0];
    let first = mech.payout(&e, &c).unwrap();
    for other in [[0.0; 4], [10.0, 4.0, 4.0, 4.0], [1.0, 1.0, 1.0, 1.0]] {
        mech.payout(&e, &other).unwrap();
        assert_eq!(mech.payout(&e, &c).unwrap(), first);
    }
}

#[test]
fn designer_payouts_conserve_and_vanish_at_zero() {
    let mech = MechanismSpec::designer("p", Arc::new(GraphNetPolicy::init(9)));
    let mut rng = stream(6, &[]);
    for _ in 0..1000 {
        let (e, c) = random_round(&mut rng);
        let y = mech.payout(&e, &c).unwrap();
        let pool = GROWTH * c.iter().sum::<f64>();
        assert!((y.iter().sum::<f64>() - pool).abs() < 1e-9);
    }
    assert_eq!(mech.payout(&[10.0, 2.0, 2.0, 2.0], &[0.0; 4]).unwrap(), [0.0; 4]);
}

#[test]
fn payout_jacobian_matches_central_differences() {
    let p = GraphNetPolicy::init(21);
    let mut rng = stream(7, &[]);
    for _ in 0..20 {
        let (e, c) = random_round(&mut rng);
        let jac = p.payout_jacobian(&e, &c).unwrap();
        let h = 1e-6;
        for j in 0..PLAYERS {
            let mut up = c;
            let mut down = c;
            up[j] += h;
            down[j] -= h;
            let yu = designer_payout_raw(&p, &e, &up);
            let yd = designer_payout_raw(&p, &e, &down);
            for i in 0..PLAYERS {
                let fd = (yu[i] - yd[i]) / (2.0 * h);
                assert!((jac[i][j] - fd).abs() < 1e-5, "d y{i} / d c{j}: {} vs {fd}", jac[i][j]);
            }
        }
    }
}

fn designer_payout_raw(p: &GraphNetPolicy, e: &Coins, c: &Coins) -> Coins {
    let w = p.weights(e, c).unwrap();
    let pool = GROWTH * c.iter().sum::<f64>();
    w.map(|v| v * pool)
}

#[test]
fn forward_graph_gradients_check() {
    let p = GraphNetPolicy::init(13);
    let mut rng = stream(8, &[]);
    let rounds: Vec<_> = (0..3).map(|_| random_round(&mut rng)).collect();
    let e = Array2::from_shape_fn((3, 4), |(b, i)| rounds[b].0[i]);
    let c = Array2::from_shape_fn((3, 4), |(b, i)| rounds[b].1[i]);
    let x = node_features(&e, &c);
    let target = Array2::from_shape_fn((3, 4), |(b, i)| ((b + 2 * i) % 5) as f64 / 4.0 - 0.5);
    let eval = |params: &crate::nn::ParamSet| -> (f64, Vec<Matrix>) {
        let mut g = Graph::new();
        let ids = params.attach(&mut g);
        let xn = g.constant(x.clone());
        let w = GraphNetPolicy::forward_graph(&mut g, GraphNetPolicy::nodes(&ids), xn).unwrap();
        let t = g.constant(target.clone());
        let z = g.mul(w, t).unwrap();
        let f = g.sum(z);
        let grads = g.backward(f).unwrap();
        (g.scalar(f), grads.collect(&ids, params.values()))
    };
    let (_, analytic) = eval(p.params());
    let h = 1e-6;
    let mut probe = p.params().clone();
    for (k, grad) in analytic.iter().enumerate() {
        let shape = grad.dim();
        // a spread of entries per tensor keeps the check fast
        for flat in (0..grad.len()).step_by(7) {
            let idx = (flat / shape.1, flat % shape.1);
            let base = probe.values()[k][idx];
            probe.values_mut()[k][idx] = base + h;
            let up = eval(&probe).0;
            probe.values_mut()[k][idx] = base - h;
            let down = eval(&probe).0;
            probe.values_mut()[k][idx] = base;
            let numeric = (up - down) / (2.0 * h);
            // roundoff in the differences is ~1e-10
            assert!(
                (grad[idx] - numeric).abs() <= 1e-4 * numeric.abs() + 1e-9,
                "param {k} {idx:?}: {} vs {numeric}",
                grad[idx]
            );
        }
    }
}

#[test]
fn weight_file_round_trip_and_resolve() {
    let dir = std::env::temp_dir().join(format!("designer-weights-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = GraphNetPolicy::init(17);
    p.save(&dir.join("policy.json")).unwrap();
    let back = GraphNetPolicy::load(&dir.join("policy.json")).unwrap();
    assert_eq!(back, p);

    let mut mech = MechanismSpec::Designer {
        weights_ref: "policy.json".into(),
        policy: None,
    };
    assert!(mech.payout(&[10.0; 4], &[1.0; 4]).is_err());
    mech.resolve(&dir).unwrap();
    let e = [10.0, 2.0, 2.0, 2.0];
    let c = [4.0, 1.0, 2.0, 0.0];
    assert_eq!(mech.payout(&e, &c).unwrap(), designer_payout_raw(&p, &e, &c));

    let players = VirtualPlayerModel::init(1);
    players.save(&dir.join("players.json")).unwrap();
    assert!(GraphNetPolicy::load(&dir.join("players.json")).is_err());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn surrogate_rejects_unpaired_batches() {
    let mut g = Graph::new();
    let v = g.constant(Matrix::zeros((4, 1)));
    let l = g.constant(Matrix::zeros((3, 1)));
    assert!(scg_surrogate(&mut g, v, l, true).is_err());
}

#[test]
fn surrogate_value_is_mean_vote_and_gradient_is_pathwise_for_constant_logp() {
    let mut g = Graph::new();
    let theta = g.param(Array2::from_elem((1, 1), 0.7));
    let x = g.constant(Array2::from_shape_vec((3, 1), vec![1.0, 2.0, -1.0]).unwrap());
    let votes = g.matmul_t(x, theta).unwrap();
    let logp = g.constant(Array2::from_elem((3, 1), -2.0));
    let s = scg_surrogate(&mut g, votes, logp, false).unwrap();
    let lp_term: f64 = [0.7, 1.4, -0.7].iter().map(|j| j * -2.0).sum::<f64>() / 3.0;
    assert!((g.scalar(s) - (0.7 * 2.0 / 3.0 + lp_term)).abs() < 1e-12);
    let grads = g.backward(s).unwrap();
    assert!((grads.get(theta).unwrap()[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn leave_one_out_advantages_sum_to_scaled_deviation() {
    let mut g = Graph::new();
    let votes = g.constant(Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 6.0]).unwrap());
    let lp = g.param(Array2::zeros((4, 1)));
    let s = scg_surrogate(&mut g, votes, lp, true).unwrap();
    let grads = g.backward(s).unwrap();
    let d = grads.get(lp).unwrap();
    // (j_b - mean of the other three) / 4
    let expected = [1.0 - 11.0 / 3.0, 2.0 - 10.0 / 3.0, 3.0 - 3.0, 6.0 - 2.0];
    for b in 0..4 {
        assert!((d[[b, 0]] - expected[b] / 4.0).abs() < 1e-12);
    }
}

#[test]
fn training_is_deterministic_and_moves_the_policy() {
    let corpus = crate::players::generate_corpus(
        &crate::players::StyleMix::default(),
        &EndowmentProfile::evaluation_set(),
        &Baseline::ALL.map(MechanismSpec::from),
        60,
        2,
    )
    .unwrap();
    let pcfg = PlayerTrainingConfig {
        updates: 20,
        batch_size: 32,
        eval_every: 10,
        ..Default::default()
    };
    let (players, _) = crate::players::train_virtual_players(&corpus, &pcfg, 1).unwrap();
    let cfg = TrainingConfig {
        updates: 4,
        tails: vec![2, 8],
        episodes_per_profile: 3,
        rounds: 4,
        log_every: 2,
        ..Default::default()
    };
    let a = train_designer(&players, &cfg, 5).unwrap();
    let b = train_designer(&players, &cfg, 5).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.curve.len(), 2);
    assert_ne!(a.policy, initial_policy(5));
    let c = train_designer(&players, &cfg, 6).unwrap();
    assert_ne!(a.policy, c.policy);
}

#[test]
fn evaluate_identical_mechanisms_is_near_half() {
    let players = VirtualPlayerModel::init(3);
    let le: MechanismSpec = Baseline::LiberalEgalitarian.into();
    let share = evaluate_vote_share(
        &players,
        &le,
        &le,
        &EndowmentProfile::head_tail(4).unwrap(),
        200,
        &crate::players::VoteModel::default(),
        1,
    )
    .unwrap();
    assert_eq!(share.pairs, 200);
    assert!((share.mean - 0.5).abs() < 4.0 * share.std_error + 1e-9);
}

proptest! {
    #[test]
    fn random_policies_stay_on_the_simplex(seed in 0u64..1000, e in prop::array::uniform4(1u32..=10), frac in prop::array::uniform4(0.0f64..=1.0)) {
        let p = GraphNetPolicy::init(seed);
        let e = e.map(f64::from);
        let c: Coins = std::array::from_fn(|i| (frac[i] * e[i]).round());
        let w = p.weights(&e, &c).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }
}

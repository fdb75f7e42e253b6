use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::*;
use crate::error::Error;

fn random_set(shapes: &[(&str, usize, usize)], seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(-2.0, 2.0).unwrap();
    let mut p = ParamSet::new();
    for &(name, r, c) in shapes {
        p.push(name, Matrix::from_shape_simple_fn((r, c), || u.sample(&mut rng)));
    }
    p
}

#[test]
fn masked_softmax_examples() {
    let mut g = Graph::new();
    let x = g.row(&[0.0, 0.0]);
    let p = g.masked_softmax(x, Some(&array![[true, true]])).unwrap();
    assert_eq!(g.value(p), &array![[0.5, 0.5]]);

    let x = g.row(&[5.0, -3.0]);
    let p = g.masked_softmax(x, Some(&array![[true, false]])).unwrap();
    assert_eq!(g.value(p), &array![[1.0, 0.0]]);

    let x = g.row(&[2f64.ln(), 0.0]);
    let p = g.masked_softmax(x, None).unwrap();
    assert!((g.value(p)[[0, 0]] - 2.0 / 3.0).abs() < 1e-15);
    assert!((g.value(p)[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn fully_masked_row_is_rejected() {
    let mut g = Graph::new();
    let x = g.constant(array![[1.0, 2.0], [3.0, 4.0]]);
    let mask = array![[true, false], [false, false]];
    assert!(matches!(
        g.masked_softmax(x, Some(&mask)),
        Err(Error::InvalidMask { row: 1 })
    ));
    assert!(matches!(
        g.masked_log_softmax(x, Some(&mask)),
        Err(Error::InvalidMask { row: 1 })
    ));
}

proptest! {
    #[test]
    fn masked_softmax_is_a_distribution(
        logits in proptest::collection::vec(-30.0f64..30.0, 11),
        allowed in 0usize..11,
    ) {
        let mask = Array2::from_shape_fn((1, 11), |(_, c)| c <= allowed);
        let mut g = Graph::new();
        let x = g.constant(Array2::from_shape_vec((1, 11), logits).unwrap());
        let p = g.masked_softmax(x, Some(&mask)).unwrap();
        let lp = g.masked_log_softmax(x, Some(&mask)).unwrap();
        let e = g.exp(lp);
        let total: f64 = g.value(p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for c in allowed + 1..11 {
            prop_assert_eq!(g.value(p)[[0, c]], 0.0);
            prop_assert_eq!(g.value(e)[[0, c]], 0.0);
        }
        for c in 0..=allowed {
            prop_assert!((g.value(p)[[0, c]] - g.value(e)[[0, c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn gradcheck_square() {
    let mut p = ParamSet::new();
    p.push("x", Matrix::from_elem((1, 1), 3.0));
    let err = finite_difference_check(
        |g, ids| {
            let sq = g.mul(ids[0], ids[0])?;
            Ok(g.sum(sq))
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    let mut g = Graph::new();
    let ids = p.attach(&mut g);
    let sq = g.mul(ids[0], ids[0]).unwrap();
    let s = g.sum(sq);
    let grads = g.backward(s).unwrap();
    assert!((grads.get(ids[0]).unwrap()[[0, 0]] - 6.0).abs() < 1e-15);
}

#[test]
fn gradcheck_masked_softmax_cross_entropy() {
    let p = random_set(&[("logits", 5, 11)], 3);
    let mask = Array2::from_shape_fn((5, 11), |(r, c)| c <= 2 * r + 2);
    let targets = [0usize, 3, 1, 6, 10];
    let err = finite_difference_check(
        |g, ids| {
            let lp = g.masked_log_softmax(ids[0], Some(&mask))?;
            let picked = g.pick(lp, &targets)?;
            let s = g.mean(picked);
            Ok(g.scale(s, -1.0))
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gradcheck_lstm_step_sum() {
    let hidden = 4;
    let p = random_set(
        &[
            ("x", 2, 3),
            ("h", 2, hidden),
            ("c", 2, hidden),
            ("w_ih", 4 * hidden, 3),
            ("w_hh", 4 * hidden, hidden),
            ("b", 1, 4 * hidden),
        ],
        11,
    );
    let err = finite_difference_check(
        |g, ids| {
            let nodes = LstmNodes {
                w_ih: ids[3],
                w_hh: ids[4],
                bias: ids[5],
            };
            let (h, c) = lstm_step(g, ids[0], ids[1], ids[2], nodes)?;
            let both = g.add(h, c)?;
            Ok(g.sum(both))
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

/// Exercises every op in one composed function on inputs in [-2, 2].
#[test]
fn gradcheck_composed_graph() {
    let p = random_set(&[("a", 4, 3), ("w", 5, 3), ("b", 1, 5), ("col", 4, 1), ("pos", 4, 5)], 5);
    let err = finite_difference_check(
        |g, ids| {
            let y = g.linear(ids[0], ids[1], ids[2])?;
            let t = g.tanh(y);
            let s = g.sigmoid(t);
            let sq = g.mul(ids[4], ids[4])?;
            let pos = g.add_scalar(sq, 0.5);
            let l = g.ln(pos);
            let e = g.exp(s);
            let m = g.sub(e, l)?;
            let m = g.mul_col(m, ids[3])?;
            let cat = g.concat_cols(&[m, t])?;
            let sl = g.slice_cols(cat, 2, 6)?;
            let gat = g.gather_rows(sl, &[3, 0, 0, 2, 1, 3])?;
            let sc = g.scatter_add_rows(gat, &[1, 0, 1, 2, 0, 1], 3)?;
            let rs = g.reshape(sc, 6, 3)?;
            let sm = g.masked_softmax(rs, None)?;
            let rsum = g.row_sum(sm);
            let pk = g.pick(rs, &[0, 1, 2, 0, 1, 2])?;
            let both = g.mul(rsum, pk)?;
            let lsm = g.masked_log_softmax(sc, None)?;
            let a = g.sum(both);
            let b = g.sum(lsm);
            let b = g.scale(b, 0.1);
            let out = g.add(a, b)?;
            Ok(out)
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn lstm_unroll_keeps_gradient_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lstm = LstmParams::init(8, 16, &mut rng);
    let mut params = ParamSet::new();
    lstm.push_into(&mut params, "lstm");
    let mut g = Graph::new();
    let ids = params.attach(&mut g);
    let nodes = LstmNodes {
        w_ih: ids[0],
        w_hh: ids[1],
        bias: ids[2],
    };
    let mut h = g.constant(Matrix::zeros((3, 16)));
    let mut c = g.constant(Matrix::zeros((3, 16)));
    for t in 0..10 {
        let x = g.constant(Matrix::from_elem((3, 8), (t as f64 * 0.3).sin()));
        (h, c) = lstm_step(&mut g, x, h, c, nodes).unwrap();
    }
    let s = g.sum(h);
    let grads = g.backward(s).unwrap();
    for (id, v) in ids.iter().zip(params.values()) {
        assert_eq!(grads.get(*id).unwrap().shape(), v.shape());
    }
}

#[test]
fn backward_requires_scalar_root() {
    let mut g = Graph::new();
    let x = g.param(Matrix::zeros((2, 2)));
    assert!(g.backward(x).is_err());
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(array![[1.0, 2.0]]);
    let p = g.param(array![[3.0, 4.0]]);
    let m = g.mul(c, p).unwrap();
    let s = g.sum(m);
    let grads = g.backward(s).unwrap();
    assert!(grads.get(c).is_none());
    assert_eq!(grads.get(p).unwrap(), &array![[1.0, 2.0]]);
}

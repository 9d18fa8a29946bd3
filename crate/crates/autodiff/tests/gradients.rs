use propnli_autodiff::{gradient_check, gradient_check_sampled, AutodiffError, Graph, NodeId, ParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Every primitive op feeding a scalar, with all inputs trainable.
fn composite_store(seed: u64) -> ParamStore {
    let mut r = rng(seed);
    let mut s = ParamStore::default();
    s.add_uniform("W", &[4, 6], 0.8, &mut r).unwrap();
    s.add_uniform("b", &[4], 0.8, &mut r).unwrap();
    s.add_uniform("x", &[3], 0.8, &mut r).unwrap();
    s.add_uniform("y", &[3], 0.8, &mut r).unwrap();
    s.add_uniform("T", &[4, 3, 3], 0.8, &mut r).unwrap();
    s.add_uniform("E", &[5, 3], 0.8, &mut r).unwrap();
    s.add_uniform("A", &[2, 4], 0.8, &mut r).unwrap();
    s.add_uniform("B", &[4, 7], 0.8, &mut r).unwrap();
    s
}

fn composite(g: &mut Graph<'_>) -> Result<NodeId, AutodiffError> {
    let s = g.store();
    let p = |name: &str| s.id(name).unwrap();
    let (w, b, x, y, t, e) = (p("W"), p("b"), p("x"), p("y"), p("T"), p("E"));
    let (w, b, x, y, t, e) = (g.param(w), g.param(b), g.param(x), g.param(y), g.param(t), g.param(e));
    let row = g.row(e, 2)?;
    let x2 = g.hadamard(x, row)?;
    let xy = g.concat(x2, y)?;
    let lin = g.matmul(w, xy)?;
    let lin = g.add(lin, b)?;
    let nn = g.tanh(lin)?;
    let bil = g.bilinear(x, t, y)?;
    let ntn = g.sigmoid(bil)?;
    let h = g.add(nn, ntn)?;
    let h = g.scale(0.7, h)?;
    let a = g.param(s.id("A").unwrap());
    let bm = g.param(s.id("B").unwrap());
    let ab = g.matmul(a, bm)?;
    let abs = g.sum(ab)?;
    let hs = g.concat(h, abs)?;
    let hs2 = g.concat(hs, row)?;
    let nll = g.softmax_nll(hs2, 3)?;
    let l2 = g.l2_penalty(0.01);
    g.add(nll, l2)
}

#[test]
fn composite_of_every_op_matches_finite_differences() {
    for seed in 0..3 {
        let store = composite_store(seed);
        let report = gradient_check(&store, composite).unwrap();
        assert!(report.max_relative_error < 1e-6, "seed {seed}: {report:?}");
        assert_eq!(report.entries_checked, store.num_values());
    }
}

#[test]
fn linear_loss_is_exact() {
    let mut s = ParamStore::default();
    s.add_uniform("w", &[10], 1.0, &mut rng(4)).unwrap();
    let report = gradient_check(&s, |g| {
        let w = g.param(g.store().id("w").unwrap());
        g.sum(w)
    })
    .unwrap();
    assert!(report.max_relative_error < 1e-10, "{report:?}");
}

#[test]
fn constant_loss_has_zero_error() {
    let mut s = ParamStore::default();
    s.add_uniform("w", &[4], 1.0, &mut rng(5)).unwrap();
    let report = gradient_check(&s, |g| Ok(g.input(Tensor::scalar(3.0)))).unwrap();
    assert_eq!(report.max_relative_error, 0.0);
    assert_eq!(report.analytic, 0.0);
}

#[test]
fn sampled_check_covers_requested_entries() {
    let store = composite_store(9);
    let report = gradient_check_sampled(&store, composite, 20, 1).unwrap();
    assert_eq!(report.entries_checked, 20);
    assert!(report.max_relative_error < 1e-6);
}

#[test]
fn bilinear_matches_triple_loop() {
    let mut r = rng(11);
    let (n, m) = (2, 3);
    let x = random_vec(&mut r, m);
    let y = random_vec(&mut r, m);
    let t = random_vec(&mut r, n * m * m);

    let mut oracle = vec![0.0; n];
    for (k, out) in oracle.iter_mut().enumerate() {
        for i in 0..m {
            for j in 0..m {
                *out += x[i] * t[k * m * m + i * m + j] * y[j];
            }
        }
    }

    let s = ParamStore::default();
    let mut g = Graph::new(&s);
    let xn = g.input(Tensor::vector(x));
    let yn = g.input(Tensor::vector(y));
    let tn = g.input(Tensor::new(vec![n, m, m], t).unwrap());
    let out = g.bilinear(xn, tn, yn).unwrap();
    for (a, b) in g.value(out).data().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn bilinear_handles_rectangular_tensors() {
    // [n, mi, mj] with mi != mj
    let mut s = ParamStore::default();
    let mut r = rng(12);
    s.add_uniform("x", &[2], 1.0, &mut r).unwrap();
    s.add_uniform("T", &[3, 2, 4], 1.0, &mut r).unwrap();
    s.add_uniform("y", &[4], 1.0, &mut r).unwrap();
    let report = gradient_check(&s, |g| {
        let st = g.store();
        let (x, t, y) = (st.id("x").unwrap(), st.id("T").unwrap(), st.id("y").unwrap());
        let (x, t, y) = (g.param(x), g.param(t), g.param(y));
        let o = g.bilinear(x, t, y)?;
        let o = g.tanh(o)?;
        g.sum(o)
    })
    .unwrap();
    assert!(report.max_relative_error < 1e-7, "{report:?}");
}

proptest! {
    #[test]
    fn softmax_nll_matches_naive(logits in prop::collection::vec(-20.0f64..20.0, 7), target in 0usize..7) {
        let naive = -(logits[target].exp() / logits.iter().map(|z| z.exp()).sum::<f64>()).ln();
        let s = ParamStore::default();
        let mut g = Graph::new(&s);
        let l = g.input(Tensor::vector(logits));
        let loss = g.softmax_nll(l, target).unwrap();
        prop_assert!((g.scalar(loss) - naive).abs() < 1e-12);
    }

    #[test]
    fn softmax_nll_finite_for_large_logits(logits in prop::collection::vec(-1000.0f64..1000.0, 7), target in 0usize..7) {
        let s = ParamStore::default();
        let mut g = Graph::new(&s);
        let l = g.input(Tensor::vector(logits));
        let loss = g.softmax_nll(l, target).unwrap();
        prop_assert!(g.scalar(loss).is_finite());
        prop_assert!(g.scalar(loss) >= 0.0);
    }

    #[test]
    fn composite_gradients_random_seeds(seed in any::<u64>()) {
        let store = composite_store(seed);
        let report = gradient_check(&store, composite).unwrap();
        prop_assert!(report.max_relative_error < 1e-4, "{:?}", report);
    }
}

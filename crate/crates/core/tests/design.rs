use gfnlab::design::{
    amortized_mi_train, exact_mi, mi_likelihood_form, mi_posterior_form, nested_mc_mi, posterior_update,
    AmortizedMiConfig, ToyModel,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

#[test]
fn nested_mc_is_close_on_the_reference_model() {
    let m = ToyModel::reference();
    for x in 0..m.n_designs() {
        let exact = exact_mi(&m, x, &m.prior).unwrap().value;
        let est = nested_mc_mi(&m, x, &m.prior, 10_000, 1000, &mut ChaCha8Rng::seed_from_u64(x as u64)).unwrap();
        assert!((est.value - exact).abs() < 0.02, "design {x}: {} vs {exact}", est.value);
    }
}

#[test]
fn nested_mc_bias_shrinks_with_inner_samples() {
    let m = ToyModel::reference();
    for x in 0..m.n_designs() {
        let exact = exact_mi(&m, x, &m.prior).unwrap().value;
        let bias = |inner| {
            let e = nested_mc_mi(&m, x, &m.prior, 20_000, inner, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            (e.value - exact).abs()
        };
        let (coarse, fine) = (bias(1), bias(100));
        assert!(fine < coarse, "design {x}: {fine} >= {coarse}");
    }
}

#[test]
fn amortized_estimates_track_exact_values_and_argmax() {
    let m = ToyModel::reference();
    let net = amortized_mi_train(&m, &m.prior, &AmortizedMiConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let exact: Vec<f64> = (0..m.n_designs()).map(|x| exact_mi(&m, x, &m.prior).unwrap().value).collect();
    let approx = net.estimates();
    for (a, e) in approx.iter().zip(&exact) {
        assert!((a - e).abs() < 0.05, "{a} vs {e}");
    }
    assert_eq!(argmax(&approx), argmax(&exact));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mi_forms_agree_and_respect_coarsening(seed in any::<u64>(), nt in 1usize..6, nx in 1usize..4, ny in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ToyModel::random(nt, nx, ny, &mut rng);
        for x in 0..nx {
            let a = mi_likelihood_form(&m, x, &m.prior);
            let b = mi_posterior_form(&m, x, &m.prior);
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(a >= -1e-12);
            let merged = m.coarsen(0, ny - 1).unwrap();
            prop_assert!(mi_likelihood_form(&merged, x, &m.prior) <= a + 1e-12);
        }
    }

    #[test]
    fn posterior_updates_commute(seed in any::<u64>(), y1 in 0usize..3, y2 in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ToyModel::random(4, 2, 3, &mut rng);
        let ab = posterior_update(&m, &posterior_update(&m, &m.prior, 0, y1).unwrap(), 1, y2).unwrap();
        let ba = posterior_update(&m, &posterior_update(&m, &m.prior, 1, y2).unwrap(), 0, y1).unwrap();
        for (p, q) in ab.iter().zip(&ba) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        prop_assert!((ab.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

use super::params::ParamStore;

/// Largest `|g − fd| / max(1, |g|)` over the flat parameter indices in
/// `probes`, where `fd` is the central difference of `loss` with step `h`
/// and `g` the matching entry of `analytic`. Parameter values are restored.
pub fn gradient_check<F>(store: &mut ParamStore, analytic: &[f64], probes: &[usize], h: f64, mut loss: F) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let base = store.flat_values();
    assert_eq!(analytic.len(), base.len(), "one analytic gradient per scalar");
    let mut worst: f64 = 0.0;
    let mut probe = base.clone();
    for &i in probes {
        probe[i] = base[i] + h;
        store.set_flat_values(&probe);
        let up = loss(store);
        probe[i] = base[i] - h;
        store.set_flat_values(&probe);
        let down = loss(store);
        probe[i] = base[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / analytic[i].abs().max(1.0));
    }
    store.set_flat_values(&base);
    worst
}

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::{component_rng, Artifacts, ExperimentError, RunConfig};
use crate::design::{
    amortized_mi_train, exact_mi, mi_likelihood_form, mi_posterior_form, nested_mc_mi, DesignError, ToyModel,
};

fn design_err(e: DesignError) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

#[derive(Serialize)]
struct DesignRow {
    design: usize,
    name: String,
    mi_likelihood_form: f64,
    mi_posterior_form: f64,
    nested_mc: f64,
    nested_mc_stderr: f64,
    amortized: f64,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Largest dual-form disagreement and number of coarsening violations over
/// `n` random models.
pub fn fuzz_mi<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (f64, usize) {
    let mut gap: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..n {
        let (nt, nx, ny) = (rng.gen_range(2..=6), rng.gen_range(1..=4), rng.gen_range(2..=6));
        let m = ToyModel::random(nt, nx, ny, rng);
        let a = rng.gen_range(0..ny);
        let b = (a + rng.gen_range(1..ny)) % ny;
        let coarse = m.coarsen(a, b).expect("distinct outcomes");
        for x in 0..nx {
            let lik = mi_likelihood_form(&m, x, &m.prior);
            gap = gap.max((lik - mi_posterior_form(&m, x, &m.prior)).abs());
            if mi_likelihood_form(&coarse, x, &coarse.prior) > lik + 1e-12 {
                violations += 1;
            }
        }
    }
    (gap, violations)
}

pub fn run_mi(cfg: &RunConfig, art: &Artifacts) -> Result<Value, ExperimentError> {
    let section = cfg.mi.clone().unwrap_or_default();
    let model = match &section.model {
        Some(p) => ToyModel::load(p).map_err(design_err)?,
        None => ToyModel::reference(),
    };
    let belief = model.prior.clone();
    let amortized = amortized_mi_train(&model, &belief, &section.amortized, &mut component_rng(cfg.seed, "amortized"))
        .map_err(design_err)?;
    art.save_checkpoint(&amortized.regressor().store)?;
    let amortized_values = amortized.estimates();

    let mut rows = Vec::new();
    for x in 0..model.n_designs() {
        let exact = exact_mi(&model, x, &belief).map_err(design_err)?;
        let nmc = nested_mc_mi(&model, x, &belief, section.outer, section.inner, &mut component_rng(cfg.seed, &format!("nmc/{x}")))
            .map_err(design_err)?;
        rows.push(DesignRow {
            design: x,
            name: model.designs.get(x).cloned().unwrap_or_else(|| format!("x{x}")),
            mi_likelihood_form: exact.value,
            mi_posterior_form: mi_posterior_form(&model, x, &belief),
            nested_mc: nmc.value,
            nested_mc_stderr: nmc.stderr,
            amortized: amortized_values[x],
        });
    }
    art.write_metrics(&rows)?;

    let (fuzz_gap, violations) = fuzz_mi(section.fuzz_models, &mut component_rng(cfg.seed, "fuzz"));
    let exact: Vec<f64> = rows.iter().map(|r| r.mi_likelihood_form).collect();
    let max_err = |f: &dyn Fn(&DesignRow) -> f64| rows.iter().map(|r| (f(r) - r.mi_likelihood_form).abs()).fold(0.0, f64::max);
    let nmc_err = max_err(&|r| r.nested_mc);
    let amortized_err = max_err(&|r| r.amortized);
    let consistent = argmax(&exact) == argmax(&amortized_values);
    for r in &rows {
        art.say(&format!(
            "{:<10} exact {:.6}  nested MC {:.6} ± {:.6}  amortized {:.6}",
            r.name, r.mi_likelihood_form, r.nested_mc, r.nested_mc_stderr, r.amortized
        ));
    }
    art.say(&format!("fuzz: {} models, max dual gap {:.3e}, coarsening violations {}", section.fuzz_models, fuzz_gap, violations));
    Ok(json!({
        "designs": rows.len(),
        "exact_mi": exact,
        "reference_dual_gap": max_err(&|r| r.mi_posterior_form),
        "fuzz_models": section.fuzz_models,
        "fuzz_max_dual_gap": fuzz_gap,
        "coarsening_violations": violations,
        "nested_mc_max_err": nmc_err,
        "amortized_max_err": amortized_err,
        "exact_argmax": argmax(&exact),
        "amortized_argmax": argmax(&amortized_values),
        "argmax_consistent": consistent,
    }))
}

"""Smoke test for the gfnlab_py extension module.

Build and install it first; see the README.
"""

import json
import math
import os
import sys
import tempfile

import gfnlab_py as g


def check(name, cond):
    print(("ok   " if cond else "FAIL ") + name)
    return cond


def main():
    results = []

    grid = g.Hypergrid(2, 3)
    target = grid.target()
    results.append(check("3x3 grid has 9 states", grid.num_states() == 9))
    results.append(check("target sums to one", abs(sum(p for _, p in target) - 1.0) < 1e-12))
    z = sum(grid.reward(list(c)) for c, _ in target)
    results.append(check("log partition matches rewards", abs(math.log(z) - grid.log_partition()) < 1e-12))

    sampler = grid.train(steps=1500, seed=0)
    results.append(check("trained sampler is close to target", sampler.l1_to_target < 0.05))
    draws = sampler.sample(200, seed=1)
    results.append(check("samples are grid points", all(len(d) == 2 and max(d) < 3 for d in draws)))
    results.append(check("distribution sums to one", abs(sum(p for _, p in sampler.distribution()) - 1.0) < 1e-9))

    results.append(check("DAG counts 1, 3, 25, 543",
                         [g.dag_state_count(d) for d in (1, 2, 3, 4)] == [1, 3, 25, 543]))
    rows = [[0.1 * i, 0.05 * i + 0.01 * (i % 3)] for i in range(20)]
    post = g.dag_posterior(rows)
    results.append(check("two-node posterior has 3 graphs", len(post) == 3 and abs(sum(p for _, p in post) - 1.0) < 1e-12))

    m = g.ToyModel.reference()
    mi = [m.exact_mi(x) for x in range(m.n_designs)]
    est, se = m.nested_mc_mi(0, outer=4000, inner=400, seed=0)
    results.append(check("sharp design is more informative", mi[0] > mi[1] > 0))
    results.append(check("nested MC is near exact", abs(est - mi[0]) < 5 * se + 0.01))
    post = m.posterior_update(m.prior, 0, 0)
    results.append(check("posterior update normalizes", abs(sum(post) - 1.0) < 1e-12))

    results.append(check("EI at incumbent", abs(g.expected_improvement(0.0, 1.0, 0.0) - 1 / math.sqrt(2 * math.pi)) < 1e-12))

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "oracle.toml")
        with open(cfg, "w") as f:
            f.write('[env]\nkind = "dag"\nnodes = 3\n')
        summary = json.loads(g.run_experiment("oracle", cfg, os.path.join(tmp, "out")))
        results.append(check("oracle run enumerates 25 DAGs", summary["states"] == 25))
        try:
            g.run_experiment("oracle", cfg + ".missing", os.path.join(tmp, "out2"))
            results.append(check("missing config raises", False))
        except RuntimeError:
            results.append(check("missing config raises", True))

    print(f"{sum(results)}/{len(results)} checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())

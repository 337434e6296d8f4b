"""Smoke test for the pmmh_py extension module.

Build and install first, e.g. `maturin develop --release` in crates/python,
then run `python python/smoke_test.py`.
"""

import math

import pmmh_py as pm


def main():
    y, states = pm.simulate("linear_gaussian", 60, seed=3, truth={"a": 0.9, "q": 0.3, "r": 0.5})
    assert len(y) == 60 and len(states) == 60

    exact = pm.kalman_log_likelihood(y, 0.9, 0.3, 0.5)
    via_model = pm.log_likelihood("linear_gaussian", y, {"a": 0.9, "q": 0.3, "r": 0.5}, filter="kalman")
    assert abs(exact - via_model) < 1e-9

    ratios = [
        math.exp(pm.log_likelihood("linear_gaussian", y, {"a": 0.9}, particles=200, seed=s) - exact)
        for s in range(100)
    ]
    mean = sum(ratios) / len(ratios)
    assert 0.8 < mean < 1.2, mean

    assert pm.parameter_names("sv_leverage") == ["mu", "phi", "sigma2_eta", "rho"]
    assert abs(pm.ect(22.54, 19.35 / 225.4) - 19.35) < 1e-9

    config = """
        seed = 5
        [model]
        preset = "linear_gaussian"
        [simulate]
        horizon = 60
        truth = { a = 0.9, q = 0.3, r = 0.5 }
        [sampler]
        iterations = 3000
        [sampler.imh]
        warmup = 2000
        refit_at = [100, 200, 500, 1000, 2000]
        [sampler.rwm]
        sigma1_diag = [0.01, 0.01, 0.01]
        [filter]
        kind = "kalman"
        [evidence]
        q_draws = 2000
    """
    chain = pm.run(config)
    assert len(chain) == 3000
    a = chain.column("a")
    assert 0.5 < sum(a) / len(a) < 1.0
    summary = chain.summary()
    ev = summary["evidence"]
    assert abs(ev["log_p_bs"] - ev["log_p_is"]) < 0.2
    print(f"a mean {sum(a) / len(a):.3f}, IF median {summary['diagnostics']['if_median']:.2f}, "
          f"log p(y) {ev['log_p_bs']:.3f}")

    f = pm.inefficiency(a)
    assert f >= 0.0
    print("smoke test passed")


if __name__ == "__main__":
    main()

"""Smoke test for the pycogstab extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`
or `pip install crates/python`, then run `python python/smoke_test.py`.
"""

import math

import pycogstab as cs


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    cfg = cs.SymmetricConfig.scenario(
        n_secondary=4, q=0.5, pe=0.2, pf=0.1, mu_p_max=0.3, a=9.0, secondary_noise=0.2, interference=0.5
    )
    assert cfg.n_secondary == 4 and close(cfg.a, 9.0)
    assert close(cs.mu_p_max(cfg), 0.3)
    mu = cs.mu_p(cfg)
    assert close(mu, 0.3 * (1 - 0.5 * 0.2 / 10) ** 4)

    # dict round trip
    again = cs.SymmetricConfig(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()

    report = cs.analyze(cfg, 0.2)
    assert close(report["mu_p"], mu)
    assert report["constraints"]["q_max_branch"] in ("slack", "binding")

    pc = cs.protection_constraints(cfg, 0.29)
    at_boundary = cfg.with_param("q", pc["q_max"])
    assert close(cs.mu_p(at_boundary), 0.29)

    try:
        cs.analyze(cfg, 0.35)
    except cs.InfeasiblePrimaryError:
        pass
    else:
        raise AssertionError("expected InfeasiblePrimaryError")

    res = cs.simulate(cfg, 1.0, 200_000, seed=3)
    est = res["empirical_mu_p"]
    assert abs(est["value"] - mu) <= 4 * est["se"], (est, mu)
    again = cs.simulate(cfg.to_network(), 1.0, 200_000, seed=3)
    assert again == res

    relay = cs.SymmetricConfig.scenario(n_secondary=1, mu_p_max=0.3, pd=0.3).with_param("Pd-SNR", 0.0)
    assert cs.lambda_p_max_relay(relay) > 0.3
    b = cs.relay_benefits(relay, 0.1)
    assert b["primary"] == b["secondary"] == (0.3 < cs.relay_success_prob(relay))

    perfect = cs.SymmetricConfig.scenario(n_secondary=3, beta=2.0, secondary_noise=0.3, p0_cap=10.0)
    opt = cs.maximize_sum_throughput(perfect, 0.1, q_points=100, p0_points=50)
    assert abs(opt["q"] - cs.optimal_q(perfect)) <= opt["certificate"]["coarse_q_step"]
    assert math.isclose(opt["p0"], 10.0)

    checks = cs.validate("standard", seed=1)["checks"]
    assert all(c["passed"] for c in checks), checks
    print(f"pycogstab {cs.__version__}: smoke test passed ({len(checks)} battery checks)")


if __name__ == "__main__":
    main()

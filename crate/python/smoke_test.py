"""Smoke test for the topeq extension module.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                 python python/smoke_test.py
"""

import math

import topeq


def main():
    diag = topeq.Scenario("paper_diag", (-30, 30), {"c": 1.0})
    assert diag.dim == 2 and diag.window == (-30, 30)

    gdd = diag.verify_gdd()
    assert gdd["passed"] and gdd["max_violation"] <= 1e-12, gdd

    scan = diag.alpha_rejection_scan([0.5, 0.3, 0.2])
    assert all(r["counterexample"] is not None for r in scan), scan

    half = topeq.Scenario("const_alpha", (-60, 60), {"alpha": math.log(2)})
    sol = half.bounded_sine(0.2, 1.0)
    assert max(sol["ratios"]) <= 0.35 and sol["residual"] <= 1e-8, sol["ratios"]

    zero = half.bounded_linear([[0.0, 0.0]] * 121)
    assert zero["sup_norm"] == 0.0

    engine = topeq.Engine(topeq.Scenario("paper_diag", (-40, 40)))
    assert engine.theta < 0.5
    xi = [0.3, -0.4]
    h = engine.h(3, xi)
    back = engine.l(3, h)
    assert max(abs(a - b) for a, b in zip(back, xi)) <= 1e-6
    assert max(abs(a - b) for a, b in zip(h, xi)) <= engine.b + engine.tail_budget

    report = engine.verify(seed=1, points=10, solutions=2)
    assert report["passed"], report["summary"]

    faulty = topeq.Engine(topeq.Scenario("paper_diag", (-40, 40)), fault=(0, 0.1))
    assert abs(faulty.h(0, xi)[0] - engine.h(0, xi)[0] - 0.1) <= 1e-9

    try:
        topeq.holder_params(1.0, 0.05, 0.1, 1.0, math.e - 1.0, 0.1)
    except topeq.RejectedError as exc:
        print("holder_params rejected as expected:", exc)
    else:
        raise AssertionError("M + r >= alpha must be rejected")

    try:
        topeq.Scenario("no_such_family", (-10, 10))
    except ValueError:
        pass
    else:
        raise AssertionError("unknown family accepted")

    print("topeq", topeq.__version__, "smoke test passed")


if __name__ == "__main__":
    main()

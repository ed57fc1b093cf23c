"""Smoke test for the compiled extension.

Build it first, for example with `maturin develop` inside crates/python, or
`cargo build --release -p phidiv-python --features extension-module` and copy
target/release/libphidiv_py.so next to this file as phidiv_py.so.
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import phidiv_py as pd

EXPONENTIAL = 'name = "exponential"'
MIXTURE = """
name = "two_mixture"
p0 = { family = "normal", mean = 0.0, sd = 1.0 }
p1 = { family = "normal", mean = 0.5, sd = 1.0 }
"""


def main():
    x = 2.5
    assert abs(pd.power_phi(0.0, x) - (-math.log(x) + x - 1.0)) < 1e-14

    data = pd.sample(EXPONENTIAL, [2.0], 200, 7)
    assert len(data) == 200 and min(data) > 0.0
    assert data == pd.sample(EXPONENTIAL, [2.0], 200, 7)

    est = pd.estimate(EXPONENTIAL, data, gamma=0.0)
    mle = len(data) / sum(data)
    assert abs(est["estimate"][0] - mle) < 1e-6, (est, mle)
    assert est["converged"]

    t = pd.simple_test(EXPONENTIAL, data, [1.0], gamma=0.0, level=0.05)
    assert t["reject"] and t["p_value"] < 0.05, t

    plan = pd.power_plan(math.log(2.0) - 0.5, 0.5, power=0.9)
    assert plan["n_star"] == 28, plan

    mix = pd.sample(MIXTURE, [0.0], 300, 3)
    m = pd.mixture_test(MIXTURE, mix, [0.0])
    assert m["statistic"] >= 0.0 and m["dof"] == 1

    try:
        pd.estimate('name = "nope"', data)
    except ValueError:
        pass
    else:
        raise AssertionError("bad model accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()

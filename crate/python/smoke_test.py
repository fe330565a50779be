"""Smoke test for the Python bindings.

Build and install the extension first:

    pip install --no-build-isolation ./crates/py
    python3 python/smoke_test.py
"""

import json
import math

import jmls


def main():
    truth = jmls.Params.two_mode()
    assert truth.num_models == 2 and truth.n_x == 1
    assert truth.validate() == []
    assert jmls.Params.from_json(truth.to_json()).to_json() == truth.to_json()

    broken = json.loads(truth.to_json())
    broken["T"][0] = 0.6
    try:
        problems = jmls.Params.from_json(json.dumps(broken)).validate()
    except ValueError as err:
        problems = [str(err)]
    assert problems, "column sum violation should be reported"

    u, y, x, z = jmls.simulate(truth, 200, seed=1)
    assert len(u) == 200 and len(y) == 200 and len(x) == 201 and len(z) == 201
    assert u == jmls.simulate(truth, 200, seed=1)[0]

    ll = jmls.log_likelihood(truth, u, y, max_components=16, seed=0)
    assert math.isfinite(ll)

    samples, loglik = jmls.identify(u, y, n_x=1, m=2, iterations=30, burn_in=10, seed=3, init=truth)
    assert len(samples) == 20 and len(loglik) == 30
    assert all(s.validate() == [] for s in samples)

    assert jmls.dpf_threshold([0.25, 0.25, 0.25, 0.25], 2) == 0
    assert jmls.dpf_threshold([0.7, 0.1, 0.1, 0.1], 2) == 1
    assert jmls.systematic_sample([0.5, 0.5], 4, 0.5) == [0, 0, 1, 1]

    freqs, mags = jmls.magnitude_response(truth, 0)
    assert len(freqs) == 64 and all(m > 0 for m in mags)
    print("python smoke test passed")


if __name__ == "__main__":
    main()

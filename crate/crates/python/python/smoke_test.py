"""Smoke test for the chaos_uncertainty_py extension module."""

import json
import math
import tempfile
from pathlib import Path

import chaos_uncertainty_py as cu


def main():
    toda = cu.Model.toda()
    value, grad, hess = toda.potential([0.1, -0.2])
    assert abs(hess[0][1] - hess[1][0]) == 0.0
    assert toda.potential([0.0, 0.0])[0] == 0.0

    kepler = cu.Model.kepler(3.003489e-6)
    q, p = cu.periapsis_state(kepler.mass, 1.0, 0.5)
    lm, lp, kind = kepler.spectrum(q, kepler.energy(q, p), "lyapunov")
    r = math.hypot(*q)
    assert abs(lp - 8 * math.pi**2 / r**3) < 1e-9 * lp and kind == "unstable"

    orbit = cu.propagate_phase(kepler, q, p, 1e-4, 1.0)
    drift = max(abs(e - orbit["energy"][0]) for e in orbit["energy"]) / abs(orbit["energy"][0])
    assert drift < 1e-8, drift
    events = cu.apsis_events(kepler, q, p, 1e-4, 1.2)
    assert [e[2] for e in events[:2]] == ["aphelion", "perihelion"], events

    toy = cu.toy_deviation(5.0, 1e-3, 12.0)
    peak = max(abs(x) for x in toy["xi1"])
    assert 5.0 <= peak <= 30.0, peak

    t = [i * 1e-3 for i in range(2001)]
    intervals = cu.unstable_intervals(t, [1.0 - s for s in t])
    assert len(intervals) == 1 and abs(intervals[0]["product"] - 1.0) < 1e-3
    verdict = cu.uncertainty_verdict(t, [1.0 - s for s in t])
    assert not verdict["chaos_possible"]

    y0 = 0.15
    v = toda.potential([0.0, y0])[0]
    start = ([0.0, y0], [math.sqrt(2 * (0.1 - v)), 0.0])
    points = cu.poincare_section(toda, *start, 1e-3, 200.0)
    assert len(points) > 20
    coupled = cu.propagate_coupled(toda, *start, 1e-3, 50.0, indicator="gem")
    assert all(lp <= 1e-10 for lp in coupled["lambda_plus"])

    try:
        cu.Model.three_body(3e-6).potential([5.2, 0.0])
    except cu.DomainError:
        pass
    else:
        raise AssertionError("expected a collision error")
    try:
        cu.run_experiment(json.dumps({"kind": "celestial_run", "ecc": 2.0}))
    except cu.ConfigError:
        pass
    else:
        raise AssertionError("expected a config error")

    with tempfile.TemporaryDirectory() as tmp:
        out = cu.run_experiment(json.dumps({"kind": "toy_run", "delta_t": 0.1, "t_final": 10}), tmp)
        assert out["summary"]["max_norm_after_start"] <= 1.0
        header = (Path(tmp) / "toy_series.csv").read_text().splitlines()[0]
        assert header == "t,xi1,xi2,eta1,eta2,envelope", header
        manifest = json.loads((Path(tmp) / "manifest.json").read_text())
        assert manifest["unit_system"] == cu.UNIT_SYSTEM

    print("smoke test passed")


if __name__ == "__main__":
    main()

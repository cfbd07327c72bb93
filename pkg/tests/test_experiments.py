import json
import math

import numpy as np
import pytest

from anderson_lab.anderson_operator import build_operator
from anderson_lab.experiments import (
    ExperimentReport,
    Observable,
    _z,
    convergence_suite,
    invariance_test,
    law_preservation_test,
    tail_test,
    wick_theta_norms,
)
from anderson_lab.spectral_core import Mollifier, TorusGrid, enhanced_noise
from anderson_lab.wave_dynamics import PhasePoint, sample_initial_data

M = Mollifier(0.2)
SMALL_SUITE = dict(grid=28, k_max=6, T=0.1, dt=0.01, galerkin_ladder=(8,), dynamics_N=20,
                   resolvent_eps=(0.4, 0.2, 0.1), wick_eps=(0.4, 0.2, 0.1), wick_samples=3)


def test_z_score_edge_cases():
    assert _z(0.0, 0.0) == 0.0
    assert _z(1.0, 0.0) == math.inf and _z(-1.0, 0.0) == -math.inf
    assert _z(1.0, 0.5) == 2.0


def test_report_serialization():
    r = ExperimentReport("x", {"a": np.float64(1.5)}, [Observable("o", 1.0, 1.1, 0.1, 1.0, True),
                                                       Observable("p", 0, 0, 0, math.nan, False)],
                         0.25, 7, ["note"], {"arr": np.arange(3)})
    d = json.loads(r.to_json())
    assert d["verdict"] == "fail" and d["details"]["arr"] == [0, 1, 2]
    assert d["observables"][1]["z_score"] == "nan"
    md = r.to_markdown()
    assert "| o | 1 | 1.1 |" in md and "- note" in md
    assert list(r.observable_rows())[0] == ("o", 1.0, 1.1, 0.1, 1.0, True)


def test_invariance_at_time_zero_is_exact(small_op):
    r = invariance_test(small_op, M, 10, 0.0, 1000, 5)
    assert r.verdict
    assert all(o.z_score == 0.0 for o in r.observables)
    assert {"u_1^2", "V(u)", "|ut|^2", "blowups"} <= {o.name for o in r.observables}


@pytest.mark.parametrize("mode", ["importance", "mh"])
def test_invariance_short_flow(small_op, mode):
    r = invariance_test(small_op, M, 10, 0.2, 1000, 5, mode=mode)
    assert r.verdict
    assert r.config["dt"] * round(0.2 / r.config["dt"]) == pytest.approx(0.2)
    assert r.details["blowup_count"] == 0


def test_invariance_preconditions(small_op):
    with pytest.raises(ValueError):
        invariance_test(small_op, M, 10, 0.2, 999, 5)


def test_invariance_is_reproducible(small_op):
    a = invariance_test(small_op, M, 10, 0.1, 1000, 9)
    b = invariance_test(small_op, M, 10, 0.1, 1000, 9, batch=333)
    assert [o.after for o in a.observables] == pytest.approx([o.after for o in b.observables], rel=1e-12)


def test_law_preservation(small_op):
    r = law_preservation_test(small_op, 0.7, 2000, 3)
    assert r.verdict and len(r.observables) == 15
    r0 = law_preservation_test(small_op, 0.0, 100, 3)
    assert all(o.z_score == 0.0 for o in r0.observables)


def test_law_preservation_z_scores_are_calibrated(small_op):
    # under the linear flow the null holds exactly, so pooled z-scores are standard normal
    z = np.array([o.z_score for b in range(20)
                  for o in law_preservation_test(small_op, 0.7, 2000, 100 + b).observables])
    assert len(z) == 300
    assert abs(z.mean()) < 0.2
    assert 0.8 < z.std() < 1.2
    assert np.mean(np.abs(z) > 3) < 0.02


def test_wick_theta_norms_shape_and_positivity(small_op):
    pts = [sample_initial_data(small_op, 1, i) for i in range(4)]
    init = PhasePoint(np.stack([p.u for p in pts]), np.stack([p.ut for p in pts]))
    n = wick_theta_norms(init, small_op, M, 2, np.linspace(0, 1, 6), 10, 0.1)
    assert n.shape == (4,) and np.all(n > 0)


def test_tail_test_on_tiny_operator():
    s = build_operator(enhanced_noise(TorusGrid(12), 3, M), 2)
    r = tail_test(s, M, 10_000, seed_base=1, n_boot=50)
    assert r.verdict
    slope = r.observables[2]
    assert slope.before < 0 and slope.after < 0
    with pytest.raises(ValueError):
        tail_test(s, M, 9_999)


def test_convergence_suite_small():
    r = convergence_suite(SMALL_SUITE)
    assert r.verdict
    assert len(r.details["galerkin_N"]["distances"]) == 1
    assert r.details["galerkin_N"]["epsilon"] == pytest.approx(math.sqrt(math.pi / 8))
    for key in ("dynamics_eps", "resolvent_eps", "wick_eps"):
        d = r.details[key]["distances"]
        assert np.all(np.diff(d) < 0)
        assert r.details[key]["rate"] > 0


def test_convergence_suite_zero_noise_resolvent_vanishes():
    r = convergence_suite(dict(SMALL_SUITE, zero_noise=True))
    assert r.details["resolvent_eps"]["distances"] == [0.0, 0.0]
    assert next(o for o in r.observables if o.name == "resolvent_eps").passed


def test_convergence_suite_one_point_ladders_are_vacuous():
    r = convergence_suite(dict(SMALL_SUITE, resolvent_eps=(0.4, 0.2), wick_eps=(0.4, 0.2),
                               dynamics_eps=(0.4,)))
    assert all(len(r.details[k]["distances"]) == 1 for k in r.details)
    assert r.verdict

"""One pass/fail test per acceptance criterion.

Targets and tolerances are pinned here, independently of the runner, so a
loosened tolerance inside the package fails the test even when its own
check passes. Oracle targets come from ``oracles.FROZEN``.
"""
import numpy as np
import pytest

from weakkam import acceptance

import oracles

F = oracles.FROZEN
EDGE = F["c_plus(0)"]

# check name -> (target, tolerance); target None means an upper bound
PINNED = {
    1: {**{f"alpha({c:g})": (0.0, 5e-3) for c in (0.0, 0.5, -0.5, 1.0, -1.0, 1.2, -1.2)},
        "right flat edge": (EDGE, 5e-3), "left flat edge": (-EDGE, 5e-3)},
    2: {f"route spread at c={c:g}": (None, 5e-3) for c in (0, 1, 2, 3)},
    3: {"alpha(2)": (F["energy_of_class(2)"], 5e-3)},
    4: {"beta(0)": (0.0, 2e-3), "d beta(0) left": (-EDGE, 5e-3), "d beta(0) right": (EDGE, 5e-3),
        "beta(1/T(1))": (F["beta(1/period(1))"], 5e-3)},
    5: {"Phi_{0,0}(0,1/2)": (F["separatrix_action(0, 1/2)"], 1e-3),
        "triangle violation, 1000 triples": (None, 1e-6)},
    6: {"h(0,0)": (0.0, 1e-3), "h(1/2,1/2)": (2 * F["separatrix_action(0, 1/2)"], 5e-3)},
    7: {"strict gap Aubry->Mather at 4/pi": (None, 0.3)},
    8: {},
    9: {"fixed-point residual": (None, 1e-3), "alpha estimate": (0.0, 2e-3),
        "u(1/2) - u(0)": (F["separatrix_action(0, 1/2)"], 5e-3),
        "subsolution residual off kinks": (None, 2e-2)},
    10: {**{f"free1d alpha({c:g}) [{r}]": (0.5 * c * c, 1e-3) for c in (0.5, 1.0, 1.5)
            for r in ("critical-value", "inf-max-subsolution")},
         "free1d beta(0.5)": (0.125, 1e-3), "free1d beta(1)": (0.5, 1e-3),
         "free2d beta(0.5,0.25)": (0.15625, 1e-3),
         "free1d Mather |v - c|, c=0.7": (None, 0.02),
         "free2d Mather |v - c|, c=(0.625,0.3125)": (None, 0.02)},
    11: {"Hausdorff distance (x, p)": (None, 0.05)},
    12: {},
}

IDS = [(i, name) for i, name, _, _ in acceptance.CRITERIA]


@pytest.fixture(scope="module")
def settings():
    return acceptance.Settings()


def test_frozen_oracles_reproduce():
    got = oracles.recompute()
    for k, v in F.items():
        assert got[k] == pytest.approx(v, rel=1e-10, abs=1e-11), k


def test_runner_lists_every_criterion():
    assert [i for i, _ in IDS] == list(range(1, 13))


@pytest.mark.parametrize("cid,name", IDS, ids=[f"{i:02d}-{n}" for i, n in IDS])
def test_criterion(cid, name, settings):
    (res,) = acceptance.run([cid], settings)
    assert res.error is None, res.error
    checks = {c["name"]: c for c in res.checks}
    for key, (target, tol) in PINNED[cid].items():
        assert key in checks, f"missing check {key!r}"
        c = checks[key]
        assert c["tol"] == pytest.approx(tol), f"{key}: tolerance changed to {c['tol']}"
        if target is not None:
            assert c["target"] == pytest.approx(target, abs=1e-9), key
            assert abs(c["measured"] - target) <= tol, f"{key}: {c['measured']} vs {target}"
    failed = [f"{c['name']}: measured {c['measured']}, target {c['target']}" for c in res.checks if not c["pass"]]
    assert res.passed and not failed, "; ".join(failed)
    assert res.seconds < 300.0 or cid == 10

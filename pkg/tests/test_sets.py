import csv

import numpy as np
import pytest

from weakkam.duality import LPGrid
from weakkam.lagrangian import free_particle, pendulum
from weakkam.sets import (PhasePointSet, aubry_set, check_connectivity, check_graph_property,
                          check_inclusions, directed_hausdorff, energy_shell, hausdorff, kernel_tables,
                          mane_set, mather_set)


def pts(x, v, label="mane", step=1 / 8):
    x = np.asarray(x, float).reshape(-1, 1)
    v = np.asarray(v, float).reshape(-1, 1)
    return PhasePointSet(x, v, label, np.zeros(1), np.zeros(len(x)), {"x": step, "v": 0.01})


def test_hausdorff_on_the_torus():
    a = pts([0.0, 0.5], [0.0, 0.0])
    b = pts([0.95], [0.0])
    assert directed_hausdorff(b, a) == pytest.approx(0.05)
    assert hausdorff(a, b) == pytest.approx(0.45)


def test_graph_property_detects_two_velocities_over_one_point():
    assert check_graph_property(pts([0.1, 0.3], [1.0, 1.0]))["pass"]
    bad = check_graph_property(pts([0.1, 0.1], [1.0, -1.0]))
    assert not bad["pass"] and bad["violation"]["x"] == [0.1, 0.1]


def test_connectivity_counts_wrapping_components():
    assert check_connectivity(pts([0.875, 0.0, 0.125], [0, 0, 0]), 8)["components"] == 1
    assert check_connectivity(pts([0.0, 0.5], [0, 0]), 8)["components"] == 2


def test_energy_shell_velocities():
    v = energy_shell(pendulum(), np.array([0.5]), 0.0)
    assert sorted(np.ravel(v)) == pytest.approx([-2.0, 2.0])


def test_set_csv_round_trip(tmp_path):
    s = pts([0.1, 0.2], [1.0 / 3.0, 2.0])
    s.to_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0][:2] == ["x0", "v0"]
    assert float(rows[1][1]) == pytest.approx(1.0 / 3.0, rel=1e-11)


def test_free_particle_mather_set_is_the_graph_v_equals_c():
    m = mather_set(free_particle(1), 0.7, LPGrid(16, 129, 4.0, 8))
    assert len(m) > 0
    assert np.max(np.abs(m.v - 0.7)) <= m.tol["v"] + 1e-12


@pytest.fixture(scope="module")
def zero_class():
    p = pendulum()
    t = kernel_tables(p, 0.0, n=128)
    return p, t


def test_pendulum_sets_at_zero_class(zero_class):
    p, t = zero_class
    M = mather_set(p, 0.0, LPGrid(32, 65, 4.0, 16))
    A = aubry_set(p, 0.0, 0.0, nx=32, tables=t)
    N = mane_set(p, 0.0, 0.0, nx=32, tables=t)
    assert np.allclose(A.projection(), [0.0], atol=1 / 32)
    assert np.max(np.abs(M.v)) <= M.tol["v"]
    assert check_inclusions(M, A, N, 0.0)["pass"]
    # one static class: the homoclinics are not semi-static over long windows
    assert len(N) == len(A) == 1


def test_pendulum_sets_at_flat_edge():
    p = pendulum()
    c = 4 / np.pi
    t = kernel_tables(p, c, n=128)
    A = aubry_set(p, c, 0.0, nx=32, tables=t)
    M = mather_set(p, c, LPGrid(32, 65, 4.0, 16))
    assert len(A.projection()) == 32
    assert np.all(A.v >= 0.0)
    assert check_graph_property(A)["pass"]
    assert directed_hausdorff(A, M) >= 0.3

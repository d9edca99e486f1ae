import csv
import io

import numpy as np
import pytest

from agm.agmap import deform
from agm.paths import (ChartExitError, CurveSample, ag_defect, curve_derivatives, integrate_geodesic,
                       samples_to_csv)
from agm.space import ConnectionField, split

from conftest import random_connection


def zero(n):
    return ConnectionField(np.zeros((n,) * 3), n)


def test_flat_connection_gives_straight_lines():
    s = integrate_geodesic(zero(3), [0.1, 0.2, 0.3], [1.0, -0.5, 0.25], 1.0, 32)
    assert len(s) == 33
    np.testing.assert_allclose(s[-1].x, [1.1, -0.3, 0.55], atol=1e-15)
    np.testing.assert_allclose(s[16].lam, [1.0, -0.5, 0.25])


def test_torsion_only_connection_gives_straight_lines():
    L = ConnectionField.from_mapping(3, {"1,2,3": "x1", "1,3,2": "-x1", "2,1,3": "1", "2,3,1": "-1"})
    s = integrate_geodesic(L, [0.0, 0.0, 0.0], [0.3, 0.2, 0.1], 1.0, 32)
    np.testing.assert_allclose(s[-1].x, [0.3, 0.2, 0.1], atol=1e-15)


def test_torsion_does_not_affect_geodesics():
    L = random_connection(np.random.default_rng(21), 3)
    a = integrate_geodesic(L, [0.1, 0.0, -0.1], [0.2, 0.1, 0.3], 1.0, 64)
    b = integrate_geodesic(ConnectionField.from_field(split(L).sym), [0.1, 0.0, -0.1], [0.2, 0.1, 0.3], 1.0, 64)
    assert max(np.abs(np.subtract(p.x, q.x)).max() for p, q in zip(a, b)) <= 1e-12


def test_fourth_order_convergence():
    L = ConnectionField.from_mapping(2, {"1,1,1": "x2", "2,1,2": "x1*x2", "2,2,1": "x1*x2", "1,2,2": "1"})
    x0, l0 = [0.1, -0.2], [0.6, 0.4]
    ref = np.array(integrate_geodesic(L, x0, l0, 1.0, 1024)[-1].x)
    e1 = np.abs(np.array(integrate_geodesic(L, x0, l0, 1.0, 32)[-1].x) - ref).max()
    e2 = np.abs(np.array(integrate_geodesic(L, x0, l0, 1.0, 64)[-1].x) - ref).max()
    assert 12 < e1 / e2 < 20


def test_argument_checks():
    with pytest.raises(ValueError):
        integrate_geodesic(zero(2), [0, 0], [1, 0], 1.0, 8)
    with pytest.raises(ValueError):
        integrate_geodesic(zero(2), [0, 0], [0, 0], 1.0, 32)
    with pytest.raises(ValueError):
        CurveSample(0.0, (0.0, 0.0), (0.0, 0.0))


def test_chart_exit_reports_time():
    with pytest.raises(ChartExitError) as info:
        integrate_geodesic(zero(2), [0.0, 0.0], [1.9, 0.0], 1.0, 100, bounds=[(-1, 1), (-1, 1)])
    assert info.value.t == pytest.approx(0.53)
    assert info.value.x[0] > 1.0


def test_defect_trivial_cases():
    s = integrate_geodesic(zero(3), [0.0, 0.1, 0.2], [0.3, 0.1, -0.2], 1.0, 64)
    assert np.abs(ag_defect(zero(3), s)).max() == 0.0
    L = random_connection(np.random.default_rng(2), 3)
    g = integrate_geodesic(L, [0.0, 0.1, 0.2], [0.3, 0.1, -0.2], 1.0, 256)
    # a geodesic measured in its own space: lam1 vanishes, so the span holds
    assert ag_defect(L, g).max() <= 1e-10
    assert ag_defect(zero(2), integrate_geodesic(zero(2), [0, 0], [1, 1], 1.0, 16)) is None


@pytest.mark.parametrize("case", [(3, 1), (4, -1), (4, 1)])
def test_geodesics_become_almost_geodesic(gen_cache, case):
    L, inst = gen_cache(*case)
    n = case[0]
    s = integrate_geodesic(L, [0.1] * n, [0.3, -0.2, 0.25, 0.1][:n], 1.0, 512)
    d = ag_defect(deform(L, inst), s)
    assert d[1:-1].max() <= 1e-6


def test_defect_detects_a_non_pi2_target(gen_cache):
    L, _ = gen_cache(3, 1)
    s = integrate_geodesic(L, [0.1] * 3, [0.3, -0.2, 0.25], 1.0, 512)
    other = L + random_connection(np.random.default_rng(6), 3)
    assert ag_defect(other, s)[1:-1].max() > 1e-3


def test_defect_is_scale_invariant(gen_cache):
    L, inst = gen_cache(3, 1)
    Lb = deform(L, inst) + random_connection(np.random.default_rng(1), 3)
    s = integrate_geodesic(L, [0.1] * 3, [0.3, -0.2, 0.25], 1.0, 128)
    # rescale the tangent by 2 over the same point set: t -> t/2
    s2 = [CurveSample(p.t / 2, p.x, tuple(2 * np.array(p.lam))) for p in s]
    np.testing.assert_allclose(ag_defect(Lb, s2), ag_defect(Lb, s), atol=1e-9)


def test_theta_two_uses_the_other_slot():
    # constant S plus constant torsion along a straight line
    L = ConnectionField.from_mapping(3, {"1,1,2": "0.5", "1,2,1": "0.5", "2,3,3": "1",
                                         "1,2,3": "1", "1,3,2": "-1"})
    s = integrate_geodesic(zero(3), [0.0] * 3, [0.1, 0.2, 0.3], 1.0, 16)
    lam, l1a, l2a = curve_derivatives(L, s, 1)
    _, l1b, l2b = curve_derivatives(L, s, 2)
    Lv = L.values([0.0, 0.0, 0.0])
    np.testing.assert_allclose(l1a, l1b, atol=1e-13)
    np.testing.assert_allclose(l1a[5], np.einsum("iab,a,b->i", Lv, lam[5], lam[5]), atol=1e-13)
    T = 0.5 * (Lv - np.swapaxes(Lv, -1, -2))
    np.testing.assert_allclose(l2a - l2b, 2 * np.einsum("iak,pa,pk->pi", T, l1a, lam), atol=1e-12)
    with pytest.raises(ValueError):
        curve_derivatives(L, s, 3)


def test_csv_export():
    s = integrate_geodesic(zero(3), [0.0] * 3, [0.1, 0.2, 0.3], 1.0, 16)
    text = samples_to_csv(s, np.zeros(len(s)))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t", "x1", "x2", "x3", "lambda1", "lambda2", "lambda3", "defect"]
    assert len(rows) == 18
    assert float(rows[-1][1]) == pytest.approx(0.1)

import math

import numpy as np
import pytest

from dudley.errors import InsufficientCloud, InvalidParams, SingularPair
from dudley.graded import axial_cone, dilate, graded_dimension
from dudley.green import (OccupationHistogram, PhiTable, SliceSpec, cone_hit, green_estimate,
                          lp_capacity, q_functional, slice_cloud, theorem1_check, wiener_sum)
from dudley.tangent import OccupationAccumulator, batch_tangent, phi_estimate
from dudley.driver import iter_chunks

PROBE = dilate(0.3, np.array([0, 0, 1.0, 0, 0, 0]), 2)
WIDTHS = (0.5, 0.25, 0.25)
# regression value for seed 0, N = 2000, h = 0.01
GOLDEN_G = 80385.21679734913


def test_green_golden_and_tangent_agreement():
    row = green_estimate(None, PROBE, 1.0, 2000, 0.01, 0, widths=WIDTHS)[0]
    assert row.inside and row.hits > 100
    assert math.isclose(row.G, GOLDEN_G, rel_tol=1e-9)
    Q = graded_dimension(2)
    ph = phi_estimate(np.array([0, 0, 1.0, 0, 0, 0]), 2000, 0, widths=WIDTHS, stream=1)[0]
    tg = ph.phi * 0.3 ** (2 - Q)
    assert abs(row.G - tg) < 4 * math.hypot(row.stderr, ph.stderr * 0.3 ** (2 - Q))


def test_green_outside_ball_and_zero_probe():
    row = green_estimate(None, dilate(2.0, np.array([0, 0, 1.0, 0, 0, 0]), 2), 1.0, 10, 0.01, 0)[0]
    assert not row.inside and row.G == 0.0 and row.upper == 0.0
    with pytest.raises(InvalidParams):
        green_estimate(None, np.zeros(6), 1.0, 10, 0.01, 0)


def test_histogram_merge():
    c = np.array([[0, 0, 0.3, 0, 0, 0]])
    hw = np.array([0.3, 0.3, 0.2, 0.2, 0.1, 0.1])
    parts = []
    whole = OccupationAccumulator(c, hw)
    for b in iter_chunks(3, 0.5, 0.01, 2, 512, 2):
        a = OccupationAccumulator(c, hw)
        U = batch_tangent(b)
        a.add(U, 0.01)
        whole.add(U, 0.01)
        parts.append(OccupationHistogram.from_accumulator(a, 1.0))
    m = parts[0]
    for p in parts[1:]:
        m = m.merge(p)
    ref = OccupationHistogram.from_accumulator(whole, 1.0)
    assert m.N == ref.N == 512
    np.testing.assert_allclose(m.total, ref.total, rtol=1e-9)
    np.testing.assert_allclose(m.density()[0], ref.density()[0], rtol=1e-9)
    other = OccupationHistogram.from_accumulator(OccupationAccumulator(c + 1, hw), 1.0)
    with pytest.raises(InvalidParams):
        m.merge(other)


def _ring(M, r=0.5):
    a = np.linspace(0, 2 * np.pi, M, endpoint=False)
    H = np.zeros((M, 6))
    H[:, 0], H[:, 1] = r * np.cos(a), r * np.sin(a)
    return H


def test_q_functional_scaling_and_edge_cases():
    phi = lambda b: np.ones(len(np.atleast_2d(b)))
    H = _ring(12)
    bd = np.ones(12, dtype=bool)
    q1 = q_functional(H, bd, phi, 1.0)
    # coarse and fine masses: the ratio is invariant under scaling m
    assert math.isclose(q_functional(H, bd, phi, 5.0), q1, rel_tol=1e-12)
    # dilating the cloud by a scales pair distances by a, potentials by a^(2-Q)
    Q = graded_dimension(2)
    q2 = q_functional(dilate(0.5, H, 2), bd, phi, 1.0)
    assert math.isclose(q2, q1 * 0.5 ** (Q - 2), rel_tol=1e-9)
    assert q_functional(H, bd, lambda b: np.zeros(len(b)), 1.0) == math.inf
    with pytest.raises(SingularPair):
        q_functional(np.vstack([H[:2], H[:1]]), np.ones(3, dtype=bool), phi, 1.0)


def test_phi_table_nearest():
    t = PhiTable(np.eye(6)[:2], np.array([1.0, 2.0]))
    np.testing.assert_array_equal(t(np.array([[0.9, 0.1, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0]])), [1, 2])


def test_lp_capacity_monotone():
    rng = np.random.default_rng(0)
    G = rng.uniform(0.1, 1.0, (6, 8))
    full = lp_capacity(G, 0.5)
    sup = np.ones(8, dtype=bool)
    prev = full
    for k in range(7, 0, -1):
        sup[k] = False
        c = lp_capacity(G, 0.5, sup)
        assert c <= prev + 1e-12
        prev = c
    assert lp_capacity(G, 0.5, np.zeros(8, dtype=bool)) == 0.0
    G[:, 3] = 0
    with pytest.raises(InsufficientCloud):
        lp_capacity(G, 0.5)


def test_wiener_verdicts():
    ns = list(range(1, 21))
    caps = [0.5 ** (n * 4) for n in ns]
    assert wiener_sum(ns, caps, 0.5, 6, "classical")["verdict"] == "diverges"
    assert wiener_sum(ns, caps, 0.5, 6, "inverse")["verdict"] == "converges"
    with pytest.raises(InvalidParams):
        wiener_sum(ns, caps, 0.5, 6, "other")


def test_cones():
    fut = cone_hit(axial_cone(2, 0.3), [0.01], 200, [1e-4], 0)
    assert fut[0]["p_hat"] > 0.9
    past = cone_hit(axial_cone(2, 0.3, past=True), [0.01, 0.1], 200, [1e-3], 0)
    assert all(r["p_hat"] == 0.0 for r in past)


def test_slice_cloud_and_spec():
    cone = axial_cone(2, 0.3)
    cl = slice_cloud(cone, 0.5, 5)
    assert cl.size > 0
    idx = cl.cell_index(cl.centers)
    np.testing.assert_array_equal(idx, np.arange(cl.size))
    assert cl.cell_index(np.full((1, 6), np.nan))[0] == -1
    sp = SliceSpec(cone, 0.5, 1, 3)
    assert sp.ns == [1, 2, 3]
    with pytest.raises(InvalidParams):
        SliceSpec(cone, 1.5, 1, 3)


def test_theorem1_small():
    th = np.array([0, 0, 1.0, 0, 0, 0])
    r = theorem1_check(th, [0.5, 0.25], 400, 0, widths=WIDTHS, replications=2)
    assert len(r["replications"]) == 2
    for rep in r["replications"]:
        assert rep["phi"] > 0
        for g in rep["rungs"]:
            assert g["abs_diff"] < 6 * g["combined_se"] + 1e-12
    with pytest.raises(InvalidParams):
        theorem1_check(0.5 * th, [0.5], 10, 0)

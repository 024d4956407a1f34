import numpy as np
import pytest

from dudley.driver import DriverPath, chen_strichartz_c, iter_chunks, sample_path, signature
from dudley.errors import InvalidParams
from dudley.graded import dilate, graded_dimension
from dudley.tangent import (OccupationAccumulator, batch_tangent, box_volume, in_boxes,
                            phi_estimate, scaling_law_test, slot_half_widths, tangent_history,
                            tangent_simulate, taylor_remainder_test, untied_step)

# Fine-grid oracle (tests/oracles.py, 1e5 paths, 1000 steps): E[A(1)^2] = 0.2512 +- 0.0016
# and E[u10(1)^2] = 0.08340 +- 0.00037; closed forms 1/4 and 1/12.
LEVY_SECOND_MOMENT = 0.25
U10_SECOND_MOMENT = 1.0 / 12.0


def test_zero_driver():
    states = tangent_simulate(DriverPath.zero(1.0, 0.25, 2))
    assert [s.t for s in states] == [0.0, 0.25, 0.5, 0.75, 1.0]
    for s in states:
        np.testing.assert_array_equal(s.u.coords, [0, 0, s.t, 0, 0, 0])


def test_time_coordinate_exact():
    b = next(iter_chunks(0, 1.0, 0.01, 3, 64, 2))
    U = batch_tangent(b)
    assert np.all(U[..., 3] == np.arange(1, 101) * 0.01)


@pytest.mark.parametrize("d", [2, 3])
def test_assembly_from_chen_strichartz(d):
    p = sample_path(7, 1.0, 0.05, d, 8)
    U = tangent_history(p.dB, p.area, p.sdb, p.bds, p.h)
    for k in (3, 9, 19):
        t = (k + 1) * p.h
        sig = signature(p, t)
        u = U[k]
        for i in range(1, d + 1):
            assert np.isclose(u[i - 1], chen_strichartz_c([i], p, t, sig), atol=1e-12)
        assert np.isclose(u[d], chen_strichartz_c([0], p, t, sig), atol=1e-12)
        q = d + 1
        for i in range(1, d + 1):
            for j in range(i + 1, d + 1):
                c = chen_strichartz_c([i, j], p, t, sig) - chen_strichartz_c([j, i], p, t, sig)
                assert np.isclose(u[q], c, atol=1e-12)
                q += 1
        for i in range(1, d + 1):
            c = chen_strichartz_c([i, 0], p, t, sig) - chen_strichartz_c([0, i], p, t, sig)
            assert np.isclose(u[q + i - 1], c, atol=1e-12)


def test_second_moments_small():
    m12 = m10 = 0.0
    n = 0
    for b in iter_chunks(2, 1.0, 0.02, 2, 20000, 8):
        U = batch_tangent(b)[:, -1]
        m12 += np.sum(U[:, 3] ** 2)
        m10 += np.sum(U[:, 4] ** 2)
        n += len(U)
    assert abs(m12 / n / LEVY_SECOND_MOMENT - 1) < 0.05
    assert abs(m10 / n / U10_SECOND_MOMENT - 1) < 0.05


def test_scaling_law_single_trial():
    r = scaling_law_test(0.5, 1.0, 4000, 3)
    assert r["coords"]["u0"]["exact"]
    assert all(v["pass"] for k, v in r["coords"].items() if k != "u0")
    with pytest.raises(InvalidParams):
        scaling_law_test(1.5, 1.0, 10, 0)


def test_slot_widths_and_untied_step():
    np.testing.assert_array_equal(slot_half_widths(2, (0.2, 0.1, 0.05)), [.2, .2, .1, .1, .05, .05])
    h = untied_step(0.01, [0.75, 1.25])
    assert h < 0.01
    for e in (0.75, 1.25):
        assert abs(e / h - round(e / h)) >= 0.25
    with pytest.raises(InvalidParams):
        slot_half_widths(2, (0.2, 0.1))


def test_phi_null_region_and_mass_conservation():
    rows = phi_estimate(np.array([[0, 0, -0.5, 0, 0, 0]]), 500, 0, widths=(0.2, 0.1, 0.05),
                        scale_to_norm=False)
    assert rows[0].phi == 0.0 and rows[0].hits == 0 and rows[0].upper > 0
    # disjoint cover of [-0.4, 0.4]^2 x [0.1, 0.5] x R^3 by four boxes
    hw = np.array([0.2, 0.4, 0.1, 10.0, 10.0, 10.0])
    centers = np.array([[x, 0, t, 0, 0, 0] for x in (-0.2, 0.2) for t in (0.2, 0.4)])
    acc = OccupationAccumulator(centers, hw)
    union = OccupationAccumulator(np.array([[0, 0, 0.3, 0, 0, 0]]),
                                  np.array([0.4, 0.4, 0.2, 10, 10, 10]))
    for b in iter_chunks(1, 0.6, 0.0137, 2, 1000, 2):
        U = batch_tangent(b)
        acc.add(U, b.h)
        union.add(U, b.h)
    # grid points sitting exactly on shared faces would be counted twice
    m, _ = acc.mean_time()
    mu, _ = union.mean_time()
    assert abs(m.sum() - mu[0]) < 1e-12


def test_phi_rescaling_consistency():
    Q = graded_dimension(2)
    probe = np.array([0.2, 0.0, 0.8, 0.0, 0.0, 0.0])
    big = phi_estimate(probe, 20000, 4, h=0.01, stream=0)[0]
    small = phi_estimate(dilate(0.5, probe, 2), 20000, 4, h=0.0025, stream=1)[0]
    a, sa = small.phi * 0.5 ** (Q - 2), small.stderr * 0.5 ** (Q - 2)
    assert abs(a - big.phi) < 3 * np.hypot(sa, big.stderr)


def test_accumulator_merge_order():
    c = np.array([[0, 0, 0.3, 0, 0, 0]])
    hw = np.array([0.3, 0.3, 0.2, 0.2, 0.1, 0.1])
    batches = list(iter_chunks(5, 0.5, 0.01, 2, 768, 2))
    a = OccupationAccumulator(c, hw)
    b = OccupationAccumulator(c, hw)
    for x in batches:
        a.add(batch_tangent(x), 0.01)
    for x in reversed(batches):
        b.add(batch_tangent(x), 0.01)
    np.testing.assert_allclose(a.total, b.total, rtol=1e-9)
    assert a.N == b.N == 768


def test_in_boxes_and_volume():
    assert in_boxes(np.zeros((1, 6)), np.zeros((1, 6)), np.full((1, 6), 0.1)).all()
    assert box_volume(np.full(6, 0.5)) == 1.0


def test_taylor_short_time_and_ordering():
    r = taylor_remainder_test([1.0], 0.01, 200, 0, h=0.001)
    assert r["rows"][0]["q90"] < 0.05
    with pytest.raises(InvalidParams):
        taylor_remainder_test([0.1, 0.2], 1.0, 10, 0)

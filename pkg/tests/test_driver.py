import io
import itertools

import numpy as np
import pytest

import oracles as O
from dudley.driver import (CHUNK, DriverPath, MultiIndex, accumulated_area, chen_strichartz_c,
                           coarsen, descent_count, dump_path, generate_chunk, iter_chunks,
                           iterated_integral, load_path, n_steps_for, pair_index,
                           path_from_fine, sample_path, signature, step_records)
from dudley.errors import InvalidParams, UnsupportedOrder


def test_pair_index():
    assert pair_index(3) == [(0, 1), (0, 2), (1, 2)]


def test_multi_index_order():
    assert MultiIndex((1, 0)).order == 3
    assert MultiIndex((1, 2)).order == 2
    assert MultiIndex((0,)).length == 1
    with pytest.raises(InvalidParams):
        MultiIndex(())


def test_descent_count_enumeration():
    for l in (2, 3):
        for p in itertools.permutations(range(1, l + 1)):
            assert descent_count(p) == O.descents(p)
    with pytest.raises(InvalidParams):
        descent_count([1, 1])


def test_streams_deterministic_and_indexed():
    a = list(iter_chunks(3, 0.1, 0.01, 2, 300, 4))
    b = list(iter_chunks(3, 0.1, 0.01, 2, 300, 4))
    assert sum(x.size for x in a) == 300
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.dB, y.dB)
    p = sample_path(3, 0.1, 0.01, 2, 4, index=CHUNK + 5)
    np.testing.assert_array_equal(p.dB, a[1].dB[5])
    other = next(iter_chunks(3, 0.1, 0.01, 2, 10, 4, stream=1))
    assert not np.allclose(other.dB, a[0].dB[:10])


def test_step_records_against_fine_grid():
    rng = np.random.default_rng(0)
    fine = rng.standard_normal((3, 5, 7, 2)) * 0.1
    dB, area, sdb, bds = step_records(fine, 0.02)
    for p in range(3):
        for k in range(5):
            f = fine[p, k]
            W = np.vstack([np.zeros(2), np.cumsum(f, axis=0)])
            np.testing.assert_allclose(dB[p, k], W[-1])
            ref = O.fine_levy_area(W[None], f[None])[0]
            assert np.isclose(area[p, k, 0], ref, atol=1e-15)
            dt = 0.02 / 7
            tm = (np.arange(7) + 0.5) * dt
            np.testing.assert_allclose(sdb[p, k], (tm[:, None] * f).sum(0), atol=1e-15)
            np.testing.assert_allclose(bds[p, k], (0.5 * (W[:-1] + W[1:])).sum(0) * dt, atol=1e-15)


def test_levy_area_second_moment():
    acc, n = 0.0, 0
    for b in iter_chunks(1, 1.0, 0.05, 2, 20000, 8):
        acc += np.sum(accumulated_area(b.dB, b.area)[:, -1] ** 2)
        n += b.size
    K = 20 * 8
    assert abs(acc / n / (0.25 * (1 - 1 / K)) - 1) < 0.03


def test_shuffle_identities():
    p = sample_path(2, 0.5, 0.05, 2, 8)
    S1, S2, S3 = sig = signature(p, 0.5)
    for i, j in itertools.product(range(3), repeat=2):
        assert np.isclose(S2[i, j] + S2[j, i], S1[i] * S1[j], atol=1e-13)
    for i, j, k in itertools.product(range(3), repeat=3):
        lhs = S1[i] * S2[j, k]
        rhs = S3[i, j, k] + S3[j, i, k] + S3[j, k, i]
        assert np.isclose(lhs, rhs, atol=1e-13)
    assert iterated_integral([0], sig) == pytest.approx(0.5)
    with pytest.raises(UnsupportedOrder):
        iterated_integral([1, 1, 1, 1], sig)


def test_chen_strichartz_weights_and_values():
    p = sample_path(4, 1.0, 0.1, 2, 8)
    sig = signature(p, 1.0)
    for J in ([1, 2], [2, 1], [1, 0], [1, 2, 1]):
        w = O.strichartz_weights(len(J))
        ref = 0.0
        for perm, c in w.items():
            inv = [0] * len(J)
            for pos, v in enumerate(perm):
                inv[v - 1] = pos
            ref += c * iterated_integral([J[inv[k]] for k in range(len(J))], sig)
        assert np.isclose(chen_strichartz_c(J, p, 1.0, sig), ref, atol=1e-14)
    A = accumulated_area(p.dB, p.area)[-1]
    assert np.isclose(chen_strichartz_c([1, 2], p, 1.0, sig), A / 2, atol=1e-13)
    assert np.isclose(chen_strichartz_c([0], p, 1.0, sig), 1.0)
    with pytest.raises(UnsupportedOrder):
        chen_strichartz_c([1, 0, 0], p, 1.0)


def test_coarsen_preserves_path():
    p = sample_path(5, 0.4, 0.01, 3, 4)
    q = coarsen(p, 4)
    assert q.n_steps == p.n_steps // 4 and q.s == 16
    np.testing.assert_allclose(q.dB.sum(0), p.dB.sum(0), atol=1e-14)
    for pair in range(3):
        a = accumulated_area(p.dB, p.area, pair)[-1]
        b = accumulated_area(q.dB, q.area, pair)[-1]
        assert np.isclose(a, b, atol=1e-14)
    with pytest.raises(InvalidParams):
        coarsen(p, 3)


def test_dump_round_trip():
    p = sample_path(6, 0.1, 0.01, 2, 3, index=7)
    buf = io.BytesIO()
    dump_path(p, buf)
    buf.seek(0)
    q = load_path(buf)
    assert (q.seed, q.T, q.h, q.m, q.s, q.index) == (6, p.T, 0.01, 2, 3, 7)
    for a in ("dB", "area", "sdb", "bds", "fine"):
        np.testing.assert_array_equal(getattr(q, a), getattr(p, a))
    with pytest.raises(InvalidParams):
        load_path(io.BytesIO(b"XXXX" + bytes(60)))


def test_zero_driver_and_validation():
    z = DriverPath.zero(1.0, 0.1, 2)
    assert z.n_steps == 10 and not z.dB.any()
    assert n_steps_for(1.0, 0.3) == 4
    with pytest.raises(InvalidParams):
        generate_chunk(0, 1.0, -0.1, 2)
    q = path_from_fine(np.zeros((4, 2, 2)), 0.25)
    assert q.T == 1.0

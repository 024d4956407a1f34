"""Compiled inner loops.

Everything here works on plain float64 arrays: group elements are
``(d+2, d+2)`` matrices and algebra elements are flat vectors in the
canonical slot order ``(u_1..u_d, u_0, u_ij (i<j lex), u_10..u_d0)``.
No function in this module allocates inside the per-step loops; each path
gets its own scratch block.
"""

import numpy as np
from numba import config, njit, prange

# the TBB layer shipped with some wheels is too old and only emits warnings
config.THREADING_LAYER = "omp"

# ||X - I||_1 threshold below which the Gregory series is used directly.
_LOG_SQRT_THRESHOLD = 0.3
_MAX_SQRT = 40


@njit(cache=True)
def n_slots(d):
    return 2 * d + 1 + d * (d - 1) // 2


@njit(cache=True)
def _norm1(a):
    n = a.shape[0]
    best = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(a[i, j])
        if s > best:
            best = s
    return best


# d = 2 is the hot case; the unrolled product is about 2.5x faster
@njit(cache=True)
def _matmul4(a, b, out):
    a00, a01, a02, a03 = a[0, 0], a[0, 1], a[0, 2], a[0, 3]
    a10, a11, a12, a13 = a[1, 0], a[1, 1], a[1, 2], a[1, 3]
    a20, a21, a22, a23 = a[2, 0], a[2, 1], a[2, 2], a[2, 3]
    a30, a31, a32, a33 = a[3, 0], a[3, 1], a[3, 2], a[3, 3]
    b00, b01, b02, b03 = b[0, 0], b[0, 1], b[0, 2], b[0, 3]
    b10, b11, b12, b13 = b[1, 0], b[1, 1], b[1, 2], b[1, 3]
    b20, b21, b22, b23 = b[2, 0], b[2, 1], b[2, 2], b[2, 3]
    b30, b31, b32, b33 = b[3, 0], b[3, 1], b[3, 2], b[3, 3]
    out[0, 0] = a00 * b00 + a01 * b10 + a02 * b20 + a03 * b30
    out[0, 1] = a00 * b01 + a01 * b11 + a02 * b21 + a03 * b31
    out[0, 2] = a00 * b02 + a01 * b12 + a02 * b22 + a03 * b32
    out[0, 3] = a00 * b03 + a01 * b13 + a02 * b23 + a03 * b33
    out[1, 0] = a10 * b00 + a11 * b10 + a12 * b20 + a13 * b30
    out[1, 1] = a10 * b01 + a11 * b11 + a12 * b21 + a13 * b31
    out[1, 2] = a10 * b02 + a11 * b12 + a12 * b22 + a13 * b32
    out[1, 3] = a10 * b03 + a11 * b13 + a12 * b23 + a13 * b33
    out[2, 0] = a20 * b00 + a21 * b10 + a22 * b20 + a23 * b30
    out[2, 1] = a20 * b01 + a21 * b11 + a22 * b21 + a23 * b31
    out[2, 2] = a20 * b02 + a21 * b12 + a22 * b22 + a23 * b32
    out[2, 3] = a20 * b03 + a21 * b13 + a22 * b23 + a23 * b33
    out[3, 0] = a30 * b00 + a31 * b10 + a32 * b20 + a33 * b30
    out[3, 1] = a30 * b01 + a31 * b11 + a32 * b21 + a33 * b31
    out[3, 2] = a30 * b02 + a31 * b12 + a32 * b22 + a33 * b32
    out[3, 3] = a30 * b03 + a31 * b13 + a32 * b23 + a33 * b33


@njit(cache=True)
def _matmul(a, b, out):
    n = a.shape[0]
    if n == 4:
        _matmul4(a, b, out)
        return
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += a[i, k] * b[k, j]
            out[i, j] = s


@njit(cache=True)
def _copy(src, dst):
    n = src.shape[0]
    for i in range(n):
        for j in range(n):
            dst[i, j] = src[i, j]


@njit(cache=True)
def _set_eye(a):
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            a[i, j] = 1.0 if i == j else 0.0


@njit(cache=True)
def _inv(a, out, work):
    """Gauss-Jordan with partial pivoting. Returns False on a zero pivot."""
    n = a.shape[0]
    _copy(a, work)
    _set_eye(out)
    for c in range(n):
        p = c
        best = abs(work[c, c])
        for r in range(c + 1, n):
            v = abs(work[r, c])
            if v > best:
                best = v
                p = r
        if best == 0.0:
            return False
        if p != c:
            for k in range(n):
                t = work[c, k]
                work[c, k] = work[p, k]
                work[p, k] = t
                t = out[c, k]
                out[c, k] = out[p, k]
                out[p, k] = t
        piv = 1.0 / work[c, c]
        for k in range(n):
            work[c, k] *= piv
            out[c, k] *= piv
        for r in range(n):
            if r != c:
                f = work[r, c]
                if f != 0.0:
                    for k in range(n):
                        work[r, k] -= f * work[c, k]
                        out[r, k] -= f * out[c, k]
    return True


@njit(cache=True)
def _poly_ps(A, c, deg, out, w):
    """out = sum_{k<=deg} c[k] A^k by Paterson-Stockmeyer with blocks of 4.

    Scratch w: (>=6, n, n); w[0..3] receive I, A, A^2, A^3 and w[4] A^4.
    """
    n = A.shape[0]
    _set_eye(w[0])
    _copy(A, w[1])
    _matmul(A, A, w[2])
    _matmul(w[2], A, w[3])
    A4 = w[4]
    tmp = w[5]
    J = deg // 4
    if J > 0:
        _matmul(w[2], w[2], A4)
    # out = B_J
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for r in range(4):
                k = 4 * J + r
                if k <= deg:
                    acc += c[k] * w[r, i, j]
            out[i, j] = acc
    for blk in range(J - 1, -1, -1):
        _matmul(out, A4, tmp)
        for i in range(n):
            for j in range(n):
                acc = tmp[i, j]
                for r in range(4):
                    acc += c[4 * blk + r] * w[r, i, j]
                out[i, j] = acc


_EXP_COEF = np.cumprod(np.concatenate(([1.0], 1.0 / np.arange(1, 31))))
_GREGORY_COEF = 1.0 / (2.0 * np.arange(61) + 1.0)


@njit(cache=True)
def expm_into(A, out, w):
    """exp(A) by scaling and squaring of a Taylor polynomial.

    The degree is the smallest with truncation error below 1e-17 relative.
    Scratch w: (>=6, n, n).
    """
    n = A.shape[0]
    nrm = _norm1(A)
    s = 0
    if nrm > 0.5:
        s = int(np.ceil(np.log2(nrm / 0.5)))
    scale = 2.0 ** (-s)
    x = nrm * scale
    deg = 1
    term = x
    while deg < 24:
        term *= x / (deg + 1)
        if term <= 1e-17:
            break
        deg += 1
    B = w[6]
    for i in range(n):
        for j in range(n):
            B[i, j] = A[i, j] * scale
    _poly_ps(B, _EXP_COEF, deg, out, w)
    tmp = w[5]
    for _ in range(s):
        _matmul(out, out, tmp)
        _copy(tmp, out)


@njit(cache=True)
def _sqrtm_db(X, w):
    """Denman-Beavers square root, in place on X. Scratch w: (>=5, n, n)."""
    n = X.shape[0]
    Y = w[0]
    Z = w[1]
    Yi = w[2]
    Zi = w[3]
    work = w[4]
    _copy(X, Y)
    _set_eye(Z)
    for _ in range(80):
        if not _inv(Y, Yi, work):
            return False
        if not _inv(Z, Zi, work):
            return False
        diff = 0.0
        nrm = 0.0
        for i in range(n):
            for j in range(n):
                yn = 0.5 * (Y[i, j] + Zi[i, j])
                diff += abs(yn - Y[i, j])
                nrm += abs(yn)
                Y[i, j] = yn
                Z[i, j] = 0.5 * (Z[i, j] + Yi[i, j])
        if not np.isfinite(diff):
            return False
        if diff <= 1e-15 * nrm:
            _copy(Y, X)
            return True
    return False


@njit(cache=True)
def logm_into(M, out, w):
    """Principal logarithm by inverse scaling and squaring.

    Square roots (Denman-Beavers) until ||X - I||_1 <= 0.3, then the Gregory
    series 2 artanh((X - I)(X + I)^-1). Scratch w: (>=10, n, n).
    Returns False when a square root or the series fails to converge.
    """
    n = M.shape[0]
    X = w[5]
    _copy(M, X)
    k = 0
    while True:
        dist = 0.0
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += abs(X[i, j] - (1.0 if i == j else 0.0))
            if s > dist:
                dist = s
        if not np.isfinite(dist):
            return False
        if dist <= _LOG_SQRT_THRESHOLD:
            break
        if k >= _MAX_SQRT:
            return False
        if not _sqrtm_db(X, w):
            return False
        k += 1
    num = w[0]
    den = w[1]
    deni = w[2]
    for i in range(n):
        for j in range(n):
            e = 1.0 if i == j else 0.0
            num[i, j] = X[i, j] - e
            den[i, j] = X[i, j] + e
    if not _inv(den, deni, w[3]):
        return False
    Z = w[7]
    Z2 = w[8]
    _matmul(num, deni, Z)
    _matmul(Z, Z, Z2)
    rho = _norm1(Z2)
    if not rho < 0.5:
        return False
    # log X = 2 Z sum_j Z2^j / (2j + 1)
    J = 0
    term = 1.0
    while J < 60:
        term *= rho
        if term / (2 * J + 3) <= 1e-17:
            break
        J += 1
    P = w[9]
    _poly_ps(Z2, _GREGORY_COEF, J, P, w)
    _matmul(Z, P, out)
    f = 2.0 ** (k + 1)
    for a in range(n):
        for b in range(n):
            out[a, b] *= f
    return True


@njit(cache=True)
def coords_to_matrix(u, d, out):
    D = d + 2
    for i in range(D):
        for j in range(D):
            out[i, j] = 0.0
    for i in range(d):
        out[0, i + 1] = u[i]
        out[i + 1, 0] = u[i]
    out[0, d + 1] = u[d]
    k = d + 1
    for i in range(d):
        for j in range(i + 1, d):
            out[i + 1, j + 1] = u[k]
            out[j + 1, i + 1] = -u[k]
            k += 1
    for i in range(d):
        out[i + 1, d + 1] = u[k + i]


@njit(cache=True)
def matrix_to_coords(L, d, out):
    for i in range(d):
        out[i] = 0.5 * (L[0, i + 1] + L[i + 1, 0])
    out[d] = L[0, d + 1]
    k = d + 1
    for i in range(d):
        for j in range(i + 1, d):
            out[k] = 0.5 * (L[i + 1, j + 1] - L[j + 1, i + 1])
            k += 1
    for i in range(d):
        out[k + i] = L[i + 1, d + 1]


@njit(cache=True)
def hnorm_scalar(u, d):
    Q = d * d + 3 * d + 2
    s1 = 0.0
    for i in range(d):
        s1 += u[i] * u[i]
    s2 = u[d] * u[d]
    k = d + 1
    for _ in range(d * (d - 1) // 2):
        s2 += u[k] * u[k]
        k += 1
    s3 = 0.0
    for i in range(d):
        s3 += u[k + i] * u[k + i]
    a1 = np.sqrt(s1)
    a2 = s2 ** 0.25
    a3 = s3 ** (1.0 / 6.0)
    m = max(a1, max(a2, a3))
    if m == 0.0:
        return 0.0
    return m * ((a1 / m) ** Q + (a2 / m) ** Q + (a3 / m) ** Q) ** (1.0 / Q)


@njit(cache=True)
def expm_batch(A):
    N = A.shape[0]
    n = A.shape[1]
    out = np.empty_like(A)
    w = np.empty((10, n, n))
    for p in range(N):
        expm_into(A[p], out[p], w)
    return out


@njit(cache=True)
def logm_batch(M):
    N = M.shape[0]
    n = M.shape[1]
    out = np.empty_like(M)
    ok = np.ones(N, dtype=np.bool_)
    w = np.empty((10, n, n))
    for p in range(N):
        if not logm_into(M[p], out[p], w):
            ok[p] = False
            for i in range(n):
                for j in range(n):
                    out[p, i, j] = np.nan
    return out, ok


@njit(cache=True)
def _step_coords(dB, area, sdb, bds, k, h, sigma, eps, midpoint, d, a):
    """Algebra increment of step k, dilated by eps, into flat vector a."""
    e2 = eps * eps
    e3 = e2 * eps
    for i in range(d):
        a[i] = eps * sigma * dB[k, i]
    a[d] = e2 * h
    q = d + 1
    p = 0
    for i in range(d):
        for j in range(i + 1, d):
            a[q] = e2 * sigma * sigma * area[k, p] if midpoint else 0.0
            q += 1
            p += 1
    for i in range(d):
        if midpoint:
            a[q + i] = e3 * sigma * 0.5 * (bds[k, i] - sdb[k, i])
        else:
            a[q + i] = 0.0


@njit(cache=True)
def _lorentz_drift(P, d):
    """max |g^T eta g - eta| / max(1, max|g|^2) on the Lorentz block."""
    D = d + 1
    gmax = 0.0
    for i in range(D):
        for j in range(D):
            v = abs(P[i, j])
            if v > gmax:
                gmax = v
    worst = 0.0
    for i in range(D):
        for j in range(D):
            s = P[0, i] * P[0, j]
            for k in range(1, D):
                s -= P[k, i] * P[k, j]
            target = 0.0
            if i == j:
                target = 1.0 if i == 0 else -1.0
            v = abs(s - target)
            if v > worst:
                worst = v
    return worst / max(1.0, gmax * gmax)


@njit(cache=True)
def integrate_path(dB, area, sdb, bds, n_steps, h, sigma, midpoint, start, R,
                   record_every, drift_tol, d):
    """Single path of x_{k+1} = x_k exp(a_k) from ``start``.

    Returns (states, rel, rec_idx, n_rec, exit_step, status, max_drift) where
    status is 0 ok, 1 chart overflow, 2 isometry drift.
    """
    D = d + 2
    n = n_slots(d)
    max_rec = n_steps // record_every + 3
    states = np.empty((max_rec, D, D))
    rel = np.full((max_rec, n), np.nan)
    rec_idx = np.empty(max_rec, dtype=np.int64)
    w = np.empty((10, D, D))
    P = np.eye(D)
    E = np.empty((D, D))
    A = np.empty((D, D))
    tmp = np.empty((D, D))
    L = np.empty((D, D))
    a = np.empty(n)
    u = np.empty(n)
    check_exit = np.isfinite(R)
    _copy(start, states[0])
    for i in range(n):
        rel[0, i] = 0.0
    rec_idx[0] = 0
    n_rec = 1
    exit_step = -1
    status = 0
    max_drift = 0.0
    for k in range(n_steps):
        _step_coords(dB, area, sdb, bds, k, h, sigma, 1.0, midpoint, d, a)
        coords_to_matrix(a, d, A)
        expm_into(A, E, w)
        _matmul(P, E, tmp)
        _copy(tmp, P)
        drift = _lorentz_drift(P, d)
        if drift > max_drift:
            max_drift = drift
        step = k + 1
        record = (step % record_every == 0) or (step == n_steps)
        have_u = False
        if check_exit:
            if not logm_into(P, L, w):
                status = 1
                exit_step = step
                record = True
            else:
                matrix_to_coords(L, d, u)
                have_u = True
                if hnorm_scalar(u, d) >= R:
                    exit_step = step
                    record = True
        if drift > drift_tol:
            status = 2
            record = True
        if record:
            _matmul(start, P, states[n_rec])
            if not have_u and status == 0:
                if logm_into(P, L, w):
                    matrix_to_coords(L, d, u)
                    have_u = True
            if have_u:
                for i in range(n):
                    rel[n_rec, i] = u[i]
            rec_idx[n_rec] = step
            n_rec += 1
        if status != 0 or exit_step >= 0:
            break
    return states, rel, rec_idx, n_rec, exit_step, status, max_drift


@njit(cache=True, parallel=True)
def evolve_history(dB, area, sdb, bds, h, sigma, eps_list, midpoint, starts, d):
    """Rescaled relative coordinates for a chunk of paths.

    For each path p and each eps in ``eps_list``, runs
    P_k = starts[e] * prod_{j<=k} exp(T_eps a_j) and records
    T_{1/eps} log(P_k) for k = 1..n_steps.

    Returns coords (C, n_eps, n_steps, n), fail_step (C, n_eps) with -1 when
    the chart held throughout, and xi0_drops (C, n_eps) counting steps where
    the time component of the translation decreased.
    """
    C = dB.shape[0]
    n_steps = dB.shape[1]
    n_eps = eps_list.shape[0]
    D = d + 2
    n = n_slots(d)
    coords = np.full((C, n_eps, n_steps, n), np.nan)
    fail = np.full((C, n_eps), -1, dtype=np.int64)
    drops = np.zeros((C, n_eps), dtype=np.int64)
    for p in prange(C):
        w = np.empty((10, D, D))
        P = np.empty((D, D))
        E = np.empty((D, D))
        A = np.empty((D, D))
        tmp = np.empty((D, D))
        L = np.empty((D, D))
        a = np.empty(n)
        u = np.empty(n)
        for e in range(n_eps):
            eps = eps_list[e]
            _copy(starts[e], P)
            last_xi0 = P[0, D - 1]
            inv1 = 1.0 / eps
            inv2 = inv1 * inv1
            inv3 = inv2 * inv1
            for k in range(n_steps):
                _step_coords(dB[p], area[p], sdb[p], bds[p], k, h, sigma, eps,
                             midpoint, d, a)
                coords_to_matrix(a, d, A)
                expm_into(A, E, w)
                _matmul(P, E, tmp)
                _copy(tmp, P)
                xi0 = P[0, D - 1]
                if xi0 < last_xi0:
                    drops[p, e] += 1
                last_xi0 = xi0
                if not logm_into(P, L, w):
                    fail[p, e] = k + 1
                    break
                matrix_to_coords(L, d, u)
                for i in range(d):
                    coords[p, e, k, i] = u[i] * inv1
                for i in range(d, d + 1 + d * (d - 1) // 2):
                    coords[p, e, k, i] = u[i] * inv2
                for i in range(d + 1 + d * (d - 1) // 2, n):
                    coords[p, e, k, i] = u[i] * inv3
    return coords, fail, drops


@njit(cache=True)
def _approx_log(P, X, X2, L):
    """Third-order log(I + X) with X = P - I; returns the 1-norm tail bound
    (inf when ||X||_1 >= 0.5)."""
    n = P.shape[0]
    for i in range(n):
        for j in range(n):
            X[i, j] = P[i, j] - (1.0 if i == j else 0.0)
    x = _norm1(X)
    if x >= 0.5:
        return np.inf
    _matmul(X, X, X2)
    _matmul(X2, X, L)
    for i in range(n):
        for j in range(n):
            L[i, j] = X[i, j] - 0.5 * X2[i, j] + L[i, j] / 3.0
    return x ** 4 / (4.0 * (1.0 - x))


@njit(cache=True)
def _box_state(u, err, c, hw, n):
    """1 inside, 0 outside, -1 undecided at the given coordinate slack."""
    state = 1
    for i in range(n):
        dv = abs(u[i] - c[i])
        if dv > hw[i] + err[i]:
            return 0
        if dv > hw[i] - err[i]:
            state = -1
    return state


@njit(cache=True)
def _hnorm_shift(u, err, d, sign, out):
    n = u.shape[0]
    for i in range(n):
        v = abs(u[i]) + sign * err[i]
        out[i] = v if v > 0.0 else 0.0
    return hnorm_scalar(out, d)


@njit(cache=True)
def _surely_inside(u, err, d, r):
    """Cheap sufficient test for hnorm(|u| + err) < r, free of fractional powers.

    hnorm <= 3^(1/Q) * max layer gauge, so comparing each layer's squared sum
    with (r / 3^(1/Q))^(2k) settles most points.
    """
    n = u.shape[0]
    Q = d * d + 3 * d + 2
    rr = r / 3.0 ** (1.0 / Q)
    r2 = rr * rr
    s = 0.0
    for i in range(d):
        v = abs(u[i]) + err[i]
        s += v * v
    if s >= r2:
        return False
    s = 0.0
    for i in range(d, n - d):
        v = abs(u[i]) + err[i]
        s += v * v
    if s >= r2 * r2:
        return False
    s = 0.0
    for i in range(n - d, n):
        v = abs(u[i]) + err[i]
        s += v * v
    return s < r2 * r2 * r2


@njit(cache=True, parallel=True)
def box_occupation(dB, area, sdb, bds, h, sigma, eps_list, midpoint, starts, d,
                   centers, hw, R):
    """Occupation times of boxes by the rescaled diffusions, killed on exit.

    Same dynamics as :func:`evolve_history`, but box membership and the exit
    test (hnorm >= R / eps in rescaled coordinates) are decided on the fly.
    A third-order logarithm with a rigorous tail bound settles most steps;
    the exact logarithm runs only when the bound cannot decide.

    Returns times (C, n_eps, P), exit_step (C, n_eps; -1 if none),
    overflow (C, n_eps; chart failed before exit), xi0_drops (C, n_eps) and
    the number of exact logarithms evaluated.
    """
    C = dB.shape[0]
    n_steps = dB.shape[1]
    n_eps = eps_list.shape[0]
    P_boxes = centers.shape[0]
    D = d + 2
    n = n_slots(d)
    p = d * (d - 1) // 2
    times = np.zeros((C, n_eps, P_boxes))
    exit_step = np.full((C, n_eps), -1, dtype=np.int64)
    overflow = np.zeros((C, n_eps), dtype=np.bool_)
    drops = np.zeros((C, n_eps), dtype=np.int64)
    exact = np.zeros(C, dtype=np.int64)
    for q in prange(C):
        w = np.empty((10, D, D))
        P = np.empty((D, D))
        E = np.empty((D, D))
        A = np.empty((D, D))
        tmp = np.empty((D, D))
        L = np.empty((D, D))
        a = np.empty(n)
        u = np.empty(n)
        err = np.empty(n)
        scratch = np.empty(n)
        inv = np.empty(n)
        for e in range(n_eps):
            eps = eps_list[e]
            radius = R / eps
            for i in range(n):
                o = 1 if i < d else (2 if i < d + 1 + p else 3)
                inv[i] = 1.0 / eps ** o
            _copy(starts[e], P)
            last_xi0 = P[0, D - 1]
            for k in range(n_steps):
                _step_coords(dB[q], area[q], sdb[q], bds[q], k, h, sigma, eps,
                             midpoint, d, a)
                coords_to_matrix(a, d, A)
                expm_into(A, E, w)
                _matmul(P, E, tmp)
                _copy(tmp, P)
                xi0 = P[0, D - 1]
                if xi0 < last_xi0:
                    drops[q, e] += 1
                last_xi0 = xi0
                bound = _approx_log(P, w[7], w[8], L)
                have_exact = False
                if bound < np.inf:
                    matrix_to_coords(L, d, u)
                    for i in range(n):
                        u[i] *= inv[i]
                        err[i] = bound * inv[i]
                    if not _surely_inside(u, err, d, radius):
                        if _hnorm_shift(u, err, d, -1.0, scratch) >= radius:
                            # certainly outside: exit without the exact log
                            exit_step[q, e] = k + 1
                            break
                        if _hnorm_shift(u, err, d, 1.0, scratch) >= radius:
                            bound = np.inf  # undecided, fall through to exact
                if bound == np.inf:
                    exact[q] += 1
                    if not logm_into(P, L, w):
                        overflow[q, e] = True
                        exit_step[q, e] = k + 1
                        break
                    matrix_to_coords(L, d, u)
                    for i in range(n):
                        u[i] *= inv[i]
                        err[i] = 0.0
                    have_exact = True
                    if hnorm_scalar(u, d) >= radius:
                        exit_step[q, e] = k + 1
                        break
                for b in range(P_boxes):
                    st = _box_state(u, err, centers[b], hw[b], n)
                    if st == -1 and not have_exact:
                        exact[q] += 1
                        if not logm_into(P, L, w):
                            overflow[q, e] = True
                            exit_step[q, e] = k + 1
                            break
                        matrix_to_coords(L, d, u)
                        for i in range(n):
                            u[i] *= inv[i]
                            err[i] = 0.0
                        have_exact = True
                        st = _box_state(u, err, centers[b], hw[b], n)
                    if st == 1:
                        times[q, e, b] += h
                if overflow[q, e]:
                    break
    return times, exit_step, overflow, drops, exact.sum()

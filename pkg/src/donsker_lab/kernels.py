"""Hot numeric kernels, each in a numba flavour and a pure-numpy flavour.

The public names at the bottom of the module are bound to one flavour
according to :data:`donsker_lab._accel.USE_NUMBA`; both flavours stay
importable as ``<name>_numba`` / ``<name>_numpy`` for cross-checks and the
benchmark script.

Conventions: ``values`` arrays hold vertex values of piecewise-linear paths on
the uniform grid ``i/m`` of [0, 1]; a 2-d array ``(R, m+1)`` is a batch of
scalar paths, a 3-d array ``(R, m+1, d)`` a batch of R^d-valued paths.
``pint`` is ``p`` when ``p`` is an integer (enables exact repeated-squaring
powers) and ``-1`` otherwise.
"""
import math

import numpy as np
from scipy.linalg import solve_banded

from ._accel import HAVE_NUMBA, USE_NUMBA, numba_default, numba_parallel

__all__ = [
    "as_pint",
    "affine_pow_integral",
    "lp_power",
    "lag_seminorm_power",
    "lp_power_vec",
    "lag_seminorm_power_vec",
    "cellpair_seminorm_power",
    "walk_min_and_end",
    "tridiag_solve",
]


def as_pint(p):
    p = float(p)
    return int(p) if p.is_integer() and 0 <= p <= 64 else -1


# ---------------------------------------------------------------------------
# numpy flavour
# ---------------------------------------------------------------------------


def _powp_np(x, p, pint):
    if pint >= 0:
        return x ** pint
    return x ** p


def affine_pow_integral_numpy(y0, y1, h, p, pint=-1):
    """Exact ``int_0^h |y0 + (y1 - y0) u / h|^p du`` elementwise."""
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    a0 = np.abs(y0)
    a1 = np.abs(y1)
    big = np.maximum(a0, a1)
    small = np.minimum(a0, a1)
    p1 = p + 1.0
    pint1 = pint + 1 if pint >= 0 else -1
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        opposite = (y0 * y1) < 0.0
        opp = (_powp_np(a0, p1, pint1) + _powp_np(a1, p1, pint1)) / (p1 * (a0 + a1))
        q = np.where(big > 0, small / np.where(big > 0, big, 1.0), 0.0)
        far = (_powp_np(big, p1, pint1) - _powp_np(small, p1, pint1)) / (p1 * (big - small))
        if pint >= 0:
            s = np.ones_like(q)
            for _ in range(pint):
                s = s * q + 1.0
        else:
            L = np.log(np.where(q > 0, q, 1.0))
            s = np.where(L != 0.0, np.expm1(p1 * L) / np.where(L != 0.0, np.expm1(L), 1.0), p1)
        near = _powp_np(big, p, pint) * s / p1
        out = np.where(opposite, opp, np.where(q < 0.75, far, near))
    return h * np.where(big > 0, out, 0.0)


def lp_power_numpy(values, p, pint=-1):
    """``int_0^1 |f|^p`` for a batch of scalar paths, shape ``(R, m+1)``."""
    v = np.atleast_2d(values)
    m = v.shape[1] - 1
    cells = affine_pow_integral_numpy(v[:, :-1], v[:, 1:], 1.0 / m, p, pint)
    return cells.sum(axis=1)


def _lag_G_numpy(v, m, r, p, pint):
    h = 1.0 / m
    k = int(math.floor(r * m))
    theta = r * m - k
    if theta >= 1.0:
        k += 1
        theta = 0.0
    if k > m - 1:
        return np.zeros(v.shape[0])
    n = m - k
    i = np.arange(n)
    dvi = v[:, i + 1] - v[:, i]
    dvk = v[:, i + k + 1] - v[:, i + k]
    a = v[:, i + k] - v[:, i] + dvk * theta
    end_a = a + (dvk - dvi) * (1.0 - theta)
    tot = affine_pow_integral_numpy(a, end_a, (1.0 - theta) * h, p, pint).sum(axis=1)
    if theta > 0.0 and n > 1:
        j = np.arange(n - 1)
        y0 = end_a[:, : n - 1]
        y1 = v[:, j + k + 1] + theta * (v[:, j + k + 2] - v[:, j + k + 1]) - v[:, j + 1]
        tot = tot + affine_pow_integral_numpy(y0, y1, theta * h, p, pint).sum(axis=1)
    return tot


def lag_seminorm_power_numpy(values, r_nodes, r_weights, p, pint=-1):
    """``iint |f(t)-f(s)|^p |t-s|^(-1-p*eta) ds dt`` via a lag-variable rule.

    ``r_weights`` already carry the kernel ``r^(-1-p*eta)``; the factor 2
    accounts for the two triangles ``s < t`` and ``t < s``.
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    m = v.shape[1] - 1
    out = np.zeros(v.shape[0])
    for r, w in zip(r_nodes, r_weights):
        out += w * _lag_G_numpy(v, m, float(r), p, pint)
    return 2.0 * out


def _gauss_piece_numpy(a, b, length, p, gx, gw):
    # a, b: (..., d); integrates ||a + b u||^p over u in [0, length]
    u = 0.5 * length * (gx + 1.0)
    pts = a[..., None, :] + b[..., None, :] * u[:, None]
    vals = np.sqrt((pts * pts).sum(axis=-1)) ** p
    return 0.5 * length * (vals * gw).sum(axis=-1)


def lp_power_vec_numpy(values, p, gx, gw):
    v = np.asarray(values, dtype=float)
    m = v.shape[1] - 1
    h = 1.0 / m
    a = v[:, :-1, :]
    b = (v[:, 1:, :] - v[:, :-1, :]) / h
    return _gauss_piece_numpy(a, b, h, p, gx, gw).sum(axis=1)


def lag_seminorm_power_vec_numpy(values, r_nodes, r_weights, p, gx, gw):
    v = np.asarray(values, dtype=float)
    m = v.shape[1] - 1
    h = 1.0 / m
    out = np.zeros(v.shape[0])
    for r, w in zip(r_nodes, r_weights):
        k = int(math.floor(r * m))
        theta = r * m - k
        if theta >= 1.0:
            k += 1
            theta = 0.0
        if k > m - 1:
            continue
        n = m - k
        i = np.arange(n)
        dvi = v[:, i + 1] - v[:, i]
        dvk = v[:, i + k + 1] - v[:, i + k]
        a = v[:, i + k] - v[:, i] + dvk * theta
        slope = (dvk - dvi) / h
        tot = _gauss_piece_numpy(a, slope, (1.0 - theta) * h, p, gx, gw).sum(axis=1)
        if theta > 0.0 and n > 1:
            j = np.arange(n - 1)
            y0 = a[:, : n - 1] + slope[:, : n - 1] * (1.0 - theta) * h
            y1 = v[:, j + k + 1] + theta * (v[:, j + k + 2] - v[:, j + k + 1]) - v[:, j + 1]
            tot = tot + _gauss_piece_numpy(y0, (y1 - y0) / (theta * h), theta * h, p, gx, gw).sum(axis=1)
        out += w * tot
    return 2.0 * out


def cellpair_seminorm_power_numpy(values, eta, p, gx, gw, wx, ww):
    """Double-integral term for one path by cell-pair quadrature.

    Same-cell blocks are integrated in closed form, edge-adjacent blocks via a
    Duffy transform (exact radial integral, Gauss rule ``wx, ww`` in the
    angular variable) and the remaining blocks with the tensor rule ``gx, gw``.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    m = v.shape[0] - 1
    h = 1.0 / m
    alpha = p - 1.0 - p * eta
    slopes = (v[1:] - v[:-1]) / h
    snorm = np.sqrt((slopes * slopes).sum(axis=1))
    total = (2.0 * snorm ** p * h ** (alpha + 2.0) / ((alpha + 1.0) * (alpha + 2.0))).sum()
    if m >= 2:
        bi = slopes[:-1]
        bj = slopes[1:]
        w = 0.5 * (wx + 1.0)
        # triangle 1: u = rho*h, v = rho*h*w ; triangle 2: v = rho*h, u = rho*h*w
        t1 = bj[:, None, :] + bi[:, None, :] * w[None, :, None]
        t2 = bj[:, None, :] * w[None, :, None] + bi[:, None, :]
        n1 = np.sqrt((t1 * t1).sum(axis=2)) ** p * (1.0 + w) ** (-1.0 - p * eta)
        n2 = np.sqrt((t2 * t2).sum(axis=2)) ** p * (1.0 + w) ** (-1.0 - p * eta)
        ang = 0.5 * ((n1 + n2) * ww).sum(axis=1)
        total += 2.0 * (h ** (alpha + 2.0) / (alpha + 2.0) * ang).sum()
    if m >= 3:
        xs = 0.5 * h * (gx + 1.0)
        for i in range(m - 2):
            j = np.arange(i + 2, m)
            s_off = xs  # s = i*h + xs
            # f(t) - f(s) for t = j*h + xs[b], s = i*h + xs[a]
            ft = v[j][:, None, :] + slopes[j][:, None, :] * xs[None, :, None]  # (J, q, d)
            fs = v[i][None, :] + slopes[i][None, :] * s_off[:, None]  # (q, d)
            diff = ft[:, None, :, :] - fs[None, :, None, :]  # (J, qa, qb, d)
            dn = np.sqrt((diff * diff).sum(axis=3)) ** p
            gap = ((j - i) * h)[:, None, None] + xs[None, None, :] - xs[None, :, None]
            vals = dn * gap ** (-1.0 - p * eta)
            block = (vals * gw[None, :, None] * gw[None, None, :]).sum(axis=(1, 2)) * (0.5 * h) ** 2
            total += 2.0 * block.sum()
    return float(total)


def walk_min_and_end_numpy(increments):
    """Running minimum (including the origin) and endpoint of partial sums."""
    c = np.cumsum(increments, axis=1)
    return np.minimum(c.min(axis=1), 0.0), c[:, -1].copy()


def tridiag_solve_numpy(lower, diag, upper, rhs):
    """Solve a tridiagonal system for one or several right-hand sides."""
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs)


# ---------------------------------------------------------------------------
# numba flavour
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    import numba
    from numba import prange

    @numba.njit(**numba_default)
    def _ipow(x, n):
        r = 1.0
        while n > 0:
            if n & 1:
                r *= x
            x *= x
            n >>= 1
        return r

    @numba.njit(**numba_default)
    def _powp(x, p, pint):
        if pint >= 0:
            return _ipow(x, pint)
        return x ** p

    @numba.njit(**numba_default)
    def _affine_pow_integral_scalar(y0, y1, h, p, pint):
        a0 = abs(y0)
        a1 = abs(y1)
        if a0 > a1:
            big = a0
            small = a1
        else:
            big = a1
            small = a0
        if big == 0.0 or h <= 0.0:
            return 0.0
        p1 = p + 1.0
        pint1 = pint + 1 if pint >= 0 else -1
        if (y0 > 0.0 and y1 < 0.0) or (y0 < 0.0 and y1 > 0.0):
            return h * (_powp(a0, p1, pint1) + _powp(a1, p1, pint1)) / (p1 * (a0 + a1))
        q = small / big
        if q < 0.75:
            return h * (_powp(big, p1, pint1) - _powp(small, p1, pint1)) / (p1 * (big - small))
        if pint >= 0:
            s = 1.0
            for _ in range(pint):
                s = s * q + 1.0
        else:
            L = math.log(q)
            if L == 0.0:
                s = p1
            else:
                s = math.expm1(p1 * L) / math.expm1(L)
        return h * _powp(big, p, pint) * s / p1

    @numba.njit(**numba_default)
    def _affine_pow_integral_vec(y0, y1, h, p, pint):
        out = np.empty(y0.shape[0])
        for i in range(y0.shape[0]):
            out[i] = _affine_pow_integral_scalar(y0[i], y1[i], h, p, pint)
        return out

    @numba.njit(**numba_parallel)
    def lp_power_numba(values, p, pint):
        R = values.shape[0]
        m = values.shape[1] - 1
        h = 1.0 / m
        out = np.empty(R)
        for r in prange(R):
            s = 0.0
            for i in range(m):
                s += _affine_pow_integral_scalar(values[r, i], values[r, i + 1], h, p, pint)
            out[r] = s
        return out

    @numba.njit(**numba_default)
    def _lag_G(v, m, rr, p, pint):
        h = 1.0 / m
        k = int(math.floor(rr * m))
        theta = rr * m - k
        if theta >= 1.0:
            k += 1
            theta = 0.0
        tot = 0.0
        lenA = (1.0 - theta) * h
        lenB = theta * h
        for i in range(m - k):
            dvi = v[i + 1] - v[i]
            dvk = v[i + k + 1] - v[i + k]
            a = v[i + k] - v[i] + dvk * theta
            end_a = a + (dvk - dvi) * (1.0 - theta)
            tot += _affine_pow_integral_scalar(a, end_a, lenA, p, pint)
            if theta > 0.0 and i + k + 2 <= m:
                y1 = v[i + k + 1] + theta * (v[i + k + 2] - v[i + k + 1]) - v[i + 1]
                tot += _affine_pow_integral_scalar(end_a, y1, lenB, p, pint)
        return tot

    @numba.njit(**numba_parallel)
    def lag_seminorm_power_numba(values, r_nodes, r_weights, p, pint):
        R = values.shape[0]
        m = values.shape[1] - 1
        out = np.empty(R)
        for r in prange(R):
            s = 0.0
            for j in range(r_nodes.shape[0]):
                s += r_weights[j] * _lag_G(values[r], m, r_nodes[j], p, pint)
            out[r] = 2.0 * s
        return out

    @numba.njit(**numba_default)
    def _gauss_piece(a, b, length, p, gx, gw):
        d = a.shape[0]
        s = 0.0
        for g in range(gx.shape[0]):
            u = 0.5 * length * (gx[g] + 1.0)
            acc = 0.0
            for c in range(d):
                z = a[c] + b[c] * u
                acc += z * z
            s += gw[g] * math.sqrt(acc) ** p
        return 0.5 * length * s

    @numba.njit(**numba_parallel)
    def lp_power_vec_numba(values, p, gx, gw):
        R = values.shape[0]
        m = values.shape[1] - 1
        d = values.shape[2]
        h = 1.0 / m
        out = np.empty(R)
        for r in prange(R):
            b = np.empty(d)
            s = 0.0
            for i in range(m):
                for c in range(d):
                    b[c] = (values[r, i + 1, c] - values[r, i, c]) / h
                s += _gauss_piece(values[r, i], b, h, p, gx, gw)
            out[r] = s
        return out

    @numba.njit(**numba_default)
    def _lag_G_vec(v, m, rr, p, gx, gw):
        h = 1.0 / m
        d = v.shape[1]
        k = int(math.floor(rr * m))
        theta = rr * m - k
        if theta >= 1.0:
            k += 1
            theta = 0.0
        a = np.empty(d)
        sl = np.empty(d)
        y0 = np.empty(d)
        sl2 = np.empty(d)
        tot = 0.0
        lenA = (1.0 - theta) * h
        lenB = theta * h
        for i in range(m - k):
            for c in range(d):
                dvi = v[i + 1, c] - v[i, c]
                dvk = v[i + k + 1, c] - v[i + k, c]
                a[c] = v[i + k, c] - v[i, c] + dvk * theta
                sl[c] = (dvk - dvi) / h
            tot += _gauss_piece(a, sl, lenA, p, gx, gw)
            if theta > 0.0 and i + k + 2 <= m:
                for c in range(d):
                    y0[c] = a[c] + sl[c] * lenA
                    y1 = v[i + k + 1, c] + theta * (v[i + k + 2, c] - v[i + k + 1, c]) - v[i + 1, c]
                    sl2[c] = (y1 - y0[c]) / lenB
                tot += _gauss_piece(y0, sl2, lenB, p, gx, gw)
        return tot

    @numba.njit(**numba_parallel)
    def lag_seminorm_power_vec_numba(values, r_nodes, r_weights, p, gx, gw):
        R = values.shape[0]
        m = values.shape[1] - 1
        out = np.empty(R)
        for r in prange(R):
            s = 0.0
            for j in range(r_nodes.shape[0]):
                s += r_weights[j] * _lag_G_vec(values[r], m, r_nodes[j], p, gx, gw)
            out[r] = 2.0 * s
        return out

    @numba.njit(**numba_default)
    def _cellpair_numba(v, eta, p, gx, gw, wx, ww):
        m = v.shape[0] - 1
        d = v.shape[1]
        h = 1.0 / m
        alpha = p - 1.0 - p * eta
        kexp = -1.0 - p * eta
        slopes = np.empty((m, d))
        for i in range(m):
            for c in range(d):
                slopes[i, c] = (v[i + 1, c] - v[i, c]) / h
        total = 0.0
        for i in range(m):
            acc = 0.0
            for c in range(d):
                acc += slopes[i, c] ** 2
            total += 2.0 * math.sqrt(acc) ** p * h ** (alpha + 2.0) / ((alpha + 1.0) * (alpha + 2.0))
        radial = h ** (alpha + 2.0) / (alpha + 2.0)
        for i in range(m - 1):
            ang = 0.0
            for g in range(wx.shape[0]):
                w = 0.5 * (wx[g] + 1.0)
                a1 = 0.0
                a2 = 0.0
                for c in range(d):
                    z1 = slopes[i + 1, c] + slopes[i, c] * w
                    z2 = slopes[i + 1, c] * w + slopes[i, c]
                    a1 += z1 * z1
                    a2 += z2 * z2
                ang += ww[g] * (math.sqrt(a1) ** p + math.sqrt(a2) ** p) * (1.0 + w) ** kexp
            total += 2.0 * radial * 0.5 * ang
        q = gx.shape[0]
        xs = np.empty(q)
        for g in range(q):
            xs[g] = 0.5 * h * (gx[g] + 1.0)
        for i in range(m - 2):
            for j in range(i + 2, m):
                block = 0.0
                for ga in range(q):
                    for gb in range(q):
                        acc = 0.0
                        for c in range(d):
                            z = v[j, c] + slopes[j, c] * xs[gb] - v[i, c] - slopes[i, c] * xs[ga]
                            acc += z * z
                        gap = (j - i) * h + xs[gb] - xs[ga]
                        block += gw[ga] * gw[gb] * math.sqrt(acc) ** p * gap ** kexp
                total += 2.0 * block * (0.5 * h) ** 2
        return total

    def cellpair_seminorm_power_numba(values, eta, p, gx, gw, wx, ww):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        return float(_cellpair_numba(np.ascontiguousarray(v), float(eta), float(p), gx, gw, wx, ww))

    @numba.njit(**numba_parallel)
    def walk_min_and_end_numba(increments):
        R = increments.shape[0]
        m = increments.shape[1]
        mins = np.empty(R)
        ends = np.empty(R)
        for r in prange(R):
            s = 0.0
            lo = 0.0
            for i in range(m):
                s += increments[r, i]
                if s < lo:
                    lo = s
            mins[r] = lo
            ends[r] = s
        return mins, ends

    @numba.njit(**numba_default)
    def _thomas(lower, diag, upper, rhs):
        n = diag.shape[0]
        k = rhs.shape[1]
        c = np.empty(n)
        x = np.empty((n, k))
        d = np.empty((n, k))
        beta = diag[0]
        if beta == 0.0:
            raise ZeroDivisionError("singular tridiagonal system")
        c[0] = upper[0] / beta if n > 1 else 0.0
        for j in range(k):
            d[0, j] = rhs[0, j] / beta
        for i in range(1, n):
            beta = diag[i] - lower[i - 1] * c[i - 1]
            if beta == 0.0:
                raise ZeroDivisionError("singular tridiagonal system")
            if i < n - 1:
                c[i] = upper[i] / beta
            for j in range(k):
                d[i, j] = (rhs[i, j] - lower[i - 1] * d[i - 1, j]) / beta
        for j in range(k):
            x[n - 1, j] = d[n - 1, j]
        for i in range(n - 2, -1, -1):
            for j in range(k):
                x[i, j] = d[i, j] - c[i] * x[i + 1, j]
        return x

    def tridiag_solve_numba(lower, diag, upper, rhs):
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.ndim == 1
        b = rhs[:, None] if flat else rhs
        lower = np.ascontiguousarray(lower, dtype=float)
        upper = np.ascontiguousarray(upper, dtype=float)
        if diag.shape[0] == 1:
            lower = np.zeros(1)
            upper = np.zeros(1)
        x = _thomas(lower, np.ascontiguousarray(diag, dtype=float), upper, np.ascontiguousarray(b))
        return x[:, 0] if flat else x

    def affine_pow_integral_numba(y0, y1, h, p, pint=-1):
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        shape = np.broadcast(y0, y1).shape
        a = np.ascontiguousarray(np.broadcast_to(y0, shape)).ravel()
        b = np.ascontiguousarray(np.broadcast_to(y1, shape)).ravel()
        return _affine_pow_integral_vec(a, b, float(h), float(p), int(pint)).reshape(shape)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _contig(a):
    return np.ascontiguousarray(a, dtype=float)


if USE_NUMBA:

    def affine_pow_integral(y0, y1, h, p, pint=-1):
        return affine_pow_integral_numba(y0, y1, h, p, pint)

    def lp_power(values, p, pint=-1):
        return lp_power_numba(_contig(np.atleast_2d(values)), float(p), int(pint))

    def lag_seminorm_power(values, r_nodes, r_weights, p, pint=-1):
        return lag_seminorm_power_numba(
            _contig(np.atleast_2d(values)), _contig(r_nodes), _contig(r_weights), float(p), int(pint)
        )

    def lp_power_vec(values, p, gx, gw):
        return lp_power_vec_numba(_contig(values), float(p), _contig(gx), _contig(gw))

    def lag_seminorm_power_vec(values, r_nodes, r_weights, p, gx, gw):
        return lag_seminorm_power_vec_numba(
            _contig(values), _contig(r_nodes), _contig(r_weights), float(p), _contig(gx), _contig(gw)
        )

    cellpair_seminorm_power = cellpair_seminorm_power_numba

    def walk_min_and_end(increments):
        return walk_min_and_end_numba(_contig(increments))

    tridiag_solve = tridiag_solve_numba
else:
    affine_pow_integral = affine_pow_integral_numpy
    lp_power = lp_power_numpy
    lag_seminorm_power = lag_seminorm_power_numpy
    lp_power_vec = lp_power_vec_numpy
    lag_seminorm_power_vec = lag_seminorm_power_vec_numpy
    cellpair_seminorm_power = cellpair_seminorm_power_numpy
    walk_min_and_end = walk_min_and_end_numpy
    tridiag_solve = tridiag_solve_numpy

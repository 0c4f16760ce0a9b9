"""Inner products of basis paths across grids, the projection onto a coarse
grid, the covariance of the coarse Gaussian coordinates and the conditional
expectation coefficients.

Everything structural is computed in exact rational arithmetic first. For a
fine-grid cell ``a`` and coarse cell ``b`` the Cameron-Martin inner product of
the two basis paths is ``sqrt(m N) * |cell_a cap cell_b|``; the overlap is a
rational number, and so are ``Gamma`` and all the scaled quantities whose
bounds we assert.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import sqrt

import numpy as np

from . import kernels
from .mc import MCEstimate
from .paths import BasisIndex, GridPath

__all__ = [
    "overlap",
    "inner_ip",
    "InnerProductTable",
    "inner_table",
    "project_cm",
    "GramMatrix",
    "gamma_matrix",
    "gamma_inverse_exact",
    "gamma_inverse_inf_norm",
    "gamma_inverse_float",
    "neumann_bound",
    "CondCoeffs",
    "cond_coeffs",
    "cond_variance",
    "cond_variance_exact",
    "cond_variance_mc_oracle",
]


def overlap(m, a2, N, b2):
    """Exact length of ``[a2/m, (a2+1)/m) cap [b2/N, (b2+1)/N)``."""
    lo = max(Fraction(a2, m), Fraction(b2, N))
    hi = min(Fraction(a2 + 1, m), Fraction(b2 + 1, N))
    return hi - lo if hi > lo else Fraction(0)


def inner_ip(m, a, N, b):
    """Cameron-Martin inner product of the grid-m and grid-N basis paths."""
    if a.coord != b.coord:
        return 0.0
    return sqrt(m * N) * float(overlap(m, a.cell, N, b.cell))


@dataclass(frozen=True)
class InnerProductTable:
    """Nonzero overlaps per fine cell; ``value = sqrt(m N) * overlap``."""

    m: int
    N: int
    rows: tuple  # rows[a2] = ((b2, Fraction overlap), ...)

    def entries(self):
        for a2, row in enumerate(self.rows):
            for b2, ov in row:
                yield a2, b2, sqrt(self.m * self.N) * float(ov)

    def dense(self):
        T = np.zeros((self.m, self.N))
        for a2, b2, val in self.entries():
            T[a2, b2] = val
        return T

    def max_row_nnz(self):
        return max(len(r) for r in self.rows)

    def bounded(self):
        """Every value in ``[0, sqrt(N/m)]``, checked as ``m * overlap <= 1``."""
        return all(0 <= ov and self.m * ov <= 1 for row in self.rows for _, ov in row)


@lru_cache(maxsize=256)
def inner_table(m, N):
    rows = []
    for a2 in range(m):
        first = (a2 * N) // m
        row = []
        for b2 in range(first, min(N, first + 2)):
            ov = overlap(m, a2, N, b2)
            if ov:
                row.append((b2, ov))
        rows.append(tuple(row))
    return InnerProductTable(m, N, tuple(rows))


def project_cm(path, N):
    """``sum_b <path, h_b^N> h_b^N`` assembled from basis inner products.

    A path not starting at 0 is projected after removing its initial value,
    which is added back afterwards.
    """
    m = path.m
    v = path.values
    coef_m = np.sqrt(m) * np.diff(v, axis=0)  # <path, h_a^m> per cell, per coord
    T = inner_table(m, N).dense()
    coef_N = T.T @ coef_m
    out = np.zeros((N + 1, path.dim))
    out[1:] = np.cumsum(coef_N, axis=0) / np.sqrt(N)
    out += v[0]
    return GridPath(out)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric tridiagonal covariance of the coarse coordinates, one block
    (shared by all coordinates). ``diag`` and ``off`` hold exact rationals."""

    m: int
    N: int
    diag: tuple
    off: tuple
    full: dict = field(repr=False, compare=False, default=None)

    def dense(self):
        G = np.diag(np.asarray([float(x) for x in self.diag]))
        off = np.asarray([float(x) for x in self.off])
        G[np.arange(self.N - 1), np.arange(1, self.N)] = off
        G[np.arange(1, self.N), np.arange(self.N - 1)] = off
        return G

    def is_tridiagonal(self):
        """Checked against every accumulated entry, not assumed."""
        return all(abs(b - c) <= 1 or val == 0 for (b, c), val in self.full.items())

    def is_identity(self):
        return all(x == 1 for x in self.diag) and all(x == 0 for x in self.off) and self.is_tridiagonal()

    def max_row_nnz(self):
        rows = {}
        for (b, _c), val in self.full.items():
            if val != 0:
                rows[b] = rows.get(b, 0) + 1
        return max(rows.values())


@lru_cache(maxsize=256)
def gamma_matrix(m, N):
    """``Gamma_bc = sum_a <h_a^m, h_b^N> <h_a^m, h_c^N>`` exactly."""
    if not 1 <= N < m:
        raise ValueError(f"gamma_matrix needs 1 <= N < m (got N={N}, m={m})")
    full = {}
    scale = m * N
    for row in inner_table(m, N).rows:
        for b, ob in row:
            for c, oc in row:
                full[(b, c)] = full.get((b, c), Fraction(0)) + scale * ob * oc
    diag = tuple(full.get((b, b), Fraction(0)) for b in range(N))
    off = tuple(full.get((b, b + 1), Fraction(0)) for b in range(N - 1))
    return GramMatrix(m, N, diag, off, full)


def _thomas_exact(diag, off, rhs):
    n = len(diag)
    c = [Fraction(0)] * n
    d = [Fraction(0)] * n
    beta = diag[0]
    if beta == 0:
        raise np.linalg.LinAlgError("singular Gram matrix")
    c[0] = off[0] / beta if n > 1 else Fraction(0)
    d[0] = rhs[0] / beta
    for i in range(1, n):
        beta = diag[i] - off[i - 1] * c[i - 1]
        if beta == 0:
            raise np.linalg.LinAlgError("singular Gram matrix")
        if i < n - 1:
            c[i] = off[i] / beta
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / beta
    x = [Fraction(0)] * n
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


@lru_cache(maxsize=256)
def _inverse_cached(m, N):
    G = gamma_matrix(m, N)
    cols = []
    for j in range(N):
        e = [Fraction(int(i == j)) for i in range(N)]
        cols.append(_thomas_exact(G.diag, G.off, e))
    # symmetric, so columns are rows
    return tuple(tuple(col) for col in cols)


def gamma_inverse_exact(G):
    """``Gamma^{-1}`` as nested tuples of Fractions."""
    return _inverse_cached(G.m, G.N)


def gamma_inverse_inf_norm(G, exact=False):
    """Max absolute row sum of ``Gamma^{-1}`` from N exact tridiagonal solves."""
    inv = gamma_inverse_exact(G)
    val = max(sum(abs(x) for x in row) for row in inv)
    return val if exact else float(val)


def gamma_inverse_float(G):
    """Floating-point inverse through the tridiagonal kernel (cross-check)."""
    diag = np.asarray([float(x) for x in G.diag])
    off = np.asarray([float(x) for x in G.off])
    if G.N == 1:
        return np.array([[1.0 / diag[0]]])
    return kernels.tridiag_solve(off, diag, off, np.eye(G.N))


def neumann_bound(G):
    """``|D^-1|_inf / (1 - |D^-1 E|_inf)`` with ``D`` the diagonal and ``E`` the
    off-diagonal part; ``inf`` if the series does not converge."""
    N = G.N
    dinv = [1 / d for d in G.diag]
    rows = []
    for b in range(N):
        s = Fraction(0)
        if b > 0:
            s += abs(G.off[b - 1])
        if b < N - 1:
            s += abs(G.off[b])
        rows.append(dinv[b] * s)
    q = max(rows)
    if q >= 1:
        return float("inf")
    return float(max(dinv) / (1 - q))


@dataclass(frozen=True)
class CondCoeffs:
    """Row ``C_{a,.}`` of the conditional-expectation coefficients.

    ``scaled`` holds the exact rationals ``m * w_b`` where
    ``C_{a,b} = sqrt(mN) w_b``; the bound ``|C| <= 4 sqrt(N/m)`` is then the
    exact statement ``|m w_b| <= 4``.
    """

    a: BasisIndex
    N: int
    row: np.ndarray
    scaled: tuple

    def within_bound(self, k=4):
        return all(abs(x) <= k for x in self.scaled)


def _ov_row(m, N, a2):
    ov = [Fraction(0)] * N
    for b2, o in inner_table(m, N).rows[a2]:
        ov[b2] = o
    return ov


@lru_cache(maxsize=4096)
def _w_exact(m, N, a2):
    ov = _ov_row(m, N, a2)
    inv = _inverse_cached(m, N)
    return tuple(sum(ov[c] * inv[c][b] for c in range(N) if ov[c]) for b in range(N))


def _check_mn(m, N):
    if not N < m:
        raise ValueError(f"conditioning needs N < m (got N={N}, m={m})")


def cond_coeffs(m, N, a, coord=None):
    """Solve ``C Gamma = (<h_a^m, h_c^N>)_c``.

    ``coord`` selects the coordinate block of the coarse variables (default:
    that of ``a``); other blocks are independent of ``a`` and give a zero row.
    """
    _check_mn(m, N)
    coord = a.coord if coord is None else coord
    if coord != a.coord:
        return CondCoeffs(a, N, np.zeros(N), tuple(Fraction(0) for _ in range(N)))
    w = _w_exact(m, N, a.cell)
    row = sqrt(m * N) * np.asarray([float(x) for x in w])
    return CondCoeffs(a, N, row, tuple(m * x for x in w))


def cond_variance_exact(m, N, a, coord=None):
    """``v Gamma^{-1} v^T`` as an exact rational (``v`` has the sqrt(mN) factored
    out and put back as the integer ``mN``)."""
    _check_mn(m, N)
    coord = a.coord if coord is None else coord
    if coord != a.coord:
        return Fraction(0)
    ov = _ov_row(m, N, a.cell)
    w = _w_exact(m, N, a.cell)
    return m * N * sum(o * x for o, x in zip(ov, w))


def cond_variance(m, N, a, coord=None):
    """Variance of the conditional expectation of the ``a``-th fine Gaussian
    coordinate given the coarse ones."""
    return float(cond_variance_exact(m, N, a, coord))


def cond_variance_mc_oracle(m, N, a, reps, stream, batches=50, coord=None):
    """Regression estimate of :func:`cond_variance` from simulated coordinates.

    Each batch regresses ``xi_a`` on the coarse coordinates ``G = xi T`` by
    least squares, takes the variance of the fitted values and removes the
    ``N sigma^2 / n`` overfitting bias. Batch means give the standard error.
    """
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    coord = a.coord if coord is None else coord
    T = inner_table(m, N).dense()
    n = reps // batches
    vals = []
    for k in range(batches):
        gen = stream.child(k).generator()
        xi = gen.standard_normal((n, m))
        y = xi[:, a.cell]
        if coord != a.coord:
            # coarse coordinates of another, independent coordinate block
            X = gen.standard_normal((n, m)) @ T
        else:
            X = xi @ T
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        fit = X @ beta
        resid = y - fit
        s2 = resid @ resid / max(n - N, 1)
        vals.append(fit @ fit / n - N * s2 / n)
    vals = np.asarray(vals)
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(batches)), batches * n, stream.root)

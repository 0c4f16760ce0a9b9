"""Fractional Sobolev, W^{1,p} and uniform norms of piecewise-linear paths.

The fractional norm is

    ||f||_{eta,p}^p = int_0^1 |f|^p + iint |f(t)-f(s)|^p |t-s|^(-1-p*eta) ds dt.

Two engines evaluate the double integral:

* ``"cellpair"`` splits [0,1]^2 into cell pairs of the path's own grid.
  Same-cell blocks are closed form, edge-adjacent blocks use a Duffy
  transform that integrates the radial singularity exactly, and separated
  blocks use tensor Gauss rules. Accurate to near machine precision, cost
  O(m^2 q^2); used for single paths.
* ``"lag"`` writes the double integral as ``2 int_0^1 r^(-1-p*eta) G(r) dr``
  with ``G(r) = int_0^{1-r} |f(s+r)-f(s)|^p ds``. ``G`` is evaluated exactly
  (affine pieces) and the lag integral with a Gauss-Jacobi rule on the first
  cell, Gauss-Legendre on the next few cells and geometric panels beyond.
  Cost O(m * nodes); used for large ensembles.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from . import kernels
from .paths import GridPath

__all__ = [
    "AdmissibilityError",
    "SobolevIndex",
    "QuadratureSpec",
    "LagRule",
    "validate_index",
    "lag_nodes",
    "seminorm_power",
    "norm_eta_p",
    "norm_eta_p_batch",
    "batch_quadrature_error",
    "norm_sup",
    "norm_sup_batch",
    "norm_w1p",
    "step_primitive_norm_check",
    "kernel_integral_check",
]


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class SobolevIndex:
    eta: float
    p: float

    @property
    def is_sup(self):
        return math.isinf(self.p)

    @property
    def gap(self):
        """``eta - 1/p``; must lie strictly inside (0, 1/2)."""
        return self.eta - (0.0 if self.is_sup else 1.0 / self.p)

    def __str__(self):
        return f"({self.eta:g},{self.p:g})"


def validate_index(eta, p):
    """Return a :class:`SobolevIndex` if ``(eta, p)`` is admissible."""
    eta = float(eta)
    p = float(p)
    if math.isinf(p):
        if eta != 0.0:
            raise AdmissibilityError("p = inf is only admissible with eta = 0")
        return SobolevIndex(0.0, math.inf)
    if p < 1:
        raise AdmissibilityError(f"p = {p} must be >= 1")
    g = eta - 1.0 / p
    if not g > 0.0:
        raise AdmissibilityError(f"eta - 1/p = {g:.6g} must be > 0")
    if not g < 0.5:
        raise AdmissibilityError(f"eta - 1/p = {g:.6g} must be < 1/2")
    return SobolevIndex(eta, p)


def _natural_index(eta, p):
    # any index for which the norm is finite on piecewise-linear paths
    eta, p = float(eta), float(p)
    if math.isinf(p):
        raise AdmissibilityError("use norm_sup for p = inf")
    if not (0.0 < eta < 1.0 and p >= 1.0):
        raise AdmissibilityError("need 0 < eta < 1 and p >= 1")
    return SobolevIndex(eta, p)


def _as_index(idx, check_admissible=True):
    if not isinstance(idx, SobolevIndex):
        idx = SobolevIndex(*idx)
    if idx.is_sup:
        raise AdmissibilityError("p = inf: use norm_sup")
    if check_admissible:
        return validate_index(idx.eta, idx.p)
    return _natural_index(idx.eta, idx.p)


@dataclass(frozen=True)
class QuadratureSpec:
    """Cell-pair rule: Gauss points per cell, angular refinement depth for the
    edge-adjacent blocks, the relative tolerance the error estimate must meet
    and how many times the rule may be refined to meet it."""

    points: int = 10
    depth: int = 1
    tol: float = 1e-8
    retries: int = 2

    def refined(self):
        return QuadratureSpec(self.points + 4, self.depth + 1, self.tol, self.retries - 1)

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.points < 2:
            raise ValueError("need at least 2 points per cell")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class LagRule:
    """Lag-variable rule: nodes per panel, number of leading single-cell
    panels, geometric growth ratio of the remaining panels."""

    n: int = 16
    cells: int = 16
    ratio: float = 1.22

    def refined(self):
        return LagRule(self.n + 4, 2 * self.cells, math.sqrt(self.ratio))


@lru_cache(maxsize=64)
def _lag_nodes_cached(m, eta, p, n, cells, ratio):
    h = 1.0 / m
    alpha = p - 1.0 - p * eta
    # first cell: G(r) ~ r^p, so weight r^alpha times the smooth G(r)/r^p
    xs, ws = roots_jacobi(n, 0.0, alpha)
    r0 = 0.5 * h * (xs + 1.0)
    R = [r0]
    W = [(0.5 * h) ** (alpha + 1.0) * ws / r0 ** p]
    xl, wl = roots_legendre(n)
    for k in range(1, min(cells, m)):
        a, b = k * h, (k + 1) * h
        rr = a + 0.5 * (b - a) * (xl + 1.0)
        R.append(rr)
        W.append(0.5 * (b - a) * wl * rr ** (-1.0 - p * eta))
    a = min(cells, m) * h
    while a < 1.0 - 1e-15:
        b = min(1.0, a * ratio)
        rr = a + 0.5 * (b - a) * (xl + 1.0)
        R.append(rr)
        W.append(0.5 * (b - a) * wl * rr ** (-1.0 - p * eta))
        a = b
    rn = np.concatenate(R)
    rw = np.concatenate(W)
    rn.setflags(write=False)
    rw.setflags(write=False)
    return rn, rw


def lag_nodes(m, eta, p, rule=LagRule()):
    """Nodes and weights (kernel included) of the lag integral on grid ``m``."""
    return _lag_nodes_cached(int(m), float(eta), float(p), rule.n, rule.cells, float(rule.ratio))


@lru_cache(maxsize=32)
def _gauss(q):
    return roots_legendre(q)


@lru_cache(maxsize=32)
def _composite(q, depth):
    x, w = roots_legendre(q)
    k = 2 ** depth
    xs = np.concatenate([(-1.0 + (2 * j + 1 + x) / k) for j in range(k)])
    ws = np.concatenate([w / k for _ in range(k)])
    return xs, ws


def _cellpair(values, eta, p, q, depth):
    gx, gw = _gauss(q)
    wx, ww = _composite(q, depth)
    return kernels.cellpair_seminorm_power(values, eta, p, gx, gw, wx, ww)


def _lp_power_single(values, p):
    v = np.asarray(values, dtype=float)
    if v.shape[1] == 1:
        return float(kernels.lp_power(v[None, :, 0], p, kernels.as_pint(p))[0])
    gx, gw = _gauss(24)
    return float(kernels.lp_power_vec(v[None], p, gx, gw)[0])


def seminorm_power(path, idx, quad=QuadratureSpec(), method="auto", rule=LagRule(), check_admissible=True):
    """Double-integral term and an a-posteriori error estimate for one path."""
    idx = _as_index(idx, check_admissible)
    v = path.values
    if method == "auto":
        method = "cellpair" if path.m <= 256 else "lag"
    if method == "cellpair":
        a = _cellpair(v, idx.eta, idx.p, quad.points, quad.depth)
        b = _cellpair(v, idx.eta, idx.p, quad.points + 4, quad.depth + 1)
        return b, abs(b - a)
    if method == "lag":
        a = _lag_batch(v[None], idx, rule)[0]
        b = _lag_batch(v[None], idx, rule.refined())[0]
        return b, abs(b - a)
    raise ValueError(f"unknown method {method!r}")


def norm_eta_p(
    path,
    idx,
    quad=QuadratureSpec(),
    method="auto",
    return_error=False,
    check_admissible=True,
    rule=LagRule(),
):
    """The fractional Sobolev norm of a single path.

    With ``return_error`` the result is ``(value, err)`` where ``err`` bounds
    the relative quadrature error of ``value``. The cell-pair rule is refined
    up to ``quad.retries`` times; ``ArithmeticError`` is raised if the
    estimate still exceeds ``quad.tol``. ``check_admissible=False`` accepts any
    ``0 < eta < 1, p >= 1``.
    """
    idx = _as_index(idx, check_admissible)
    lp = _lp_power_single(path.values, idx.p)
    while True:
        sp, err = seminorm_power(path, idx, quad, method, rule, check_admissible)
        total = lp + sp
        if total <= 0.0:
            return (0.0, 0.0) if return_error else 0.0
        rel = err / (idx.p * total)
        if rel <= quad.tol or method == "lag" or (method == "auto" and path.m > 256):
            break
        if quad.retries == 0:
            raise ArithmeticError(f"quadrature error estimate {rel:.3g} exceeds tolerance {quad.tol:.3g}")
        quad = quad.refined()
    val = total ** (1.0 / idx.p)
    return (val, rel) if return_error else val


def _lag_batch(values, idx, rule):
    v = np.asarray(values, dtype=float)
    m = v.shape[1] - 1
    rn, rw = lag_nodes(m, idx.eta, idx.p, rule)
    if v.shape[2] == 1:
        return kernels.lag_seminorm_power(v[..., 0], rn, rw, idx.p, kernels.as_pint(idx.p))
    # |affine|^p is a polynomial of degree p for even integer p: 12 points
    # integrate each piece exactly up to p = 22
    gx, gw = _gauss(12)
    return kernels.lag_seminorm_power_vec(v, rn, rw, idx.p, gx, gw)


def norm_eta_p_batch(values, idx, rule=LagRule(), power=False, check_admissible=True):
    """Norms of a batch ``(R, m+1, d)`` of paths with the lag engine.

    ``power=True`` returns the p-th powers instead of the norms.
    """
    idx = _as_index(idx, check_admissible)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[..., None]
    if v.shape[2] == 1:
        lp = kernels.lp_power(v[..., 0], idx.p, kernels.as_pint(idx.p))
    else:
        gx, gw = _gauss(24)
        lp = kernels.lp_power_vec(v, idx.p, gx, gw)
    tot = lp + _lag_batch(v, idx, rule)
    return tot if power else tot ** (1.0 / idx.p)


def batch_quadrature_error(values, idx, rule=LagRule(), sample=4):
    """Max relative norm error of the lag rule on the first ``sample`` paths,
    measured against the refined rule."""
    v = np.asarray(values, dtype=float)[:sample]
    a = norm_eta_p_batch(v, idx, rule, check_admissible=False)
    b = norm_eta_p_batch(v, idx, rule.refined(), check_admissible=False)
    mask = b > 0
    return float(np.max(np.abs(a - b)[mask] / b[mask])) if mask.any() else 0.0


def norm_sup(path):
    """Uniform norm: affine pieces attain their extreme norms at vertices."""
    return float(np.sqrt((path.values ** 2).sum(axis=1)).max())


def norm_sup_batch(values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        return np.abs(v).max(axis=1)
    return np.sqrt((v * v).sum(axis=2)).max(axis=1)


def norm_w1p(path, p):
    """``(int |f|^p + int |f'|^p)^(1/p)``; the derivative part is an exact sum."""
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    v = path.values
    m = path.m
    slopes = np.diff(v, axis=0) * m
    deriv = float((np.sqrt((slopes ** 2).sum(axis=1)) ** p).sum() / m)
    return (_lp_power_single(v, p) + deriv) ** (1.0 / p)


# ---------------------------------------------------------------------------
# primitive of an indicator, kernel integral
# ---------------------------------------------------------------------------


def _overlap_G(r, s1, s2, p):
    """``int_0^{1-r} |[s, s+r] cap [s1, s2]|^p ds`` exactly."""
    if r >= 1.0:
        return 0.0
    # overlap as a function of s is piecewise linear with these breakpoints
    knots = sorted({0.0, 1.0 - r, *[min(max(x, 0.0), 1.0 - r) for x in (s1 - r, s2 - r, s1, s2)]})

    def ov(s):
        return max(0.0, min(s + r, s2) - max(s, s1))

    tot = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b > a:
            tot += float(kernels.affine_pow_integral_numpy(ov(a), ov(b), b - a, p))
    return tot


def step_primitive_norm_check(s1, s2, idx, n=16, check_admissible=True):
    """Norm of ``t -> |[0, t] cap [s1, s2]|`` and its ratio to ``(s2-s1)^(1/2-eta)``.

    The path has kinks at ``s1, s2`` only, so the lag function ``G`` is
    integrated exactly and the lag integral is split at every point where
    ``G`` changes form.
    """
    if not 0.0 <= s1 < s2 <= 1.0:
        raise ValueError("need 0 <= s1 < s2 <= 1")
    idx = _as_index(idx, check_admissible)
    p, eta = idx.p, idx.eta
    L = s2 - s1
    lp = L ** (p + 1) / (p + 1) + (1.0 - s2) * L ** p
    cuts = sorted({x for x in (L, s1, s2, 1.0 - s1, 1.0 - s2, s2 - s1, 1.0) if 0.0 < x <= 1.0})
    # near r = 0 the overlap equals r on a set of length ~ L, so G(r) ~ r^p
    alpha = p - 1.0 - p * eta
    xs, ws = roots_jacobi(n, 0.0, alpha)
    xl, wl = roots_legendre(n)
    first = min(cuts[0], L)
    r0 = 0.5 * first * (xs + 1.0)
    tot = float(sum(w * _overlap_G(r, s1, s2, p) / r ** p for r, w in zip(r0, ws))) * (0.5 * first) ** (alpha + 1.0)
    a = first
    for b in cuts:
        if b <= a:
            continue
        # subdivide geometrically so the r^(-1-p*eta) factor stays smooth per panel
        while a < b:
            c = min(b, 2.0 * a)
            rr = a + 0.5 * (c - a) * (xl + 1.0)
            tot += 0.5 * (c - a) * float(sum(w * _overlap_G(r, s1, s2, p) * r ** (-1.0 - p * eta) for r, w in zip(rr, wl)))
            a = c
    norm = (lp + 2.0 * tot) ** (1.0 / p)
    return norm, norm / L ** (0.5 - eta)


def kernel_integral_check(N, idx, check_admissible=True):
    """``iint [|t-s| ^ 1/N]^(p/2) |t-s|^(-1-eta*p)`` in closed form, and its
    ratio to ``N^(-p(1/2-eta))``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    idx = _as_index(idx, check_admissible)
    p, eta = idx.p, idx.eta
    a = 1.0 / N
    g = eta * p
    beta = p / 2.0 - g
    if beta <= 0:
        raise AdmissibilityError("p/2 - eta*p must be positive (eta < 1/2)")
    near = a ** beta / beta - a ** (beta + 1.0) / (beta + 1.0)
    i1 = -math.log(a) if g == 0 else (a ** (-g) - 1.0) / g
    i2 = -math.log(a) if g == 1 else (1.0 - a ** (1.0 - g)) / (1.0 - g)
    far = a ** (p / 2.0) * (i1 - i2)
    value = 2.0 * (near + far)
    return value, value / a ** beta

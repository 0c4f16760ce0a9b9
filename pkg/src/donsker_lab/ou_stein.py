"""Ornstein-Uhlenbeck semigroup on the grid-m path space and the Stein
machinery built on it.

``P_tau F(x) = E F(e^-tau x + beta_tau Y)`` with ``Y`` a Brownian motion
sampled on the grid of ``x`` and affinely interpolated. A path ``x`` on grid
``m`` has Cameron-Martin coordinates ``sqrt(m) * diff(x)``; a direction ``h``
defines the standard Gaussian variable ``zeta_h(Y) = <coef(Y), coef(h)>``.

Derivatives of ``P_tau F`` are estimated by Gaussian integration by parts
(probabilists' Hermite weights), so ``F`` need not be differentiable.

For functionals of the coarse projection ``f_N = F o pi^N`` the estimators
work in the N coarse coordinates ``G ~ N(0, Gamma)``: ``pi^N Y`` is a function
of ``G`` and the fine Hermite weights are replaced by their conditional
expectations given ``G``. Writing ``G = L z`` with ``L`` the Cholesky factor,
``E[zeta_h | G] = (L^-1 u_h) . z`` where ``u_h = T^T coef(h)``.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import roots_legendre

from .gram import gamma_matrix, inner_table
from .mc import MCEstimate, combined_se
from .paths import BasisIndex, IncrementLaw, coarsen_values, refine, walk_values
from .rng import BLOCK

__all__ = [
    "OUTime",
    "ou_apply",
    "hermite",
    "ou_derivative",
    "ou_derivative_fd",
    "ou_derivative_commuted",
    "second_deriv_two_copy",
    "generator_at",
    "generator_samples",
    "taylor_decomposition_terms",
    "SteinCheck",
    "stein_dirichlet_check",
    "SmoothingCheck",
    "smoothing_error_check",
    "ProbeResult",
    "lipschitz_modulus_probe",
]


@dataclass(frozen=True)
class OUTime:
    tau: float

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be nonnegative")

    @property
    def decay(self):
        return math.exp(-self.tau)

    @property
    def beta(self):
        return math.sqrt(-math.expm1(-2.0 * self.tau))

    @property
    def beta_half(self):
        return math.sqrt(-math.expm1(-self.tau))


def _ou(tau):
    return tau if isinstance(tau, OUTime) else OUTime(float(tau))


def _positive(tau):
    t = _ou(tau)
    if t.tau <= 0:
        raise ValueError("derivative estimators are singular at tau = 0")
    return t


def hermite(k, y):
    """Probabilists' Hermite polynomial ``He_k(y)`` via the three-term recurrence."""
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    y = np.asarray(y, dtype=float)
    h0 = np.ones_like(y)
    if k == 0:
        return h0 if h0.ndim else float(h0)
    h1 = y.copy()
    for j in range(1, int(k)):
        h0, h1 = h1, y * h1 - j * h0
    return h1 if h1.ndim else float(h1)


def _gaussian_blocks(m, dim, reps, stream):
    """Yield ``(n, xi, Y)``: fine Gaussian coordinates and the walk they define."""
    for _start, _stop, gen in stream.blocks(reps):
        xi = gen.standard_normal((_stop - _start, m, dim))
        yield _stop - _start, xi, walk_values(xi)


def _estimate(chunks, stream):
    return MCEstimate.from_samples(np.concatenate(chunks), stream.root)


def ou_apply(F, x, tau, reps, stream, antithetic=True):
    """Monte Carlo ``P_tau F(x)``; antithetic pairs ``(Y, -Y)`` by default."""
    t = _ou(tau)
    base = t.decay * x.values
    out = []
    for _n, _xi, Y in _gaussian_blocks(x.m, x.dim, reps, stream):
        plus = F.evaluate(base + t.beta * Y)
        if antithetic:
            plus = 0.5 * (plus + F.evaluate(base - t.beta * Y))
        out.append(plus)
    return _estimate(out, stream)


def _unit_direction(h, m):
    if m % h.m:
        raise ValueError("direction must live on a grid dividing the path grid")
    if np.any(h.values[0] != 0):
        raise ValueError("direction must start at 0")
    hv = refine(h, m).values if h.m != m else h.values
    coef = np.sqrt(m) * np.diff(hv, axis=0)
    nrm = float(np.sqrt((coef * coef).sum()))
    if nrm == 0:
        raise ValueError("zero direction")
    return coef / nrm, nrm, hv


def ou_derivative(F, x, tau, k, h, reps, stream):
    """``<grad^k P_tau F(x), h^k>`` by the Hermite-weight formula.

    Uses antithetic pairs and, for ``k = 2``, the control variate
    ``F(e^-tau x)`` (the weight has mean zero).
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    t = _positive(tau)
    c, nrm, _ = _unit_direction(h, x.m)
    base = t.decay * x.values
    pref = (t.decay / t.beta) ** k * nrm ** k
    f0 = F.evaluate(base)[0] if k == 2 else 0.0
    out = []
    for _n, xi, Y in _gaussian_blocks(x.m, x.dim, reps, stream):
        zeta = np.einsum("rad,ad->r", xi, c)
        fp = F.evaluate(base + t.beta * Y)
        fm = F.evaluate(base - t.beta * Y)
        if k == 1:
            out.append(pref * 0.5 * (fp - fm) * zeta)
        else:
            out.append(pref * (0.5 * (fp + fm) - f0) * (zeta * zeta - 1.0))
    return _estimate(out, stream)


def ou_derivative_fd(F, x, tau, k, h, step, reps, stream, richardson=True):
    """Central finite differences of ``P_tau F`` along ``h`` with common
    random numbers; ``richardson`` combines steps ``step`` and ``step/2``."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    t = _ou(tau)
    _c, _nrm, hv = _unit_direction(h, x.m)

    def g(shift, Y):
        b = t.decay * (x.values + shift * hv)
        return 0.5 * (F.evaluate(b + t.beta * Y) + F.evaluate(b - t.beta * Y))

    def diff(e, Y, g0):
        if k == 1:
            return (g(e, Y) - g(-e, Y)) / (2 * e)
        return (g(e, Y) - 2 * g0 + g(-e, Y)) / (e * e)

    out = []
    for _n, _xi, Y in _gaussian_blocks(x.m, x.dim, reps, stream):
        g0 = g(0.0, Y) if k == 2 else None
        d1 = diff(step, Y, g0)
        if richardson:
            d2 = diff(0.5 * step, Y, g0)
            d1 = (4.0 * d2 - d1) / 3.0
        out.append(d1)
    return _estimate(out, stream)


def ou_derivative_commuted(F, x, tau, k, h, reps, stream):
    """``e^{-k tau} P_tau(<grad^k F, h^k>)(x)`` for functionals with analytic
    derivatives; equals the derivative of ``P_tau F``."""
    t = _ou(tau)
    _c, _nrm, hv = _unit_direction(h, x.m)
    base = t.decay * x.values
    d = F.directional if k == 1 else F.second_directional
    out = []
    for _n, _xi, Y in _gaussian_blocks(x.m, x.dim, reps, stream):
        vals = 0.5 * (d(base + t.beta * Y, hv) + d(base - t.beta * Y, hv))
        out.append(t.decay ** k * vals)
    return _estimate(out, stream)


# ---------------------------------------------------------------------------
# coarse coordinates
# ---------------------------------------------------------------------------


class _Coarse:
    """The Gaussian coordinates of ``pi^N Y`` for ``Y`` on grid ``m``."""

    def __init__(self, m, N, dim):
        if not 1 <= N <= m:
            raise ValueError("need 1 <= N <= m")
        self.m, self.N, self.dim = m, N, dim
        if N == m:
            self.T = np.eye(m)
            self.L = np.eye(N)
        else:
            self.T = inner_table(m, N).dense()
            self.L = np.linalg.cholesky(gamma_matrix(m, N).dense())
        self.Linv = np.linalg.inv(self.L)

    def project(self, values):
        return coarsen_values(values, self.N)

    def coef(self, values_N):
        return np.sqrt(self.N) * np.diff(values_N, axis=-2)

    def path_of(self, z):
        G = np.einsum("bc,rcd->rbd", self.L, z)
        out = np.zeros((z.shape[0], self.N + 1, self.dim))
        np.cumsum(G, axis=1, out=out[:, 1:])
        out[:, 1:] /= np.sqrt(self.N)
        return out

    def ell(self, u):
        """``L^-1 u`` per coordinate; ``u`` has shape ``(N, d)``."""
        return self.Linv @ u

    def basis_u(self, a):
        """Coarse coordinates of ``h_a^m`` (a (N, d) array)."""
        u = np.zeros((self.N, self.dim))
        u[:, a.coord - 1] = self.T[a.cell]
        return u

    def basis_values(self, a):
        """Vertex values of ``pi^N h_a^m`` on grid N."""
        out = np.zeros((self.N + 1, self.dim))
        out[1:] = np.cumsum(self.basis_u(a), axis=0) / np.sqrt(self.N)
        return out


@lru_cache(maxsize=64)
def _coarse(m, N, dim):
    return _Coarse(m, N, dim)


def second_deriv_two_copy(F, v, tau, h, reps, stream, N=None):
    """``<grad^2 P_tau F(v), h x h>`` from two independent Gaussian copies.

    ``F(w) zeta_h(Y) zeta_h(Yhat)`` with
    ``w = e^{-tau/2}(e^{-tau/2} v + beta_{tau/2} Y) + beta_{tau/2} Yhat`` and
    prefactor ``e^{-3 tau/2} / beta_{tau/2}^2``, symmetrised over the four
    sign flips of ``(Y, Yhat)``. With ``N`` the functional is read as
    ``F o pi^N`` and the copies are drawn in the coarse coordinates.
    """
    t = _positive(tau)
    c, nrm, _ = _unit_direction(h, v.m)
    bh = t.beta_half
    pref = math.exp(-1.5 * t.tau) / bh ** 2 * nrm ** 2
    out = []
    if N is None:
        base = t.decay * v.values
        for _s, _e, gen in stream.blocks(reps):
            n = _e - _s
            xi = gen.standard_normal((n, v.m, v.dim))
            xh = gen.standard_normal((n, v.m, v.dim))
            A = math.exp(-0.5 * t.tau) * bh * walk_values(xi)
            B = bh * walk_values(xh)
            w = np.einsum("rad,ad->r", xi, c) * np.einsum("rad,ad->r", xh, c)
            s = F.evaluate(base + A + B) - F.evaluate(base - A + B) - F.evaluate(base + A - B) + F.evaluate(base - A - B)
            out.append(pref * 0.25 * s * w)
        return _estimate(out, stream)
    co = _coarse(v.m, N, v.dim)
    ell = co.ell(co.T.T @ c)
    base = t.decay * co.project(v.values)
    for _s, _e, gen in stream.blocks(reps):
        n = _e - _s
        z = gen.standard_normal((n, N, v.dim))
        zh = gen.standard_normal((n, N, v.dim))
        A = math.exp(-0.5 * t.tau) * bh * co.path_of(z)
        B = bh * co.path_of(zh)
        w = np.einsum("rbd,bd->r", z, ell) * np.einsum("rbd,bd->r", zh, ell)
        s = F.evaluate(base + A + B) - F.evaluate(base - A + B) - F.evaluate(base + A - B) + F.evaluate(base - A - B)
        out.append(pref * 0.25 * s * w)
    return _estimate(out, stream)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


def _walk_and_noise(m, N, law, reps, stream, raw=False):
    """Blocks of ``(S values, X increments, z)`` with fixed block layout."""
    ws, zs = stream.child(0), stream.child(1)
    for b, start in enumerate(range(0, reps, BLOCK)):
        n = min(reps, start + BLOCK) - start
        X = law.sample(ws.child(b).generator(), (n, m))
        dim = X.shape[-1]
        z = zs.child(b).generator().standard_normal((n, m if raw else N, dim))
        yield walk_values(X), X, z


def generator_samples(F, S, z, co, tau):
    """Per-replicate samples of ``L P_tau f_N(S)`` in coarse coordinates."""
    t = _positive(tau)
    beta = t.beta
    center = t.decay * co.project(S)
    g = beta * co.path_of(z)
    fp = F.evaluate(center + g)
    fm = F.evaluate(center - g)
    f0 = F.evaluate(center)
    cx = co.coef(co.project(S))
    a = np.einsum("bc,rcd->rbd", co.Linv, cx)
    lin = np.einsum("rbd,rbd->r", a, z)
    quad = np.einsum("rbd,rbd->r", z, z) - co.N * co.dim
    return -(t.decay / beta) * lin * 0.5 * (fp - fm) + (t.decay / beta) ** 2 * quad * (0.5 * (fp + fm) - f0)


def _generator_samples_raw(F, S, xi, N, tau):
    t = _positive(tau)
    m = S.shape[1] - 1
    Y = walk_values(xi)
    center = t.decay * S
    fp = F.evaluate(coarsen_values(center + t.beta * Y, N))
    fm = F.evaluate(coarsen_values(center - t.beta * Y, N))
    f0 = F.evaluate(coarsen_values(center, N))
    cx = np.sqrt(m) * np.diff(S, axis=1)
    lin = np.einsum("rad,rad->r", cx, xi)
    quad = np.einsum("rad,rad->r", xi, xi) - xi.shape[1] * xi.shape[2]
    return -(t.decay / t.beta) * lin * 0.5 * (fp - fm) + (t.decay / t.beta) ** 2 * quad * (0.5 * (fp + fm) - f0)


def generator_at(F, m, N, law, tau, reps, stream, method="projected"):
    """``E[L P_tau f_N(S^m)]`` with ``L = -<x, grad> + sum_a grad^2[h_a, h_a]``.

    ``"projected"`` integrates in the N coarse coordinates (the sum over
    ``a`` collapses to ``|z|^2 - N d``); ``"raw"`` uses all fine coordinates
    and serves as a cross-check.
    """
    _positive(tau)
    out = []
    if method == "projected":
        co = _coarse(m, N, law.dim)
        for S, _X, z in _walk_and_noise(m, N, law, reps, stream):
            out.append(generator_samples(F, S, z, co, tau))
    elif method == "raw":
        for S, _X, xi in _walk_and_noise(m, N, law, reps, stream, raw=True):
            out.append(_generator_samples_raw(F, S, xi, N, tau))
    else:
        raise ValueError(f"unknown method {method!r}")
    return _estimate(out, stream)


def _second_in_basis(F, vN, z, co, tau, ell, q):
    """Samples of ``<grad^2 P_tau f_N(v), h_a x h_a>`` given coarse ``v``."""
    t = _ou(tau)
    center = t.decay * vN
    g = t.beta * co.path_of(z)
    fp = F.evaluate(center + g)
    fm = F.evaluate(center - g)
    f0 = F.evaluate(center)
    proj = np.einsum("rbd,bd->r", z, ell)
    return (t.decay / t.beta) ** 2 * (0.5 * (fp + fm) - f0) * (proj * proj - q)


def taylor_decomposition_terms(F, m, N, law, tau, reps, stream, nodes=8):
    """The two sums of the leave-one-out Taylor decomposition of
    ``E[L P_tau f_N(S^m)]``.

    ``term1 = -E sum_a <D(S_{-a}) - D(S), h_a x h_a>`` and
    ``term2 = -E sum_a X_a^2 int_0^1 <D(S_{-a} + r X_a h_a) - D(S_{-a}), h_a x h_a> dr``
    with ``D = grad^2 P_tau f_N`` and ``S_{-a} = S - X_a h_a``. Their sum equals
    ``E[L P_tau f_N(S^m)]``. The r-integral uses Gauss-Legendre with
    ``nodes`` points; all evaluations share the same Gaussian draws.
    """
    _positive(tau)
    if nodes < 8:
        raise ValueError("use at least 8 Gauss-Legendre nodes")
    co = _coarse(m, N, law.dim)
    xr, wr = roots_legendre(nodes)
    r = 0.5 * (xr + 1.0)
    wr = 0.5 * wr
    basis = BasisIndex.all(m, law.dim)
    geo = []
    for a in basis:
        ell = co.ell(co.basis_u(a))
        geo.append((a, ell, float((ell * ell).sum()), co.basis_values(a)))
    t1, t2 = [], []
    for S, X, z in _walk_and_noise(m, N, law, reps, stream):
        SN = co.project(S)
        s1 = np.zeros(S.shape[0])
        s2 = np.zeros(S.shape[0])
        for a, ell, q, hv in geo:
            xa = X[:, a.cell, a.coord - 1]
            base = SN - xa[:, None, None] * hv
            D_full = _second_in_basis(F, SN, z, co, tau, ell, q)
            D_neg = _second_in_basis(F, base, z, co, tau, ell, q)
            s1 -= D_neg - D_full
            acc = np.zeros(S.shape[0])
            for rj, wj in zip(r, wr):
                acc += wj * (_second_in_basis(F, base + (rj * xa)[:, None, None] * hv, z, co, tau, ell, q) - D_neg)
            s2 -= xa * xa * acc
        t1.append(s1)
        t2.append(s2)
    return _estimate(t1, stream), _estimate(t2, stream)


# ---------------------------------------------------------------------------
# Stein-Dirichlet identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteinCheck:
    lhs: MCEstimate
    rhs: MCEstimate
    smoothing: MCEstimate
    integral: MCEstimate
    tail: float
    quad_error: float

    @property
    def budget(self):
        return 3.0 * combined_se(self.lhs, self.rhs) + self.tail + self.quad_error

    @property
    def passed(self):
        return abs(self.lhs.value - self.rhs.value) <= self.budget

    def __iter__(self):
        return iter((self.lhs, self.rhs))


def _sup_moment_bounds(m, law):
    """Deterministic bounds on ``E|S^m|_inf`` and ``E|B^m|_inf``."""
    d = law.dim
    # |S|_inf <= m^{-1/2} sum_a |X_a| and E|X| <= sqrt(E|X|^2)
    ex = math.sqrt(d) * law.scale
    eg = math.sqrt(d)
    return math.sqrt(m) * ex, math.sqrt(m) * eg


def stein_dirichlet_check(F, m, N, law, tau0, tau_max, reps, stream, batches=50, epsabs=1e-4, epsrel=1e-3):
    """Both sides of ``E f_N(B^m) - E f_N(S^m) = E[P_tau0 f_N(S) - f_N(S)] +
    int_tau0^inf E[L P_tau f_N(S)] dtau``.

    The tau-integral is truncated at ``tau_max`` and done by adaptive
    Gauss-Kronrod over log-spaced breakpoints on batch means of the integrand
    (common random numbers across tau, so the integrand is a smooth
    deterministic function of tau). The remainder beyond ``tau_max`` equals
    ``E P_{tau_max} f_N(S) - E f_N(B)`` and is bounded by coupling:
    ``Lip(F) (e^-tau E|S|_inf + (1 - beta) E|B|_inf)`` with ``1 - beta <= e^{-2tau}``.
    The quadrature tolerance only needs to sit well below the Monte Carlo
    resolution; the reported quadrature error is charged to the budget.
    """
    if not 0 < tau0 < tau_max:
        raise ValueError("need 0 < tau0 < tau_max")
    if reps % batches:
        raise ValueError("reps must be a multiple of batches")
    co = _coarse(m, N, law.dim)
    lhs_b = stream.child(10)
    gauss = IncrementLaw("gaussian", law.dim)
    fb = np.concatenate([F.evaluate(coarsen_values(S, N)) for S, _X, _z in _walk_and_noise(m, N, gauss, reps, lhs_b)])
    fs_all, smooth, Ss, zs = [], [], [], []
    t0 = OUTime(tau0)
    for S, _X, z in _walk_and_noise(m, N, law, reps, stream):
        SN = co.project(S)
        fS = F.evaluate(SN)
        g = t0.beta * co.path_of(z)
        c = t0.decay * SN
        smooth.append(0.5 * (F.evaluate(c + g) + F.evaluate(c - g)) - fS)
        fs_all.append(fS)
        Ss.append(S)
        zs.append(z)
    fs_all = np.concatenate(fs_all)
    S = np.concatenate(Ss)
    z = np.concatenate(zs)
    # lhs from independent draws of B and S (the S draws are reused on the rhs)
    lhs_samples = fb - np.concatenate([F.evaluate(coarsen_values(s, N)) for s, _x, _z in _walk_and_noise(m, N, law, reps, stream.child(11))])
    lhs = MCEstimate.from_samples(lhs_samples, stream.root)
    smooth = np.concatenate(smooth)

    def integrand(tau):
        return generator_samples(F, S, z, co, tau).reshape(batches, -1).mean(axis=1)

    pts = np.geomspace(tau0, tau_max, 9)[1:-1]
    integral_b, err = quad_vec(integrand, tau0, tau_max, epsabs=epsabs, epsrel=epsrel, norm="max", points=pts, limit=400)
    total_b = smooth.reshape(batches, -1).mean(axis=1) + integral_b
    rhs = MCEstimate(float(total_b.mean()), float(total_b.std(ddof=1) / np.sqrt(batches)), reps, stream.root)
    sm = MCEstimate.from_samples(smooth, stream.root)
    integ = MCEstimate(float(integral_b.mean()), float(integral_b.std(ddof=1) / np.sqrt(batches)), reps, stream.root)
    es, eb = _sup_moment_bounds(m, law)
    T = OUTime(tau_max)
    tail = F.lipschitz * (T.decay * es + (1.0 - T.beta) * eb) if F.lipschitz > 0 else 0.0
    return SteinCheck(lhs, rhs, sm, integ, float(tail), float(err))


# ---------------------------------------------------------------------------
# smoothing error and the Lipschitz-modulus probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothingCheck:
    gap: MCEstimate
    majorant: MCEstimate
    scale: float

    @property
    def ordered(self):
        """``|gap| <= majorant`` within 3 standard errors."""
        return abs(self.gap.value) <= self.majorant.value + 3.0 * combined_se(self.gap, self.majorant)


def smoothing_error_check(F, m, law, tau0, reps, stream, N=None, q=2):
    """``gap = E[f(S) - P_tau0 f(S)]`` and the coupling majorant
    ``E|f(S) - f(e^-tau0 S + beta Y)|``; ``scale = |X|_q sqrt(1 - e^-tau0)``."""
    t = _ou(tau0)
    N = m if N is None else N
    co = _coarse(m, N, law.dim)
    gaps, majs = [], []
    for S, _X, z in _walk_and_noise(m, N, law, reps, stream):
        SN = co.project(S)
        fS = F.evaluate(SN)
        g = t.beta * co.path_of(z)
        c = t.decay * SN
        fp, fm = F.evaluate(c + g), F.evaluate(c - g)
        gaps.append(fS - 0.5 * (fp + fm))
        majs.append(0.5 * (np.abs(fS - fp) + np.abs(fS - fm)))
    try:
        xq = law.norm_lq(q)
    except NotImplementedError:
        xq = math.sqrt(law.dim) * law.scale
    return SmoothingCheck(_estimate(gaps, stream), _estimate(majs, stream), xq * math.sqrt(-math.expm1(-t.tau)))


@dataclass(frozen=True)
class ProbeResult:
    delta: MCEstimate
    ratio: float
    scale: float


def lipschitz_modulus_probe(F, m, N, a, eps, tau, v, reps, stream, eta=0.1, check_regime=True):
    """Change of ``<grad^2 P_tau f_N(.), h_a x h_a>`` between ``v`` and
    ``v + eps h_a`` with common random numbers, and its ratio to
    ``e^{-5tau/2} / beta_{tau/2}^2 * eps * N^(eta-1/2) * (N/m)^(3/2)``.

    Uses the two-copy representation in coarse coordinates; the signed
    difference is returned as ``delta`` (the probe is ``|delta|``).
    """
    t = _positive(tau)
    if check_regime and not m > 8 * N:
        raise ValueError("the probe is stated for m > 8N")
    if v.m != m:
        v = refine(v, m)
    co = _coarse(m, N, v.dim)
    ell = co.ell(co.basis_u(a))
    bh = t.beta_half
    pref = math.exp(-1.5 * t.tau) / bh ** 2
    base0 = t.decay * co.project(v.values)
    base1 = base0 + t.decay * eps * co.basis_values(a)
    out = []
    for _s, _e, gen in stream.blocks(reps):
        n = _e - _s
        z = gen.standard_normal((n, N, v.dim))
        zh = gen.standard_normal((n, N, v.dim))
        A = math.exp(-0.5 * t.tau) * bh * co.path_of(z)
        B = bh * co.path_of(zh)
        w = np.einsum("rbd,bd->r", z, ell) * np.einsum("rbd,bd->r", zh, ell)

        def sym(base):
            return F.evaluate(base + A + B) - F.evaluate(base - A + B) - F.evaluate(base + A - B) + F.evaluate(base - A - B)

        out.append(pref * 0.25 * (sym(base1) - sym(base0)) * w)
    delta = _estimate(out, stream)
    scale = math.exp(-2.5 * t.tau) / bh ** 2 * eps * N ** (eta - 0.5) * (N / m) ** 1.5
    ratio = abs(delta.value) / scale if scale > 0 else 0.0
    return ProbeResult(delta, ratio, scale)

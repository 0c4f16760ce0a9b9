"""Distance estimates and rate experiments for walk-to-Brownian convergence.

The path-space Kantorovich-Rubinstein distance is not computable, so it is
bracketed: scalar 1-Lipschitz functionals give lower bounds through
one-dimensional Wasserstein-1 distances, and the coupled pathwise terms
(walk vs. its coarse projection, fine vs. coarse Brownian motion) are the
upper-bound ingredients.
"""
import math
import time
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

from . import kernels
from .functionals import abs_endpoint, endpoint, local_time
from .mc import MCEstimate
from .paths import IncrementLaw, coarsen_values, iter_walk_blocks, reflect_and_local_time, GridPath
from .rng import BLOCK, SeededStream
from .sobolev import LagRule, batch_quadrature_error, norm_eta_p_batch, norm_sup_batch

__all__ = [
    "RateFit",
    "rate_fit",
    "ExperimentReport",
    "scalar_w1",
    "w1_to_law",
    "projection_error",
    "interpolation_error",
    "kr_lower_bound",
    "running_max",
    "cube_root_rule",
    "envelope_check",
    "monotone_check",
    "donsker_rate_experiment",
    "local_time_experiment",
    "increment_modulus_check",
    "martingale_moment_check",
    "modulus_moments",
    "plateau_level",
    "plateau_exponent",
    "null_floor",
]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    x: tuple
    y: tuple
    slope: float
    intercept: float
    residual_norm: float
    slope_se: float

    def predict(self, x):
        return math.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def rate_fit(points):
    """Least-squares line through ``(ln size, ln value)``."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    x = np.array([a for a, _ in pts])
    y = np.array([b for _, b in pts])
    if np.any(np.diff(x) <= 0):
        raise ValueError("sizes must be strictly increasing")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("sizes and values must be positive")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    resid = ly - (res.intercept + res.slope * lx)
    return RateFit(tuple(x), tuple(y), float(res.slope), float(res.intercept), float(np.linalg.norm(resid)), float(res.stderr))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    tag: str
    params: dict
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self):
        return all(self.checks.values())


# ---------------------------------------------------------------------------
# one-dimensional Wasserstein-1
# ---------------------------------------------------------------------------


def scalar_w1(samples_a, samples_b):
    """``int |F_a - F_b|`` between two empirical laws (any sample sizes)."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    allv = np.concatenate([a, b])
    allv.sort(kind="mergesort")
    d = np.diff(allv)
    fa = np.searchsorted(a, allv[:-1], side="right") / a.size
    fb = np.searchsorted(b, allv[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * d))


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


class _Normal:
    @staticmethod
    def cdf(x):
        return ndtr(x)

    @staticmethod
    def ppf(c):
        return ndtri(c)

    @staticmethod
    def prim(x):
        # int_{-inf}^x cdf
        return x * ndtr(x) + _phi(x)

    @staticmethod
    def right_tail(x):
        # int_x^inf (1 - cdf)
        return _phi(x) - x * ndtr(-x)


class _HalfNormal:
    @staticmethod
    def cdf(x):
        return np.where(x > 0, 2.0 * ndtr(x) - 1.0, 0.0)

    @staticmethod
    def ppf(c):
        return ndtri(0.5 * (1.0 + c))

    @staticmethod
    def prim(x):
        xp = np.maximum(x, 0.0)
        return 2.0 * (xp * ndtr(xp) + _phi(xp)) - xp - 2.0 * _phi(0.0)

    @staticmethod
    def right_tail(x):
        xp = np.maximum(x, 0.0)
        return 2.0 * (_phi(xp) - xp * ndtr(-xp)) + (xp - x)


_LAWS = {"normal": _Normal, "halfnormal": _HalfNormal}


def w1_to_law(samples, law="normal"):
    """Exact ``int |F_n - F|`` between an empirical law and a normal or
    half-normal law, by integrating the CDF primitive over each quantile
    interval."""
    L = _LAWS[law]
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    lo, hi = x[:-1], x[1:]
    c = np.arange(1, n) / n
    s = np.clip(L.ppf(c), lo, hi)
    mid = (c * (s - lo) - (L.prim(s) - L.prim(lo))) + ((L.prim(hi) - L.prim(s)) - c * (hi - s))
    return float(L.prim(x[0]) + mid.sum() + L.right_tail(x[-1]))


def _w1_estimate(samples, law, seed, boot=50):
    """W1 to an exact law with a bootstrap standard error."""
    samples = np.asarray(samples, dtype=float)
    val = w1_to_law(samples, law)
    gen = SeededStream(seed).named("bootstrap").generator()
    bs = [w1_to_law(samples[gen.integers(0, samples.size, samples.size)], law) for _ in range(boot)]
    return MCEstimate(val, float(np.std(bs, ddof=1)), samples.size, seed)


def null_floor(n, law, stream, trials=20):
    """Mean W1 of an ``n``-sample drawn from the reference law itself (the
    Monte Carlo resolution of :func:`w1_to_law`)."""
    g = stream.named("floor").generator()
    vals = []
    for _ in range(trials):
        z = g.standard_normal(n)
        vals.append(w1_to_law(np.abs(z) if law == "halfnormal" else z, law))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# coupled pathwise terms
# ---------------------------------------------------------------------------


def _lcm(a, b):
    return a * b // math.gcd(a, b)


def _coarse_error_values(values, N):
    """``values - pi^N(values)`` on the common grid of both."""
    m = values.shape[1] - 1
    M = _lcm(m, N)
    fine = coarsen_values(values, M) if M != m else values
    coarse = coarsen_values(coarsen_values(values, N), M)
    return fine - coarse


def _power_estimate(power_chunks, idx, seed):
    est = MCEstimate.from_samples(np.concatenate(power_chunks), seed)
    return est.root(idx.p)


def projection_error(m, N, law, idx, reps, stream, rule=LagRule(), return_power=False):
    """``E[|S^m - pi^N S^m|_{eta,p}^p]^{1/p}`` from coupled samples.

    The estimate's ``se`` comes from the delta method; ``return_power``
    also returns the raw p-th moment estimate and the quadrature error
    measured on a subsample.
    """
    if N > m:
        raise ValueError("need N <= m")
    chunks = []
    qerr = 0.0
    for start, _stop, vals in iter_walk_blocks(m, law, reps, stream):
        if N == m:
            chunks.append(np.zeros(vals.shape[0]))
            continue
        diff = _coarse_error_values(vals, N)
        chunks.append(norm_eta_p_batch(diff, idx, rule, power=True))
        if start == 0:
            qerr = batch_quadrature_error(diff, idx, rule, sample=2)
    est = _power_estimate(chunks, idx, stream.root)
    if return_power:
        return est, MCEstimate.from_samples(np.concatenate(chunks), stream.root), qerr
    return est


def interpolation_error(N, m_fine, idx, reps, stream, rule=LagRule(), sup=False, dim=1):
    """``E[|B^N - B^{m_fine}|^p]^{1/p}`` with ``B^N`` the coarsening of the same
    fine Brownian path. ``sup=True`` uses the uniform norm (first moment).

    ``B^{m_fine}`` stands in for ``B``; its discretization bias is what the
    doubling run in :func:`donsker_rate_experiment` reports."""
    if m_fine % N:
        raise ValueError("N must divide m_fine")
    if m_fine == N:
        return MCEstimate.exact(0.0, stream.root, reps)
    if m_fine < 64 * N:
        raise ValueError("the Brownian stand-in needs m_fine >= 64 N")
    law = IncrementLaw("gaussian", dim)
    chunks = []
    for _s, _e, vals in iter_walk_blocks(m_fine, law, reps, stream):
        diff = _coarse_error_values(vals, N)
        if sup:
            chunks.append(norm_sup_batch(diff))
        else:
            chunks.append(norm_eta_p_batch(diff, idx, rule, power=True))
    if sup:
        return MCEstimate.from_samples(np.concatenate(chunks), stream.root)
    return _power_estimate(chunks, idx, stream.root)


# ---------------------------------------------------------------------------
# lower bounds from scalar functionals
# ---------------------------------------------------------------------------


def running_max():
    from .functionals import PathFunctional

    return PathFunctional("running_max", lambda v: v[..., 0].max(axis=1))


# functionals whose Brownian law is known exactly
EXACT_REFERENCE = {"endpoint": "normal", "abs_endpoint": "halfnormal", "local_time": "halfnormal", "running_max": "halfnormal"}


def default_kr_functionals():
    return [endpoint(), abs_endpoint(), local_time(), running_max()]


def kr_lower_bound(m, law, functionals, reps, stream, reference="exact", m_ref=None):
    """W1 between ``phi(S^m)`` and ``phi(B)`` for each 1-Lipschitz ``phi``.

    ``reference="exact"`` uses the closed-form law where known (normal
    endpoint, half-normal for |endpoint|, local time and running maximum);
    otherwise, or with ``reference="fine"``, ``B`` is simulated on grid
    ``m_ref``. Returns ``{tag: MCEstimate}``; the standard error is a
    bootstrap one.
    """
    out = {}
    values = {F.tag: [] for F in functionals}
    for _s, _e, vals in iter_walk_blocks(m, law, reps, stream):
        for F in functionals:
            values[F.tag].append(F.evaluate(vals))
    for F in functionals:
        if F.lipschitz != 1.0:
            raise ValueError(f"{F.tag} must be 1-Lipschitz")
        x = np.concatenate(values[F.tag])
        ref = EXACT_REFERENCE.get(F.tag) if reference == "exact" else None
        if ref is not None:
            out[F.tag] = _w1_estimate(x, ref, stream.root)
            continue
        mr = m_ref or 64 * m
        gl = IncrementLaw("gaussian", law.dim)
        y = np.concatenate([F.evaluate(v) for _s, _e, v in iter_walk_blocks(mr, gl, reps, stream.named("reference"))])
        val = scalar_w1(x, y)
        gen = stream.named("bootstrap").generator()
        bs = [scalar_w1(x[gen.integers(0, x.size, x.size)], y[gen.integers(0, y.size, y.size)]) for _ in range(30)]
        out[F.tag] = MCEstimate(val, float(np.std(bs, ddof=1)), x.size, stream.root)
    return out


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------


def cube_root_rule(m):
    """Smallest ``N`` with ``N^3 >= m``."""
    n = max(1, int(round(m ** (1.0 / 3.0))))
    while n ** 3 < m:
        n += 1
    while n > 1 and (n - 1) ** 3 >= m:
        n -= 1
    return n


def envelope_check(sizes, ests, rate, k=2.0):
    """One constant per curve, calibrated at the first point: every later
    value must satisfy ``value <= c * rate(size) + k * se``."""
    r = [rate(s) for s in sizes]
    c = ests[0].value / r[0]
    ok = all(e.value <= c * ri + k * e.se for e, ri in zip(ests, r))
    return ok, c


def monotone_check(ests, k=2.0):
    """Nonincreasing within ``k`` combined standard errors."""
    return all(b.value <= a.value + k * math.hypot(a.se, b.se) for a, b in zip(ests[:-1], ests[1:]))


def main_rate(eta):
    return lambda m: m ** (-1.0 / 6.0 + eta / 3.0) * max(math.log(m), 1.0)


def donsker_rate_experiment(ladder, law, idx, reps, stream, N_rule=cube_root_rule, fine_factor=64, functionals=None, rule=LagRule(), doubling=True, slope_tol=0.1):
    """Coupled terms and scalar lower bounds along an m-ladder.

    Checks: one envelope constant per curve, monotone decrease within 2 s.e.,
    and an m-slope of ``-(1/2 - eta)/3`` within ``slope_tol`` for the coupled
    terms A1 (walk vs. its coarsening) and A3 (coarse vs. fine Brownian).
    With ``doubling`` the A3 shift from doubling the fine grid is reported.
    """
    t0 = time.perf_counter()
    ladder = sorted(int(m) for m in ladder)
    functionals = functionals or default_kr_functionals()
    rep = ExperimentReport("rate", {"ladder": ladder, "law": law.tag, "eta": idx.eta, "p": idx.p, "reps": reps, "seed": stream.root})
    curves = {"A1": [], "A3": []}
    curves.update({F.tag: [] for F in functionals})
    for m in ladder:
        N = N_rule(m)
        sub = stream.child(m)
        a1 = projection_error(m, N, law, idx, reps, sub.child(1), rule)
        a3 = interpolation_error(N, fine_factor * N, idx, reps, sub.child(3), rule)
        kr = kr_lower_bound(m, law, functionals, reps, sub.child(2))
        curves["A1"].append(a1)
        curves["A3"].append(a3)
        for F in functionals:
            curves[F.tag].append(kr[F.tag])
        row = {"m": m, "N": N, "A1": a1, "A3": a3}
        row.update(kr)
        rep.rows.append(row)
        if doubling:
            # discretization bias of the Brownian stand-in, reported only
            a3d = interpolation_error(N, 2 * fine_factor * N, idx, reps, sub.child(4), rule)
            rep.params[f"A3_doubling_shift_{m}"] = a3d.value - a3.value
    rate = main_rate(idx.eta)
    for name, ests in curves.items():
        ok, c = envelope_check(ladder, ests, rate)
        rep.checks[f"envelope_{name}"] = ok
        rep.checks[f"monotone_{name}"] = monotone_check(ests)
        rep.params[f"c_{name}"] = c
        if len(ladder) >= 3 and all(e.value > 0 for e in ests):
            rep.fits[name] = rate_fit([(m, e.value) for m, e in zip(ladder, ests)])
    target = -(0.5 - idx.eta) / 3.0
    for name in ("A1", "A3"):
        if name in rep.fits:
            rep.checks[f"slope_{name}"] = abs(rep.fits[name].slope - target) <= slope_tol
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# local time
# ---------------------------------------------------------------------------


def _local_time_samples(m, law, reps, stream):
    out = []
    for _s, _e, gen in stream.blocks(reps):
        X = law.sample(gen, (_e - _s, m))[..., 0] / math.sqrt(m)
        mins, _ends = kernels.walk_min_and_end(X)
        out.append(-mins)
    return np.concatenate(out)


def reflection_lipschitz_check(m, pairs, stream):
    """Max of ``|R(x) - R(y)|_inf / |x - y|_inf`` over random walk pairs."""
    g = stream.named("lipschitz").generator()
    worst = 0.0
    for _ in range(pairs):
        x = GridPath(np.concatenate([[0.0], np.cumsum(g.standard_normal(m))]) / math.sqrt(m))
        y = GridPath(np.concatenate([[0.0], np.cumsum(g.standard_normal(m))]) / math.sqrt(m))
        rx, _ = reflect_and_local_time(x)
        ry, _ = reflect_and_local_time(y)
        num = np.abs(rx.values - ry.values).max()
        den = np.abs(x.values - y.values).max()
        if den > 0:
            worst = max(worst, num / den)
    return worst


def local_time_experiment(ladder, law, reps, stream, pairs=200):
    """Law of ``L_0^m(1)`` against the half-normal law along an m-ladder."""
    if law.dim != 1:
        raise NotImplementedError("local time needs d = 1")
    t0 = time.perf_counter()
    ladder = sorted(int(m) for m in ladder)
    rep = ExperimentReport("localtime", {"ladder": ladder, "law": law.tag, "reps": reps, "seed": stream.root})
    w1s, means = [], []
    for m in ladder:
        L = _local_time_samples(m, law, reps, stream.child(m))
        mean = MCEstimate.from_samples(L, stream.root)
        w1 = _w1_estimate(L, "halfnormal", stream.root)
        env = m ** (-1.0 / 6.0) * max(math.log(m), 1.0)
        rep.rows.append({"m": m, "W1": w1, "mean": mean, "envelope": env})
        w1s.append(w1)
        means.append(mean)
    ok, c = envelope_check(ladder, w1s, lambda m: m ** (-1.0 / 6.0) * max(math.log(m), 1.0))
    rep.params["c_W1"] = c
    rep.checks["envelope_W1"] = ok
    rep.checks["monotone_W1"] = monotone_check(w1s)
    rep.checks["mean_limit"] = means[-1].within(SQRT_2_OVER_PI, 3.0)
    rep.params["mean_gap"] = means[-1].value - SQRT_2_OVER_PI
    lip = reflection_lipschitz_check(64, pairs, stream)
    rep.params["reflection_lipschitz"] = lip
    rep.checks["reflection_lipschitz"] = bool(lip <= 2.0 + 1e-12)
    if len(ladder) >= 3:
        rep.fits["W1"] = rate_fit([(m, e.value) for m, e in zip(ladder, w1s)])
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# increment moments
# ---------------------------------------------------------------------------


def _interp_rows(S, t, n):
    """Values at time ``t`` (a Fraction) of affine paths stored as vertex rows
    ``S[:, i]`` on the grid ``i/n``; exact at grid points."""
    x = t * n
    i = min(math.floor(x), S.shape[1] - 2)
    lam = float(x - i)
    if lam == 0.0:
        return S[:, i]
    return S[:, i] + lam * (S[:, i + 1] - S[:, i])


def modulus_moments(m, N, law, pairs, p, reps, stream):
    """``E|pi^N(S)_{s,t} - S_{s,t}|^p`` for each ``(s, t)`` in ``pairs``.

    Times are Fractions (or anything ``Fraction`` accepts). Only the prefix
    of the walk up to the largest ``t`` is simulated, one sample shared by all
    pairs (common random numbers). Returns one ``MCEstimate`` per pair, already
    raised to the power ``1/p``.
    """
    if not N < m or m % N:
        raise ValueError("need N < m with N | m")
    if law.dim != 1:
        raise NotImplementedError("increment moments are computed for d = 1")
    pairs = [(Fraction(s), Fraction(t)) for s, t in pairs]
    if any(not 0 <= s <= t <= 1 for s, t in pairs):
        raise ValueError("need 0 <= s <= t <= 1")
    k = m // N
    span = max(1, math.ceil(max(t for _, t in pairs) * N))
    acc = np.zeros(len(pairs))
    sq = np.zeros(len(pairs))
    for start, stop, gen in stream.blocks(reps):
        X = law.sample(gen, (stop - start, span * k))[..., 0] / math.sqrt(m)
        S = np.zeros((X.shape[0], span * k + 1))
        np.cumsum(X, axis=1, out=S[:, 1:])
        C = S[:, ::k]
        for i, (s, t) in enumerate(pairs):
            d = (_interp_rows(C, t, N) - _interp_rows(C, s, N)) - (_interp_rows(S, t, m) - _interp_rows(S, s, m))
            d = np.abs(d) ** p
            acc[i] += d.sum()
            sq[i] += (d * d).sum()
    mean = acc / reps
    var = np.maximum(sq / reps - mean ** 2, 0.0)
    return [MCEstimate(float(a), float(math.sqrt(v / reps)), reps, stream.root).root(p) for a, v in zip(mean, var)]


def increment_modulus_check(m, N, law, reps, stream, p=20, lags=None, s=Fraction(37, 100)):
    """Moments of ``pi^N(S^m)_{s,t} - S^m_{s,t}`` on small lags (``t - s <=
    1/(4N)``) with the fitted time exponent, whose target is 1/2.

    ``s`` is given in coarse-cell units; the default keeps ``[s, t]`` inside
    one coarse cell for every default lag.
    """
    lags = lags or [Fraction(1, N * 2 ** j) for j in range(4, 10)]
    s0 = Fraction(s) / N
    ests = modulus_moments(m, N, law, [(s0, s0 + r) for r in lags], p, reps, stream)
    fit = rate_fit(sorted((float(r), e.value) for r, e in zip(lags, ests)))
    rep = ExperimentReport("increment_modulus", {"m": m, "N": N, "law": law.tag, "p": p, "reps": reps, "seed": stream.root})
    rep.rows = [{"lag": float(r), "moment": e} for r, e in zip(lags, ests)]
    rep.fits["time"] = fit
    rep.checks["time_exponent"] = abs(fit.slope - 0.5) <= 0.05
    rep.checks["envelope"] = all(e.value <= fit.predict(float(r)) * 1.5 for r, e in zip(lags, ests))
    return rep


def plateau_level(m, N, law, reps, stream, p=20, s=Fraction(37, 100), lag_cells=Fraction(9, 2)):
    """Moment at lag ``lag_cells / N`` with neither end on the coarse grid."""
    s0 = Fraction(s) / N
    return modulus_moments(m, N, law, [(s0, s0 + Fraction(lag_cells) / N)], p, reps, stream)[0]


def plateau_exponent(Ns, law, reps, stream, p=20, fine=64):
    """Fitted N-exponent of :func:`plateau_level` with ``m = fine * N``."""
    ests = [plateau_level(fine * N, N, law, reps, stream.child(N), p) for N in Ns]
    return ests, rate_fit([(N, e.value) for N, e in zip(Ns, ests)])


def martingale_moment_check(law, ks, p, reps, stream):
    """``E|sum_{i<k} X_i|^p`` for ``k`` in ``ks`` and its log-log slope in k."""
    ests = []
    for k in ks:
        vals = []
        for _s, _e, gen in stream.child(k).blocks(reps):
            vals.append(np.abs(law.sample(gen, (_e - _s, k))[..., 0].sum(axis=1)) ** p)
        ests.append(MCEstimate.from_samples(np.concatenate(vals), stream.root))
    fit = rate_fit([(k, e.value) for k, e in zip(ks, ests)])
    return ests, fit

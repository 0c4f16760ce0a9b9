"""Piecewise-linear paths on uniform grids, the hat-primitive basis, samplers
and the reflection map."""
from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from . import kernels
from .rng import BLOCK, SeededStream

__all__ = [
    "GridPath",
    "BasisIndex",
    "IncrementLaw",
    "eval_path",
    "increment",
    "basis_h",
    "sample_increments",
    "walk_values",
    "iter_walk_blocks",
    "sample_walk",
    "sample_walks",
    "sample_brownian",
    "coarsen",
    "coarsen_values",
    "refine",
    "common_refinement",
    "reflect_and_local_time",
    "local_time_knots",
    "local_time_at_one",
]


class GridPath:
    """Continuous path on [0, 1], affine on each cell ``[i/m, (i+1)/m]``."""

    __slots__ = ("_values",)

    def __init__(self, values):
        v = np.array(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 1:
            raise ValueError("values must have shape (m+1, d) with m >= 1")
        v.setflags(write=False)
        self._values = v

    @property
    def values(self):
        return self._values

    @property
    def m(self):
        return self._values.shape[0] - 1

    @property
    def dim(self):
        return self._values.shape[1]

    @classmethod
    def zeros(cls, m, dim=1):
        return cls(np.zeros((m + 1, dim)))

    @classmethod
    def from_function(cls, f, m):
        t = np.arange(m + 1) / m
        return cls(np.asarray([np.atleast_1d(f(s)) for s in t], dtype=float))

    def __call__(self, t):
        return eval_path(self, t)

    def __add__(self, other):
        a, b = common_refinement(self, other)
        return GridPath(a.values + b.values)

    def __sub__(self, other):
        a, b = common_refinement(self, other)
        return GridPath(a.values - b.values)

    def __mul__(self, lam):
        return GridPath(float(lam) * self._values)

    __rmul__ = __mul__

    def __neg__(self):
        return GridPath(-self._values)

    def __eq__(self, other):
        return isinstance(other, GridPath) and np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"GridPath(m={self.m}, dim={self.dim})"


@dataclass(frozen=True)
class BasisIndex:
    """Index ``a = (coord, cell)`` of the grid-``m`` basis; ``coord`` is 1-based."""

    coord: int
    cell: int
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("grid size must be positive")
        if not 0 <= self.cell < self.m:
            raise ValueError(f"cell {self.cell} outside 0..{self.m - 1}")
        if self.coord < 1:
            raise ValueError("coord is 1-based")

    @staticmethod
    def all(m, dim=1):
        return [BasisIndex(c, k, m) for c in range(1, dim + 1) for k in range(m)]


def _check_t(t):
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    return t


def eval_path(path, t):
    """Value of the path at time ``t`` (a d-vector)."""
    t = _check_t(t)
    m = path.m
    x = t * m
    i = min(int(np.floor(x)), m - 1)
    lam = x - i
    v = path.values
    if lam == 0.0:
        return v[i].copy()
    if lam == 1.0:
        return v[i + 1].copy()
    return v[i] + lam * (v[i + 1] - v[i])


def increment(path, s, t):
    s, t = _check_t(s), _check_t(t)
    if s > t:
        raise ValueError("increment needs s <= t")
    return eval_path(path, t) - eval_path(path, s)


def basis_h(idx, dim=1):
    """The basis path: flat zero, slope sqrt(m) on the cell, then 1/sqrt(m)."""
    if idx.coord > dim:
        raise ValueError("coordinate exceeds path dimension")
    m = idx.m
    v = np.zeros((m + 1, dim))
    v[idx.cell + 1 :, idx.coord - 1] = 1.0 / np.sqrt(m)
    return GridPath(v)


# ---------------------------------------------------------------------------
# increment laws
# ---------------------------------------------------------------------------

_TAGS = ("rademacher", "gaussian", "uniform", "custom-discrete")


@dataclass(frozen=True)
class IncrementLaw:
    """Law of a single walk increment ``X`` in R^d.

    Coordinates are i.i.d. copies of a centred scalar law. With the default
    ``normalization="identity"`` each coordinate has variance 1, so the walk
    converges to standard d-dimensional Brownian motion. ``"unit-norm"``
    rescales by ``1/sqrt(d)`` so that ``E|X|^2 = 1`` instead.
    """

    tag: str = "rademacher"
    dim: int = 1
    atoms: tuple = None
    weights: tuple = None
    normalization: str = "identity"

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError(f"unknown law {self.tag!r}; expected one of {_TAGS}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.normalization not in ("identity", "unit-norm"):
            raise ValueError("normalization must be 'identity' or 'unit-norm'")
        if self.tag == "custom-discrete":
            if self.atoms is None or self.weights is None:
                raise ValueError("custom-discrete needs atoms and weights")
            a = np.asarray(self.atoms, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if a.shape != w.shape or a.ndim != 1 or np.any(w < 0):
                raise ValueError("atoms and weights must be matching 1-d arrays, weights >= 0")
            object.__setattr__(self, "atoms", tuple(a.tolist()))
            object.__setattr__(self, "weights", tuple((w / w.sum()).tolist()))
            mean = float(np.dot(a, w / w.sum()))
            var = float(np.dot(a * a, w / w.sum()))
            if abs(mean) > 1e-12 or abs(var - 1.0) > 1e-12:
                raise ValueError(f"atoms must have mean 0 and variance 1 (got {mean}, {var})")

    @property
    def scale(self):
        return 1.0 if self.normalization == "identity" else 1.0 / np.sqrt(self.dim)

    def covariance(self):
        return self.scale ** 2 * np.eye(self.dim)

    def scalar_moment(self, q):
        """``E|X_1|^q`` for one coordinate before normalization."""
        from scipy.special import gamma

        if self.tag == "rademacher":
            return 1.0
        if self.tag == "gaussian":
            return 2 ** (q / 2) * gamma((q + 1) / 2) / np.sqrt(np.pi)
        if self.tag == "uniform":
            return 3 ** (q / 2) / (q + 1)
        a = np.abs(np.asarray(self.atoms))
        return float(np.dot(a ** q, self.weights))

    def norm_lq(self, q=3):
        """``(E|X|^q)^(1/q)``; exact for d = 1."""
        if self.dim != 1:
            raise NotImplementedError("closed form only for d = 1")
        return self.scale * self.scalar_moment(q) ** (1.0 / q)

    def sample(self, gen, shape):
        """Draw an array of shape ``shape + (dim,)``."""
        size = tuple(shape) + (self.dim,)
        if self.tag == "rademacher":
            x = 2.0 * gen.integers(0, 2, size=size).astype(float) - 1.0
        elif self.tag == "gaussian":
            x = gen.standard_normal(size)
        elif self.tag == "uniform":
            x = gen.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
        else:
            idx = gen.choice(len(self.atoms), size=size, p=np.asarray(self.weights))
            x = np.asarray(self.atoms)[idx]
        if self.normalization != "identity":
            x = x * self.scale
        return x


GAUSSIAN = IncrementLaw("gaussian")


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def walk_values(xi):
    """Vertex values from increments ``xi`` of shape ``(..., m, d)``."""
    xi = np.asarray(xi, dtype=float)
    m = xi.shape[-2]
    out = np.zeros(xi.shape[:-2] + (m + 1, xi.shape[-1]))
    np.cumsum(xi, axis=-2, out=out[..., 1:, :])
    out[..., 1:, :] *= 1.0 / np.sqrt(m)
    return out


def sample_increments(m, law, reps, stream, start=0, stop=None):
    """Increments ``X_a`` for replicates ``start..stop`` of an ensemble.

    Replicate ``r`` always comes from block ``r // BLOCK`` so any slice of the
    ensemble can be regenerated independently.
    """
    stop = reps if stop is None else stop
    out = []
    for b in range(start // BLOCK, (stop - 1) // BLOCK + 1):
        lo = b * BLOCK
        n = min(BLOCK, reps - lo)
        x = law.sample(stream.child(b).generator(), (n, m))
        out.append(x[max(start, lo) - lo : min(stop, lo + n) - lo])
    return np.concatenate(out, axis=0)


def iter_walk_blocks(m, law, reps, stream, with_increments=False):
    """Yield ``(start, stop, values)`` blocks of walk vertex values."""
    for b, start in enumerate(range(0, reps, BLOCK)):
        stop = min(reps, start + BLOCK)
        xi = law.sample(stream.child(b).generator(), (stop - start, m))
        if with_increments:
            yield start, stop, walk_values(xi), xi
        else:
            yield start, stop, walk_values(xi)


def sample_walks(m, law, reps, stream):
    """Vertex values of ``reps`` walks, shape ``(reps, m+1, d)``."""
    return walk_values(sample_increments(m, law, reps, stream))


def sample_walk(m, law, stream):
    return GridPath(sample_walks(m, law, 1, stream)[0])


def sample_brownian(m, stream, dim=1):
    """Brownian motion on the grid, affinely interpolated."""
    return sample_walk(m, IncrementLaw("gaussian", dim), stream)


# ---------------------------------------------------------------------------
# grid changes
# ---------------------------------------------------------------------------


def coarsen_values(values, N):
    """Interpolate vertex arrays ``(..., m+1, d)`` at the points ``j/N``."""
    v = np.asarray(values, dtype=float)
    m = v.shape[-2] - 1
    if N < 1:
        raise ValueError("N must be positive")
    j = np.arange(N + 1)
    q, r = np.divmod(j * m, N)
    q1 = np.minimum(q + 1, m)
    lam = (r / N)[:, None]
    lo = v[..., q, :]
    return lo + lam * (v[..., q1, :] - lo)


def coarsen(path, N):
    """The interpolation of ``path`` along the grid ``j/N``."""
    if N == path.m:
        return path
    return GridPath(coarsen_values(path.values, N))


def refine(path, M):
    """Same path on a finer grid ``M`` (a multiple of ``m``); exact."""
    if M % path.m:
        raise ValueError("refine needs a multiple of the current grid size")
    return GridPath(coarsen_values(path.values, M))


def common_refinement(p1, p2):
    M = p1.m * p2.m // gcd(p1.m, p2.m)
    return refine(p1, M), refine(p2, M)


# ---------------------------------------------------------------------------
# reflection and local time
# ---------------------------------------------------------------------------


def _scalar(path):
    if path.dim != 1:
        raise NotImplementedError("reflection and local time need a scalar path (d = 1)")
    return path.values[:, 0]


def reflect_and_local_time(path):
    """``(R, L)`` with ``L(t) = sup_{s<=t} max(0, -path(s))`` and ``R = path + L``.

    The running maximum of an affine piece is reached at a vertex, so both
    outputs are exact at the grid points.
    """
    v = _scalar(path)
    L = np.maximum.accumulate(np.maximum(-v, 0.0))
    return GridPath(v + L), GridPath(L)


def local_time_knots(path):
    """Exact breakpoints ``(t, L(t))`` of the local time, crossing points included.

    Between grid points ``L`` starts rising where ``-path`` crosses its running
    maximum; those crossing times are inserted as extra knots.
    """
    v = _scalar(path)
    m = path.m
    ts = [Fraction(0)]
    Ls = [max(0.0, -v[0])]
    cur = Ls[0]
    for i in range(m):
        y0, y1 = -v[i], -v[i + 1]
        if y1 > cur and y0 < cur:
            lam = (cur - y0) / (y1 - y0)
            ts.append(i + lam)
            Ls.append(cur)
        cur = max(cur, y1)
        ts.append(i + 1)
        Ls.append(cur)
    t = np.asarray([float(s) for s in ts]) / m
    return t, np.asarray(Ls)


def local_time_at_one(values):
    """``L(1)`` for a batch of scalar paths ``(R, m+1)`` or ``(R, m+1, 1)``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 3:
        v = v[..., 0]
    return np.maximum(-v.min(axis=1), 0.0)

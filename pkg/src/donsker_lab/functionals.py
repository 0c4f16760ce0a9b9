"""A small library of path functionals.

Each functional acts on batches of vertex arrays ``(R, n+1, d)`` (any grid
size ``n``) and declares its Lipschitz constant with respect to the uniform
norm; since the uniform norm is dominated by every admissible fractional norm
the same functionals are Lipschitz there too, up to the embedding constant.
Smooth members also expose first and second directional derivatives, used to
cross-check the derivative estimators.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .paths import GridPath

__all__ = [
    "PathFunctional",
    "at_time",
    "constant",
    "endpoint",
    "abs_endpoint",
    "sup_norm",
    "path_integral",
    "softmax",
    "local_time",
    "sin_endpoint",
    "square_endpoint",
    "cube_endpoint",
    "tanh_integral",
    "gauss_bump",
    "smooth_library",
    "lipschitz_library",
    "by_tag",
]


def _batch(values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[None]
    return v


def at_time(values, t, coord=1):
    """Coordinate ``coord`` (1-based) of each path at time ``t``."""
    v = _batch(values)
    n = v.shape[1] - 1
    x = t * n
    i = min(int(np.floor(x)), n - 1)
    lam = x - i
    c = coord - 1
    if lam == 0.0:
        return v[:, i, c]
    return v[:, i, c] + lam * (v[:, i + 1, c] - v[:, i, c])


def _integral(values, coord=1):
    v = _batch(values)[..., coord - 1]
    n = v.shape[1] - 1
    return (0.5 * (v[:, 0] + v[:, -1]) + v[:, 1:-1].sum(axis=1)) / n


@dataclass(frozen=True)
class PathFunctional:
    tag: str
    fn: Callable = field(repr=False)
    lipschitz: float = 1.0
    norm: str = "sup"
    grad: Optional[Callable] = field(default=None, repr=False)
    hess: Optional[Callable] = field(default=None, repr=False)

    def evaluate(self, values):
        return np.asarray(self.fn(_batch(values)), dtype=float)

    def __call__(self, path):
        if isinstance(path, GridPath):
            return float(self.evaluate(path.values)[0])
        return self.evaluate(path)

    @property
    def smooth(self):
        return self.grad is not None

    def directional(self, values, h_values):
        """``<grad F(x), h>`` for a batch of ``x`` and one direction ``h``."""
        if self.grad is None:
            raise NotImplementedError(f"{self.tag} has no analytic derivative")
        return np.asarray(self.grad(_batch(values), _batch(h_values)), dtype=float)

    def second_directional(self, values, h_values):
        if self.hess is None:
            raise NotImplementedError(f"{self.tag} has no analytic second derivative")
        return np.asarray(self.hess(_batch(values), _batch(h_values)), dtype=float)


def constant(c=1.0):
    return PathFunctional(
        f"constant({c:g})",
        lambda v: np.full(v.shape[0], float(c)),
        0.0,
        grad=lambda v, h: np.zeros(v.shape[0]),
        hess=lambda v, h: np.zeros(v.shape[0]),
    )


def endpoint(coord=1):
    return PathFunctional(
        "endpoint",
        lambda v: v[:, -1, coord - 1],
        grad=lambda v, h: np.broadcast_to(h[:, -1, coord - 1], (v.shape[0],)),
        hess=lambda v, h: np.zeros(v.shape[0]),
    )


def abs_endpoint(coord=1):
    return PathFunctional("abs_endpoint", lambda v: np.abs(v[:, -1, coord - 1]))


def sup_norm():
    return PathFunctional("sup_norm", lambda v: np.sqrt((v * v).sum(axis=2)).max(axis=1))


def path_integral(coord=1):
    return PathFunctional(
        "path_integral",
        lambda v: _integral(v, coord),
        grad=lambda v, h: np.broadcast_to(_integral(h, coord), (v.shape[0],)),
        hess=lambda v, h: np.zeros(v.shape[0]),
    )


def _softmax_parts(v, times, temp, coord):
    x = np.stack([at_time(v, t, coord) for t in times], axis=1) / temp
    mx = x.max(axis=1, keepdims=True)
    e = np.exp(x - mx)
    s = e.sum(axis=1, keepdims=True)
    return temp * (mx[:, 0] + np.log(s[:, 0])), e / s


def softmax(times=(0.25, 0.5, 0.75, 1.0), temp=0.25, coord=1):
    """Smooth maximum ``temp * log sum_j exp(x(t_j)/temp)``; 1-Lipschitz."""
    times = tuple(times)

    def hv(h):
        return np.stack([at_time(h, t, coord) for t in times], axis=1)

    def grad(v, h):
        _, w = _softmax_parts(v, times, temp, coord)
        return (w * hv(h)).sum(axis=1)

    def hess(v, h):
        _, w = _softmax_parts(v, times, temp, coord)
        hh = hv(h)
        m1 = (w * hh).sum(axis=1)
        return ((w * hh * hh).sum(axis=1) - m1 * m1) / temp

    return PathFunctional("softmax", lambda v: _softmax_parts(v, times, temp, coord)[0], grad=grad, hess=hess)


def local_time():
    """``L(1) = max(0, -min x)`` for scalar paths; 1-Lipschitz."""
    return PathFunctional("local_time", lambda v: np.maximum(-v[..., 0].min(axis=1), 0.0))


def sin_endpoint(coord=1):
    c = coord - 1
    return PathFunctional(
        "sin_endpoint",
        lambda v: np.sin(v[:, -1, c]),
        grad=lambda v, h: np.cos(v[:, -1, c]) * h[:, -1, c],
        hess=lambda v, h: -np.sin(v[:, -1, c]) * h[:, -1, c] ** 2,
    )


def square_endpoint(coord=1):
    c = coord - 1
    return PathFunctional(
        "square_endpoint",
        lambda v: v[:, -1, c] ** 2,
        np.inf,
        grad=lambda v, h: 2.0 * v[:, -1, c] * h[:, -1, c],
        hess=lambda v, h: np.broadcast_to(2.0 * h[:, -1, c] ** 2, (v.shape[0],)),
    )


def cube_endpoint(coord=1):
    c = coord - 1
    return PathFunctional(
        "cube_endpoint",
        lambda v: v[:, -1, c] ** 3,
        np.inf,
        grad=lambda v, h: 3.0 * v[:, -1, c] ** 2 * h[:, -1, c],
        hess=lambda v, h: 6.0 * v[:, -1, c] * h[:, -1, c] ** 2,
    )


def tanh_integral(coord=1):
    def grad(v, h):
        return (1.0 - np.tanh(_integral(v, coord)) ** 2) * _integral(h, coord)

    def hess(v, h):
        t = np.tanh(_integral(v, coord))
        return -2.0 * t * (1.0 - t * t) * _integral(h, coord) ** 2

    return PathFunctional("tanh_integral", lambda v: np.tanh(_integral(v, coord)), grad=grad, hess=hess)


def gauss_bump(t=0.5, coord=1):
    def grad(v, h):
        x = at_time(v, t, coord)
        return -x * np.exp(-0.5 * x * x) * at_time(h, t, coord)

    def hess(v, h):
        x = at_time(v, t, coord)
        return (x * x - 1.0) * np.exp(-0.5 * x * x) * at_time(h, t, coord) ** 2

    return PathFunctional(
        "gauss_bump",
        lambda v: np.exp(-0.5 * at_time(v, t, coord) ** 2),
        float(np.exp(-0.5)),
        grad=grad,
        hess=hess,
    )


def smooth_library():
    """Five smooth functionals with analytic directional derivatives."""
    return [sin_endpoint(), square_endpoint(), tanh_integral(), softmax(), gauss_bump()]


def lipschitz_library():
    return [endpoint(), abs_endpoint(), sup_norm(), path_integral(), softmax(), local_time()]


_REGISTRY = {
    "endpoint": endpoint,
    "abs_endpoint": abs_endpoint,
    "sup_norm": sup_norm,
    "path_integral": path_integral,
    "softmax": softmax,
    "local_time": local_time,
    "sin_endpoint": sin_endpoint,
    "square_endpoint": square_endpoint,
    "cube_endpoint": cube_endpoint,
    "tanh_integral": tanh_integral,
    "gauss_bump": gauss_bump,
}


def by_tag(tag):
    try:
        return _REGISTRY[tag]()
    except KeyError:
        raise ValueError(f"unknown functional {tag!r}; known: {sorted(_REGISTRY)}") from None

"""Chart points, metric component functions (MetricSpec) and exact metric jets."""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets as J
from .errors import DomainError, JetOrderError, NotPositiveDefinite

DIM = 4
MAX_ORDER = 8


@dataclass(frozen=True)
class ChartPoint:
    coords: tuple
    chart_id: str = "cartesian"

    def __post_init__(self):
        c = tuple(float(x) for x in self.coords)
        if len(c) != DIM:
            raise ValueError("a chart point has four coordinates")
        object.__setattr__(self, "coords", c)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)


@dataclass(frozen=True)
class Domain:
    """Open coordinate box.  Periodic coordinates ignore their bounds.

    ``twist`` optionally couples a period to a shift of another coordinate:
    ``{i: (j, shift)}`` identifies ``x_i -> x_i + period_i`` together with
    ``x_j -> x_j + shift``.
    """

    lower: tuple = (-np.inf,) * DIM
    upper: tuple = (np.inf,) * DIM
    periods: tuple = (None,) * DIM
    twist: dict = field(default_factory=dict)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        ok = np.ones(p.shape[:-1], dtype=bool)
        for i in range(DIM):
            if self.periods[i] is not None:
                continue
            ok &= (p[..., i] > self.lower[i]) & (p[..., i] < self.upper[i])
        return ok & np.all(np.isfinite(p), axis=-1)

    def intersect(self, other: "Domain") -> "Domain":
        return Domain(
            tuple(max(a, b) for a, b in zip(self.lower, other.lower)),
            tuple(min(a, b) for a, b in zip(self.upper, other.upper)),
            self.periods,
            dict(self.twist),
        )


def _as_points(p, chart_id: Optional[str] = None) -> np.ndarray:
    if isinstance(p, ChartPoint):
        if chart_id is not None and p.chart_id != chart_id:
            raise DomainError(f"point is in chart {p.chart_id!r}, metric uses {chart_id!r}")
        return p.array
    return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class MetricSpec:
    """A metric given by closed-form component functions on one chart.

    ``component_fn(x0, x1, x2, x3)`` returns a 4x4 nested sequence.  It must
    only use arithmetic and the helpers in :mod:`gravinst.jets`, so the same
    function evaluates on floats, arrays and jets.
    """

    component_fn: Callable
    domain: Domain = field(default_factory=Domain)
    orientation: int = 1
    chart_id: str = "cartesian"
    name: str = "metric"
    # asymptotic model data for ALF families (see gravinst.zoo.ALFModelData)
    alf: Optional[object] = field(default=None, compare=False, repr=False)

    def with_orientation(self, orientation: int) -> "MetricSpec":
        if orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        return dataclasses.replace(self, orientation=orientation)

    def flipped(self) -> "MetricSpec":
        return self.with_orientation(-self.orientation)

    def matrix(self, p) -> np.ndarray:
        p = _as_points(p, self.chart_id)
        rows = self.component_fn(*[p[..., i] for i in range(DIM)])
        shape = p.shape[:-1]
        return np.stack(
            [np.stack([np.broadcast_to(np.asarray(e, float), shape) for e in r], -1) for r in rows],
            -2,
        )

    def jet(self, p, order: int) -> J.Jet:
        p = _as_points(p, self.chart_id)
        x = J.variables(p, order)
        rows = self.component_fn(*x)
        rows = [[e if isinstance(e, J.Jet) else J.Jet.constant(np.broadcast_to(e, p.shape[:-1]), order) for e in r] for r in rows]
        return J.stack([J.stack(r, -1) for r in rows], -2)


@dataclass
class MetricJet:
    """Metric value and partial derivatives at one chart point.

    Derivative axes trail the metric axes: ``dg[a, b, c] = d_c g_ab``,
    ``d2g[a, b, c, d] = d_c d_d g_ab`` and so on.  Arrays beyond ``order`` are
    ``None``.
    """

    point: np.ndarray
    order: int
    g: np.ndarray
    dg: Optional[np.ndarray] = None
    d2g: Optional[np.ndarray] = None
    d3g: Optional[np.ndarray] = None
    d4g: Optional[np.ndarray] = None
    _taylor: Optional[J.Jet] = field(default=None, repr=False)

    @property
    def arrays(self) -> list:
        return [self.g, self.dg, self.d2g, self.d3g, self.d4g][: min(self.order, 4) + 1]

    @property
    def taylor(self) -> J.Jet:
        if self._taylor is None:
            self._taylor = J.Jet.from_derivatives(self.arrays)
        return self._taylor


def check_positive_definite(g: np.ndarray) -> None:
    g = np.asarray(g)
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-14 * np.max(np.abs(g))):
        raise NotPositiveDefinite("metric is not symmetric")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("metric is not positive definite") from exc


def _check_domain(spec: MetricSpec, p: np.ndarray) -> None:
    if not np.all(spec.domain.contains(p)):
        raise DomainError(f"point outside the domain of {spec.name}")


def evaluate_jet(spec: MetricSpec, p, order: int) -> MetricJet:
    """Exact metric jet by Taylor-mode differentiation of the components."""
    if not 0 <= order <= MAX_ORDER:
        raise JetOrderError(f"order must lie in [0, {MAX_ORDER}]")
    pts = _as_points(p, spec.chart_id)
    _check_domain(spec, pts)
    tj = spec.jet(pts, order)
    check_positive_definite(tj.value)
    arrays = [tj.derivative(k) for k in range(min(order, 4) + 1)]
    arrays += [None] * (5 - len(arrays))
    return MetricJet(pts, order, *arrays, _taylor=tj)


_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


def _fd_arrays(spec: MetricSpec, p: np.ndarray, order: int, step: float) -> list:
    cache = {}

    def at(offset):
        if offset not in cache:
            cache[offset] = spec.matrix(p + step * np.array(offset, dtype=float))
        return cache[offset]

    out = [at((0, 0, 0, 0))]
    for k in range(1, order + 1):
        arr = np.zeros((DIM, DIM) + (DIM,) * k)
        done = {}
        for idx in itertools.product(range(DIM), repeat=k):
            key = tuple(sorted(idx))
            if key not in done:
                counts = [key.count(v) for v in range(DIM)]
                axes = [_STENCILS[c] if c else ((0,), (1.0,)) for c in counts]
                acc = np.zeros((DIM, DIM))
                for combo in itertools.product(*[range(len(a[0])) for a in axes]):
                    off = tuple(axes[v][0][combo[v]] for v in range(DIM))
                    w = np.prod([axes[v][1][combo[v]] for v in range(DIM)])
                    acc = acc + w * at(off)
                done[key] = acc / step**k
            arr[(Ellipsis,) + idx] = done[key]
        out.append(arr)
    return out


def finite_difference_jet(
    spec: MetricSpec, p, order: int, step: float, richardson: bool = False
) -> MetricJet:
    """Central-difference metric jet with O(step^2) truncation error.

    With ``richardson`` the step and half-step results are combined to cancel
    the leading truncation term.
    """
    if not 0 <= order <= 4:
        raise JetOrderError("finite differences are provided up to order 4")
    pts = _as_points(p, spec.chart_id)
    if pts.ndim != 1:
        raise ValueError("finite_difference_jet takes a single point")
    reach = max(order, 1) * step
    for i in range(DIM):
        for s in (-1, 1):
            q = pts.copy()
            q[i] += s * reach
            if not spec.domain.contains(q):
                raise DomainError("finite-difference stencil leaves the domain")
    arrays = _fd_arrays(spec, pts, order, step)
    if richardson:
        half = _fd_arrays(spec, pts, order, step / 2)
        arrays = [arrays[0]] + [(4 * b - a) / 3 for a, b in zip(arrays[1:], half[1:])]
    check_positive_definite(arrays[0])
    arrays += [None] * (5 - len(arrays))
    return MetricJet(pts, order, *arrays)


@dataclass(frozen=True)
class Frame:
    """Oriented orthonormal coframe; row ``a`` of ``coframe`` holds e^a."""

    coframe: np.ndarray
    orientation: int

    @property
    def vectors(self) -> np.ndarray:
        """Dual frame: row ``a`` holds the components of e_a."""
        return np.swapaxes(np.linalg.inv(self.coframe), -1, -2)


def orthonormal_frame(g, orientation: int = 1) -> Frame:
    """Gram-Schmidt on dx^0..dx^3 under g^{-1}, then flip e^3 to fix the orientation."""
    g = np.asarray(g, dtype=float)
    check_positive_definite(g)
    ginv = np.linalg.inv(g)
    shape = g.shape[:-2]
    e = np.zeros(shape + (DIM, DIM))
    for a in range(DIM):
        v = np.zeros(shape + (DIM,))
        v[..., a] = 1.0
        for b in range(a):
            proj = np.einsum("...i,...ij,...j->...", v, ginv, e[..., b, :])
            v = v - proj[..., None] * e[..., b, :]
        norm = np.sqrt(np.einsum("...i,...ij,...j->...", v, ginv, v))
        e[..., a, :] = v / norm[..., None]
    sign = np.sign(np.linalg.det(e)) * orientation
    e[..., 3, :] *= sign[..., None]
    return Frame(e, orientation)


def coframe_volume_sign(frame: Frame) -> np.ndarray:
    return np.sign(np.linalg.det(frame.coframe))

"""Curvature stack and the Weyl split into self-dual and anti-self-dual halves.

:class:`LocalGeometry` holds everything as coordinate-tensor jets, so any
quantity built from it can be differentiated further.  3x3 matrices are only
formed at the base point, in the basis of :class:`SelfDualBasis`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from . import jets as J
from . import tensors as T
from .errors import DomainError, JetOrderError, WuCriterionError
from .geometry import Frame, MetricJet, MetricSpec, evaluate_jet, orthonormal_frame
from .jets import Jet
from .spectral import cardano_root

SQRT2 = math.sqrt(2.0)


def _wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...c,...d->...cd", a, b) - np.einsum("...d,...c->...cd", a, b)


@dataclass(frozen=True)
class SelfDualBasis:
    """omega_1 = e^0^e^1 + s e^2^e^3, omega_2 = e^0^e^2 + s e^3^e^1,
    omega_3 = e^0^e^3 + s e^1^e^2 with s = sign; each has |omega_i|^2 = 2.

    ``forms[..., i, a, b]`` are covariant components, ``raised[..., i, a, b]``
    the same forms with both indices raised.
    """

    forms: np.ndarray
    raised: np.ndarray
    sign: int
    frame: Frame

    def coefficients(self, phi: np.ndarray) -> np.ndarray:
        """x_i with P(phi) = sum_i x_i omega_i (projection onto this half)."""
        # <phi, omega_i> = 1/2 phi_ab omega_i^ab and <omega_i, omega_j> = 2 delta_ij
        return 0.25 * np.einsum("...ab,...iab->...i", phi, self.raised)

    def form(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...iab->...ab", coeffs, self.forms)

    def matrix(self, op: np.ndarray) -> np.ndarray:
        """M_ij = 1/2 <omega_i, O(omega_j)> for a 2-form endomorphism O_abcd."""
        return 0.125 * np.einsum("...abcd,...jab,...icd->...ij", op, self.raised, self.raised)


def self_dual_basis(frame: Frame, sign: int) -> SelfDualBasis:
    e = frame.coframe
    v = frame.vectors
    pairs = ((0, 1, 2, 3), (0, 2, 3, 1), (0, 3, 1, 2))
    forms = np.stack([_wedge(e[..., a, :], e[..., b, :]) + sign * _wedge(e[..., c, :], e[..., d, :])
                      for a, b, c, d in pairs], axis=-3)
    raised = np.stack([_wedge(v[..., a, :], v[..., b, :]) + sign * _wedge(v[..., c, :], v[..., d, :])
                       for a, b, c, d in pairs], axis=-3)
    return SelfDualBasis(forms, raised, sign, frame)


def top_eigenvector(m: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Unit eigenvector of symmetric 3x3 ``m`` for the simple eigenvalue ``alpha``."""
    a = m - alpha[..., None, None] * np.eye(3)
    r0, r1, r2 = a[..., 0, :], a[..., 1, :], a[..., 2, :]
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=-2)
    pick = np.argmax(np.linalg.norm(cands, axis=-1), axis=-1)
    v = np.take_along_axis(cands, pick[..., None, None], axis=-2)[..., 0, :]
    return v / np.linalg.norm(v, axis=-1)[..., None]


class LocalGeometry:
    """Curvature of a metric jet (possibly batched over points).

    ``orientation`` picks the positive volume form; ``sign`` arguments pick
    the self-dual (+1) or anti-self-dual (-1) half relative to it.
    """

    def __init__(self, g: Jet, orientation: int = 1):
        if g.order < 2:
            raise JetOrderError("curvature needs a metric jet of order >= 2")
        self.g = g
        self.orientation = orientation

    @property
    def order(self) -> int:
        return self.g.order

    @property
    def batch_shape(self):
        return self.g.shape[:-2]

    @cached_property
    def ginv(self) -> Jet:
        # every consumer differentiates g at least once, so order - 1 suffices
        return J.inv(self.g.truncate(self.order - 1))

    @cached_property
    def gamma(self) -> Jet:
        return T.christoffel(self.g, self.ginv)

    @cached_property
    def riemann(self) -> Jet:
        return T.riemann(self.g, self.gamma)

    @cached_property
    def ricci(self) -> Jet:
        return T.ricci(self.riemann, self.ginv)

    @cached_property
    def scalar(self) -> Jet:
        return T.trace2(self.ricci, self.ginv)

    @cached_property
    def eps(self) -> Jet:
        return T.epsilon(self.g.truncate(self.order - 1), self.orientation)

    @cached_property
    def identity(self) -> Jet:
        """Identity on 2-forms, at the order of the curvature (its only use)."""
        return T.identity2(self.g.truncate(max(self.order - 2, 0)))

    @cached_property
    def volume(self) -> Jet:
        return T.volume_density(self.g.truncate(self.order - 1))

    def projector(self, sign: int) -> Jet:
        ident = self.identity
        return (ident + self.eps.truncate(ident.order) * float(sign)) * 0.5

    def _cached(self, key, fn):
        store = self.__dict__.setdefault("_store", {})
        if key not in store:
            store[key] = fn()
        return store[key]

    def weyl(self, sign: int = 1) -> Jet:
        """W+ (sign=1) or W- as a 2-form endomorphism tensor."""
        def build():
            p = self.projector(sign).truncate(self.riemann.order)
            ginv = self.ginv
            rp = T.op_compose(self.riemann, p, ginv)
            prp = T.op_compose(p, rp, ginv)
            return prp - J.scale(p, self.scalar * (1.0 / 12.0))
        return self._cached(("weyl", sign), build)

    def weyl_norm_sq(self, sign: int = 1) -> Jet:
        return self._cached(("n2", sign), lambda: T.op_trace_product(self.weyl(sign), self.weyl(sign), self.ginv))

    def weyl_square(self, sign: int = 1) -> Jet:
        return self._cached(("w2", sign), lambda: T.op_compose(self.weyl(sign), self.weyl(sign), self.ginv))

    def weyl_det(self, sign: int = 1) -> Jet:
        """det W = tr(W^3)/3, valid because W is trace-free on a 3-dim space."""
        return self._cached(
            ("det", sign),
            lambda: T.op_trace_product(self.weyl_square(sign), self.weyl(sign), self.ginv) * (1.0 / 3.0),
        )

    def alpha(self, sign: int = 1) -> Jet:
        """Top eigenvalue of W as a jet: Cardano at the point, then Newton on the
        cubic in jet arithmetic (the derivative 3a^2 - |W|^2/2 is positive)."""
        def build():
            n2 = self.weyl_norm_sq(sign)
            det = self.weyl_det(sign)
            x = Jet.constant(cardano_root(n2.value, det.value), n2.order, n2.nvar)
            steps = max(1, math.ceil(math.log2(n2.order + 1)) + 1)
            for _ in range(steps):
                p = x * x * x - n2 * x * 0.5 - det
                dp = x * x * 3.0 - n2 * 0.5
                x = x - p / dp
            return x
        return self._cached(("alpha", sign), build)

    @cached_property
    def frame(self) -> Frame:
        return orthonormal_frame(self.g.value, self.orientation)

    def basis(self, sign: int = 1) -> SelfDualBasis:
        return self._cached(("basis", sign), lambda: self_dual_basis(self.frame, sign))

    def weyl_matrix(self, sign: int = 1) -> np.ndarray:
        m = self.basis(sign).matrix(self.weyl(sign).value)
        return 0.5 * (m + np.swapaxes(m, -1, -2))

    def eigenform_value(self, sign: int = 1, anchor: Optional[np.ndarray] = None) -> np.ndarray:
        """omega at the base point (|omega|^2 = 2), sign fixed by ``anchor``."""
        m = self.weyl_matrix(sign)
        det = self.weyl_det(sign).value
        if np.any(det <= 0):
            raise WuCriterionError("det W <= 0: the top eigenform is not determined")
        alpha = self.alpha(sign).value
        basis = self.basis(sign)
        v = orient_coefficients(top_eigenvector(m, alpha), basis, anchor)
        gap = _eigen_gap(m, alpha)
        if np.any(gap < 1e-10 * np.maximum(np.abs(alpha), 1e-300)):
            raise WuCriterionError("top eigenvalue is numerically not simple")
        return basis.form(v)

    def eigenform(self, sign: int = 1, anchor: Optional[np.ndarray] = None) -> Jet:
        """omega as a jet.  The spectral projector q(W) = (W - beta)(W - gamma)
        = W^2 + alpha W + (alpha^2 - |W|^2/2) kills the lower eigenspaces, so
        q(W) applied to the base-point form is a smooth multiple of omega."""
        def build():
            psi0 = self.eigenform_value(sign, anchor)
            w = self.weyl(sign)
            order = w.order
            ginv = self.ginv.truncate(order)
            psi = Jet.constant(psi0, order, w.nvar)
            wpsi = T.op_apply(w, psi, ginv)
            wwpsi = T.op_apply(w, wpsi, ginv)
            ppsi = T.op_apply(self.projector(sign).truncate(order), psi, ginv)
            alpha = self.alpha(sign)
            n2 = self.weyl_norm_sq(sign)
            c = alpha * alpha - n2 * 0.5
            raw = wwpsi + J.scale(wpsi, alpha) + J.scale(ppsi, c)
            norm = T.form_inner(raw, raw, ginv).sqrt()
            return J.scale(raw, norm.reciprocal() * SQRT2)
        key = ("omega", sign, None if anchor is None else np.asarray(anchor).tobytes())
        return self._cached(key, build)


def _eigen_gap(m: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    n2 = np.sum(m * m, axis=(-2, -1))
    disc = np.maximum(2.0 * n2 - 3.0 * alpha**2, 0.0)
    beta = 0.5 * (-alpha + np.sqrt(disc))
    return alpha - beta


def orient_coefficients(v: np.ndarray, basis: SelfDualBasis, anchor: Optional[np.ndarray]) -> np.ndarray:
    """Flip eigenvector coefficients so the form has positive inner product
    with ``anchor`` (a 2-form in coordinates, or coefficients in ``basis``).
    Without an anchor the largest coefficient is made positive."""
    if anchor is None:
        ref = np.take_along_axis(v, np.argmax(np.abs(v), axis=-1)[..., None], axis=-1)[..., 0]
    else:
        anchor = np.asarray(anchor, dtype=float)
        a = anchor if anchor.shape[-1] == 3 and anchor.ndim <= v.ndim and anchor.shape[-2:] != (4, 4) \
            else basis.coefficients(anchor)
        ref = np.sum(v * a, axis=-1)
        if np.any(np.abs(ref) <= 1e-12 * np.linalg.norm(a, axis=-1)):
            raise WuCriterionError("sign anchor is orthogonal to the eigenform")
    return v * np.where(ref < 0, -1.0, 1.0)[..., None]


@dataclass
class CurvatureBundle:
    christoffel: np.ndarray
    dchristoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    frame: Frame
    w_plus: np.ndarray
    w_minus: np.ndarray


def _as_geometry(jet: Union[MetricJet, Jet], orientation: int) -> LocalGeometry:
    if isinstance(jet, MetricJet):
        if jet.order < 2:
            raise JetOrderError("curvature needs a metric jet of order >= 2")
        jet = jet.taylor
    return LocalGeometry(jet, orientation)


def curvature_at(jet: Union[MetricJet, Jet], orientation: int = 1) -> CurvatureBundle:
    geo = _as_geometry(jet, orientation)
    if geo.order > 2:
        geo = LocalGeometry(geo.g.truncate(2), orientation)
    return CurvatureBundle(
        christoffel=geo.gamma.value,
        dchristoffel=geo.gamma.derivative(1),
        riemann=geo.riemann.value,
        ricci=geo.ricci.value,
        scalar=geo.scalar.value,
        frame=geo.frame,
        w_plus=geo.weyl_matrix(1),
        w_minus=geo.weyl_matrix(-1),
    )


@dataclass
class DivergenceResult:
    """delta(f W) components (indices b, c, d) and its g-norm.  ``scale`` is
    max(|nabla(f W)|, |f W| |Rm|^(1/2)), the size of the terms that cancel."""

    components: np.ndarray
    norm: np.ndarray
    scale: np.ndarray
    frame: Frame


def weyl_divergence(geo: LocalGeometry, sign: int = 1, f: Optional[Jet] = None) -> DivergenceResult:
    """-nabla^a (f W)_abcd at the base point."""
    if geo.order < 3:
        raise JetOrderError("the divergence of W needs a metric jet of order >= 3")
    w = geo.weyl(sign).truncate(1)
    if f is not None:
        w = J.scale(w, f)
    gamma = geo.gamma.truncate(0)
    ginv = geo.ginv.truncate(1)
    nw = T.covd(w, gamma)
    div = -J.einsum("...ax,...abcdx->...bcd", ginv, nw)
    gi = geo.ginv.value
    norm = _full_norm(div.value, gi)
    curv = np.sqrt(_full_norm(geo.riemann.value, gi))
    scale = np.maximum(_full_norm(nw.value, gi), _full_norm(w.value, gi) * curv)
    return DivergenceResult(div.value, norm, scale, geo.frame)


def _full_norm(t: np.ndarray, gi: np.ndarray) -> np.ndarray:
    k = t.ndim - (gi.ndim - 2)
    lo = "abcdef"[:k]
    hi = "ABCDEF"[:k]
    expr = f"...{lo}," + ",".join(f"...{l}{u}" for l, u in zip(lo, hi)) + f",...{hi}->..."
    return np.sqrt(np.abs(np.einsum(expr, t, *([gi] * k), t)))


def divergence_w_plus(spec: MetricSpec, p, orientation: int = 1) -> DivergenceResult:
    jet = evaluate_jet(spec.with_orientation(orientation), p, 3)
    return weyl_divergence(LocalGeometry(jet.taylor, orientation), 1)


def rough_laplacian_tensor(t: Jet, geo: LocalGeometry) -> Jet:
    order = t.order
    return T.rough_laplacian(t, geo.gamma.truncate(order - 1), geo.ginv.truncate(order))


def rough_laplacian_weyl_matrix(geo: LocalGeometry, sign: int = 1, f: Optional[Jet] = None) -> np.ndarray:
    """3x3 matrix of nabla* nabla (f W) in the basis of the given half."""
    if geo.order < 4:
        raise JetOrderError("nabla* nabla W needs a metric jet of order >= 4")
    w = geo.weyl(sign).truncate(2)
    if f is not None:
        w = J.scale(w, f)
    lap = rough_laplacian_tensor(w, geo)
    m = geo.basis(sign).matrix(lap.value)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def rough_laplacian_fw(
    spec: MetricSpec,
    p,
    f_field: Optional[Callable] = None,
    orientation: int = 1,
) -> np.ndarray:
    """nabla* nabla (f W+) at ``p`` in the Lambda+ basis.

    ``f_field(x0, x1, x2, x3)`` is written with the helpers of
    :mod:`gravinst.jets` like a metric component; ``None`` means f = 1.
    """
    jet = evaluate_jet(spec.with_orientation(orientation), p, 4)
    geo = LocalGeometry(jet.taylor, orientation)
    f = None
    if f_field is not None:
        x = J.variables(np.asarray(jet.point, dtype=float), 4)
        f = f_field(*x)
        if not isinstance(f, Jet):
            f = Jet.constant(np.broadcast_to(f, geo.batch_shape), 4)
        if np.any(f.value <= 0):
            raise DomainError("f must be positive")
    return rough_laplacian_weyl_matrix(geo, 1, f)

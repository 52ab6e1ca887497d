"""Top eigenvalue and eigenform of W+, the conformal rescaling g = alpha_h^(2/3) h,
and the Kahler / extremal / Killing checks on the rescaled metric.

Jet order bookkeeping: a quantity needing k derivatives of ``g`` at a point
needs ``k + 2`` derivatives of ``h`` (``g`` contains the curvature of ``h``).
:class:`WuStack` is built from an ``h`` jet of a chosen order and exposes every
derived field as a jet of the order it can support.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import jets as J
from . import tensors as T
from .curvature import LocalGeometry, SelfDualBasis, orient_coefficients, top_eigenvector
from .errors import JetOrderError, WuCriterionError
from .geometry import MetricSpec, _as_points, _check_domain, check_positive_definite
from .jets import Jet
from .spectral import WuSpectrum, cardano_alpha, jacobi_eigen_oracle  # noqa: F401  (re-exported)

GAP_TOL = 1e-10


def conformal_factor(alpha_h):
    """f = alpha_h^(-1/3); then g = f^-2 h has alpha_g f = 1."""
    if isinstance(alpha_h, Jet):
        if np.any(alpha_h.value <= 0):
            raise WuCriterionError("alpha_h must be positive")
        return alpha_h.power(-1.0 / 3.0)
    a = np.asarray(alpha_h, dtype=float)
    if np.any(a <= 0):
        raise WuCriterionError("alpha_h must be positive")
    return a ** (-1.0 / 3.0)


def top_eigenform(w: np.ndarray, basis: SelfDualBasis, sign_anchor=None) -> np.ndarray:
    """Top eigenform of the 3x3 matrix ``w`` as a 2-form with |omega|^2 = 2.

    ``sign_anchor`` is a 2-form (coordinate components) or a coefficient
    vector in ``basis``; the result has positive inner product with it.
    """
    spec = cardano_alpha(w)
    if np.any(spec.det_w <= 0):
        raise WuCriterionError("det W <= 0")
    if np.any(spec.alpha - spec.beta < GAP_TOL * np.maximum(spec.alpha, 1e-300)):
        raise WuCriterionError("top eigenvalue is numerically not simple")
    v = orient_coefficients(top_eigenvector(np.asarray(w, float), spec.alpha), basis, sign_anchor)
    return basis.form(v)


def eigenform_coefficients(w: np.ndarray, sign_anchor=None) -> np.ndarray:
    """Unit top eigenvector of ``w``; the sign is fixed against an anchor vector."""
    spec = cardano_alpha(w)
    v = top_eigenvector(np.asarray(w, float), spec.alpha)
    if sign_anchor is None:
        return v
    ref = np.sum(v * np.asarray(sign_anchor, float), axis=-1)
    return v * np.where(ref < 0, -1.0, 1.0)[..., None]


# rescaled metric ---------------------------------------------------------------

@dataclass(frozen=True)
class RescaledMetricSpec(MetricSpec):
    """g = alpha_h^(2/3) h, where alpha_h is the top eigenvalue of W+ of ``base``
    (W- when ``sign`` is -1).  Evaluating a jet of order n differentiates
    ``base`` to order n + 2."""

    base: Optional[MetricSpec] = None
    sign: int = 1

    def _alpha(self, pts, order):
        h = self.base.jet(pts, order + 2)
        geo = LocalGeometry(h, self.orientation)
        det = geo.weyl_det(self.sign).value
        if np.any(det <= 0):
            raise WuCriterionError(f"det W{'+' if self.sign > 0 else '-'} <= 0 for {self.base.name}")
        return h, geo.alpha(self.sign)

    def matrix(self, p) -> np.ndarray:
        pts = _as_points(p, self.chart_id)
        h, alpha = self._alpha(pts, 0)
        return h.value * (alpha.value ** (2.0 / 3.0))[..., None, None]

    def jet(self, p, order: int) -> Jet:
        pts = _as_points(p, self.chart_id)
        h, alpha = self._alpha(pts, order)
        return J.scale(h.truncate(order), alpha.power(2.0 / 3.0))


def rescaled_metric(spec: MetricSpec, sign: int = 1) -> RescaledMetricSpec:
    def unavailable(*x):
        raise TypeError("the rescaled metric is evaluated through matrix() / jet()")
    return RescaledMetricSpec(
        component_fn=unavailable,
        domain=spec.domain,
        orientation=spec.orientation,
        chart_id=spec.chart_id,
        name=f"rescaled[{spec.name}]",
        alf=spec.alf,
        base=spec,
        sign=sign,
    )


# the stack -------------------------------------------------------------------------

def _lower(v: Jet, g: Jet) -> Jet:
    return J.einsum("...ab,...b->...a", g.truncate(v.order), v)


def _raise(w: Jet, ginv: Jet) -> Jet:
    return J.einsum("...ab,...b->...a", ginv, w)


def complex_structure(omega: Jet, ginv: Jet) -> Jet:
    """J^c_a = g^{cb} omega_ab, stored with axes [..., c, a], so that
    omega(X, Y) = g(JX, Y)."""
    return J.einsum("...cb,...ab->...ca", ginv, omega)


def tensor_norm(t: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Full tensor norm (no form factors) of a covariant tensor at points."""
    k = t.ndim - (ginv.ndim - 2)
    letters = "abcdefgh"[:k]
    up = "ABCDEFGH"[:k]
    expr = "..." + letters + "," + ",".join(f"...{l}{u}" for l, u in zip(letters, up)) + ",..." + up + "->..."
    return np.sqrt(np.abs(np.einsum(expr, t, *([ginv] * k), t)))


def killing_form(geo: LocalGeometry, xi_up: Jet) -> Jet:
    """nabla_(a xi_b) (symmetrised, without the 1/2)."""
    xi = _lower(xi_up, geo.g)
    n = T.covd(xi, geo.gamma.truncate(xi.order - 1))
    return n + n.transpose(*range(len(n.shape) - 2), len(n.shape) - 1, len(n.shape) - 2)


def killing_residual_jet(geo: LocalGeometry, xi_up: Jet) -> tuple:
    """(|nabla_(a xi_b)|, |nabla xi|) at the base points, norms in the metric of ``geo``."""
    if xi_up.order < 1:
        raise JetOrderError("the Killing residual needs a first-order jet of xi")
    xi = _lower(xi_up, geo.g)
    n = T.covd(xi, geo.gamma.truncate(xi.order - 1))
    nd = len(n.shape)
    sym = (n + n.transpose(*range(nd - 2), nd - 1, nd - 2)) * 0.5
    gi = geo.ginv.value
    return tensor_norm(sym.value, gi), tensor_norm(n.value, gi)


def jacobi_killing_residual_jet(geo: LocalGeometry, xi_up: Jet) -> tuple:
    """(|nabla_a nabla_b xi_c - R_{dabc} xi^d|, |nabla nabla xi|): a Killing field
    restricted to a geodesic is a Jacobi field.  The index order of the
    curvature term is fixed for this package's Riemann convention and checked
    on the rotations of the round sphere."""
    if xi_up.order < 2:
        raise JetOrderError("the Jacobi-Killing residual needs a second-order jet of xi")
    xi = _lower(xi_up, geo.g)
    gam = geo.gamma
    nn = T.covd(T.covd(xi, gam.truncate(xi.order - 1)), gam.truncate(xi.order - 2))
    # nn[..., c, b, a] = nabla_a nabla_b xi_c
    riem = geo.riemann.value
    curv = np.einsum("...dabc,...d->...cba", riem, xi_up.value)
    res = nn.value - curv
    gi = geo.ginv.value
    return tensor_norm(res, gi), tensor_norm(nn.value, gi)


class WuStack:
    """Everything the conformal-Kahler construction produces, at a batch of points.

    ``order`` is the jet order of h.  Available jet orders, with n = order:
    alpha_h, omega, g, f: n - 2; J: n - 3; s_g, alpha_g: n - 4; xi: n - 5.
    """

    def __init__(self, spec: MetricSpec, points, order: int = 5, sign: int = 1,
                 anchor=None, check_domain: bool = True):
        pts = _as_points(points, spec.chart_id)
        if check_domain:
            _check_domain(spec, pts)
        if order < 4:
            raise JetOrderError("the rescaled stack needs an h jet of order >= 4")
        self.spec = spec
        self.points = pts
        self.order = order
        self.sign = sign
        self.orientation = spec.orientation
        self.anchor = anchor
        h = spec.jet(pts, order)
        check_positive_definite(h.value)
        self.h_geo = LocalGeometry(h, spec.orientation)
        det = self.h_geo.weyl_det(sign).value
        if np.any(det <= 0):
            raise WuCriterionError("det W+ <= 0 at some point: the Wu criterion fails")

    # h side ------------------------------------------------------------------
    @cached_property
    def spectrum_h(self) -> WuSpectrum:
        return cardano_alpha(self.h_geo.weyl_matrix(self.sign))

    @property
    def alpha_h(self) -> Jet:
        return self.h_geo.alpha(self.sign)

    @cached_property
    def f(self) -> Jet:
        return conformal_factor(self.alpha_h)

    @cached_property
    def omega_h(self) -> Jet:
        return self.h_geo.eigenform(self.sign, self.anchor)

    # g side ------------------------------------------------------------------
    @cached_property
    def g(self) -> Jet:
        return J.scale(self.h_geo.g.truncate(self.alpha_h.order), self.alpha_h.power(2.0 / 3.0))

    @cached_property
    def g_geo(self) -> LocalGeometry:
        return LocalGeometry(self.g, self.orientation)

    @cached_property
    def omega(self) -> Jet:
        """Kahler form candidate with |omega|_g^2 = 2 (the same line in Lambda+)."""
        return J.scale(self.omega_h, self.alpha_h.power(2.0 / 3.0))

    @cached_property
    def J(self) -> Jet:
        return complex_structure(self.omega, self.g_geo.ginv)

    @property
    def s_g(self) -> Jet:
        return self.g_geo.scalar

    @property
    def alpha_g(self) -> Jet:
        return self.g_geo.alpha(self.sign)

    @cached_property
    def xi(self) -> Jet:
        """xi = J grad s_g, as a vector field (upper index)."""
        if self.s_g.order < 1:
            raise JetOrderError("xi needs an h jet of order >= 5")
        ds = self.s_g.grad()
        grad = _raise(ds, self.g_geo.ginv)
        return J.einsum("...ca,...a->...c", self.J.truncate(grad.order), grad)

    # residuals -------------------------------------------------------------------
    def nabla_omega(self) -> np.ndarray:
        """|nabla omega|_g with the 2-form inner product on the form indices."""
        om = self.omega.truncate(1)
        n = T.covd(om, self.g_geo.gamma.truncate(0))
        return tensor_norm(n.value, self.g_geo.ginv.value) / math.sqrt(2.0)

    def eigen_residual(self) -> np.ndarray:
        """|W+_g(omega) - alpha_g omega|_g."""
        geo = self.g_geo
        w = geo.weyl(self.sign).value
        om = self.omega.value
        gi = geo.ginv.value
        up = np.einsum("...ac,...bd,...cd->...ab", gi, gi, om)
        wom = 0.5 * np.einsum("...abcd,...ab->...cd", w, up)
        res = wom - self.alpha_g.value[..., None, None] * om
        return tensor_norm(res, gi) / math.sqrt(2.0)

    def killing_residual(self, metric: str = "h") -> tuple:
        geo = self.h_geo if metric == "h" else self.g_geo
        return killing_residual_jet(geo, self.xi)

    def jacobi_killing_residual(self, metric: str = "h") -> tuple:
        geo = self.h_geo if metric == "h" else self.g_geo
        return jacobi_killing_residual_jet(geo, self.xi)

    def data(self) -> "WuData":
        xi = self.xi.value if self.s_g.order >= 1 else None
        return WuData(
            points=self.points,
            spectrum=self.spectrum_h,
            omega=self.omega.value,
            f=self.f.value,
            J=self.J.value,
            s_g=self.s_g.value,
            alpha_g=self.alpha_g.value,
            xi=xi,
        )


@dataclass
class WuData:
    points: np.ndarray
    spectrum: WuSpectrum
    omega: np.ndarray
    f: np.ndarray
    J: np.ndarray
    s_g: np.ndarray
    alpha_g: np.ndarray
    xi: Optional[np.ndarray] = None


def rescaled_stack(spec: MetricSpec, p, orientation: Optional[int] = None, anchor=None,
                   order: int = 5) -> WuData:
    if orientation is not None:
        spec = spec.with_orientation(orientation)
    return WuStack(spec, p, order=order, anchor=anchor).data()


def nabla_omega_residual(spec: MetricSpec, p, anchor=None) -> np.ndarray:
    return WuStack(spec, p, order=4, anchor=anchor).nabla_omega()


# vector fields given in closed form --------------------------------------------------

def vector_field_jet(xi_field: Union[Callable, Jet], pts: np.ndarray, order: int) -> Jet:
    if isinstance(xi_field, Jet):
        return xi_field.truncate(order)
    comps = xi_field(*J.variables(pts, order))
    shape = pts.shape[:-1]
    comps = [c if isinstance(c, Jet) else Jet.constant(np.broadcast_to(np.asarray(c, float), shape), order)
             for c in comps]
    return J.stack(comps, -1)


def killing_residual(spec: MetricSpec, xi_field, p) -> np.ndarray:
    """|nabla_(a xi_b)| in the metric ``spec``; ``xi_field(x0..x3)`` returns the
    four contravariant components (jet helpers allowed)."""
    pts = _as_points(p, spec.chart_id)
    geo = LocalGeometry(spec.jet(pts, 2), spec.orientation)
    return killing_residual_jet(geo, vector_field_jet(xi_field, pts, 2))[0]


def jacobi_killing_residual(spec: MetricSpec, xi_field, p) -> np.ndarray:
    pts = _as_points(p, spec.chart_id)
    geo = LocalGeometry(spec.jet(pts, 3), spec.orientation)
    return jacobi_killing_residual_jet(geo, vector_field_jet(xi_field, pts, 3))[0]


# ambitoric structure -----------------------------------------------------------------

@dataclass
class AmbiKahlerPair:
    plus: WuData
    minus: WuData
    S: np.ndarray            # S^a_b at the points, axes [..., a, b]
    scale_minus: float       # constant multiplying alpha_- after normalisation
    flip_minus: bool         # whether J_- was replaced by -J_-
    killing_tensor_residual: np.ndarray
    killing_tensor_scale: np.ndarray


def _killing_field_of(geo: LocalGeometry, sign: int, anchor) -> tuple:
    """(alpha, J, xi) jets with alpha = alpha_h^(1/3) and
    xi = J grad_{g} alpha, g = alpha^2 h."""
    a3 = geo.alpha(sign)
    alpha = a3.power(1.0 / 3.0)
    om_h = geo.eigenform(sign, anchor)
    jm = complex_structure(om_h, geo.ginv)  # J is conformally invariant
    grad_h = _raise(alpha.grad(), geo.ginv)
    inv_a2 = alpha.truncate(grad_h.order).power(-2.0)
    xi = J.scale(J.einsum("...ca,...a->...c", jm.truncate(grad_h.order), grad_h), inv_a2)
    return alpha, jm, xi


def ambitoric_stack(spec: MetricSpec, p, anchor=None, order: int = 3) -> AmbiKahlerPair:
    """The endomorphism S = 1/2 (alpha_+^-2 + alpha_-^-2) I + (alpha_+ alpha_-)^-1 J_+ J_-
    and the residual of its Killing-tensor equation in h.

    J_- is flipped and alpha_- rescaled by one constant so that the two Killing
    fields J_+- grad alpha_+- agree; the constant is the median over the points.
    """
    pts = _as_points(p, spec.chart_id)
    _check_domain(spec, pts)
    geo = LocalGeometry(spec.jet(pts, order), spec.orientation)
    for sign in (1, -1):
        if np.any(geo.weyl_det(sign).value <= 0):
            raise WuCriterionError(f"det W{'+' if sign > 0 else '-'} <= 0: no ambi-Kahler pair")
    a_p, j_p, xi_p = _killing_field_of(geo, 1, anchor)
    a_m, j_m, xi_m = _killing_field_of(geo, -1, anchor)

    h0 = geo.g.value
    dot = np.einsum("...a,...ab,...b->...", xi_m.value, h0, xi_p.value)
    nrm = np.einsum("...a,...ab,...b->...", xi_p.value, h0, xi_p.value)
    c = float(np.median(dot / nrm))
    if c == 0.0:
        raise WuCriterionError("the two Killing fields are orthogonal")
    flip = c < 0
    lam = abs(c)
    if flip:
        j_m = -j_m
    # g_- -> lam^2 g_- multiplies alpha_- by lam and divides xi_- by lam
    a_m = a_m * lam

    k = min(j_p.order, a_p.order)
    ip = a_p.truncate(k).reciprocal()
    im = a_m.truncate(k).reciprocal()
    eye = Jet.constant(np.broadcast_to(np.eye(4), geo.batch_shape + (4, 4)), k)
    jj = J.einsum("...ab,...bc->...ac", j_p.truncate(k), j_m.truncate(k))
    s_op = J.scale(eye, (ip * ip + im * im) * 0.5) + J.scale(jj, ip * im)
    # K_ab = h_ac S^c_b
    kt = J.einsum("...ac,...cb->...ab", geo.g.truncate(k), s_op)
    kt = (kt + kt.transpose(*range(len(kt.shape) - 2), len(kt.shape) - 1, len(kt.shape) - 2)) * 0.5
    nk = T.covd(kt, geo.gamma.truncate(k - 1)).value  # [a, b, c] = nabla_c K_ab
    sym = (nk + np.einsum("...abc->...bca", nk) + np.einsum("...abc->...cab", nk)) / 3.0
    gi = geo.ginv.value
    res = tensor_norm(sym, gi)
    scale = tensor_norm(nk, gi)

    def pack(sign, alpha, jm, xi):
        return WuData(points=pts, spectrum=cardano_alpha(geo.weyl_matrix(sign)), omega=geo.eigenform(sign, anchor).value,
                      f=alpha.value ** -1.0, J=jm.value, s_g=6.0 * alpha.value, alpha_g=alpha.value, xi=xi.value)

    return AmbiKahlerPair(
        plus=pack(1, a_p, j_p, xi_p),
        minus=pack(-1, a_m, j_m, xi_m / lam if not flip else -xi_m / lam),
        S=s_op.value,
        scale_minus=lam,
        flip_minus=flip,
        killing_tensor_residual=res,
        killing_tensor_scale=scale,
    )


def killing_tensor_residual(spec: MetricSpec, p, anchor=None) -> np.ndarray:
    return ambitoric_stack(spec, p, anchor).killing_tensor_residual


# sign continuity along a path ------------------------------------------------------

def eigenforms_along_path(spec: MetricSpec, path: np.ndarray, seed_anchor=None, sign: int = 1) -> np.ndarray:
    """omega (|omega|^2 = 2, metric ``spec``) at successive points of ``path``,
    each anchored by the previous one; the first is anchored by ``seed_anchor``."""
    pts = _as_points(path, spec.chart_id)
    geo = LocalGeometry(spec.jet(pts, 2), spec.orientation)
    if np.any(geo.weyl_det(sign).value <= 0):
        raise WuCriterionError("det W <= 0 on the path")
    m = geo.weyl_matrix(sign)
    alpha = geo.alpha(sign).value
    basis = geo.basis(sign)
    vecs = top_eigenvector(m, alpha)
    forms = basis.form(vecs)
    out = np.empty_like(forms)
    anchor = seed_anchor
    for k in range(len(pts)):
        single = SelfDualBasis(basis.forms[k], basis.raised[k], sign, basis.frame)
        v = orient_coefficients(vecs[k], single, anchor)
        out[k] = single.form(v)
        anchor = out[k]
    return out

"""Pointwise residuals of the Weitzenbock identities and the inequality battery
satisfied by a metric with harmonic W+ and det W+ > 0.

Equalities are judged relative to their largest term, inequalities by their
slack, with tolerance ``tol * max(scale, FLOOR)`` in both cases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from . import jets as J
from . import tensors as T
from .curvature import LocalGeometry, rough_laplacian_weyl_matrix, weyl_divergence
from .errors import NotEinsteinError
from .geometry import MetricSpec, _as_points, _check_domain
from .jets import Jet
from .wu import WuStack, tensor_norm, vector_field_jet

FLOOR = 1e-14
SQRT2 = math.sqrt(2.0)
EINSTEIN_TOL = 1e-8


@dataclass
class ResidualReport:
    """Residual of an identity at one or more points.

    ``pass_mask`` is residual <= tol * max(scale, FLOOR) per point; ``passed``
    requires every point to pass.
    """

    name: str
    points: np.ndarray
    residual: np.ndarray
    scale: np.ndarray
    tol: float

    @property
    def relative(self) -> np.ndarray:
        return self.residual / np.maximum(self.scale, FLOOR)

    @property
    def pass_mask(self) -> np.ndarray:
        return self.residual <= self.tol * np.maximum(self.scale, FLOOR)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.pass_mask))

    def summary(self) -> dict:
        return {
            "name": self.name,
            "count": int(np.size(self.residual)),
            "max_residual": float(np.max(self.residual)),
            "max_relative": float(np.max(self.relative)),
            "tol": self.tol,
            "pass": self.passed,
        }


@dataclass
class InequalityReport:
    """lhs >= rhs at each point, allowed to fail by at most tol * max(scale, FLOOR)."""

    name: str
    points: np.ndarray
    slack: np.ndarray  # lhs - rhs
    scale: np.ndarray
    tol: float = 1e-10
    informational: bool = False

    @property
    def pass_mask(self) -> np.ndarray:
        return self.slack >= -self.tol * np.maximum(self.scale, FLOOR)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.pass_mask))

    @property
    def violations(self) -> int:
        return int(np.sum(~self.pass_mask))

    def summary(self) -> dict:
        return {
            "name": self.name,
            "count": int(np.size(self.slack)),
            "min_slack": float(np.min(self.slack)),
            "min_relative_slack": float(np.min(self.slack / np.maximum(self.scale, FLOOR))),
            "violations": self.violations,
            "informational": self.informational,
            "pass": self.passed,
        }


def _fro(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(m * m, axis=(-2, -1)))


def _einstein_check(geo: LocalGeometry) -> None:
    g = geo.g.value
    gi = geo.ginv.value
    tf = geo.ricci.value - 0.25 * geo.scalar.value[..., None, None] * g
    rm = geo.riemann.value
    n_tf = tensor_norm(tf, gi)
    n_rm = tensor_norm(rm, gi)
    if np.any(n_tf > EINSTEIN_TOL * np.maximum(n_rm, 1e-300)):
        raise NotEinsteinError("metric is not Einstein at some point")


def weitzenbock_einstein_residual(spec: MetricSpec, p, tol: float = 1e-5) -> ResidualReport:
    """0 = nabla*nabla W+ + (s/2) W+ - 6 W+ o W+ + 2 |W+|^2 I, for Einstein metrics."""
    pts = _as_points(p, spec.chart_id)
    _check_domain(spec, pts)
    geo = LocalGeometry(spec.jet(pts, 4), spec.orientation)
    _einstein_check(geo)
    lap = rough_laplacian_weyl_matrix(geo, 1)
    m = geo.weyl_matrix(1)
    s = geo.scalar.value
    n2 = np.sum(m * m, axis=(-2, -1))
    terms = [lap, 0.5 * s[..., None, None] * m, -6.0 * m @ m, 2.0 * n2[..., None, None] * np.eye(3)]
    res = _fro(sum(terms))
    scale = np.max(np.stack([_fro(t) for t in terms]), axis=0)
    return ResidualReport("weitzenbock_einstein", pts, res, scale, tol)


def _stack(spec, p, order, anchor, stack: Optional[WuStack] = None) -> WuStack:
    if stack is not None:
        if stack.order < order:
            raise ValueError(f"stack of order {stack.order} given, {order} needed")
        return stack
    pts = _as_points(p, spec.chart_id)
    return WuStack(spec, pts, order=order, anchor=anchor)


def weitzenbock_rescaled_residual(spec: MetricSpec, p=None, anchor=None, tol: float = 1e-4,
                                  stack: Optional[WuStack] = None) -> ResidualReport:
    """0 = nabla*nabla (fW+) + (s/2) fW+ - 6 f W+ o W+ + 2 f |W+|^2 I, all for
    the rescaled metric g, with f = alpha_h^(-1/3)."""
    st = _stack(spec, p, 6, anchor, stack)
    geo = st.g_geo
    f = st.f
    lap = rough_laplacian_weyl_matrix(geo, st.sign, f)
    m = geo.weyl_matrix(st.sign)
    fv = f.value[..., None, None]
    s = geo.scalar.value[..., None, None]
    n2 = np.sum(m * m, axis=(-2, -1))[..., None, None]
    terms = [lap, 0.5 * s * fv * m, -6.0 * fv * (m @ m), 2.0 * fv * n2 * np.eye(3)]
    res = _fro(sum(terms))
    scale = np.max(np.stack([_fro(t) for t in terms]), axis=0)
    return ResidualReport("weitzenbock_rescaled", st.points, res, scale, tol)


def weighted_divergence_residual(spec: MetricSpec, p=None, anchor=None, tol: float = 1e-6,
                                 stack: Optional[WuStack] = None) -> ResidualReport:
    """|delta_g (f W+)| for the rescaled metric; zero when delta_h W+ = 0."""
    st = _stack(spec, p, 5, anchor, stack)
    d = weyl_divergence(st.g_geo, st.sign, st.f)
    return ResidualReport("weighted_divergence", st.points, d.norm, d.scale, tol)


def weyl_divergence_residual(spec: MetricSpec, p, sign: int = 1, tol: float = 1e-7) -> ResidualReport:
    pts = _as_points(p, spec.chart_id)
    _check_domain(spec, pts)
    geo = LocalGeometry(spec.jet(pts, 3), spec.orientation)
    d = weyl_divergence(geo, sign)
    return ResidualReport("weyl_divergence", pts, d.norm, d.scale, tol)


def _cancelled_third_order(gamma: Jet) -> np.ndarray:
    """|d^2 Gamma| + |Gamma| |d Gamma| + |Gamma|^3 per point (max-abs components)."""
    n = gamma.value.ndim - 3  # batch axes precede Gamma^a_bc
    ax = lambda t: tuple(range(n, t.ndim))
    g0 = np.max(np.abs(gamma.value), axis=ax(gamma.value))
    g1 = gamma.derivative(1)
    g2 = gamma.derivative(2)
    g1 = np.max(np.abs(g1), axis=ax(g1))
    g2 = np.max(np.abs(g2), axis=ax(g2))
    return g2 + g0 * g1 + g0**3


def weyl_divergence_pair(spec: MetricSpec, p, tol: float = 1e-7) -> List[ResidualReport]:
    """delta W+ and delta W- judged against one shared scale per point.

    A half that vanishes identically (hyper-Kahler side, conformally flat
    metrics) has a pure-rounding scale of its own, so both halves use the
    larger of the two scales, floored by |Rm|^(3/2) and by the coordinate
    terms whose cancellation produces nabla Rm (flat metrics in polar charts)."""
    pts = _as_points(p, spec.chart_id)
    _check_domain(spec, pts)
    geo = LocalGeometry(spec.jet(pts, 3), spec.orientation)
    halves = [weyl_divergence(geo, sign) for sign in (1, -1)]
    rm = tensor_norm(geo.riemann.value, geo.ginv.value)
    scale = np.maximum(np.maximum(halves[0].scale, halves[1].scale), rm**1.5)
    scale = np.maximum(scale, _cancelled_third_order(geo.gamma))
    return [ResidualReport(f"weyl_divergence_{key}", pts, d.norm, scale, tol)
            for key, d in zip(("plus", "minus"), halves)]


# exterior calculus on 2-forms ---------------------------------------------------------

def hodge_laplacian(phi: Jet, geo: LocalGeometry) -> Jet:
    """(d delta + delta d) phi for a 2-form jet (order drops by 2)."""
    gam, gi = geo.gamma, geo.ginv
    dphi = T.exterior_d(phi, 2)
    delta_dphi = T.codifferential(dphi, gam.truncate(dphi.order - 1), gi.truncate(dphi.order))
    delta_phi = T.codifferential(phi, gam.truncate(phi.order - 1), gi.truncate(phi.order))
    d_delta_phi = T.exterior_d(delta_phi, 1)
    return d_delta_phi + delta_dphi


def _form_sq(t: np.ndarray, gi: np.ndarray, p: int) -> np.ndarray:
    return tensor_norm(t, gi) ** 2 / math.factorial(p)


def _form_jet(phi: Union[Callable, Jet], pts: np.ndarray, order: int) -> Jet:
    if isinstance(phi, Jet):
        return phi.truncate(order)
    rows = phi(*J.variables(pts, order))
    shape = pts.shape[:-1]
    rows = [[e if isinstance(e, Jet) else Jet.constant(np.broadcast_to(np.asarray(e, float), shape), order)
             for e in r] for r in rows]
    return J.stack([J.stack(r, -1) for r in rows], -2)


def _hodge_residual(geo: LocalGeometry, phi: Jet, sign: int = 1) -> tuple:
    lhs = hodge_laplacian(phi.truncate(2), geo).value
    gam, gi = geo.gamma, geo.ginv
    rough = T.rough_laplacian(phi.truncate(2), gam.truncate(1), gi.truncate(2)).value
    giv = gi.value
    w = geo.weyl(sign).value
    phv = phi.value
    up = np.einsum("...ac,...bd,...cd->...ab", giv, giv, phv)
    wphi = 0.5 * np.einsum("...abcd,...ab->...cd", w, up)
    sphi = geo.scalar.value[..., None, None] / 3.0 * phv
    rhs = rough - 2.0 * wphi + sphi
    norm = lambda t: tensor_norm(t, giv) / SQRT2  # noqa: E731  (2-form norm)
    res = norm(lhs - rhs)
    scale = np.max(np.stack([norm(lhs), norm(rough), norm(2.0 * wphi), norm(sphi)]), axis=0)
    return res, scale


def hodge_weitzenbock_residual(spec: MetricSpec, p, phi, tol: float = 1e-5) -> ResidualReport:
    """(d + d*)^2 phi = nabla*nabla phi - 2 W+(phi) + (s/3) phi for a self-dual
    2-form field ``phi`` (a component function or a 2-form jet at the points)."""
    pts = _as_points(p, spec.chart_id)
    _check_domain(spec, pts)
    geo = LocalGeometry(spec.jet(pts, 3), spec.orientation)
    res, scale = _hodge_residual(geo, _form_jet(phi, pts, 2))
    return ResidualReport("hodge_weitzenbock", pts, res, scale, tol)


def hodge_weitzenbock_kahler(spec: MetricSpec, p=None, anchor=None, tol: float = 1e-5,
                             stack: Optional[WuStack] = None) -> ResidualReport:
    """The Hodge Weitzenbock residual for phi = omega on the rescaled metric."""
    st = _stack(spec, p, 4, anchor, stack)
    geo = st.g_geo
    res, scale = _hodge_residual(geo, st.omega, st.sign)
    return ResidualReport("hodge_weitzenbock_omega", st.points, res, scale, tol)


# the inequality battery ---------------------------------------------------------------

def inequality_battery(spec: MetricSpec, p=None, anchor=None, tol: float = 1e-10,
                       stack: Optional[WuStack] = None) -> List[InequalityReport]:
    """Pointwise inequalities on the rescaled metric g (all quantities in g).

    a: W+(nabla^e omega, nabla_e omega) <= 0
    b: <nabla*nabla (f W+) omega, omega> >= 2 |nabla omega|^2
    c: 0 >= 1/2 |nabla omega|^2 + 3/2 <omega, (d + d*)^2 omega>
    d: 2 sqrt(6) |W+| - s >= 2 |nabla omega|^2
    e: 2 sqrt(2) |nabla omega| >= |omega ^ *d omega|  (also with constant 1)
    f: 3 *d(omega ^ *d omega) >= 1/2 |nabla omega|^2 + 3 |d omega|^2
    plus 4 sqrt(3) alpha_g >= max(s, 0).
    """
    st = _stack(spec, p, 6, anchor, stack)
    geo = st.g_geo
    sign = st.sign
    pts = st.points
    gi = geo.ginv.value
    om = st.omega.truncate(2)
    gam = geo.gamma
    nom = T.covd(om, gam.truncate(1))            # [b, c, a] = nabla_a omega_bc, order 1
    nomv = nom.value
    grad_sq = tensor_norm(nomv, gi) ** 2 / 2.0   # sum_e <nabla_e omega, nabla_e omega>
    grad = np.sqrt(grad_sq)
    w = geo.weyl(sign).value
    wn = np.sqrt(np.abs(geo.weyl_norm_sq(sign).value))
    s = geo.scalar.value
    alpha = st.alpha_g.value
    # |Rm|_g is the natural curvature scale of the point; terms that vanish
    # identically on a Kahler metric are judged against it (or its square root
    # for first-derivative quantities) rather than against their own noise
    rm = tensor_norm(geo.riemann.value, gi)
    om_v = om.value

    # d omega from the covariant derivative (torsion free)
    d_om = nom + T.lin("...bca->...abc", nom) + T.lin("...cab->...abc", nom)
    d_om_sq = _form_sq(d_om.value, gi, 3)
    eps = geo.eps
    gij = geo.ginv
    star_dom = T.hodge(d_om, eps.truncate(1), gij.truncate(1), 3)       # 1-form, order 1
    theta = T.wedge21(om.truncate(1), star_dom)                         # 3-form, order 1
    theta_norm = np.sqrt(_form_sq(theta.value, gi, 3))
    d_theta = T.exterior_d(theta, 3)
    star_d_theta = T.hodge(d_theta, eps.truncate(0), gij.truncate(0), 4).value

    reports = []

    # (a)
    up = np.einsum("...ax,...by,...xye->...abe", gi, gi, nomv)
    w_nom = 0.5 * np.einsum("...abcd,...abe->...cde", w, up)
    a_val = 0.5 * np.einsum("...cde,...cx,...dy,...ez,...xyz->...", w_nom, gi, gi, gi, nomv)
    reports.append(InequalityReport("a", pts, -a_val, wn * np.maximum(grad_sq, rm), tol))

    # (b)
    lap = rough_laplacian_weyl_matrix(geo, sign, st.f)
    x = geo.basis(sign).coefficients(om_v)
    b_lhs = 2.0 * np.einsum("...i,...ij,...j->...", x, lap, x)
    fw = st.f.value * wn
    reports.append(InequalityReport("b", pts, b_lhs - 2.0 * grad_sq,
                                    np.maximum(np.maximum(_fro(lap), rm * fw), 2.0 * grad_sq), tol))

    # (c)
    lap_om = hodge_laplacian(om, geo).value
    c_inner = 0.5 * np.einsum("...ab,...ac,...bd,...cd->...", om_v, gi, gi, lap_om)
    # |<omega, lap omega>| <= |omega| |lap omega| with |omega| = sqrt 2
    c_scale = np.maximum(1.5 * tensor_norm(lap_om, gi), rm * 2.0)
    reports.append(InequalityReport("c", pts, -(0.5 * grad_sq + 1.5 * c_inner), c_scale, tol))

    # (d)
    d_lhs = 2.0 * math.sqrt(6.0) * wn - s
    reports.append(InequalityReport("d", pts, d_lhs - 2.0 * grad_sq,
                                    np.maximum(2.0 * math.sqrt(6.0) * wn, np.abs(s)), tol))

    # (e), with the stated constant and with the sharp constant 1
    e_scale = np.maximum(2.0 * SQRT2 * grad, np.sqrt(rm))
    reports.append(InequalityReport("e", pts, 2.0 * SQRT2 * grad - theta_norm, e_scale, tol))
    reports.append(InequalityReport("e_sharp", pts, grad - theta_norm, e_scale, tol, informational=True))

    # (f)
    f_rhs = 0.5 * grad_sq + 3.0 * d_om_sq
    f_scale = np.maximum(np.maximum(3.0 * np.abs(star_d_theta), f_rhs), rm * 2.0)
    reports.append(InequalityReport("f", pts, 3.0 * star_d_theta - f_rhs, f_scale, tol))

    # scalar curvature bound
    splus = np.maximum(s, 0.0)
    reports.append(InequalityReport("alpha_bounds_s", pts, 4.0 * math.sqrt(3.0) * alpha - splus,
                                    np.maximum(4.0 * math.sqrt(3.0) * np.abs(alpha), np.abs(s)), tol))
    return reports


def kahler_form_identity(stack: WuStack) -> np.ndarray:
    """|<omega, Delta omega> - 2|d omega|^2 + 2 *d(omega ^ *d omega)|, an exact
    identity for self-dual omega with |omega|^2 = 2 (used as a self-test)."""
    geo = stack.g_geo
    gi = geo.ginv.value
    om = stack.omega.truncate(2)
    d_om = T.exterior_d(om, 2)
    star_dom = T.hodge(d_om, geo.eps.truncate(1), geo.ginv.truncate(1), 3)
    theta = T.wedge21(om.truncate(1), star_dom)
    sdt = T.hodge(T.exterior_d(theta, 3), geo.eps.truncate(0), geo.ginv.truncate(0), 4).value
    lap = hodge_laplacian(om, geo).value
    inner = 0.5 * np.einsum("...ab,...ac,...bd,...cd->...", om.value, gi, gi, lap)
    return np.abs(inner - 2.0 * _form_sq(d_om.value, gi, 3) + 2.0 * sdt)

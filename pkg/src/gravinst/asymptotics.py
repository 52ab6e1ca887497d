"""Level sets of the radius on ALF ends: quadrature, boundary fluxes, fall-off
exponents, weighted distances between metrics and the Killing-field asymptote.

Charts are (tau, rho, theta, phi) with tau periodic (possibly twisted into
phi), so a level set rho = const is a product grid: Gauss-Legendre in
u = cos(theta) and the trapezoidal rule in the two periodic angles.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import jets as J
from . import tensors as T
from .curvature import LocalGeometry
from .errors import AsymptoteError, ConvergenceError, DomainError, JetOrderError
from .geometry import MetricSpec
from .wu import WuStack, tensor_norm, vector_field_jet
from .zoo import anchor_form

DEFAULT_NODES = (32, 32, 16)      # (theta, phi, tau) per shell
STABILITY_TOL = 1e-6
ZERO_TOL = 1e-10
DISCARD = 0.25
# xi comes from fifth derivatives of h, so |xi/c - T| carries relative noise
# of order 1e-8 on the radius ladders used here; below this it is zero
ASYMPTOTE_ZERO_TOL = 1e-6
CHUNK = 2048
ANGULAR_CHARTS = ("tau_r_theta_phi", "psi_r_theta_phi")
TANGENTIAL = (0, 2, 3)


def threads() -> int:
    """Worker count for per-shell parallelism (``GRAVINST_THREADS``, default 1)."""
    try:
        return max(1, int(os.environ.get("GRAVINST_THREADS", "1")))
    except ValueError:
        return 1


def _map_shells(fn, items):
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        # map keeps input order, so results do not depend on scheduling
        return list(ex.map(fn, items))


def _sum(x: np.ndarray) -> float:
    # numpy's add.reduce on a contiguous 1-d array is a fixed pairwise tree
    return float(np.add.reduce(np.ascontiguousarray(x, dtype=float).ravel()))


# grids -------------------------------------------------------------------------------

@dataclass
class HypersurfaceGrid:
    """Product quadrature on the level set rho = radius.

    ``weights`` integrate in the coordinates (tau, theta, phi);
    ``induced_volume_element`` is sqrt(det) of the induced metric of the MetricSpec
    the grid was built for, so weights * induced_volume_element is d(mu-check).
    """

    radius: float
    nodes: np.ndarray
    weights: np.ndarray
    induced_volume_element: np.ndarray
    shape: tuple

    def integrate(self, values, element: Optional[np.ndarray] = None) -> float:
        el = self.induced_volume_element if element is None else element
        return _sum(self.weights * el * np.asarray(values, float))

    @property
    def area(self) -> float:
        return self.integrate(1.0)


def _check_chart(spec: MetricSpec) -> None:
    if spec.chart_id not in ANGULAR_CHARTS:
        raise DomainError(f"level-set quadrature needs a (tau, rho, theta, phi) chart, got {spec.chart_id!r}")


def shell_nodes(spec: MetricSpec, radius: float, nodes=DEFAULT_NODES) -> tuple:
    """(points, coordinate weights, grid shape) on rho = radius."""
    _check_chart(spec)
    n_th, n_ph, n_tau = (int(n) for n in nodes)
    dom = spec.domain
    beta = dom.periods[0]
    if beta is None:
        raise DomainError("the fibre coordinate must be periodic")
    u, wu = np.polynomial.legendre.leggauss(n_th)
    th = np.arccos(u)
    w_th = wu / np.sin(th)
    tau = beta * np.arange(n_tau) / n_tau
    v = 2.0 * math.pi * np.arange(n_ph) / n_ph
    shift = dom.twist.get(0, (3, 0.0))[1]
    tt, hh, vv = np.meshgrid(tau, th, v, indexing="ij")
    ph = vv + shift * tt / beta      # sheared so that the grid respects the twist
    pts = np.stack([tt, np.full_like(tt, radius), hh, ph], -1).reshape(-1, 4)
    w = (beta / n_tau) * (2.0 * math.pi / n_ph) * np.broadcast_to(w_th[None, :, None], tt.shape)
    if not np.all(dom.contains(pts)):
        raise DomainError("shell nodes leave the chart domain (too many theta nodes or radius too small)")
    return pts, w.reshape(-1).copy(), (n_tau, n_th, n_ph)


def induced_element(gmat: np.ndarray) -> np.ndarray:
    sub = gmat[..., TANGENTIAL, :][..., :, TANGENTIAL]
    return np.sqrt(np.linalg.det(sub))


def hypersurface_grid(spec: MetricSpec, radius: float, nodes=DEFAULT_NODES) -> HypersurfaceGrid:
    pts, w, shape = shell_nodes(spec, radius, nodes)
    return HypersurfaceGrid(float(radius), pts, w, induced_element(spec.matrix(pts)), shape)


def _chunks(n: int, size: int = CHUNK):
    for i in range(0, n, size):
        yield slice(i, min(n, i + size))


def boundary_sign(spec: MetricSpec) -> float:
    """Sign turning theta_(tau theta phi) into the integrand of a 3-form over the
    level set, oriented as the boundary of the region inside it:
    i_(d/drho)(dtau ^ drho ^ dtheta ^ dphi) = -dtau ^ dtheta ^ dphi."""
    return -float(spec.orientation)


def shell_form_integral(spec: MetricSpec, radius: float, form_fn: Callable, nodes=DEFAULT_NODES) -> float:
    """Integral over rho = radius of the 3-form returned by ``form_fn(points)``
    (array (..., 4, 4, 4) of covariant components)."""
    pts, w, _ = shell_nodes(spec, radius, nodes)
    th = form_fn(pts)[..., 0, 2, 3]
    return boundary_sign(spec) * _sum(w * th)


def annulus_nodes(spec: MetricSpec, r_in: float, r_out: float, nodes=DEFAULT_NODES, n_r: int = 8) -> tuple:
    """4-d product rule on r_in < rho < r_out: (points, coordinate weights)."""
    x, wx = np.polynomial.legendre.leggauss(n_r)
    rs = 0.5 * (r_out - r_in) * x + 0.5 * (r_out + r_in)
    wr = 0.5 * (r_out - r_in) * wx
    pts, ws = [], []
    for r, w in zip(rs, wr):
        p, wsh, _ = shell_nodes(spec, r, nodes)
        pts.append(p)
        ws.append(w * wsh)
    return np.concatenate(pts), np.concatenate(ws)


# shell fields on the rescaled metric ---------------------------------------------------

FLUX_COLUMNS = ("vol_g", "wplus_int", "s_int", "omega_flux")


def _theta_form(st: WuStack) -> J.Jet:
    """omega ^ *d omega on g, order (h order - 3)."""
    geo = st.g_geo
    om = st.omega
    d_om = T.exterior_d(om, 2)
    star = T.hodge(d_om, geo.eps.truncate(d_om.order), geo.ginv.truncate(d_om.order), 3)
    return T.wedge21(om.truncate(star.order), star)


def _shell_fields(spec: MetricSpec, pts: np.ndarray, sign: int, anchor) -> Dict[str, np.ndarray]:
    out: Dict[str, list] = {}
    for sl in _chunks(len(pts)):
        st = WuStack(spec, pts[sl], order=4, sign=sign, anchor=anchor)
        geo = st.g_geo
        gi = geo.ginv.value
        th = _theta_form(st).value
        rows = {
            "element_g": induced_element(st.g.value),
            "wplus_g": np.sqrt(np.abs(geo.weyl_norm_sq(sign).value)),
            "s_g": st.s_g.value,
            "theta": th[..., 0, 2, 3],
            "theta_norm": np.sqrt(np.abs(np.einsum("...abc,...ax,...by,...cz,...xyz->...", th, gi, gi, gi, th)) / 6.0),
            "rm_g": tensor_norm(geo.riemann.value, gi),
        }
        for k, v in rows.items():
            out.setdefault(k, []).append(v)
    return {k: np.concatenate(v) for k, v in out.items()}


@dataclass
class ShellIntegrals:
    radius: float
    vol_g: float
    wplus_int: float
    s_int: float
    omega_flux: float
    flux_scale: float       # integral of sqrt|Rm|_g: size of the terms behind omega_flux
    majorant: float         # 2 sqrt(vol_g (2 sqrt6 wplus_int + s_int)) >= |omega_flux|
    nodes: tuple

    def row(self) -> dict:
        return {k: getattr(self, k) for k in ("radius",) + FLUX_COLUMNS}


def shell_integrals(spec: MetricSpec, radius: float, nodes=DEFAULT_NODES, sign: int = 1, anchor=None) -> ShellIntegrals:
    pts, w, _ = shell_nodes(spec, radius, nodes)
    anchor = anchor_form(spec) if anchor is None else anchor
    f = _shell_fields(spec, pts, sign, anchor)
    dmu = w * f["element_g"]
    vol = _sum(dmu)
    wp = _sum(dmu * f["wplus_g"])
    s_int = _sum(dmu * np.abs(f["s_g"]))
    flux = boundary_sign(spec) * _sum(w * f["theta"])
    scale = _sum(dmu * np.sqrt(f["rm_g"]))
    maj = 2.0 * math.sqrt(max(vol * (2.0 * math.sqrt(6.0) * wp + s_int), 0.0))
    return ShellIntegrals(float(radius), vol, wp, s_int, flux, scale, maj, tuple(nodes))


def _doubled(nodes) -> tuple:
    return tuple(2 * int(n) for n in nodes)


def _stable(a: ShellIntegrals, b: ShellIntegrals) -> Dict[str, float]:
    """Relative change per column.  omega_flux may be exactly 0, so a change
    below the rounding floor ZERO_TOL * flux_scale counts as none."""
    out = {}
    for k in ("vol_g", "wplus_int", "s_int"):
        x, y = getattr(a, k), getattr(b, k)
        out[k] = abs(x - y) / max(abs(y), 1e-300)
    diff = abs(a.omega_flux - b.omega_flux)
    out["omega_flux"] = 0.0 if diff <= ZERO_TOL * b.flux_scale else diff / max(abs(b.omega_flux), 1e-300)
    return out


def converged_shell(spec: MetricSpec, radius: float, nodes=DEFAULT_NODES, sign: int = 1, anchor=None,
                    tol: float = STABILITY_TOL) -> tuple:
    """Shell integrals on ``nodes`` and on the doubled grid; raises
    ConvergenceError when doubling moves any column by more than ``tol``.
    Returns (doubled-grid result, relative changes)."""
    a = shell_integrals(spec, radius, nodes, sign, anchor)
    b = shell_integrals(spec, radius, _doubled(nodes), sign, anchor)
    change = _stable(a, b)
    bad = {k: v for k, v in change.items() if v > tol}
    if bad:
        raise ConvergenceError(f"shell rho={radius:g}: node doubling changed {bad}")
    return b, change


# power-law fits -----------------------------------------------------------------------

@dataclass
class FitResult:
    slope: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    window: tuple            # radii actually used
    exact_zero: bool = False
    r_squared: Optional[float] = None

    def within(self, target: float, tol: float) -> bool:
        return self.slope is not None and abs(self.slope - target) <= tol

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "ci": None if self.slope is None else [self.ci_low, self.ci_high],
            "window": list(self.window),
            "exact_zero": self.exact_zero,
            "r_squared": self.r_squared,
        }


def fit_power_law(radii, values, discard: float = DISCARD, zero_scale=None, confidence: float = 0.95,
                  zero_tol: float = ZERO_TOL) -> FitResult:
    """Least-squares slope of log|value| against log radius.

    The innermost ``discard`` fraction of radii is dropped.  When every value is
    below ``zero_tol`` times ``zero_scale`` (per radius) the data are reported as an
    exact zero with no slope.
    """
    r = np.asarray(radii, float)
    v = np.abs(np.asarray(values, float))
    order = np.argsort(r)
    r, v = r[order], v[order]
    if zero_scale is not None:
        zs = np.abs(np.asarray(zero_scale, float))[order]
        if np.all(v <= zero_tol * zs):
            return FitResult(None, None, None, tuple(r.tolist()), exact_zero=True)
    k = int(math.floor(discard * len(r)))
    r, v = r[k:], v[k:]
    if len(r) < 2 or np.any(v <= 0):
        return FitResult(None, None, None, tuple(r.tolist()))
    x, y = np.log(r), np.log(v)
    res = stats.linregress(x, y)
    dof = len(r) - 2
    if dof > 0:
        half = stats.t.ppf(0.5 + 0.5 * confidence, dof) * res.stderr
    else:
        half = float("inf")
    return FitResult(float(res.slope), float(res.slope - half), float(res.slope + half),
                     tuple(r.tolist()), r_squared=float(res.rvalue**2))


# boundary integrals ---------------------------------------------------------------------

@dataclass
class FluxReport:
    radii: List[float]
    vol_g: List[float]
    wplus_int: List[float]
    s_int: List[float]
    omega_flux: List[float]
    flux_scale: List[float]
    majorant: List[float]
    fitted_exponents: Dict[str, FitResult]
    nodes: tuple
    max_change: Dict[str, float] = field(default_factory=dict)

    def rows(self) -> List[dict]:
        return [
            {"radius": r, "vol_g": a, "wplus_int": b, "s_int": c, "omega_flux": d}
            for r, a, b, c, d in zip(self.radii, self.vol_g, self.wplus_int, self.s_int, self.omega_flux)
        ]

    def flux_trend(self) -> dict:
        """Is |omega_flux| non-increasing toward 0 across the radii?

        Each step may grow by at most the rounding floor ZERO_TOL * flux_scale
        (the flux of a Kahler metric is 0 up to that floor), and the majorant
        that bounds |omega_flux| must itself decrease.
        """
        f = np.abs(np.asarray(self.omega_flux))
        floor = ZERO_TOL * np.asarray(self.flux_scale)
        steps = all(f[j + 1] <= f[j] + floor[j] + floor[j + 1] for j in range(len(f) - 1))
        maj = np.asarray(self.majorant)
        maj_down = bool(np.all(np.diff(maj) < 0))
        at_floor = bool(np.all(f <= floor))
        return {
            "non_increasing": bool(steps),
            "majorant_decreasing": maj_down,
            "at_rounding_floor": at_floor,
            "majorant_slope": fit_power_law(self.radii, maj, discard=0.0).slope,
            "passed": bool(steps and maj_down and (at_floor or f[-1] < f[0])),
        }

    def summary(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "rows": self.rows(),
            "flux_scale": list(self.flux_scale),
            "majorant": list(self.majorant),
            "fitted_exponents": {k: v.summary() for k, v in self.fitted_exponents.items()},
            "max_change_under_doubling": dict(self.max_change),
            "flux_trend": self.flux_trend(),
        }


def boundary_integrals(spec: MetricSpec, radii: Sequence[float], nodes=DEFAULT_NODES, sign: int = 1,
                       anchor=None, check_convergence: bool = True, discard: float = DISCARD) -> FluxReport:
    """The four shell integrals of the rescaled metric g built from ``spec``.

    ``spec`` is the original metric h; g = alpha_h^(2/3) h is built pointwise.
    With ``check_convergence`` every shell is recomputed on the doubled grid and
    the doubled values are reported.
    """
    radii = sorted(float(r) for r in radii)

    def one(r):
        if check_convergence:
            return converged_shell(spec, r, nodes, sign, anchor)
        return shell_integrals(spec, r, nodes, sign, anchor), {}

    results = _map_shells(one, radii)
    shells = [s for s, _ in results]
    change: Dict[str, float] = {}
    for _, c in results:
        for k, v in c.items():
            change[k] = max(change.get(k, 0.0), v)
    cols = {k: [getattr(s, k) for s in shells] for k in FLUX_COLUMNS}
    scale = [s.flux_scale for s in shells]
    fits = {k: fit_power_law(radii, cols[k], discard) for k in ("vol_g", "wplus_int", "s_int")}
    fits["omega_flux"] = fit_power_law(radii, cols["omega_flux"], discard, zero_scale=scale)
    return FluxReport(radii, cols["vol_g"], cols["wplus_int"], cols["s_int"], cols["omega_flux"],
                      scale, [s.majorant for s in shells], fits, shells[0].nodes, change)


def s_l1_proxy(report: FluxReport) -> dict:
    """Radial sum of the shell integrals of |s_g| as an L^1 proxy.

    The trapezoidal partial sums over the radius ladder are reported together
    with the fitted decay slope; the series converges when the slope is below -1.
    """
    r = np.asarray(report.radii)
    s = np.asarray(report.s_int)
    parts = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * np.diff(r))])
    fit = fit_power_law(r, s, discard=DISCARD)
    tail = None
    if fit.slope is not None and fit.slope < -1:
        tail = float(s[-1] * r[-1] / (-fit.slope - 1.0))
    return {"partial_sums": parts.tolist(), "slope": fit.slope, "tail_bound": tail,
            "converges": bool(fit.slope is not None and fit.slope < -1.0)}


def hologram_inequality(spec: MetricSpec, radii: Sequence[float], nodes=(12, 12, 6), n_r: int = 8,
                        sign: int = 1, anchor=None, tol: float = 1e-10) -> List[dict]:
    """3 (flux(r) - flux(r0)) >= int over r0 < rho < r of 1/2|nabla omega|^2 + 3|d omega|^2.

    By Stokes the left side is the integral of 3 *d(omega ^ *d omega) over the
    annulus, so this is the pointwise inequality (f) integrated.  Slack is
    judged against ``tol`` times the integral of 2|Rm|_g.
    """
    radii = sorted(float(r) for r in radii)
    anchor = anchor_form(spec) if anchor is None else anchor
    r0 = radii[0]
    f0 = shell_integrals(spec, r0, nodes, sign, anchor).omega_flux
    out = []
    for r in radii[1:]:
        flux = shell_integrals(spec, r, nodes, sign, anchor).omega_flux
        pts, w = annulus_nodes(spec, r0, r, nodes, n_r)
        rhs = 0.0
        scale = 0.0
        for sl in _chunks(len(pts)):
            st = WuStack(spec, pts[sl], order=4, sign=sign, anchor=anchor)
            geo = st.g_geo
            gi = geo.ginv.value
            om = st.omega.truncate(1)
            nom = T.covd(om, geo.gamma.truncate(0))
            grad_sq = tensor_norm(nom.value, gi) ** 2 / 2.0
            dom = T.exterior_d(om, 2).value
            dom_sq = np.abs(np.einsum("...abc,...ax,...by,...cz,...xyz->...", dom, gi, gi, gi, dom)) / 6.0
            dmu = w[sl] * np.sqrt(np.linalg.det(st.g.value))
            rhs += _sum(dmu * (0.5 * grad_sq + 3.0 * dom_sq))
            scale += _sum(dmu * 2.0 * tensor_norm(geo.riemann.value, gi))
        lhs = 3.0 * (flux - f0)
        out.append({"radius": r, "lhs": lhs, "rhs": rhs, "slack": lhs - rhs, "scale": scale,
                    "passed": bool(lhs - rhs >= -tol * scale)})
    return out


# fall-off ------------------------------------------------------------------------------

FALLOFF_QUANTITIES = ("riemann", "w_plus", "alpha_h", "alpha_g", "grad_alpha_g")


def _falloff_values(spec: MetricSpec, pts: np.ndarray, quantity: str, sign: int) -> tuple:
    """(|quantity|, reference size for the exact-zero test) at points."""
    vals, refs = [], []
    for sl in _chunks(len(pts)):
        p = pts[sl]
        if quantity in ("riemann", "w_plus"):
            geo = LocalGeometry(spec.jet(p, 2), spec.orientation)
            gi = geo.ginv.value
            if quantity == "riemann":
                v = tensor_norm(geo.riemann.value, gi)
            else:
                v = np.sqrt(np.abs(geo.weyl_norm_sq(sign).value))
        else:
            order = 5 if quantity == "grad_alpha_g" else 4
            if quantity == "alpha_h":
                geo = LocalGeometry(spec.jet(p, 2), spec.orientation)
                v = geo.alpha(sign).value
            else:
                st = WuStack(spec, p, order=order, sign=sign)
                geo = st.g_geo
                if quantity == "alpha_g":
                    v = st.alpha_g.value
                else:
                    da = st.alpha_g.grad().value
                    v = np.sqrt(np.abs(np.einsum("...a,...ab,...b->...", da, geo.ginv.value, da)))
        gam = geo.gamma.value
        g = geo.g.value
        gi = geo.ginv.value
        # |Gamma|^2: size of the terms that cancel when the curvature vanishes
        ref = np.abs(np.einsum("...abc,...ad,...be,...cf,...def->...", gam, g, gi, gi, gam))
        vals.append(np.abs(v))
        refs.append(ref)
    return np.concatenate(vals), np.concatenate(refs)


@dataclass
class FalloffReport:
    quantity: str
    radii: List[float]
    sup: List[float]
    fit: FitResult

    def summary(self) -> dict:
        return {"quantity": self.quantity, "radii": self.radii, "sup": self.sup, "fit": self.fit.summary()}


def default_radii(scale: float = 1.0, lo: float = 20.0, hi: float = 160.0, count: int = 7) -> List[float]:
    return (scale * np.geomspace(lo, hi, count)).tolist()


def falloff_fit(spec: MetricSpec, quantity: str, radii: Sequence[float], nodes=(16, 16, 8), sign: int = 1,
                discard: float = DISCARD) -> FalloffReport:
    """Slope of log sup_(shell) |quantity| against log rho."""
    if spec.alf is None:
        raise DomainError(f"{spec.name} has no ALF end")
    if quantity not in FALLOFF_QUANTITIES:
        raise ValueError(f"quantity must be one of {FALLOFF_QUANTITIES}")
    radii = sorted(float(r) for r in radii)

    def one(r):
        pts, _, _ = shell_nodes(spec, r, nodes)
        v, ref = _falloff_values(spec, pts, quantity, sign)
        return float(np.max(v)), float(np.max(ref))

    res = _map_shells(one, radii)
    sup = [a for a, _ in res]
    fit = fit_power_law(radii, sup, discard, zero_scale=[b for _, b in res])
    return FalloffReport(quantity, radii, sup, fit)


# weighted distance ------------------------------------------------------------------------

@dataclass
class WeightedNorm:
    k: int
    value: float
    per_order: List[float]     # sup of (1 + dist)^(j+1) |nabla^j (h - h0)| for each j
    points: int

    def summary(self) -> dict:
        return {"k": self.k, "value": self.value, "per_order": self.per_order, "points": self.points}


@dataclass(frozen=True)
class SamplePlan:
    """Graded radial shells, denser near the core; random angles from ``seed``.
    Offsets are in units of the family scale, measured from the base radius."""

    offsets: tuple = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4, 12.8, 25.6, 51.2, 102.4)
    per_shell: int = 48
    seed: int = 0
    scale: float = 1.0


def base_radius(*specs: MetricSpec) -> float:
    return max(float(s.domain.lower[1]) for s in specs)


def plan_points(spec: MetricSpec, plan: SamplePlan, r_base: float) -> np.ndarray:
    rng = np.random.default_rng(plan.seed)
    dom = spec.domain
    out = []
    for off in plan.offsets:
        u = rng.random((plan.per_shell, 3))
        tau = u[:, 0] * (dom.periods[0] or 2.0 * math.pi)
        th = dom.lower[2] + u[:, 1] * (dom.upper[2] - dom.lower[2])
        ph = u[:, 2] * 2.0 * math.pi
        r = np.full(plan.per_shell, r_base + off * plan.scale)
        out.append(np.stack([tau, r, th, ph], -1))
    return np.concatenate(out)


def weighted_distance(h: MetricSpec, h0: MetricSpec, k: int = 3, sample_plan: Optional[SamplePlan] = None) -> WeightedNorm:
    """sup over the plan of sum_(j <= k) (1 + dist)^(j+1) |nabla^j (h - h0)|_(h0),
    with nabla the Levi-Civita connection of h0 and dist = rho - base radius."""
    if h.chart_id != h0.chart_id:
        raise DomainError(f"chart mismatch: {h.chart_id!r} vs {h0.chart_id!r}")
    _check_chart(h0)
    if not 0 <= k <= 3:
        raise JetOrderError("k must be between 0 and 3")
    plan = SamplePlan() if sample_plan is None else sample_plan
    r_base = base_radius(h, h0)
    pts = plan_points(h0, plan, r_base)
    dist = pts[:, 1] - r_base
    order = max(k, 1)
    diff = h.jet(pts, order) - h0.jet(pts, order)
    geo = LocalGeometry(h0.jet(pts, order + 1), h0.orientation)
    gi = geo.ginv.value
    cur = diff
    terms = []
    for j in range(k + 1):
        terms.append((1.0 + dist) ** (j + 1) * tensor_norm(cur.value, gi))
        if j < k:
            cur = T.covd(cur, geo.gamma.truncate(cur.order - 1))
    total = np.sum(terms, axis=0)
    return WeightedNorm(k, float(np.max(total)), [float(np.max(t)) for t in terms], len(pts))


# Killing asymptote ------------------------------------------------------------------------

@dataclass
class AsymptoteReport:
    radii: List[float]
    deviation: List[float]      # sup over the shell of |xi/c - T|_h
    t_norm: List[float]         # sup over the shell of |T|_h
    c: float
    fit: FitResult

    def summary(self) -> dict:
        return {"radii": self.radii, "deviation": self.deviation, "t_norm": self.t_norm,
                "c": self.c, "fit": self.fit.summary()}


def _xi_values(spec: MetricSpec, pts: np.ndarray, xi_field, sign: int) -> np.ndarray:
    out = []
    for sl in _chunks(len(pts)):
        p = pts[sl]
        if xi_field is None:
            out.append(WuStack(spec, p, order=5, sign=sign, anchor=anchor_form(spec)).xi.value)
        else:
            out.append(vector_field_jet(xi_field, p, 0).value)
    return np.concatenate(out)


def killing_asymptote(spec: MetricSpec, xi_field=None, radii: Sequence[float] = (), nodes=(8, 8, 4),
                      sign: int = 1, discard: float = DISCARD) -> AsymptoteReport:
    """Compare xi (from the conformal-Kahler construction when ``xi_field`` is
    None) with the fibre field T of the ALF model, shell by shell.

    xi-hat = xi / c with c the median of <xi, T>/|T|^2 over the outermost shell.
    """
    if spec.alf is None:
        raise DomainError(f"{spec.name} has no ALF end")
    radii = sorted(float(r) for r in radii)
    tvec = np.asarray(spec.alf.T, float)

    def one(r):
        pts, _, _ = shell_nodes(spec, r, nodes)
        return pts, spec.matrix(pts), _xi_values(spec, pts, xi_field, sign)

    shells = _map_shells(one, radii)
    _, g_out, xi_out = shells[-1]
    t_sq = np.einsum("a,...ab,b->...", tvec, g_out, tvec)
    ratio = np.einsum("...a,...ab,b->...", xi_out, g_out, tvec) / t_sq
    c = float(np.median(ratio))
    xi_size = float(np.median(np.sqrt(np.abs(np.einsum("...a,...ab,...b->...", xi_out, g_out, xi_out)) / t_sq)))
    if abs(c) <= 1e-8 * max(xi_size, 1e-300):
        raise AsymptoteError("xi has no component along T on the outermost shell")
    dev, tn = [], []
    for _, g, xi in shells:
        d = xi / c - tvec
        dev.append(float(np.max(np.sqrt(np.abs(np.einsum("...a,...ab,...b->...", d, g, d))))))
        tn.append(float(np.max(np.sqrt(np.einsum("a,...ab,b->...", tvec, g, tvec)))))
    fit = fit_power_law(radii, dev, discard, zero_scale=tn, zero_tol=ASYMPTOTE_ZERO_TOL)
    return AsymptoteReport(radii, dev, tn, c, fit)


def measure_alf(spec: MetricSpec, scale: float = 1.0, nodes=(8, 4, 2)) -> dict:
    """Measured ALF flag: the curvature fall-off fit succeeds, i.e. sup |Rm|
    over shells is an exact zero or decays at least like rho^-3 (within 0.1)."""
    if spec.alf is None:
        return {"alf": False, "reason": "no asymptotic model"}
    rep = falloff_fit(spec, "riemann", default_radii(scale, count=5), nodes=nodes)
    ok = rep.fit.exact_zero or (rep.fit.slope is not None and rep.fit.slope <= -2.9)
    return {"alf": bool(ok), "fit": rep.fit.summary()}

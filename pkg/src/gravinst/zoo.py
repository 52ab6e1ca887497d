"""Catalogue of explicit metrics.

Component formulas are the standard closed forms; docs/metric_zoo.md lists
them with charts and periods.  Nothing here is trusted: every family is
checked by :func:`ricci_flat_selfcheck` (or the analogous Einstein check) and
its flags by :func:`verify_flags`.

Chart conventions
-----------------
* schwarzschild, kerr, taub_nut, taub_bolt: (tau, r, theta, phi), Euclidean
  time tau periodic, r the radial coordinate (also used as the ALF radius).
* eguchi_hanson: (psi, r, theta, phi).
* flat, round_sphere, s2_x_s2: Cartesian / stereographic coordinates.
* alf_model: (tau, rho, theta, phi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets as J
from . import tensors as T
from .errors import ConfigError, DomainError
from .geometry import Domain, MetricSpec, evaluate_jet

AXIS_MARGIN = 1e-2
# Eguchi-Hanson's fibre term (dpsi + cos(theta) dphi) does not degenerate on
# the axis, so rounding grows like sin(theta)^-4 there; keep further away.
AXIS_MARGINS = {"eguchi_hanson": 0.1}
RADIAL_MARGIN = 0.5
# random samples stay this far from the polar axis: high-order jets of the
# polar charts lose digits like sin(theta)^-k, a chart effect and not geometry
SAMPLE_AXIS_MARGIN = 0.1
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Flags:
    einstein: bool = True
    ricci_flat: bool = True
    wu_plus: bool = False
    wu_minus: bool = False
    hyperkahler_side: str = "none"  # none / plus / minus / both
    alf: bool = False


@dataclass(frozen=True)
class MetricFamily:
    name: str
    params: tuple = ()  # sorted (key, value) pairs, hashable
    flags: Flags = field(default_factory=Flags)

    @property
    def p(self) -> dict:
        return dict(self.params)

    @property
    def scale(self) -> float:
        """Characteristic length (mass, nut charge, radius ...)."""
        p = self.p
        for key in ("m", "n", "a", "radius"):
            if key in p and p[key] > 0:
                return float(p[key])
        return 1.0

    def label(self) -> str:
        args = ", ".join(f"{k}={v}" if isinstance(v, str) else f"{k}={v:g}" for k, v in self.params)
        return f"{self.name}({args})"


@dataclass(frozen=True)
class ALFModelData:
    """Asymptotic model d rho^2 + rho^2 gamma + eta^2 of an ALF end.

    ``eta`` and ``link_metric`` are component functions of the chart
    coordinates (same conventions as metric components); ``T`` is the fibre
    field, constant in the chart.  ``radial_index`` is the chart coordinate
    playing the role of rho.
    """

    link_type: str  # "S3" or "S2xS1"
    eta: Callable
    T: tuple
    link_metric: Callable
    fibration: dict
    radial_index: int = 1

    def model_metric(self, domain: Domain, name: str = "alf_model") -> MetricSpec:
        def comp(*x):
            eta = self.eta(*x)
            gam = self.link_metric(*x)
            rho = x[self.radial_index]
            rows = [[eta[a] * eta[b] + rho * rho * gam[a][b] for b in range(4)] for a in range(4)]
            rows[self.radial_index][self.radial_index] = rows[self.radial_index][self.radial_index] + 1.0
            return rows
        return MetricSpec(comp, domain, chart_id="tau_r_theta_phi", name=name, alf=self)

    def check(self, points: np.ndarray) -> dict:
        """Residuals of T.eta = 1, T.d eta = 0 and L_T gamma = 0 at ``points``."""
        tvec = np.array(self.T, dtype=float)
        eta = J.stack(self.eta(*J.variables(points, 1)), -1)
        d_eta = T.exterior_d(eta, 1)
        gam = J.stack([J.stack(r, -1) for r in _jetify(self.link_metric(*J.variables(points, 1)), points.shape[:-1], 1)], -2)
        contract = np.einsum("a,...a->...", tvec, eta.value)
        interior_d = np.einsum("a,...ab->...b", tvec, d_eta.value)
        # T is a constant coordinate field, so L_T gamma = T^c d_c gamma
        lie = np.einsum("c,...abc->...ab", tvec, gam.grad().value)
        return {
            "t_eta_minus_one": float(np.max(np.abs(contract - 1.0))),
            "t_d_eta": float(np.max(np.abs(interior_d))),
            "lie_t_gamma": float(np.max(np.abs(lie))),
        }


def _jetify(rows, shape, order):
    out = []
    for r in rows:
        out.append([e if isinstance(e, J.Jet) else J.Jet.constant(np.broadcast_to(np.asarray(e, float), shape), order) for e in r])
    return out


def _round_link(tau, r, th, ph):
    z = 0.0 * r
    s = J.sin(th)
    return [[z, z, z, z], [z, z, z, z], [z, z, 1.0 + z, z], [z, z, z, s * s]]


# component functions --------------------------------------------------------

def _flat(x0, x1, x2, x3):
    z = 0.0 * x0
    o = 1.0 + z
    return [[o, z, z, z], [z, o, z, z], [z, z, o, z], [z, z, z, o]]


def _kerr(m, a):
    def comp(tau, r, th, ph):
        z = 0.0 * r
        s = J.sin(th)
        c = J.cos(th)
        s2 = s * s
        delta = r * r - 2.0 * m * r - a * a
        rho2 = r * r - a * a * c * c
        w = r * r - a * a
        gtt = (delta + a * a * s2) / rho2
        gtp = a * s2 * (delta - w) / rho2
        gpp = s2 * (delta * a * a * s2 + w * w) / rho2
        return [
            [gtt, z, z, gtp],
            [z, rho2 / delta, z, z],
            [z, z, rho2, z],
            [gtp, z, z, gpp],
        ]
    return comp


def _schwarzschild(m):
    def comp(tau, r, th, ph):
        z = 0.0 * r
        f = 1.0 - 2.0 * m / r
        s = J.sin(th)
        return [[f, z, z, z], [z, 1.0 / f, z, z], [z, z, r * r, z], [z, z, z, r * r * s * s]]
    return comp


def _taub(n, m):
    def comp(tau, r, th, ph):
        z = 0.0 * r
        s = J.sin(th)
        c = J.cos(th)
        w = r * r - n * n
        f = (r * r - 2.0 * m * r + n * n) / w
        return [
            [f, z, z, 2.0 * n * f * c],
            [z, 1.0 / f, z, z],
            [z, z, w, z],
            [2.0 * n * f * c, z, z, 4.0 * n * n * f * c * c + w * s * s],
        ]
    return comp


def _eguchi_hanson(a):
    def comp(psi, r, th, ph):
        z = 0.0 * r
        s = J.sin(th)
        c = J.cos(th)
        k = 1.0 - a**4 / (r * r * r * r)
        q = r * r * 0.25
        return [
            [q * k, z, z, q * k * c],
            [z, 1.0 / k, z, z],
            [z, z, q, z],
            [q * k * c, z, z, q * k * c * c + q * s * s],
        ]
    return comp


def _round_sphere(radius):
    def comp(x0, x1, x2, x3):
        z = 0.0 * x0
        f = 4.0 * radius**4 / (radius * radius + x0 * x0 + x1 * x1 + x2 * x2 + x3 * x3) ** 2
        return [[f, z, z, z], [z, f, z, z], [z, z, f, z], [z, z, z, f]]
    return comp


def _s2_x_s2(x0, x1, x2, x3):
    z = 0.0 * x0
    f = 4.0 / (1.0 + x0 * x0 + x1 * x1) ** 2
    k = 4.0 / (1.0 + x2 * x2 + x3 * x3) ** 2
    return [[f, z, z, z], [z, f, z, z], [z, z, k, z], [z, z, z, k]]


# family construction --------------------------------------------------------

_DEFAULTS = {
    "flat": {},
    "schwarzschild": {"m": 1.0},
    "kerr": {"m": 1.0, "a": 0.3},
    "taub_nut": {"n": 1.0},
    "taub_bolt": {"n": 1.0},
    "eguchi_hanson": {"a": 1.0},
    "round_sphere": {"radius": 1.0},
    "s2_x_s2": {},
    "alf_model": {"link": "S2xS1", "n": 1.0},
}

_FLAGS = {
    "flat": Flags(hyperkahler_side="both"),
    "schwarzschild": Flags(wu_plus=True, wu_minus=True, alf=True),
    "kerr": Flags(wu_plus=True, wu_minus=True, alf=True),
    # with the orientation dtau^dr^dtheta^dphi the anti-self-dual half vanishes
    "taub_nut": Flags(wu_plus=True, hyperkahler_side="minus", alf=True),
    "taub_bolt": Flags(wu_plus=True, wu_minus=True, alf=True),
    "eguchi_hanson": Flags(wu_minus=True, hyperkahler_side="plus"),
    "round_sphere": Flags(ricci_flat=False, hyperkahler_side="none"),
    "s2_x_s2": Flags(ricci_flat=False, wu_plus=True, wu_minus=True),
}

FAMILY_NAMES = tuple(_DEFAULTS)


def family(name: str, **params) -> MetricFamily:
    """Build a family with validated parameters (missing ones take defaults)."""
    if name not in _DEFAULTS:
        raise ConfigError(f"unknown family {name!r}")
    p = dict(_DEFAULTS[name])
    unknown = set(params) - set(p)
    if unknown:
        raise ConfigError(f"unknown parameters for {name}: {sorted(unknown)}")
    p.update({k: v for k, v in params.items() if v is not None})
    _validate(name, p)
    if name == "alf_model":
        flat = p["link"] == "S2xS1"
        flags = Flags(einstein=flat, ricci_flat=flat, hyperkahler_side="both" if flat else "none", alf=True)
    else:
        flags = _FLAGS[name]
    clean = tuple(sorted((k, v if isinstance(v, str) else float(v)) for k, v in p.items()))
    return MetricFamily(name, clean, flags)


def _validate(name: str, p: dict) -> None:
    for k, v in p.items():
        if k == "link":
            if v not in ("S2xS1", "S3"):
                raise ConfigError("alf_model link must be 'S2xS1' or 'S3'")
            continue
        if not np.isfinite(v):
            raise ConfigError(f"{k} must be finite")
    positive = {"m", "n", "radius"}
    for k in positive & set(p):
        if p[k] <= 0:
            raise ConfigError(f"{name}: {k} must be positive")
    if name == "kerr" and not abs(p["a"]) < p["m"]:
        raise ConfigError("kerr: need |a| < m")
    if name == "eguchi_hanson" and p["a"] <= 0:
        raise ConfigError("eguchi_hanson: a must be positive")


def kerr_horizon(m: float, a: float) -> float:
    return m + math.sqrt(m * m + a * a)


def kerr_identification(m: float, a: float) -> tuple:
    """(tau period, phi shift per tau period) making the bolt r = r_+ smooth."""
    rp = kerr_horizon(m, a)
    kappa = (rp - m) / (rp * rp - a * a)
    omega = a / (rp * rp - a * a)
    beta = TWO_PI / kappa
    return beta, beta * omega


def _instanton_domain(r_min: float, tau_period: float, twist: Optional[float] = None,
                      axis_margin: float = AXIS_MARGIN) -> Domain:
    tw = {} if not twist else {0: (3, twist)}
    return Domain(
        lower=(-np.inf, r_min, axis_margin, -np.inf),
        upper=(np.inf, np.inf, math.pi - axis_margin, np.inf),
        periods=(tau_period, None, None, TWO_PI),
        twist=tw,
    )


def _alf(link: str, n: float = 0.0) -> ALFModelData:
    if link == "S2xS1":
        def eta(tau, r, th, ph):
            z = 0.0 * r
            return [1.0 + z, z, z, z]
        return ALFModelData("S2xS1", eta, (1.0, 0.0, 0.0, 0.0), _round_link, {})

    def eta(tau, r, th, ph):
        z = 0.0 * r
        return [1.0 + z, z, z, 2.0 * n * J.cos(th)]
    return ALFModelData("S3", eta, (1.0, 0.0, 0.0, 0.0), _round_link, {"n": n})


def inner_radius(fam: MetricFamily) -> float:
    """Radius of the excluded core (horizon, bolt or nut); 0 for flat charts."""
    p = fam.p
    if fam.name == "schwarzschild":
        return 2.0 * p["m"]
    if fam.name == "kerr":
        return kerr_horizon(p["m"], p["a"])
    if fam.name == "taub_nut":
        return p["n"]
    if fam.name == "taub_bolt":
        return 2.0 * p["n"]
    if fam.name == "eguchi_hanson":
        return p["a"]
    return 0.0


def instantiate(fam: MetricFamily, radial_margin: float = RADIAL_MARGIN) -> MetricSpec:
    p = fam.p
    name = fam.label()
    r0 = inner_radius(fam) + radial_margin
    if fam.name == "flat":
        return MetricSpec(_flat, Domain(), name=name)
    if fam.name == "round_sphere":
        return MetricSpec(_round_sphere(p["radius"]), Domain(), chart_id="stereographic", name=name)
    if fam.name == "s2_x_s2":
        return MetricSpec(_s2_x_s2, Domain(), chart_id="stereographic2", name=name)
    chart = "tau_r_theta_phi"
    if fam.name == "schwarzschild":
        m = p["m"]
        return MetricSpec(_schwarzschild(m), _instanton_domain(r0, 8 * math.pi * m), chart_id=chart,
                          name=name, alf=_alf("S2xS1"))
    if fam.name == "kerr":
        m, a = p["m"], p["a"]
        beta, shift = kerr_identification(m, a)
        return MetricSpec(_kerr(m, a), _instanton_domain(r0, beta, shift), chart_id=chart,
                          name=name, alf=_alf("S2xS1"))
    if fam.name == "taub_nut":
        n = p["n"]
        return MetricSpec(_taub(n, n), _instanton_domain(r0, 8 * math.pi * n), chart_id=chart,
                          name=name, alf=_alf("S3", n))
    if fam.name == "taub_bolt":
        n = p["n"]
        return MetricSpec(_taub(n, 1.25 * n), _instanton_domain(r0, 8 * math.pi * n), chart_id=chart,
                          name=name, alf=_alf("S3", n))
    if fam.name == "eguchi_hanson":
        return MetricSpec(_eguchi_hanson(p["a"]), _instanton_domain(r0, TWO_PI, axis_margin=AXIS_MARGINS["eguchi_hanson"]),
                          chart_id="psi_r_theta_phi",
                          name=name)
    if fam.name == "alf_model":
        n = p["n"]
        link = p["link"]
        period = TWO_PI * n if link == "S2xS1" else 8 * math.pi * n
        data = _alf(link, n)
        dom = Domain(lower=(-np.inf, 0.0, AXIS_MARGIN, -np.inf),
                     upper=(np.inf, np.inf, math.pi - AXIS_MARGIN, np.inf),
                     periods=(period, None, None, TWO_PI))
        return data.model_metric(dom, name=name)
    raise ConfigError(f"no chart for {fam.name}")


def corrupted_schwarzschild(m: float = 1.0, eps: float = 1e-3) -> MetricSpec:
    """Schwarzschild with m replaced by m(1 + eps r): not Ricci-flat."""
    def comp(tau, r, th, ph):
        z = 0.0 * r
        f = 1.0 - 2.0 * m * (1.0 + eps * r) / r
        s = J.sin(th)
        return [[f, z, z, z], [z, 1.0 / f, z, z], [z, z, r * r, z], [z, z, z, r * r * s * s]]
    r0 = 2.0 * m / (1.0 - 2.0 * m * eps) + RADIAL_MARGIN
    return MetricSpec(comp, _instanton_domain(r0, 8 * math.pi * m), chart_id="tau_r_theta_phi",
                      name="corrupted_schwarzschild")


# sampling -------------------------------------------------------------------

def sample_box(fam: MetricFamily, spec: MetricSpec, r_extent: Optional[float] = None) -> tuple:
    """(lower, upper) box of 'generic' points used for random sampling."""
    if spec.chart_id in ("cartesian", "stereographic", "stereographic2"):
        return np.full(4, -1.5), np.full(4, 1.5)
    dom = spec.domain
    ext = 8.0 * fam.scale if r_extent is None else r_extent
    r_lo = max(dom.lower[1], 0.5 * fam.scale)
    th_lo = max(dom.lower[2], SAMPLE_AXIS_MARGIN)
    th_hi = min(dom.upper[2], math.pi - SAMPLE_AXIS_MARGIN)
    lo = np.array([0.0, r_lo, th_lo, 0.0])
    hi = np.array([dom.periods[0] or TWO_PI, r_lo + ext, th_hi, TWO_PI])
    return lo, hi


def sample_points(fam: MetricFamily, spec: MetricSpec, count: int, seed: int = 0,
                  r_extent: Optional[float] = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = sample_box(fam, spec, r_extent)
    u = rng.random((count, 4))
    pts = lo + u * (hi - lo)
    if not np.all(spec.domain.contains(pts)):
        raise DomainError("sample box leaves the chart domain")
    return pts


def anchor_form(spec: MetricSpec) -> np.ndarray:
    """Constant coordinate 2-form used to fix the sign of the Kahler form:
    dx^0 ^ dx^1 (dtau ^ dr on instanton charts)."""
    a = np.zeros((4, 4))
    a[0, 1], a[1, 0] = 1.0, -1.0
    return a


# self checks ----------------------------------------------------------------

@dataclass
class RicciReport:
    name: str
    count: int
    max_ricci: float
    max_relative: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_relative < self.tol)


def _relative(num: np.ndarray, ref: np.ndarray, floor: np.ndarray) -> np.ndarray:
    """num / |Rm|, with |Rm| floored so that (nearly) flat metrics, where both
    are rounding noise, are judged against the size of the cancelled terms."""
    return num / np.maximum(ref, floor)


def _norms(geo) -> tuple:
    gi = geo.ginv.value
    g = geo.g.value
    ric = geo.ricci.value
    rm = geo.riemann.value
    gam = geo.gamma.value
    n_ric = np.sqrt(np.abs(np.einsum("...ab,...ac,...bd,...cd->...", ric, gi, gi, ric)))
    n_rm = np.sqrt(np.abs(np.einsum("...abcd,...ae,...bf,...cg,...dh,...efgh->...", rm, gi, gi, gi, gi, rm)))
    # |Gamma|^2 is not tensorial, but it is the size of the terms whose
    # cancellation produces the curvature in this chart
    n_gam2 = np.abs(np.einsum("...abc,...ad,...be,...cf,...def->...", gam, g, gi, gi, gam))
    tf = ric - 0.25 * geo.scalar.value[..., None, None] * g
    n_tf = np.sqrt(np.abs(np.einsum("...ab,...ac,...bd,...cd->...", tf, gi, gi, tf)))
    return n_ric, n_rm, 1e-6 * n_gam2 + 1e-300, n_tf


def _geometry(spec: MetricSpec, points: np.ndarray):
    from .curvature import LocalGeometry
    return LocalGeometry(evaluate_jet(spec, points, 2).taylor, spec.orientation)


def ricci_norms(spec: MetricSpec, points: np.ndarray) -> tuple:
    """(|Ric|_g, |Rm|_g) at each point."""
    n_ric, n_rm, _, _ = _norms(_geometry(spec, points))
    return n_ric, n_rm


def ricci_flat_selfcheck(spec: MetricSpec, sample_count: int = 100, seed: int = 0,
                         fam: Optional[MetricFamily] = None, tol: float = 1e-8,
                         points: Optional[np.ndarray] = None) -> RicciReport:
    if points is None:
        if fam is None:
            fam = MetricFamily(spec.name)
        points = sample_points(fam, spec, sample_count, seed)
    n_ric, n_rm, floor, _ = _norms(_geometry(spec, points))
    rel = _relative(n_ric, n_rm, floor)
    return RicciReport(spec.name, len(points), float(np.max(n_ric)), float(np.max(rel)), tol)


def einstein_residual(spec: MetricSpec, points: np.ndarray) -> np.ndarray:
    """|Ric - (s/4) g|_g / |Rm|_g, the Einstein analogue of the Ricci check."""
    _, n_rm, floor, n_tf = _norms(_geometry(spec, points))
    return _relative(n_tf, n_rm, floor)


def weyl_half_dets(spec: MetricSpec, points: np.ndarray) -> dict:
    """det and |W| of each Weyl half at the points (orientation of ``spec``)."""
    geo = _geometry(spec, points)
    out = {}
    for sign, key in ((1, "plus"), (-1, "minus")):
        out[key] = {
            "det": geo.weyl_det(sign).value,
            "norm": np.sqrt(np.abs(geo.weyl_norm_sq(sign).value)),
        }
    return out


def verify_flags(fam: MetricFamily, sample_count: int = 50, seed: int = 0,
                 hk_tol: float = 1e-9, ricci_tol: float = 1e-8) -> dict:
    """Measure each flag of ``fam``; returns {flag: (expected, measured)}."""
    spec = instantiate(fam)
    pts = sample_points(fam, spec, sample_count, seed)
    geo = _geometry(spec, pts)
    n_ric, n_rm, floor, n_tf = _norms(geo)
    ricci_flat = bool(np.all(_relative(n_ric, n_rm, floor) <= ricci_tol))
    einstein = bool(np.all(_relative(n_tf, n_rm, floor) <= ricci_tol))
    halves = weyl_half_dets(spec, pts)
    vanish = {k: bool(np.all(_relative(halves[k]["norm"], n_rm, floor) <= hk_tol)) for k in ("plus", "minus")}
    measured = {
        "einstein": einstein,
        "ricci_flat": ricci_flat,
        "wu_plus": bool(np.all(halves["plus"]["det"] > 0)),
        "wu_minus": bool(np.all(halves["minus"]["det"] > 0)),
    }
    hk = [k for k in ("plus", "minus") if vanish[k] and ricci_flat]
    measured["hyperkahler_side"] = "both" if len(hk) == 2 else (hk[0] if hk else "none")
    out = {k: (getattr(fam.flags, k), v) for k, v in measured.items()}
    return out

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gravinst import asymptotics as A
from gravinst import jets as J
from gravinst import tensors as T
from gravinst import zoo as Z
from gravinst.curvature import LocalGeometry
from gravinst.errors import AsymptoteError, DomainError, JetOrderError


@pytest.fixture(scope="module")
def alf_flat():
    return Z.instantiate(Z.family("alf_model", link="S2xS1", n=1.0))


def test_alf_model_shell_area(alf_flat):
    grid = A.hypersurface_grid(alf_flat, 3.0, (16, 8, 4))
    # round 2-sphere of radius 3 times a circle of length 2 pi
    assert grid.area == pytest.approx(4 * math.pi * 9 * 2 * math.pi, rel=1e-12)


def test_shell_nodes_respect_domain(kerr):
    _, spec = kerr
    pts, w, shape = A.shell_nodes(spec, 20.0, (8, 4, 2))
    assert pts.shape == (64, 4) and shape == (2, 8, 4)
    assert np.all(spec.domain.contains(pts)) and np.all(w > 0)
    with pytest.raises(DomainError):
        A.shell_nodes(Z.instantiate(Z.family("flat")), 5.0)


def _stokes_theta(pts):
    """f dtau ^ dtheta ^ dphi with f = rho^2 sin(th) (1 + cos^2 th + cos(ph) / rho)."""
    r, th, ph = pts[:, 1], pts[:, 2], pts[:, 3]
    f = r**2 * np.sin(th) * (1 + np.cos(th) ** 2) + r * np.sin(th) * np.cos(ph)
    out = np.zeros(pts.shape[:1] + (4, 4, 4))
    for perm, sgn in (((0, 2, 3), 1), ((2, 3, 0), 1), ((3, 0, 2), 1), ((0, 3, 2), -1), ((3, 2, 0), -1), ((2, 0, 3), -1)):
        out[(slice(None),) + perm] = sgn * f
    return out


def test_stokes_on_annulus(alf_flat):
    nodes = (12, 8, 4)
    r1, r2 = 2.0, 5.0
    outer = A.shell_form_integral(alf_flat, r2, _stokes_theta, nodes)
    inner = A.shell_form_integral(alf_flat, r1, _stokes_theta, nodes)
    pts, w = A.annulus_nodes(alf_flat, r1, r2, nodes, n_r=6)
    r, th = pts[:, 1], pts[:, 2]
    # d theta = -(d f / d rho) dtau ^ drho ^ dtheta ^ dphi
    dtheta = -(2 * r * np.sin(th) * (1 + np.cos(th) ** 2) + np.sin(th) * np.cos(pts[:, 3]))
    bulk = float(np.sum(w * dtheta)) * alf_flat.orientation
    assert outer - inner == pytest.approx(bulk, rel=1e-12)
    # the cos(phi) part integrates to zero; the rest is -2 pi beta (8/3) rho^2
    assert outer == pytest.approx(-2 * math.pi * 2 * math.pi * (8.0 / 3.0) * r2**2, rel=1e-12)


def _parallel_form_flux(spec):
    """omega ^ *d omega for the parallel form dtau ^ dz + dx ^ dy, in the chart."""
    def form_fn(pts):
        x = J.variables(pts, 1)
        _, r, th, _ = x
        s, c = J.sin(th), J.cos(th)
        z = 0 * r
        # dtau ^ dz with dz = cos dr - r sin dth; dx ^ dy = r sin^2 dr ^ dph + r^2 sin cos dth ^ dph
        a01, a02 = c, -r * s
        a13, a23 = r * s * s, r * r * s * c
        rows = [[z, a01, a02, z], [-a01, z, z, a13], [-a02, z, z, a23], [z, -a13, -a23, z]]
        om = J.stack([J.stack(row, -1) for row in rows], -2)
        geo = LocalGeometry(spec.jet(pts, 2), spec.orientation)
        d_om = T.exterior_d(om, 2)
        star = T.hodge(d_om, geo.eps.truncate(0), geo.ginv.truncate(0), 3)
        return T.wedge21(om.truncate(0), star).value
    return form_fn


def test_parallel_form_has_zero_flux(alf_flat):
    for r in (5.0, 10.0):
        assert abs(A.shell_form_integral(alf_flat, r, _parallel_form_flux(alf_flat), (8, 8, 4))) < 1e-10


def test_shell_integrals_deterministic_and_stable(kerr):
    _, spec = kerr
    a = A.shell_integrals(spec, 40.0, (8, 4, 2))
    b = A.shell_integrals(spec, 40.0, (8, 4, 2))
    assert a == b
    c, change = A.converged_shell(spec, 40.0, (8, 4, 2))
    assert max(change.values()) < A.STABILITY_TOL
    assert c.vol_g > 0 and c.s_int > 0 and c.wplus_int > 0
    # the Cauchy-Schwarz majorant bounds the flux
    assert abs(c.omega_flux) <= c.majorant


def test_exact_power_law_fit():
    r = np.geomspace(10, 100, 6)
    fit = A.fit_power_law(r, 3.0 * r**-2.5, discard=0.0)
    assert fit.slope == pytest.approx(-2.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    fit = A.fit_power_law(r, 3.0 * r**-2.5)
    assert len(fit.window) == 5 and fit.window[0] == pytest.approx(r[1])


def test_exact_zero_reported_without_slope():
    r = [10.0, 20.0, 40.0]
    fit = A.fit_power_law(r, [0.0, 1e-20, 0.0], zero_scale=[1.0, 1.0, 1.0])
    assert fit.exact_zero and fit.slope is None
    assert fit.summary()["ci"] is None


@given(st.floats(-4.0, 2.0), st.floats(1e-3, 1e3), st.integers(3, 9))
def test_fit_recovers_slope(slope, pref, n):
    r = np.geomspace(5.0, 500.0, n)
    fit = A.fit_power_law(r, pref * r**slope, discard=0.0)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.ci_low <= fit.slope <= fit.ci_high


@given(st.floats(-3.0, -0.5), st.integers(0, 2**31 - 1))
def test_fit_interval_covers_noisy_slope(slope, seed):
    rng = np.random.default_rng(seed)
    r = np.geomspace(5.0, 500.0, 40)
    v = r**slope * np.exp(1e-3 * rng.normal(size=r.size))
    fit = A.fit_power_law(r, v, discard=0.0)
    assert abs(fit.slope - slope) < 0.01


def test_s_l1_proxy_on_synthetic_report():
    radii = [20.0, 40.0, 80.0, 160.0]
    s = [100.0 / r**2 for r in radii]
    rep = A.FluxReport(radii, [1.0] * 4, [1.0] * 4, s, [0.0] * 4, [1.0] * 4, [1.0] * 4, {}, (1, 1, 1))
    out = A.s_l1_proxy(rep)
    assert out["converges"] and out["slope"] == pytest.approx(-2.0)
    assert out["tail_bound"] == pytest.approx(s[-1] * radii[-1])
    assert np.all(np.diff(out["partial_sums"]) > 0)


def test_flux_trend_rules():
    base = dict(vol_g=[1.0] * 3, wplus_int=[1.0] * 3, s_int=[1.0] * 3, fitted_exponents={}, nodes=(1, 1, 1))
    rep = A.FluxReport([1.0, 2.0, 4.0], omega_flux=[1e-14, 3e-14, 2e-14], flux_scale=[10.0] * 3,
                       majorant=[3.0, 2.0, 1.0], **base)
    t = rep.flux_trend()
    assert t["at_rounding_floor"] and t["passed"]
    rep = A.FluxReport([1.0, 2.0, 4.0], omega_flux=[1.0, 2.0, 0.5], flux_scale=[10.0] * 3,
                       majorant=[3.0, 2.0, 1.0], **base)
    assert not rep.flux_trend()["passed"]
    rep = A.FluxReport([1.0, 2.0, 4.0], omega_flux=[1.0, 0.5, 0.25], flux_scale=[10.0] * 3,
                       majorant=[3.0, 2.0, 1.0], **base)
    assert rep.flux_trend()["passed"]


def test_flat_model_riemann_exact_zero(alf_flat):
    rep = A.falloff_fit(alf_flat, "riemann", A.default_radii(1.0, count=4), nodes=(4, 4, 2))
    assert rep.fit.exact_zero and rep.fit.slope is None


def test_falloff_argument_checks(alf_flat):
    with pytest.raises(ValueError):
        A.falloff_fit(alf_flat, "torsion", [10.0, 20.0])
    with pytest.raises(DomainError):
        A.falloff_fit(Z.instantiate(Z.family("eguchi_hanson")), "riemann", [10.0, 20.0])


def test_weighted_distance_trivial(kerr):
    _, spec = kerr
    plan = A.SamplePlan(offsets=(0.1, 1.0, 10.0), per_shell=8)
    assert A.weighted_distance(spec, spec, 3, plan).value == 0.0
    other = Z.instantiate(Z.family("kerr", m=1.0, a=0.3))
    w = A.weighted_distance(other, spec, 3, plan)
    assert w.value <= 1e-12 and len(w.per_order) == 4 and w.points == 24


def test_weighted_distance_errors(kerr):
    _, spec = kerr
    with pytest.raises(DomainError):
        A.weighted_distance(Z.instantiate(Z.family("flat")), spec)
    with pytest.raises(JetOrderError):
        A.weighted_distance(spec, spec, 4)


def test_weighted_distance_grows_with_gap(kerr):
    _, spec = kerr
    plan = A.SamplePlan(offsets=(0.1, 1.0, 10.0, 100.0), per_shell=8)
    d = [A.weighted_distance(Z.instantiate(Z.family("kerr", a=0.3 + e)), spec, 2, plan).value for e in (1e-3, 2e-3)]
    assert 0 < d[0] < d[1] and d[1] / d[0] == pytest.approx(2.0, rel=0.02)


def test_killing_asymptote_exact_field(alf_flat):
    tvec = alf_flat.alf.T
    rep = A.killing_asymptote(alf_flat, lambda *x: [tvec[i] + 0 * x[0] for i in range(4)], [10.0, 20.0, 40.0],
                              nodes=(4, 4, 2))
    assert max(rep.deviation) == 0.0 and rep.fit.exact_zero and rep.c == 1.0


def test_killing_asymptote_rejects_orthogonal_field(alf_flat):
    with pytest.raises(AsymptoteError):
        A.killing_asymptote(alf_flat, lambda *x: [0 * x[0], 0 * x[0], 0 * x[0], 1 + 0 * x[0]], [10.0, 20.0],
                            nodes=(4, 4, 2))


@pytest.mark.parametrize("name", Z.FAMILY_NAMES)
def test_alf_flag_matches_measurement(name):
    fam = Z.family(name)
    spec = Z.instantiate(fam)
    assert A.measure_alf(spec, fam.scale)["alf"] == fam.flags.alf


def test_hologram_inequality_kerr(kerr):
    _, spec = kerr
    for row in A.hologram_inequality(spec, [20.0, 40.0], nodes=(8, 6, 3), n_r=4):
        assert row["passed"], row


def test_thread_setting(monkeypatch):
    monkeypatch.setenv("GRAVINST_THREADS", "3")
    assert A.threads() == 3
    assert A._map_shells(lambda x: x * x, [3, 1, 2]) == [9, 1, 4]

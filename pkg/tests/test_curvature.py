import numpy as np
import pytest
from hypothesis import given, strategies as st

from gravinst import jets as J
from gravinst import zoo as Z
from gravinst.curvature import (
    LocalGeometry,
    curvature_at,
    divergence_w_plus,
    rough_laplacian_fw,
    self_dual_basis,
)
from gravinst.geometry import Domain, Frame, MetricSpec, evaluate_jet
from gravinst.spectral import cardano_alpha


def _spectrum(m):
    return np.sort(np.linalg.eigvalsh(m), axis=-1)


def test_flat_curvature_vanishes(flat):
    _, spec = flat
    b = curvature_at(evaluate_jet(spec, [0.1, 0.2, 0.3, 0.4], 2))
    assert not np.any(b.riemann)
    assert not np.any(b.w_plus) and not np.any(b.w_minus)
    assert b.scalar == 0.0


def test_round_sphere_weyl_flat():
    spec = Z.instantiate(Z.family("round_sphere", radius=1.0))
    p = [0.3, 0.1, -0.2, 0.5]
    b = curvature_at(evaluate_jet(spec, p, 2))
    assert b.scalar == pytest.approx(12.0, rel=1e-12)
    assert np.max(np.abs(b.w_plus)) < 1e-12 and np.max(np.abs(b.w_minus)) < 1e-12
    # sectional curvature +1 on the (x0, x1) plane fixes the sign convention
    g = spec.matrix(p)
    assert b.riemann[0, 1, 0, 1] / (g[0, 0] * g[1, 1]) == pytest.approx(1.0, rel=1e-12)


def test_schwarzschild_closed_forms(schwarzschild):
    _, spec = schwarzschild
    r = 4.0
    p = [0.3, r, 1.0, 0.5]
    b = curvature_at(evaluate_jet(spec, p, 2))
    assert np.max(np.abs(b.ricci)) < 1e-9
    # dense eigensolver: pattern (+, -, -) with beta = gamma
    ev = _spectrum(b.w_plus)
    assert ev[2] > 0 > ev[1]
    assert ev[1] == pytest.approx(ev[0], abs=1e-14)
    # W+ of Schwarzschild has eigenvalues (2m, -m, -m) / r^3
    np.testing.assert_allclose(ev, [-1 / r**3, -1 / r**3, 2 / r**3], rtol=1e-12)
    gi = np.linalg.inv(spec.matrix(p))
    kretschmann = np.einsum("abcd,ae,bf,cg,dh,efgh->", b.riemann, gi, gi, gi, gi, b.riemann)
    assert kretschmann == pytest.approx(48.0 / r**6, rel=1e-12)


def test_divergence_flat_and_kerr(flat, kerr):
    _, fspec = flat
    assert np.max(divergence_w_plus(fspec, [0.1, 0.2, 0.3, 0.4]).norm) == 0.0
    fam, spec = kerr
    pts = Z.sample_points(fam, spec, 10, 0)
    d = divergence_w_plus(spec, pts)
    assert np.max(d.norm) < 1e-7


def _perturbed(eps):
    def comp(x0, x1, x2, x3):
        z = 0 * x0
        q = eps * J.sin(x0 + 2 * x1) * J.cos(x2 - x3)
        return [[1 + q, z, z, z], [z, 1 + z, q, z], [z, q, 1 + z, z], [z, z, z, 1 + z]]
    return MetricSpec(comp, Domain(), name="perturbed_flat")


def test_divergence_non_einstein_is_order_eps():
    p = [0.3, -0.2, 0.4, 0.1]
    n = [float(divergence_w_plus(_perturbed(e), p).norm) for e in (1e-2, 5e-3, 2.5e-3)]
    assert all(x > 0 for x in n)
    np.testing.assert_allclose(np.array(n[:2]) / np.array(n[1:]), 2.0, rtol=0.05)


def test_rough_laplacian_vanishing_cases(flat):
    _, spec = flat
    assert np.max(np.abs(rough_laplacian_fw(spec, [0.1, 0.2, 0.3, 0.4]))) == 0.0
    sphere = Z.instantiate(Z.family("round_sphere"))
    assert np.max(np.abs(rough_laplacian_fw(sphere, [0.1, 0.2, 0.3, 0.4]))) < 1e-11
    assert np.max(np.abs(rough_laplacian_fw(sphere, [0.1, 0.2, 0.3, 0.4], lambda *x: 2.0 + 0 * x[0]))) < 1e-11


def _rotation(angles):
    """SO(4) element from six plane angles."""
    q = np.eye(4)
    for k, (i, j) in enumerate([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]):
        r = np.eye(4)
        c, s = np.cos(angles[k]), np.sin(angles[k])
        r[i, i] = r[j, j] = c
        r[i, j], r[j, i] = -s, s
        q = q @ r
    return q


@given(st.lists(st.floats(-np.pi, np.pi), min_size=6, max_size=6))
def test_spectra_frame_invariant(angles):
    fam = Z.family("kerr")
    spec = Z.instantiate(fam)
    geo = LocalGeometry(spec.jet(np.array([0.4, 3.0, 1.2, 0.3]), 2))
    q = _rotation(angles)
    rotated = Frame(q @ geo.frame.coframe, 1)
    for sign in (1, -1):
        m = self_dual_basis(rotated, sign).matrix(geo.weyl(sign).value)
        m = 0.5 * (m + m.T)
        np.testing.assert_allclose(_spectrum(m), _spectrum(geo.weyl_matrix(sign)), atol=1e-10 * np.max(np.abs(m)))


@pytest.mark.parametrize("name", ["kerr", "taub_bolt", "eguchi_hanson", "s2_x_s2"])
def test_orientation_swap_exchanges_halves(name):
    fam = Z.family(name)
    spec = Z.instantiate(fam)
    pts = Z.sample_points(fam, spec, 5, 1)
    a = curvature_at(evaluate_jet(spec, pts, 2), 1)
    b = curvature_at(evaluate_jet(spec, pts, 2), -1)
    np.testing.assert_allclose(_spectrum(a.w_plus), _spectrum(b.w_minus), atol=1e-12 * np.max(np.abs(a.w_plus)))
    np.testing.assert_allclose(_spectrum(a.w_minus), _spectrum(b.w_plus), atol=1e-12 * np.max(np.abs(a.w_minus)))


@pytest.mark.parametrize("name", Z.FAMILY_NAMES)
def test_riemann_symmetries_and_bianchi(name):
    fam = Z.family(name)
    spec = Z.instantiate(fam)
    pts = Z.sample_points(fam, spec, 10, 2)
    b = curvature_at(evaluate_jet(spec, pts, 2))
    rm = b.riemann
    # relative to the terms whose cancellation produces Rm (flat charts give pure rounding)
    cancelled = np.max(np.abs(b.dchristoffel)) + np.max(np.abs(b.christoffel)) ** 2
    scale = max(np.max(np.abs(rm)), cancelled)
    sw = lambda *ax: np.transpose(rm, (0,) + tuple(a + 1 for a in ax))
    assert np.max(np.abs(rm + sw(1, 0, 2, 3))) <= 1e-10 * scale
    assert np.max(np.abs(rm + sw(0, 1, 3, 2))) <= 1e-10 * scale
    assert np.max(np.abs(rm - sw(2, 3, 0, 1))) <= 1e-10 * scale
    # first Bianchi: R_a[bcd] = 0
    bianchi = rm + np.einsum("...abcd->...acdb", rm) + np.einsum("...abcd->...adbc", rm)
    assert np.max(np.abs(bianchi)) <= 1e-10 * scale


def test_weyl_matrix_is_trace_free_and_consistent_with_cardano(kerr):
    fam, spec = kerr
    pts = Z.sample_points(fam, spec, 20, 4)
    geo = LocalGeometry(spec.jet(pts, 2))
    m = geo.weyl_matrix(1)
    assert np.max(np.abs(np.trace(m, axis1=-2, axis2=-1))) < 1e-12 * np.max(np.abs(m))
    np.testing.assert_allclose(cardano_alpha(m).alpha, geo.alpha(1).value, rtol=1e-10)
    np.testing.assert_allclose(geo.weyl_det(1).value, np.linalg.det(m), rtol=1e-9)

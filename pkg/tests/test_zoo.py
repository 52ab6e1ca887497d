import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gravinst import zoo as Z
from gravinst.errors import ConfigError, DomainError


def test_flat_components(flat):
    fam, spec = flat
    pts = Z.sample_points(fam, spec, 20, 0)
    np.testing.assert_array_equal(spec.matrix(pts), np.broadcast_to(np.eye(4), (20, 4, 4)))


def test_schwarzschild_ricci_absolute(schwarzschild):
    fam, spec = schwarzschild
    n_ric, _ = Z.ricci_norms(spec, Z.sample_points(fam, spec, 100, 0))
    assert np.max(n_ric) < 1e-9


def test_taub_nut_hyperkahler_side():
    fam = Z.family("taub_nut", n=1.0)
    measured = Z.verify_flags(fam, 50)
    assert measured["hyperkahler_side"] == ("minus", "minus")


def test_selfcheck_flat_and_kerr(flat, kerr):
    fam, spec = flat
    r = Z.ricci_flat_selfcheck(spec, 50, fam=fam)
    assert r.max_ricci == 0.0 and r.passed
    fam, spec = kerr
    r = Z.ricci_flat_selfcheck(spec, 100, fam=fam)
    assert r.max_relative < 1e-8 and r.passed


def test_selfcheck_catches_corruption():
    spec = Z.corrupted_schwarzschild(1.0, 1e-3)
    fam = Z.family("schwarzschild")
    r = Z.ricci_flat_selfcheck(spec, 50, fam=fam)
    assert not r.passed
    assert r.max_relative > 1e-4


def test_kerr_without_rotation_is_schwarzschild():
    k = Z.instantiate(Z.family("kerr", m=1.3, a=0.0))
    s = Z.instantiate(Z.family("schwarzschild", m=1.3))
    fam = Z.family("schwarzschild", m=1.3)
    pts = Z.sample_points(fam, s, 50, 0)
    # same functions, different arithmetic order: equal up to one rounding
    np.testing.assert_allclose(k.matrix(pts), s.matrix(pts), rtol=1e-15, atol=0)
    beta, shift = Z.kerr_identification(1.3, 0.0)
    assert beta == pytest.approx(8 * math.pi * 1.3) and shift == 0.0


@pytest.mark.parametrize("name", Z.FAMILY_NAMES)
def test_flags_reproduced_by_measurement(name):
    fam = Z.family(name)
    for key, (expected, measured) in Z.verify_flags(fam, 50).items():
        assert expected == measured, (name, key)


@given(st.floats(0.2, 5.0), st.floats(-0.95, 0.95))
def test_kerr_admissible_parameters(m, frac):
    fam = Z.family("kerr", m=m, a=frac * m)
    spec = Z.instantiate(fam)
    assert fam.scale == pytest.approx(m)
    pts = Z.sample_points(fam, spec, 5, 0)
    assert np.all(spec.domain.contains(pts))
    assert np.all(np.linalg.eigvalsh(spec.matrix(pts)) > 0)


def test_parameter_validation():
    with pytest.raises(ConfigError):
        Z.family("kerr", m=1.0, a=1.0)
    with pytest.raises(ConfigError):
        Z.family("schwarzschild", m=-1.0)
    with pytest.raises(ConfigError):
        Z.family("nope")
    with pytest.raises(ConfigError):
        Z.family("kerr", q=1.0)
    with pytest.raises(ConfigError):
        Z.family("alf_model", link="T3")


def test_defaults_and_labels():
    fam = Z.family("kerr")
    assert fam.p == {"m": 1.0, "a": 0.3}
    assert fam.label() == "kerr(a=0.3, m=1)"
    assert Z.family("kerr") == Z.family("kerr", m=1.0, a=0.3)


def test_sample_points_seeded(kerr):
    fam, spec = kerr
    a = Z.sample_points(fam, spec, 30, 11)
    np.testing.assert_array_equal(a, Z.sample_points(fam, spec, 30, 11))
    assert not np.array_equal(a, Z.sample_points(fam, spec, 30, 12))
    # samples keep clear of the polar axis
    assert np.all((a[:, 2] >= Z.SAMPLE_AXIS_MARGIN) & (a[:, 2] <= math.pi - Z.SAMPLE_AXIS_MARGIN))
    assert np.all(a[:, 1] > Z.inner_radius(fam))


def test_domain_rejects_core(kerr):
    fam, spec = kerr
    from gravinst.geometry import evaluate_jet

    with pytest.raises(DomainError):
        evaluate_jet(spec, [0.0, Z.inner_radius(fam), 1.0, 0.0], 2)


def test_alf_model_area_element():
    fam = Z.family("alf_model", link="S2xS1", n=1.0)
    spec = Z.instantiate(fam)
    g = spec.matrix([0.2, 3.0, 1.0, 0.5])
    # d rho^2 + rho^2 round metric + dtau^2
    np.testing.assert_allclose(np.diag(g), [1.0, 1.0, 9.0, 9.0 * math.sin(1.0) ** 2], rtol=1e-14)

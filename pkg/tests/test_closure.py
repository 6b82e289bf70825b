import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiml import closure as sa
from fiml.errors import DomainError

C = sa.SAConstants()


def test_fv1_examples():
    assert sa.fv1(0.0) == 0.0
    assert sa.fv1(7.1) == pytest.approx(0.5, rel=1e-15)
    assert sa.fv1(1.0) == pytest.approx(1.0 / (1.0 + 7.1**3), rel=1e-12)
    assert sa.fv1(1.0) == pytest.approx(2.78621e-3, rel=1e-5)


def test_fv2_examples():
    assert sa.fv2(0.0) == 1.0
    assert sa.fv2(7.1) == pytest.approx(1.0 - 7.1 / 4.55, rel=1e-12)
    assert sa.fv2(7.1) == pytest.approx(-0.56044, abs=1e-5)
    # limit 1 - 1/fv1(inf) = 0; the approach is from above (fv2 ~ 1/chi)
    assert sa.fv2(1e6) == pytest.approx(0.0, abs=2e-6)
    assert abs(sa.fv2(1e6)) < abs(sa.fv2(1e3))


def test_negative_chi_rejected():
    with pytest.raises(DomainError):
        sa.fv1(-1.0)
    with pytest.raises(DomainError):
        sa.fv2(np.array([0.5, -0.1]))


def test_omega_tilde_examples():
    assert sa.omega_tilde(1.0, 0.0, 0.1, 1e-5) == 1.0
    # pick nu_tilde so that the added term is -0.9: floor engages at 0.3
    nu = 1.0
    chi = 7.1
    add = chi * nu / (C.kappa**2 * 1.0**2) * sa.fv2(chi)
    d = np.sqrt(add / -0.9)
    assert sa.omega_tilde(1.0, chi * nu, d, nu) == pytest.approx(0.3)
    nt, d, nu = 1e-4, 0.05, 1e-3
    expect = nt / (C.kappa**2 * d**2) * sa.fv2(nt / nu)
    assert sa.omega_tilde(0.0, nt, d, nu) == pytest.approx(expect, rel=1e-14)
    with pytest.raises(DomainError):
        sa.omega_tilde(1.0, 1e-4, 0.0, 1e-5)


def test_fw_examples():
    assert sa.fw(1.0) == pytest.approx(1.0, rel=1e-14)
    assert sa.fw(0.0) == 0.0
    c3 = sa.SAConstants(cw2=0.3)
    assert sa.fw(c3.r_clip, c3) == pytest.approx(2.0 ** (1 / 6) * (1 + 64) ** (1 / 6) / 2 ** (1 / 6), abs=1e-3)
    assert sa.fw(c3.r_clip, c3) == pytest.approx(2.00517, abs=1e-3)


def test_production_destruction_examples():
    assert sa.production(0.0, 5.0) == 0.0
    assert sa.production(1e-4, 0.0) == 0.0
    assert sa.production(1e-4, 100.0) == pytest.approx(1.355e-3, rel=1e-13)
    assert sa.destruction(0.0, 0.1, 1.0) == 0.0
    assert C.cw1 == pytest.approx(0.1355 / 0.1681 + 1.622 * 1.5, rel=1e-12)
    assert C.cw1 == pytest.approx(3.2391, abs=1e-4)


def test_degenerate_r_denominator_maps_to_clip():
    assert sa.r_function(1e-3, 0.0, 0.1) == C.r_clip
    assert sa.r_function(0.0, 1.0, 0.1) == 0.0


def test_eddy_viscosity_examples():
    nu = 1.5e-5
    assert sa.eddy_viscosity(0.0, nu) == 0.0
    assert sa.eddy_viscosity(7.1 * nu, nu) == pytest.approx(3.55 * nu, rel=1e-14)
    assert sa.eddy_viscosity(nu, nu) == pytest.approx(nu * sa.fv1(1.0), rel=1e-14)
    with pytest.raises(DomainError):
        sa.eddy_viscosity(1e-5, 0.0)


def test_fv1_sweep_monotone_bounded():
    chi = np.linspace(0.0, 1e3, 10_000)
    f = sa.fv1(chi)
    assert np.all(np.diff(f) >= 0)
    assert np.all((f >= 0) & (f < 1))


def test_fw_sweep_bounded():
    for c in (C, sa.SAConstants(cw2=0.3)):
        r = np.linspace(0.0, c.r_clip, 10_000)
        f = sa.fw(r, c)
        assert np.all(f >= 0)
        assert np.all(f <= (1 + c.cw3**6) ** (1 / 6) + 1e-14)


def test_beta_one_source_bitwise_baseline():
    rng = np.random.default_rng(3)
    nt = rng.random(50) * 1e-3
    om = rng.random(50) * 100
    d = rng.random(50) + 0.01
    nu = 1e-5
    om_t = sa.omega_tilde(om, nt, d, nu)
    base = sa.production(nt, om_t) - sa.destruction(nt, d, om_t)
    assert np.array_equal(sa.source(1.0, nt, om, d, nu), base)
    assert np.array_equal(sa.source(np.ones(50), nt, om, d, nu), sa.source(np.ones(50), nt, om, d, nu))


def test_constants_validated_and_overridable():
    with pytest.raises(DomainError):
        sa.SAConstants(cv1=0.0)
    c = C.with_overrides(cw2=0.3)
    assert c.cw2 == 0.3 and C.cw2 == 0.622


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1e4))
def test_dfv1_matches_fd(chi):
    h = 1e-6 * max(1.0, chi)
    fd = (sa.fv1(chi + h) - sa.fv1(max(chi - h, 0.0))) / (chi + h - max(chi - h, 0.0))
    assert sa.dfv1(chi) == pytest.approx(fd, rel=1e-5, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1e4))
def test_dfv2_matches_fd(chi):
    h = 1e-6 * max(1.0, chi)
    lo = max(chi - h, 0.0)
    fd = (sa.fv2(chi + h) - sa.fv2(lo)) / (chi + h - lo)
    assert sa.dfv2(chi) == pytest.approx(fd, rel=1e-5, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 9.99))
def test_dfw_matches_fd(r):
    h = 1e-6
    fd = (sa.fw(r + h) - sa.fw(r - h)) / (2 * h)
    assert sa.dfw(r) == pytest.approx(fd, rel=1e-4, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1e6), st.floats(0.0, 10.0))
def test_fv1_bounds_property(chi, r):
    assert 0.0 <= sa.fv1(chi) < 1.0 or chi > 1e5
    assert 0.0 <= sa.fw(r) <= (1 + C.cw3**6) ** (1 / 6) + 1e-14

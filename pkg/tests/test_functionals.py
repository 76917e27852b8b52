from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wcurv import functionals as F
from wcurv import geometry as G

from .conftest import TWO_PI, perturbed_torus, torus_grid

LN2 = math.log(2.0)


# -- measure ------------------------------------------------------------------


def test_measure_gaussian(gauss2):
    mu = F.measure(gauss2)
    assert mu.total == pytest.approx(1.0, abs=1e-12)
    assert np.all(mu.weight > 0)


def test_measure_sphere(sphere2):
    assert sphere2.tau == 0.5
    assert np.allclose(sphere2.phi, LN2)
    assert F.measure(sphere2).total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n,tau", [(2, 0.5), (2, 1.7), (3, 0.3)])
def test_measure_flat(n, tau):
    md = G.flat_torus(torus_grid(n, 8), tau=tau)
    assert F.measure(md).total == pytest.approx(TWO_PI**n * (4 * math.pi * tau) ** (-n / 2), rel=1e-12)


@pytest.mark.parametrize("tau", [0.0, -1.0, float("nan")])
def test_measure_rejects_bad_tau(tau):
    md = G.flat_torus(torus_grid(2, 8))
    with pytest.raises(ValueError):
        F.measure(md, tau)


# -- normalisation -------------------------------------------------------------


def test_normalize_idempotent(gauss2):
    out = F.normalize_to_C1(gauss2)
    assert np.abs(out.phi - gauss2.phi).max() <= 1e-12


def test_normalize_flat_shift():
    tau = 0.8
    md = G.flat_torus(torus_grid(2, 8), tau=tau)
    out = F.normalize_to_C1(md)
    assert np.allclose(out.phi, math.log(TWO_PI**2 / (4 * math.pi * tau)), atol=1e-14)
    assert F.measure(out).total == pytest.approx(1.0, abs=1e-13)


@given(st.integers(0, 1000), st.floats(0.2, 3.0))
def test_normalize_twice_equals_once(seed, tau):
    md = perturbed_torus(seed, tau=tau)
    once = F.normalize_to_C1(md)
    twice = F.normalize_to_C1(once)
    assert np.abs(once.phi - twice.phi).max() <= 1e-12
    assert F.measure(once).total == pytest.approx(1.0, abs=1e-12)


def test_normalize_sets_tau():
    md = G.flat_torus(torus_grid(2, 8))
    assert F.normalize_to_C1(md, 0.25).tau == 0.25


def test_normalize_rejects_infinite_total():
    md = G.flat_torus(torus_grid(2, 8), phi=-1e4, tau=1.0)
    with pytest.raises(ValueError):
        F.normalize_to_C1(md)


# -- evaluate -------------------------------------------------------------------


def test_w3_gaussian_zero(gauss2):
    assert abs(F.evaluate(F.W3, gauss2)) <= 1e-12
    assert abs(F.evaluate(F.V3, gauss2)) <= 1e-12


def test_v3_sphere(sphere2):
    assert F.evaluate(F.V3, sphere2) == pytest.approx(0.5**3 * (LN2 - 1) ** 3 / 6, abs=1e-12)


def test_w3_sphere_closed_form(sphere2):
    s, tau = LN2 - 1, 0.5
    expect = tau**3 * s**3 / 6 + tau * s / 8
    assert F.evaluate(F.W3, sphere2) == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("c", [0.25, 0.5, 2.0, 4.0])
def test_w3_scale_invariance(c, sphere2):
    for md in (sphere2, perturbed_torus(3, tau=0.7)):
        a = F.evaluate(F.W3, md)
        b = F.evaluate(F.W3, md.scaled(c))
        assert abs(a - b) <= 1e-10


@given(st.integers(0, 1000), st.floats(0.3, 2.0))
def test_linearity(seed, tau):
    md = perturbed_torus(seed, tau=tau)
    w = F.evaluate(F.W3, md)
    v = F.evaluate(F.V3, md)
    e = F.evaluate(F.FunctionalSpec(a1=1.0), md)
    assert w == pytest.approx(v + e / 8, abs=1e-13 * (1 + abs(w)))


def test_constant_functional_is_mass():
    md = perturbed_torus(2, tau=0.6)
    assert F.evaluate(F.FunctionalSpec(a0=1.0), md) == pytest.approx(F.measure(md).total, rel=1e-14)


def test_evaluate_non_finite():
    md = G.flat_torus(torus_grid(2, 8), phi=np.nan, tau=1.0)
    with pytest.raises(FloatingPointError):
        F.evaluate(F.W3, md)


# -- Euler-Lagrange ----------------------------------------------------------------


def test_el_gaussian(gauss2):
    rep = F.el_residual(gauss2)
    assert abs(rep.c) <= 1e-12 and rep.deviation <= 1e-9
    assert rep.l2 <= 1e-12


def test_el_sphere(sphere2):
    s, tau = LN2 - 1, 0.5
    rep = F.el_residual(sphere2)
    assert rep.deviation <= 1e-12
    assert rep.c == pytest.approx(s**3 / 6 - s**2 / (4 * tau) + s / (8 * tau**2), abs=1e-12)


def test_el_product(prod21):
    assert F.el_residual(prod21).deviation <= 1e-9


def test_el_flat_generic():
    grid = torus_grid(2, 32)
    md = G.flat_torus(grid, G.trig_field(grid, amplitude=0.3, rng=5), tau=0.5)
    rep = F.el_residual(md)
    assert rep.deviation > 1e-3 and rep.l2 > 0
    assert rep.l2 <= rep.sup


def test_el_flat_constant_phi_is_critical():
    md = F.normalize_to_C1(G.flat_torus(torus_grid(2, 16), tau=0.5))
    assert F.el_residual(md).deviation <= 1e-12


# -- weighted integration by parts --------------------------------------------------


@given(st.integers(0, 1000), st.floats(0.3, 2.0))
def test_weighted_integration_by_parts(seed, tau):
    md = perturbed_torus(seed, tau=tau)
    p = G.curvature_pack(md)
    mu = F.measure(md)
    assert mu.integrate(tau * p.lap_phi) == pytest.approx(mu.integrate(tau * p.grad_phi_sq), abs=1e-10)

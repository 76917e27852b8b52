from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from wcurv import bases
from wcurv import functionals as F
from wcurv import geometry as G
from wcurv import variations as V

from .conftest import perturbed_torus, torus_grid


def random_dir(md, seed, t=True, amp=0.5):
    rng = np.random.default_rng(seed)
    labels, fields = bases.default_fields(md)
    psi = sum(rng.normal() * f for f in fields[:8]) * amp / len(fields[:8]) ** 0.5
    return V.project_tangent(md, psi, float(rng.normal()) * 0.3 if t else 0.0)


def hermite(md, label):
    labels, fields = bases.hermite_fields(md.chart.coords["x"], md.tau, 3)
    return fields[labels.index(label)]


# -- tangent directions and paths ---------------------------------------------


def test_project_odd_moment_unchanged(gauss2):
    x = gauss2.chart.coords["x"][..., 0]
    d = V.project_tangent(gauss2, x, 0.0)
    assert np.abs(d.psi - x).max() <= 1e-12


def test_project_constant_vanishes(gauss2):
    d = V.project_tangent(gauss2, np.ones(gauss2.chart.shape), 0.0)
    assert np.abs(d.psi).max() <= 1e-12 and d.t == 0.0


def test_project_dilation_unchanged(gauss2):
    tau = gauss2.tau
    r2 = np.sum(gauss2.chart.coords["x"] ** 2, axis=-1)
    d = V.project_tangent(gauss2, r2, -4 * tau**2)
    assert np.abs(d.psi - r2).max() <= 1e-12
    assert d.t == -4 * tau**2


@given(st.integers(0, 1000))
def test_projection_is_tangent(seed):
    md = F.normalize_to_C1(perturbed_torus(seed, tau=0.6))
    d = random_dir(md, seed)
    assert V.tangency_defect(md, d) <= 1e-12


def test_tangent_direction_arithmetic():
    md = G.flat_torus(torus_grid(2, 8), tau=1.0)
    a = V.direction(md, 1.0, 2.0)
    b = V.direction(md, 3.0, -1.0)
    c = 2 * a - b
    assert np.allclose(c.psi, -1.0) and c.t == 5.0
    assert np.allclose(a.psi0, 1.0 + 2 * 2.0 / 2)


def test_constrained_path_identity_at_zero(sphere2):
    d = random_dir(sphere2, 0)
    out = V.constrained_path(sphere2, d, 0.0)
    assert np.abs(out.phi - sphere2.phi)[sphere2.chart.active].max() <= 1e-12
    assert out.tau == sphere2.tau


def test_constrained_path_zero_direction(gauss2):
    d = V.direction(gauss2, 0.0, 0.0)
    for s in (-0.3, 0.4):
        out = V.constrained_path(gauss2, d, s)
        assert np.abs(out.phi - gauss2.phi).max() <= 1e-12 and out.tau == gauss2.tau


@pytest.mark.parametrize("seed", range(4))
def test_constrained_path_normalisation(seed):
    md = F.normalize_to_C1(perturbed_torus(seed, tau=0.7))
    d = random_dir(md, seed)

    def a(s):
        return float(np.mean(V.constrained_path(md, d, s).phi - md.phi - s * d.psi))

    assert F.measure(V.constrained_path(md, d, 0.2), md.tau + 0.2 * d.t).total == pytest.approx(1.0, abs=1e-12)
    assert abs(a(0.0)) <= 1e-12
    slope, _ = V._first_difference(a, 1e-3)
    assert abs(slope) <= 1e-10


def test_constrained_path_rejects_negative_tau(sphere2):
    d = V.project_tangent(sphere2, 0.0, 1.0)
    with pytest.raises(ValueError):
        V.constrained_path(sphere2, d, -1.0)


# -- first variation ----------------------------------------------------------


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.floats(0.3, 1.5), st.sampled_from(["W3", "V3"]))
def test_first_variation_matches_fd_torus(seed, tau, name):
    spec = F.SPECS[name]
    md = F.normalize_to_C1(perturbed_torus(seed, tau=tau))
    d = random_dir(md, seed)
    exact = V.first_variation_analytic(spec, md, d)
    fd, _ = V.first_variation_fd(spec, md, d)
    assert abs(exact - fd) <= max(1e-7, 1e-6 * abs(fd))


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.sampled_from(["gaussian", "sphere"]))
def test_first_variation_matches_fd_solitons(seed, kind):
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        md = G.gaussian_soliton(2, 0.5, phi=None)
        x = md.chart.coords["x"]
        # a non-soliton potential with the same tails
        md = F.normalize_to_C1(md.with_phi(md.phi + 0.1 * rng.normal() * x[..., 0] + 0.05 * rng.normal() * x[..., 1] ** 2))
    else:
        md = G.round_sphere(2)
        z = md.chart.coords["embedding"]
        md = F.normalize_to_C1(md.with_phi(md.phi + 0.2 * rng.normal() * z[..., 2] + 0.1 * rng.normal() * z[..., 0] * z[..., 1]))
    d = random_dir(md, seed + 1)
    exact = V.first_variation_analytic(F.W3, md, d)
    fd, _ = V.first_variation_fd(F.W3, md, d)
    assert abs(exact - fd) <= max(1e-7, 1e-6 * abs(fd))


def test_first_variation_solitons_zero(gauss2, sphere2, prod21):
    for md in (gauss2, sphere2, prod21):
        for d in V.default_basis(md):
            assert abs(V.first_variation_analytic(F.W3, md, d)) <= 1e-8
    for d in V.default_basis(gauss2)[:4]:
        assert abs(V.first_variation_fd(F.W3, gauss2, d)[0]) <= 1e-8
        assert abs(V.first_variation_fd(F.V3, gauss2, d)[0]) <= 1e-8
    d = V.default_basis(sphere2)[-1]
    assert abs(V.first_variation_fd(F.W3, sphere2, d)[0]) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_first_variation_el_form(seed):
    grid = torus_grid(2, 32)
    tau = 0.5
    md = F.normalize_to_C1(G.flat_torus(grid, G.trig_field(grid, amplitude=0.3, rng=seed), tau=tau))
    d = V.project_tangent(md, G.trig_field(grid, rng=seed + 10), 0.0)
    _, _, _, inv = F.functional_mode(md)
    f = tau**3 * inv.v3 - tau**2 * inv.v2 / 2 + tau * inv.v1 / 8 - 1 / 16
    expect = -F.measure(md).integrate(f * d.psi)
    assert V.first_variation_analytic(F.W3, md, d) == pytest.approx(expect, abs=1e-8)


def test_first_variation_zero_direction(sphere2):
    d = V.direction(sphere2, 0.0, 0.0)
    assert V.first_variation_analytic(F.W3, sphere2, d) == 0.0


def test_first_variation_rejects_non_tangent(sphere2):
    with pytest.raises(ValueError):
        V.first_variation_analytic(F.W3, sphere2, V.direction(sphere2, 1.0, 0.0))


def test_criticality(gauss2, sphere2):
    assert V.criticality(F.W3, gauss2) <= 1e-9
    assert V.criticality(F.W3, sphere2) <= 1e-9
    assert V.criticality(F.V3, gauss2) <= 1e-9
    assert V.criticality(F.V3, sphere2) <= 1e-9
    assert V.criticality(F.W3, F.normalize_to_C1(perturbed_torus(0, tau=0.5))) > 1e-4


# -- local variation formulas ---------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 3])
def test_local_zero_direction(k):
    md = perturbed_torus(1, tau=0.8)
    rep = V.local_variation_residual(md, V.direction(md, 0.0, 0.0), k)
    assert rep["sup"] == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_local_k1_flat(seed):
    grid = torus_grid(2, 32)
    md = G.flat_torus(grid, G.trig_field(grid, amplitude=0.3, rng=seed), tau=0.6)
    d = V.direction(md, G.trig_field(grid, rng=seed + 5), 0.4)
    assert V.local_variation_residual(md, d, 1)["sup"] <= 1e-7


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("seed", range(2))
def test_local_conformal(k, seed):
    md = perturbed_torus(seed, tau=0.7)
    grid = torus_grid(2)
    d = V.direction(md, G.trig_field(grid, rng=seed + 20), -0.3)
    rep = V.local_variation_residual(md, d, k)
    assert rep["sup"] <= 1e-6
    assert rep["scale"] > 1e-3


def test_local_gaussian(gauss2):
    d = V.direction(gauss2, hermite(gauss2, "He21"), 0.2)
    assert V.local_variation_residual(gauss2, d, 1)["sup"] <= 1e-7
    # far Hermite nodes carry phi ~ 30; the L2(dnu) norm is the meaningful one
    assert V.local_variation_residual(gauss2, d, 3)["l2"] <= 1e-8


# -- second variation ------------------------------------------------------------


def test_v3_second_variation_gaussian(gauss2):
    for d in V.default_basis(gauss2):
        assert abs(V.second_variation_fd(F.V3, gauss2, d)[0]) <= 1e-7


@pytest.mark.parametrize("label", ["He10", "He01", "dilation"])
def test_w3_null_directions_gaussian(gauss2, label):
    d = next(b for b in V.default_basis(gauss2) if b.label == label)
    assert abs(V.second_variation_fd(F.W3, gauss2, d)[0]) <= 1e-7


@pytest.mark.parametrize("label", ["He11", "He20", "He30", "He21"])
def test_w3_hermite_oracle(gauss2, label):
    # along a degree-k Hermite direction with t = 0 the second variation is
    # (k - 1)/16 times the squared L2 norm
    d = next(b for b in V.default_basis(gauss2) if b.label == label)
    k = sum(int(c) for c in label[2:])
    expect = (k - 1) / 16 * F.measure(gauss2).integrate(d.psi0**2)
    assert V.second_variation_fd(F.W3, gauss2, d)[0] == pytest.approx(expect, abs=1e-7)


def sphere_w3_along_tau(n):
    """W3 on the unit n-sphere, constant potential, normalised, as a function
    of tau."""
    tau = sp.symbols("tau", positive=True)
    vol = 2 * sp.pi ** sp.Rational(n + 1, 2) / sp.gamma(sp.Rational(n + 1, 2))
    phi = sp.log(vol * (4 * sp.pi * tau) ** sp.Rational(-n, 2))
    lam = 1 / (2 * tau)
    mu = n - 1 - lam
    s1 = sp.Rational(1, 2) * (n * (n - 1) + 2 * lam * (phi - n))
    tr2, tr3 = n * mu**2, n * mu**3
    s2 = (s1**2 - tr2) / 2
    s3 = (s1**3 - 3 * s1 * tr2 + 2 * tr3) / 6
    bach_inner = n * (n - 1) * mu**2
    v1, v3 = s1, s3 + bach_inner / 3
    return tau, tau**3 * v3 + tau * v1 / 8


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_tau_direction_sympy(n):
    tau, W = sphere_w3_along_tau(n)
    t0 = sp.Rational(1, 2 * (n - 1))
    md = G.round_sphere(n, polar=12, azimuth=24) if n == 3 else G.round_sphere(2)
    assert F.evaluate(F.W3, md) == pytest.approx(float(W.subs(tau, t0)), abs=1e-12)
    d = V.project_tangent(md, 0.0, 1.0)
    assert float(sp.diff(W, tau).subs(tau, t0)) == pytest.approx(0.0, abs=1e-12)
    assert V.first_variation_fd(F.W3, md, d)[0] == pytest.approx(0.0, abs=1e-8)
    expect = float(sp.diff(W, tau, 2).subs(tau, t0))
    assert V.second_variation_fd(F.W3, md, d)[0] == pytest.approx(expect, abs=1e-7)
    assert expect > 0


def test_second_variation_warns_off_critical():
    md = F.normalize_to_C1(perturbed_torus(2, tau=0.5))
    d = random_dir(md, 2)
    with pytest.warns(RuntimeWarning):
        V.second_variation_fd(F.W3, md, d)


def test_second_variation_quiet_at_critical(sphere2):
    d = V.default_basis(sphere2)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        V.second_variation_fd(F.W3, sphere2, d)


# -- Gram matrices ---------------------------------------------------------------


@pytest.fixture(scope="module")
def gauss_gram(gauss2):
    return V.gram_quadratic_form(F.W3, gauss2, V.default_basis(gauss2), threads=4)


def test_gram_gaussian(gauss_gram):
    rep = gauss_gram
    assert rep.min_eig >= -1e-6
    assert rep.null_dim == 3
    assert np.abs(rep.Q - rep.Q.T).max() == 0.0
    # the null space is spanned by x1, x2 and the dilation
    idx = [rep.labels.index(lab) for lab in ("He10", "He01", "dilation")]
    N = rep.null_vectors
    other = [i for i in range(len(rep.labels)) if i not in idx]
    assert np.abs(N[other]).max() <= 1e-3 * np.abs(N).max()


def test_gram_sphere(sphere2):
    rep = V.gram_quadratic_form(F.W3, sphere2, V.default_basis(sphere2))
    assert rep.null_dim == 0
    assert rep.min_eig > 0


def test_gram_product(product_gram):
    rep = product_gram
    assert rep.null_dim == 1
    assert rep.min_eig >= -1e-6 * np.abs(rep.Q).max()
    v = rep.null_vectors[:, 0]
    i = rep.labels.index("He1")
    assert abs(v[i]) >= 0.999 * np.linalg.norm(v)


def test_gram_v3_vanishes_on_gaussian(gauss2):
    basis = V.default_basis(gauss2)[:6]
    rep = V.gram_quadratic_form(F.V3, gauss2, basis)
    assert np.abs(rep.Q).max() <= 1e-7


def test_polarisation_bilinear(sphere2):
    b = V.default_basis(sphere2)
    u, v = b[0], b[3]
    q = lambda d: V.second_variation_fd(F.W3, sphere2, d, check=False)[0]  # noqa: E731
    quv = 0.25 * (q(u + v) - q(u - v))
    qvu = 0.25 * (q(v + u) - q(v - u))
    assert quv == pytest.approx(qvu, abs=1e-7)
    # Q(2u + v, 2u + v) = 4Q(u,u) + 4Q(u,v) + Q(v,v)
    assert q(2 * u + v) == pytest.approx(4 * q(u) + 4 * quv + q(v), abs=1e-7)


def test_mass_matrix(gauss2):
    b = V.default_basis(gauss2)
    M = V.mass_matrix(gauss2, b)
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0
    i = [d.label for d in b].index("dilation")
    r2 = np.sum(gauss2.chart.coords["x"] ** 2, axis=-1)
    mu = F.measure(gauss2)
    expect = mu.integrate(r2**2) + 2 / (2 * gauss2.tau) * (4 * gauss2.tau**2) ** 2
    assert M[i, i] == pytest.approx(expect, rel=1e-12)


def test_gram_rejects_dependent_basis(sphere2):
    b = V.default_basis(sphere2)
    with pytest.raises(ValueError):
        V.gram_quadratic_form(F.W3, sphere2, [b[0], b[0] * 2.0])


def test_default_threads(monkeypatch):
    monkeypatch.setenv("WCURV_THREADS", "3")
    assert V.default_threads() == 3
    monkeypatch.setenv("WCURV_THREADS", "junk")
    assert V.default_threads() == 1
    monkeypatch.delenv("WCURV_THREADS")
    assert V.default_threads() == 1


def test_threads_do_not_change_result(sphere2):
    b = V.default_basis(sphere2)
    a = V.gram_quadratic_form(F.W3, sphere2, b, threads=1)
    c = V.gram_quadratic_form(F.W3, sphere2, b, threads=3)
    assert np.array_equal(a.Q, c.Q)


# -- soliton tools ---------------------------------------------------------------


def test_decompose_gaussian(gauss2):
    sd = V.soliton_decompose(gauss2)
    r2 = np.sum(gauss2.chart.coords["x"] ** 2, axis=-1)
    expect = r2 / (4 * gauss2.tau) - 1
    assert np.abs(sd.phi0 - expect).max() <= 1e-12 * np.abs(expect).max()
    assert sd.norm_sq == pytest.approx(1.0, abs=1e-12)
    assert sd.eigen_residual <= 1e-10
    assert sd.within_bound


def test_decompose_sphere(sphere2):
    sd = V.soliton_decompose(sphere2)
    assert np.abs(sd.phi0)[sphere2.chart.active].max() <= 1e-12
    assert sd.norm_sq <= 1e-20 and sd.within_bound


def test_decompose_product(prod21):
    sd = V.soliton_decompose(prod21)
    x = prod21.chart.coords["x"][..., 0]
    act = prod21.chart.active
    expect = x**2 / (4 * prod21.tau) - 0.5
    assert np.abs(sd.phi0 - expect)[act].max() <= 1e-12 * np.abs(expect).max()
    assert sd.norm_sq == pytest.approx(0.5, abs=1e-12)


def test_decompose_rejects_non_soliton():
    with pytest.raises(ValueError):
        V.soliton_decompose(F.normalize_to_C1(perturbed_torus(0, tau=0.5)))


@pytest.mark.parametrize("label", ["He10", "He11", "He20", "He30", "dilation"])
def test_stability_equality_gaussian(gauss2, label):
    d = next(b for b in V.default_basis(gauss2) if b.label == label)
    fd = V.second_variation_fd(F.W3, gauss2, d)[0]
    assert abs(fd - V.stability_bound_rhs(F.W3, gauss2, d)) <= 1e-6


def test_stability_equality_sphere_t0(sphere2):
    for d in V.default_basis(sphere2)[:3]:
        fd = V.second_variation_fd(F.W3, sphere2, d)[0]
        assert abs(fd - V.stability_bound_rhs(F.W3, sphere2, d)) <= 1e-8


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.sampled_from(["gauss", "sphere"]))
def test_stability_inequality(seed, which):
    md = G.gaussian_soliton(2, 0.5) if which == "gauss" else G.round_sphere(2)
    d = random_dir(md, seed)
    fd = V.second_variation_fd(F.W3, md, d)[0]
    assert fd >= V.stability_bound_rhs(F.W3, md, d) - 1e-6


def test_stability_rejects_a2(sphere2):
    with pytest.raises(ValueError):
        V.stability_bound_rhs(F.FunctionalSpec(a2=1.0), sphere2, V.default_basis(sphere2)[0])


@pytest.mark.parametrize("k", [2, 3])
def test_vk_gaussian_trivial(gauss2, k):
    d = random_dir(gauss2, 4)
    rep = V.soliton_vk_variation_residual(gauss2, d, k)
    assert rep["sup"] <= 1e-7 and rep["scale"] <= 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_vk_sphere_k2(sphere2, seed):
    d = random_dir(sphere2, seed)
    assert V.soliton_vk_variation_residual(sphere2, d, 2)["sup"] <= 1e-7


def test_vk_k1_all_solitons(gauss2, sphere2, prod21):
    for md in (gauss2, sphere2, prod21):
        d = random_dir(md, 9)
        assert V.soliton_vk_variation_residual(md, d, 1)["sup"] <= 1e-7


def test_vk_rejects_bad_k(sphere2):
    with pytest.raises(ValueError):
        V.soliton_vk_variation_residual(sphere2, V.default_basis(sphere2)[0], 4)

"""First and second variations along paths in the normalisation class C1(g).

Directions are pairs ``(psi, t)`` varying ``(phi, tau)``; the metric is
fixed throughout.  Analytic first variations are checked against central
differences of the functional itself; second variations are obtained only
by differencing.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from . import bases
from .functionals import W3, FunctionalSpec, evaluate, functional_mode, measure
from .geometry import MetricDensity, curvature_pack
from .invariants import inner2, invariant_pack, sigma_tilde, weighted_divergence
from .spectrum import gradient, weighted_laplacian

FD_STEP = 1e-3
NULL_REL = 1e-4
CRITICAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class TangentDirection:
    psi: np.ndarray
    t: float
    tau: float
    n: int
    label: str = ""

    @property
    def psi0(self) -> np.ndarray:
        return self.psi + self.n * self.t / (2.0 * self.tau)

    def __add__(self, other: "TangentDirection") -> "TangentDirection":
        return TangentDirection(self.psi + other.psi, self.t + other.t, self.tau, self.n)

    def __sub__(self, other: "TangentDirection") -> "TangentDirection":
        return TangentDirection(self.psi - other.psi, self.t - other.t, self.tau, self.n)

    def __mul__(self, c: float) -> "TangentDirection":
        return TangentDirection(c * self.psi, c * self.t, self.tau, self.n, self.label)

    __rmul__ = __mul__


def _tau(md: MetricDensity, tau):
    tau = md.tau if tau is None else tau
    if tau is None or not tau > 0:
        raise ValueError("tau must be positive")
    return float(tau)


def direction(md: MetricDensity, psi, t: float = 0.0, tau: float | None = None, label: str = "") -> TangentDirection:
    """Wrap ``(psi, t)`` without projecting."""
    tau = _tau(md, tau)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), md.chart.shape).copy()
    return TangentDirection(psi, float(t), tau, md.n, label)


def project_tangent(md: MetricDensity, psi, t: float = 0.0, tau: float | None = None, label: str = "") -> TangentDirection:
    """Subtract the ``dnu``-mean of ``psi0`` from ``psi``."""
    d = direction(md, psi, t, tau, label)
    mu = measure(md, d.tau)
    return TangentDirection(d.psi - mu.mean(d.psi0), d.t, d.tau, d.n, label)


def tangency_defect(md: MetricDensity, d: TangentDirection) -> float:
    return abs(measure(md, d.tau).integrate(d.psi0))


def dir_norm(md: MetricDensity, d: TangentDirection) -> float:
    return math.sqrt(measure(md, d.tau).integrate(d.psi0**2) + d.t**2)


def constrained_path(md: MetricDensity, d: TangentDirection, s: float) -> MetricDensity:
    """``(phi + s psi + a(s), tau + s t)`` with ``a(s)`` restoring ``int dnu = 1``."""
    tau_s = d.tau + s * d.t
    if not tau_s > 0:
        raise ValueError(f"path leaves tau > 0 at s = {s}")
    phi_s = md.phi + s * d.psi
    lw = md.chart.log_vol - phi_s - 0.5 * md.n * math.log(4 * math.pi * tau_s)
    a = float(logsumexp(lw[md.chart.active]))
    return MetricDensity(md.chart, phi_s + a, tau=tau_s, kind=md.kind, meta=md.meta)


def linear_path(md: MetricDensity, d: TangentDirection, s: float) -> MetricDensity:
    tau_s = d.tau + s * d.t
    if not tau_s > 0:
        raise ValueError(f"path leaves tau > 0 at s = {s}")
    return MetricDensity(md.chart, md.phi + s * d.psi, tau=tau_s, kind=md.kind, meta=md.meta)


def _first_difference(f, h: float):
    """Central difference with one Richardson level: ``(value, error)``."""
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    value = (4 * d2 - d1) / 3
    return value, np.abs(value - d2)


def _second_difference(f, h: float, f0=None):
    f0 = f(0.0) if f0 is None else f0
    d1 = (f(h) - 2 * f0 + f(-h)) / h**2
    d2 = (f(h / 2) - 2 * f0 + f(-h / 2)) / (h / 2) ** 2
    value = (4 * d2 - d1) / 3
    return value, np.abs(value - d2)


def _step(md, d, h):
    if h is not None:
        return h
    nrm = dir_norm(md, d)
    return FD_STEP / nrm if nrm > 0 else FD_STEP


# --------------------------------------------------------------------------
# local variation formulas
# --------------------------------------------------------------------------


def _raise(md_pack, du):
    return np.einsum("...ij,...j->...i", md_pack.ginv, du)


def local_terms(md: MetricDensity, d: TangentDirection, k: int, *, pack=None, inv=None):
    """``(divergence part, remainder)`` of ``(tau^k v_k)'`` at ``s = 0``."""
    tau = d.tau
    if pack is None:
        pack = curvature_pack(md.with_tau(tau))
    if inv is None:
        inv = invariant_pack(pack)
    n = md.n
    psi0 = d.psi0
    t = d.t
    s1 = inv.sigma1_untilded - n / (4 * tau)
    if k == 1:
        div = tau * weighted_laplacian(md, psi0)
        rest = 0.5 * psi0 + t * s1
        return div, rest
    grad = _raise(pack, gradient(md, psi0))
    if k == 2:
        X = np.einsum("...ij,...j->...i", inv.T1, grad)
        div = tau**2 * weighted_divergence(X, pack, 1)
        rest = 0.5 * tau * inv.v1 * psi0 + t * tau * inv.v1 * s1 + t * tau * inner2(inv.E1, pack.ric_phi, pack.ginv)
        return div, rest
    if k == 3:
        X = np.einsum("...ij,...j->...i", inv.T2 + inv.bach_tilde / 3.0, grad)
        div = tau**3 * weighted_divergence(X, pack, 1)
        rest = (
            0.5 * tau**2 * inv.v2 * psi0
            + t * tau**2 * inv.v2 * s1
            + t * tau**2 * inner2(inv.E2 + inv.bach_tilde / 3.0, pack.ric_phi, pack.ginv)
            + t * tau**2 / 3.0 * inner2(2.0 * inv.bach_tilde + pack.ricci / (2 * tau), pack.ric_tilde, pack.ginv)
        )
        return div, rest
    raise ValueError("k must be 1, 2 or 3")


def _density_k(md: MetricDensity, k: int) -> np.ndarray:
    tau = md.tau
    pack = curvature_pack(md)
    if k == 3:
        return tau**3 * invariant_pack(pack).v3
    return tau**k * sigma_tilde(pack)[k - 1]


def _report(md, res, scale) -> dict:
    act = md.chart.active
    mu = measure(md)
    return {
        "sup": float(np.abs(res)[act].max()),
        "l2": math.sqrt(abs(mu.mean(res**2))),
        "scale": float(scale),
    }


def local_variation_residual(md: MetricDensity, d: TangentDirection, k: int, h: float | None = None) -> dict:
    """Pointwise ``(tau^k v_k)'`` by differencing along ``(phi + s psi, tau + s t)``
    minus the analytic expression (divergence terms included)."""
    md = md.with_tau(d.tau)
    div, rest = local_terms(md, d, k)
    rhs = div + rest
    h = _step(md, d, h)
    fd, err = _first_difference(lambda s: _density_k(linear_path(md, d, s), k), h)
    out = _report(md, fd - rhs, np.abs(rhs)[md.chart.active].max())
    out["fd_error"] = float(np.max(err[md.chart.active]))
    return out


def _integrated_terms(md, d, pack, inv, spec: FunctionalSpec) -> float:
    mu = measure(md, d.tau)
    tau = d.tau
    a3, a2, a1, _ = spec.coeffs
    total = 0.0
    for a, k, dens in ((a3, 3, inv.v3), (a2, 2, inv.v2), (a1, 1, inv.v1)):
        if a == 0:
            continue
        _, rest = local_terms(md, d, k, pack=pack, inv=inv)
        total += a * mu.integrate(rest - tau**k * dens * d.psi0)
    # the a0 part is int dnu, constant on C1
    return total


def first_variation_analytic(spec: FunctionalSpec, md: MetricDensity, d: TangentDirection, *, tol: float = 1e-9) -> float:
    """Derivative of ``spec`` along a tangent direction, divergence terms
    integrated away."""
    md, tau, pack, inv = functional_mode(md, d.tau)
    scale = max(1.0, dir_norm(md, d))
    if tangency_defect(md, d) > tol * scale:
        raise ValueError("direction is not tangent to C1(g): int psi0 dnu != 0")
    return _integrated_terms(md, d, pack, inv, spec)


def first_variation_fd(spec: FunctionalSpec, md: MetricDensity, d: TangentDirection, h: float | None = None):
    """``(value, error estimate)`` by central differences along the
    constrained path."""
    md = md.with_tau(d.tau)
    h = _step(md, d, h)
    val, err = _first_difference(lambda s: evaluate(spec, constrained_path(md, d, s)), h)
    return float(val), float(err)


def criticality(spec: FunctionalSpec, md: MetricDensity, tau: float | None = None) -> float:
    """Size of the first variation of ``spec`` on C1(g): the spread of the
    ``psi``-gradient density plus the ``tau``-direction derivative."""
    md, tau, pack, inv = functional_mode(md, tau)
    a3, a2, a1, _ = spec.coeffs
    grad = (
        a3 * (0.5 * tau**2 * inv.v2 - tau**3 * inv.v3)
        + a2 * (0.5 * tau * inv.v1 - tau**2 * inv.v2)
        + a1 * (0.5 - tau * inv.v1)
    )
    mu = measure(md, tau)
    spread = float(np.abs(grad - mu.mean(grad))[md.chart.active].max())
    d = project_tangent(md, 0.0, 1.0, tau)
    return max(spread, abs(_integrated_terms(md, d, pack, inv, spec)))


def second_variation_fd(
    spec: FunctionalSpec,
    md: MetricDensity,
    d: TangentDirection,
    h: float | None = None,
    *,
    check: bool = True,
    f0: float | None = None,
):
    """``(value, error estimate)`` of ``(F(gamma(s)))''(0)`` along the constrained path."""
    md = md.with_tau(d.tau)
    if check:
        crit = criticality(spec, md)
        if crit > CRITICAL_TOL:
            warnings.warn(
                f"backend is not critical for the functional (first variation {crit:.2e}); "
                "the second variation depends on the path",
                RuntimeWarning,
                stacklevel=2,
            )
    h = _step(md, d, h)
    val, err = _second_difference(lambda s: evaluate(spec, constrained_path(md, d, s)), h, f0)
    return float(val), float(err)


# --------------------------------------------------------------------------
# Gram matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadFormReport:
    labels: list
    Q: np.ndarray
    M: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    null_dim: int = 0
    min_eig: float = 0.0
    null_threshold: float = 0.0

    @property
    def null_vectors(self) -> np.ndarray:
        """Basis coefficients of the numerical null space (columns)."""
        idx = np.abs(self.eigenvalues) <= self.null_threshold
        return self.eigenvectors[:, idx]


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("WCURV_THREADS", "1")))
    except ValueError:
        return 1


def _require_independent(M: np.ndarray, rel: float = 1e-10):
    ev = np.linalg.eigvalsh(M)
    if not ev[0] > rel * max(ev[-1], 0.0):
        raise ValueError("mass matrix is not positive-definite (dependent basis)")


def mass_matrix(md: MetricDensity, basis) -> np.ndarray:
    """``L2(dnu)`` Gram of the ``psi`` parts plus ``n/(2 tau) int dnu`` on ``t``."""
    mu = measure(md, basis[0].tau)
    wt = md.n / (2 * basis[0].tau) * mu.total
    m = len(basis)
    M = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            M[a, b] = M[b, a] = mu.integrate(basis[a].psi * basis[b].psi) + wt * basis[a].t * basis[b].t
    return M


def gram_quadratic_form(
    spec: FunctionalSpec,
    md: MetricDensity,
    basis: list,
    *,
    labels=None,
    null_rel: float = NULL_REL,
    threads: int | None = None,
    check: bool = True,
) -> QuadFormReport:
    """Polarised Gram matrix of the second variation on ``basis``."""
    if not basis:
        raise ValueError("empty basis")
    md = md.with_tau(basis[0].tau)
    if check:
        crit = criticality(spec, md)
        if crit > CRITICAL_TOL:
            warnings.warn(f"backend is not critical for the functional ({crit:.2e})", RuntimeWarning, stacklevel=2)
    M = mass_matrix(md, basis)
    _require_independent(M)
    f0 = evaluate(spec, md)
    m = len(basis)
    jobs = [(a, a, basis[a], None) for a in range(m)]
    jobs += [(a, b, basis[a] + basis[b], basis[a] - basis[b]) for a in range(m) for b in range(a + 1, m)]

    def q2(d):
        return second_variation_fd(spec, md, d, check=False, f0=f0)[0]

    def run(job):
        a, b, u, v = job
        if v is None:
            return a, b, q2(u)
        return a, b, 0.25 * (q2(u) - q2(v))

    threads = default_threads() if threads is None else max(1, int(threads))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    Q = np.empty((m, m))
    for a, b, val in results:
        Q[a, b] = Q[b, a] = val
    try:
        vals, vecs = scipy.linalg.eigh(Q, M)
    except np.linalg.LinAlgError as exc:
        raise ValueError("mass matrix is not positive-definite (dependent basis)") from exc
    thr = null_rel * float(np.abs(vals).max()) if vals.size else 0.0
    return QuadFormReport(
        labels=list(labels) if labels is not None else [d.label for d in basis],
        Q=Q,
        M=M,
        eigenvalues=vals,
        eigenvectors=vecs,
        null_dim=int(np.sum(np.abs(vals) <= thr)),
        min_eig=float(vals[0]),
        null_threshold=thr,
    )


def default_basis(md: MetricDensity, tau: float | None = None, *, degree: int | None = None) -> list:
    """Projected test directions for a backend.

    Gaussian: Hermite polynomials plus the dilation ``(|x|^2, -4 tau^2)``;
    sphere: degree-1 harmonics plus ``(0, 1)``; product: Hermite in the
    Euclidean factor, degree-1 harmonics and ``(0, 1)``; torus: Fourier
    modes.
    """
    tau = _tau(md, tau)
    labels, fields = bases.default_fields(md, tau, degree=degree)
    out = [project_tangent(md, f, 0.0, tau, lab) for lab, f in zip(labels, fields)]
    if md.kind == "gaussian":
        x = md.chart.coords["x"]
        out.append(project_tangent(md, np.sum(x**2, axis=-1), -4 * tau**2, tau, "dilation"))
    elif md.kind in ("sphere", "product"):
        out.append(project_tangent(md, 0.0, 1.0, tau, "(0,1)"))
    return out


# --------------------------------------------------------------------------
# soliton tools
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SolitonData:
    phi0: np.ndarray
    sigma1: float
    norm_sq: float
    eigen_residual: float
    within_bound: bool


def require_soliton(md: MetricDensity, tau: float | None = None, tol: float = 1e-8):
    md, tau, pack, inv = functional_mode(md, tau)
    act = md.chart.active
    size = float(np.abs(pack.ric_tilde)[act].max())
    if size > tol * max(1.0, 1.0 / tau):
        raise ValueError(f"not a shrinking soliton: |Ric + Hess phi - g/(2 tau)| = {size:.3e}")
    return md, tau, pack, inv


def soliton_decompose(md: MetricDensity, tau: float | None = None, *, tol: float = 1e-8) -> SolitonData:
    """``phi0 = phi - n/2 - 2 tau sigma1~`` with its norm and eigen-residual."""
    md, tau, pack, inv = require_soliton(md, tau, tol)
    phi0 = md.phi - md.n / 2 - 2 * tau * inv.sigma1
    mu = measure(md, tau)
    res = -weighted_laplacian(md, phi0) - phi0 / tau
    nrm = mu.integrate(phi0**2)
    return SolitonData(
        phi0=phi0,
        sigma1=mu.mean(inv.sigma1),
        norm_sq=nrm,
        eigen_residual=math.sqrt(mu.integrate(res**2)),
        within_bound=bool(nrm <= md.n / 2 + 1e-9),
    )


def stability_bound_rhs(spec: FunctionalSpec, md: MetricDensity, d: TangentDirection, *, tol: float = 1e-8) -> float:
    """Lower bound for the second variation at a soliton.

    ``prefactor * int [tau |grad psi1|^2 - psi1^2/2 + (c - t/tau)^2 phi0^2/2] dnu``
    with ``psi1 = psi0 + c phi0`` orthogonal to ``phi0``.  The prefactor is
    ``tau^2 v2 - tau v1/2`` per unit of ``a3`` plus ``a1``.
    """
    a3, a2, a1, _ = spec.coeffs
    if a2 != 0:
        raise ValueError("the bound is stated for combinations of V3 and W1 only")
    md, tau, pack, inv = require_soliton(md, d.tau, tol)
    mu = measure(md, tau)
    sd = soliton_decompose(md, tau, tol=tol)
    phi0 = sd.phi0
    psi0 = d.psi0
    c = 0.0 if sd.norm_sq <= 1e-14 else -mu.integrate(psi0 * phi0) / sd.norm_sq
    psi1 = psi0 + c * phi0
    du = gradient(md, psi1)
    grad_sq = np.einsum("...i,...ij,...j->...", du, pack.ginv, du)
    body = mu.integrate(tau * grad_sq - 0.5 * psi1**2 + 0.5 * (c - d.t / tau) ** 2 * phi0**2)
    pre = a3 * (tau**2 * mu.mean(inv.v2) - 0.5 * tau * mu.mean(inv.v1)) + a1
    return pre * body


def soliton_vk_variation_residual(md: MetricDensity, d: TangentDirection, k: int, h: float | None = None, *, tol: float = 1e-8) -> dict:
    """``(tau^k v_k)'(0) = tau^(k-1) v_(k-1) (tau Delta_phi + 1/2) psi0
    - t tau^(k-2) v_(k-1) phi0 / 2`` against differencing (``v_0 = 1``)."""
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    md, tau, pack, inv = require_soliton(md, d.tau, tol)
    sd = soliton_decompose(md, tau, tol=tol)
    vprev = (np.ones(md.chart.shape), inv.v1, inv.v2)[k - 1]
    psi0 = d.psi0
    rhs = tau ** (k - 1) * vprev * (tau * weighted_laplacian(md, psi0) + 0.5 * psi0) - 0.5 * d.t * tau ** (k - 2) * vprev * sd.phi0
    h = _step(md, d, h)
    fd, err = _first_difference(lambda s: _density_k(linear_path(md, d, s), k), h)
    out = _report(md, fd - rhs, np.abs(rhs)[md.chart.active].max())
    out["fd_error"] = float(np.max(err[md.chart.active]))
    return out


__all__ = [
    "TangentDirection",
    "QuadFormReport",
    "SolitonData",
    "W3",
    "direction",
    "project_tangent",
    "constrained_path",
    "first_variation_analytic",
    "first_variation_fd",
    "local_variation_residual",
    "second_variation_fd",
    "gram_quadratic_form",
    "soliton_decompose",
    "stability_bound_rhs",
    "soliton_vk_variation_residual",
    "default_basis",
    "criticality",
]

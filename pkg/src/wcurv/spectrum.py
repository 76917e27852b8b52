"""Weighted Laplacian and Rayleigh-Ritz estimates of its first eigenvalue."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .functionals import measure
from .geometry import MetricDensity, min_bakry_emery_gap


def gradient(md: MetricDensity, u: np.ndarray) -> np.ndarray:
    """Coordinate differential ``du`` (lower index last)."""
    return md.chart.partials(np.broadcast_to(np.asarray(u, dtype=float), md.chart.shape))


def grad_inner(md: MetricDensity, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", gradient(md, u), md.chart.ginv, gradient(md, v))


def weighted_laplacian(md: MetricDensity, u: np.ndarray) -> np.ndarray:
    """``Delta u - <grad phi, grad u>``."""
    c = md.chart
    du = gradient(md, u)
    hess = c.partials(du) - np.einsum("...kij,...k->...ij", c.christoffel, du)
    lap = np.einsum("...ij,...ij->...", hess, c.ginv)
    return lap - np.einsum("...i,...ij,...j->...", gradient(md, md.phi), c.ginv, du)


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    labels: list
    eigenvalues: np.ndarray
    lambda1: float
    gap: float
    eigvec: np.ndarray
    eigvecs: np.ndarray = field(repr=False)


def rayleigh_ritz(md: MetricDensity, basis, tau: float | None = None, labels=None) -> SpectrumReport:
    """Generalised eigenvalues of the Dirichlet form against ``L2(dnu)``
    on the ``dnu``-mean-free span of ``basis``."""
    tau = md.tau if tau is None else tau
    mu = measure(md, tau)
    fields = [np.asarray(u, dtype=float) - mu.mean(u) for u in basis]
    m = len(fields)
    if m == 0:
        raise ValueError("empty basis")
    grads = [gradient(md, u) for u in fields]
    ginv = md.chart.ginv
    K = np.empty((m, m))
    M = np.empty((m, m))
    for a in range(m):
        ga = np.einsum("...ij,...j->...i", ginv, grads[a])
        for b in range(a, m):
            K[a, b] = K[b, a] = mu.integrate(np.einsum("...i,...i->...", ga, grads[b]))
            M[a, b] = M[b, a] = mu.integrate(fields[a] * fields[b])
    ev = np.linalg.eigvalsh(M)
    if not ev[0] > 1e-10 * max(ev[-1], 0.0):
        raise ValueError("basis is linearly dependent in L2(dnu)")
    try:
        vals, vecs = scipy.linalg.eigh(K, M)
    except np.linalg.LinAlgError as exc:
        raise ValueError("basis is linearly dependent in L2(dnu)") from exc
    lam1 = float(vals[0])
    gap = lam1 - 1.0 / (2.0 * tau) if tau else float("nan")
    return SpectrumReport(list(labels or range(m)), vals, lam1, gap, vecs[:, 0], vecs)


def obata_check(md: MetricDensity, basis, tau: float | None = None, *, tol: float = 1e-8, labels=None) -> dict:
    """Check ``lambda_1 >= 1/(2 tau)`` when ``Ric + Hess phi >= g/(2 tau)``.

    The multiplicity of ``1/(2 tau)`` in the Ritz spectrum is reported as
    ``k``, the dimension of a would-be Gaussian factor.
    """
    tau = md.tau if tau is None else tau
    gap = min_bakry_emery_gap(md, tau)
    out = {"bakry_emery_gap": gap, "bound": 1.0 / (2.0 * tau)}
    if gap < -tol:
        out.update(status="skipped", reason=f"Ric + Hess phi - g/(2 tau) has eigenvalue {gap:.3e} < 0")
        return out
    rep = rayleigh_ritz(md, basis, tau, labels)
    bound = 1.0 / (2.0 * tau)
    k = int(np.sum(np.abs(rep.eigenvalues - bound) <= max(tol, 1e-8 * bound)))
    out.update(
        status="pass" if rep.lambda1 >= bound - tol else "fail",
        lambda1=rep.lambda1,
        gap=rep.gap,
        k=k,
        eigenvalues=rep.eigenvalues.tolist(),
    )
    return out

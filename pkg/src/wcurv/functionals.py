"""The measure ``dnu``, the normalisation classes and curvature functionals.

``dnu = (4 pi tau)^(-n/2) exp(-phi) dvol``.  A functional is a coefficient
vector ``(a3, a2, a1, a0)`` standing for
``int (a3 tau^3 v3 + a2 tau^2 v2 + a1 tau v1 + a0) dnu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import MetricDensity, curvature_pack
from .invariants import InvariantPack, invariant_pack


def _tau(md: MetricDensity, tau: float | None) -> float:
    tau = md.tau if tau is None else tau
    if tau is None or not np.isfinite(tau) or not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return float(tau)


@dataclass(frozen=True, eq=False)
class MeasureField:
    weight: np.ndarray
    total: float

    def integrate(self, f) -> float:
        f = np.broadcast_to(f, self.weight.shape)
        act = self.weight > 0
        return float(np.sum(self.weight[act] * f[act]))

    def mean(self, f) -> float:
        return self.integrate(f) / self.total


def log_weight(md: MetricDensity, tau: float | None = None) -> np.ndarray:
    tau = _tau(md, tau)
    return md.chart.log_vol - md.phi - 0.5 * md.n * math.log(4.0 * math.pi * tau)


def measure(md: MetricDensity, tau: float | None = None) -> MeasureField:
    """Quadrature weights of ``dnu`` at every node and their total."""
    with np.errstate(over="ignore"):
        w = np.exp(log_weight(md, tau))
    return MeasureField(w, float(np.sum(w)))


def normalize_to_C1(md: MetricDensity, tau: float | None = None) -> MetricDensity:
    """Shift ``phi`` by a constant so that ``int dnu = 1``."""
    tau = _tau(md, tau)
    total = measure(md, tau).total
    if not np.isfinite(total) or not total > 0:
        raise ValueError(f"cannot normalise: total measure {total}")
    shift = math.log(total)
    out = md.with_phi(md.phi + shift)
    return out if md.tau == tau else out.with_tau(tau)


@dataclass(frozen=True)
class FunctionalSpec:
    a3: float = 0.0
    a2: float = 0.0
    a1: float = 0.0
    a0: float = 0.0

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.a3, self.a2, self.a1, self.a0)


W3 = FunctionalSpec(1.0, 0.0, 0.125, 0.0)
V3 = FunctionalSpec(1.0, 0.0, 0.0, 0.0)
SPECS = {"W3": W3, "V3": V3}


def functional_mode(md: MetricDensity, tau: float | None = None):
    """``(md, tau, curvature pack, invariant pack)`` at ``lam = 1/(2 tau)``."""
    tau = _tau(md, tau)
    if md.tau != tau:
        md = md.with_tau(tau)
    pack = curvature_pack(md)
    return md, tau, pack, invariant_pack(pack)


def density(spec: FunctionalSpec, inv: InvariantPack, tau: float) -> np.ndarray:
    a3, a2, a1, a0 = spec.coeffs
    return a3 * tau**3 * inv.v3 + a2 * tau**2 * inv.v2 + a1 * tau * inv.v1 + a0


def evaluate(spec: FunctionalSpec, md: MetricDensity, tau: float | None = None) -> float:
    md, tau, _, inv = functional_mode(md, tau)
    f = density(spec, inv, tau)
    act = md.chart.active
    if not np.all(np.isfinite(f[act])):
        raise FloatingPointError("non-finite functional integrand")
    return measure(md, tau).integrate(f)


@dataclass(frozen=True, eq=False)
class ELReport:
    field: np.ndarray
    c: float
    sup: float
    l2: float

    @property
    def deviation(self) -> float:
        return self.sup


def el_residual(md: MetricDensity, tau: float | None = None) -> ELReport:
    """``v3 - v2/(2 tau) + v1/(8 tau^2)``, its ``dnu``-mean and spread."""
    md, tau, _, inv = functional_mode(md, tau)
    f = inv.v3 - inv.v2 / (2 * tau) + inv.v1 / (8 * tau**2)
    mu = measure(md, tau)
    c = mu.mean(f)
    act = md.chart.active
    dev = np.abs(f - c)
    l2 = math.sqrt(mu.mean(dev**2))
    return ELReport(f, c, float(dev[act].max()), l2)

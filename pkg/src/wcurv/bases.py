"""Finite test bases: Hermite polynomials, sphere harmonics, Fourier modes.

Each builder returns ``(labels, fields)`` with scalar node fields; the
variations module pairs them with ``t = 0`` and adds the named
``(psi, t)`` directions.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from numpy.polynomial import hermite_e

from .geometry import MetricDensity


def _multi_indices(dim: int, max_degree: int, min_degree: int = 1):
    out = []
    for deg in range(min_degree, max_degree + 1):
        for idx in itertools.product(range(deg + 1), repeat=dim):
            if sum(idx) == deg:
                out.append(idx)
    # sorted by degree, then reverse-lexicographic so x1 comes before x2
    return sorted(out, key=lambda a: (sum(a), [-v for v in a]))


def hermite_fields(x: np.ndarray, tau: float, max_degree: int = 3, min_degree: int = 1):
    """Tensor Hermite polynomials orthogonal for ``exp(-|x|^2/(4 tau))``.

    ``x`` has the coordinate index last.
    """
    dim = x.shape[-1]
    y = x / math.sqrt(2.0 * tau)
    labels, fields = [], []
    for idx in _multi_indices(dim, max_degree, min_degree):
        f = np.ones(x.shape[:-1])
        for a, k in enumerate(idx):
            if k:
                c = np.zeros(k + 1)
                c[k] = 1.0
                f = f * hermite_e.hermeval(y[..., a], c) * (2.0 * tau) ** (k / 2)
        labels.append("He" + "".join(map(str, idx)))
        fields.append(f)
    return labels, fields


def harmonic_fields(z: np.ndarray, max_degree: int = 1):
    """Spherical harmonics of degree 1 (and 2) from embedding coordinates
    ``z`` (coordinate index last)."""
    if max_degree > 2:
        raise ValueError("harmonics above degree 2 are not provided")
    m = z.shape[-1]
    labels, fields = [], []
    for a in range(m):
        labels.append(f"Y1[{a}]")
        fields.append(z[..., a].copy())
    if max_degree >= 2:
        for a in range(m):
            for b in range(a + 1, m):
                labels.append(f"Y2[{a}{b}]")
                fields.append(z[..., a] * z[..., b])
        for a in range(m - 1):
            labels.append(f"Y2[{a}{a}-{a + 1}{a + 1}]")
            fields.append(z[..., a] ** 2 - z[..., a + 1] ** 2)
    return labels, fields


def fourier_fields(md: MetricDensity, kmax: int = 2):
    """Real Fourier modes with ``0 < |k|_inf <= kmax`` on a torus chart."""
    chart = md.chart
    x = chart.coords.get("x")
    if x is None:
        raise ValueError("Fourier basis needs a torus chart")
    lengths = [ax.length for ax in chart.axes]
    dim = chart.n
    labels, fields = [], []
    seen = set()
    for k in itertools.product(range(-kmax, kmax + 1), repeat=dim):
        if not any(k):
            continue
        neg = tuple(-v for v in k)
        if neg in seen:
            continue
        seen.add(k)
        arg = sum(2 * np.pi * k[a] * x[..., a] / lengths[a] for a in range(dim))
        labels += [f"cos{k}", f"sin{k}"]
        fields += [np.cos(arg), np.sin(arg)]
    return labels, fields


def default_fields(md: MetricDensity, tau: float | None = None, *, degree: int | None = None):
    """Default scalar test fields for a backend (no constants)."""
    tau = md.tau if tau is None else tau
    c = md.chart
    if md.kind == "gaussian":
        return hermite_fields(c.coords["x"], tau, 3 if degree is None else degree)
    if md.kind == "sphere":
        return harmonic_fields(c.coords["embedding"], 1 if degree is None else degree)
    if md.kind == "product":
        hl, hf = hermite_fields(c.coords["x"], tau, 2 if degree is None else degree)
        sl, sf = harmonic_fields(c.coords["embedding"], 1)
        return hl + sl, hf + sf
    return fourier_fields(md, 2 if degree is None else degree)

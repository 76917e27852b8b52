"""Geometry backends and the curvature engine.

A :class:`Chart` is a single coordinate patch sampled on a tensor-product
node set: one axis object per coordinate, the metric at every node, and
log quadrature weights for ``dvol_g``.  Four kinds are provided:

* periodic boxes (flat or with an arbitrary metric field),
* round spheres in doubled polar angles (every polar angle runs over a
  full period so fields stay smooth and periodic; only the first half of
  each polar axis carries quadrature weight),
* Euclidean space on Gauss-Hermite nodes,
* products of the above.

Curvature sign convention: ``R_{ikjl} g^{kl} = R_{ij}`` and the unit sphere
has ``R_{ikjl} = g_ij g_kl - g_il g_kj``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .tensorfield import FourierAxis, GridSpec, HermiteAxis

_LETTERS = "abcdefghijklmnop"


# --------------------------------------------------------------------------
# charts
# --------------------------------------------------------------------------


class Chart:
    """Coordinate patch with metric, connection and quadrature."""

    def __init__(
        self,
        axes,
        metric: np.ndarray,
        log_vol: np.ndarray,
        *,
        coords: dict | None = None,
        christoffel: np.ndarray | None = None,
        riemann: np.ndarray | None = None,
        flat: bool = False,
        name: str = "chart",
        factors: tuple = (),
    ):
        self.axes = tuple(axes)
        self.metric = np.asarray(metric, dtype=float)
        self.log_vol = np.asarray(log_vol, dtype=float)
        self.coords = dict(coords or {})
        self.flat = flat
        self.name = name
        self.factors = factors
        if self.metric.shape != self.shape + (self.n, self.n):
            raise ValueError(f"metric shape {self.metric.shape} does not match nodes {self.shape}")
        if self.log_vol.shape != self.shape:
            raise ValueError("log_vol must be sampled on the node grid")
        if christoffel is not None:
            self.__dict__["christoffel"] = np.asarray(christoffel, dtype=float)
        if riemann is not None:
            self.__dict__["riemann"] = np.asarray(riemann, dtype=float)
        elif flat:
            self.__dict__["riemann"] = np.zeros(self.shape + (self.n,) * 4)
        if flat and christoffel is None:
            self.__dict__["christoffel"] = np.zeros(self.shape + (self.n,) * 3)

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @cached_property
    def active(self) -> np.ndarray:
        return np.isfinite(self.log_vol)

    # -- differentiation -------------------------------------------------

    def deriv(self, arr: np.ndarray, axis: int) -> np.ndarray:
        return self.axes[axis].deriv(arr, axis)

    def partials(self, arr: np.ndarray) -> np.ndarray:
        """Stack of coordinate derivatives; the new slot precedes all
        existing component slots."""
        nodes = len(self.shape)
        return np.stack([self.deriv(arr, a) for a in range(self.n)], axis=nodes)

    # -- metric data -------------------------------------------------------

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.metric)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.metric))

    @cached_property
    def christoffel(self) -> np.ndarray:
        return christoffel(self.metric, self)

    @cached_property
    def riemann(self) -> np.ndarray:
        return riemann(self.metric, self.christoffel, self)

    @cached_property
    def ricci(self) -> np.ndarray:
        return 0.5 * _sym(np.einsum("...ikjl,...kl->...ij", self.riemann, self.ginv))

    @cached_property
    def scalar(self) -> np.ndarray:
        return np.einsum("...ij,...ij->...", self.ricci, self.ginv)

    def covariant_derivative(self, T: np.ndarray, valence: int) -> np.ndarray:
        return covariant_derivative(T, valence, self)

    def scaled(self, c: float) -> "Chart":
        """Same patch with metric ``c g``."""
        if not c > 0:
            raise ValueError("metric scale must be positive")
        out = Chart(
            self.axes,
            c * self.metric,
            self.log_vol + 0.5 * self.n * math.log(c),
            coords=self.coords,
            christoffel=self.christoffel,
            riemann=c * self.riemann,
            flat=self.flat,
            name=self.name,
            factors=self.factors,
        )
        return out

    def __repr__(self) -> str:
        return f"Chart({self.name!r}, n={self.n}, shape={self.shape})"


def _sym(A: np.ndarray) -> np.ndarray:
    return A + np.swapaxes(A, -1, -2)


def christoffel(g: np.ndarray, chart: Chart) -> np.ndarray:
    """``G[..., k, i, j] = Gamma^k_ij`` of the Levi-Civita connection."""
    eig = np.linalg.eigvalsh(g)
    if np.any(eig[..., 0] <= 0):
        raise np.linalg.LinAlgError("metric is singular or indefinite at some node")
    dg = chart.partials(g)  # dg[..., l, i, j] = d_l g_ij
    lowered = dg + np.einsum("...jil->...ijl", dg) - np.einsum("...lij->...ijl", dg)
    G = 0.5 * np.einsum("...kl,...ijl->...kij", np.linalg.inv(g), lowered)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def riemann(g: np.ndarray, G: np.ndarray, chart: Chart) -> np.ndarray:
    """Fully covariant ``R_{abcd} = g_ae R^e_{bcd}`` with
    ``R^a_{bcd} = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb``."""
    dG = chart.partials(G)  # dG[..., c, a, d, b] = d_c Gamma^a_db
    up = (
        np.einsum("...cadb->...abcd", dG)
        - np.einsum("...dacb->...abcd", dG)
        + np.einsum("...ace,...edb->...abcd", G, G)
        - np.einsum("...ade,...ecb->...abcd", G, G)
    )
    return np.einsum("...ae,...ebcd->...abcd", g, up)


def covariant_derivative(T: np.ndarray, valence: int, chart: Chart) -> np.ndarray:
    """``(nabla T)_{i j1..jr}``; the derivative slot comes first."""
    G = chart.christoffel
    out = chart.partials(T)
    idx = _LETTERS[:valence]
    for p in range(valence):
        src = idx[:p] + "y" + idx[p + 1:]
        out = out - np.einsum(f"...yz{idx[p]},...{src}->...z{idx}", G, T)
    return out


# --------------------------------------------------------------------------
# chart constructors
# --------------------------------------------------------------------------


def torus_chart(grid: GridSpec, metric: np.ndarray | None = None) -> Chart:
    """Periodic box; flat (closed-form connection) when ``metric`` is None."""
    n = grid.dim
    coords = {"x": np.stack(grid.coordinates(), axis=-1)}
    cell = float(np.prod(grid.spacing))
    if metric is None:
        g = np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy()
        return Chart(grid.axes, g, np.full(grid.shape, math.log(cell)), coords=coords, flat=True, name="flat-torus")
    g = np.asarray(metric, dtype=float)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    if np.any(np.linalg.eigvalsh(g)[..., 0] <= 0):
        raise ValueError("grid metric is not positive-definite at every node")
    log_vol = math.log(cell) + 0.5 * np.log(np.linalg.det(g))
    return Chart(grid.axes, g, log_vol, coords=coords, name="grid-chart")


def polar_weights(size: int, power: int) -> np.ndarray:
    """Weights on ``theta_j = (j + 1/2) pi / size`` integrating
    ``cos(k theta) sin(theta)**power`` over ``[0, pi]`` exactly for
    ``k < size``."""
    theta = (np.arange(size) + 0.5) * np.pi / size
    k = np.arange(size)
    y, w = np.polynomial.legendre.leggauss(4 * size + power + 64)
    t = 0.5 * np.pi * (y + 1.0)
    moments = 0.5 * np.pi * (np.cos(np.outer(k, t)) * np.sin(t) ** power) @ w
    weights = np.linalg.solve(np.cos(np.outer(k, theta)), moments)
    if np.any(weights <= 0):
        raise ValueError(f"polar rule with {size} nodes and power {power} has non-positive weights")
    return weights


def sphere_chart(n: int = 2, radius: float = 1.0, polar: int = 16, azimuth: int = 32) -> Chart:
    """Round ``S^n`` of the given radius in hyperspherical coordinates.

    Polar angles run over doubled ``[0, 2 pi)`` with ``2 * polar`` nodes
    offset by half a cell; the azimuth uses ``azimuth`` nodes.
    """
    if n < 2:
        raise ValueError("sphere chart needs n >= 2")
    axes = [FourierAxis(2 * polar, 2 * np.pi, 0.5) for _ in range(n - 1)]
    axes.append(FourierAxis(azimuth, 2 * np.pi))
    ang = np.meshgrid(*(ax.nodes for ax in axes), indexing="ij")
    shape = tuple(ax.size for ax in axes)

    emb = []
    prod_sin = np.ones(shape)
    diag = [np.ones(shape)]
    for a in range(n - 1):
        emb.append(prod_sin * np.cos(ang[a]))
        prod_sin = prod_sin * np.sin(ang[a])
        diag.append(prod_sin**2)
    emb.append(prod_sin * np.cos(ang[-1]))
    emb.append(prod_sin * np.sin(ang[-1]))
    g = np.zeros(shape + (n, n))
    for a in range(n):
        g[..., a, a] = radius**2 * diag[a]

    log_vol = np.full(shape, n * math.log(radius) + math.log(2 * np.pi / azimuth))
    for a in range(n - 1):
        w = np.full(2 * polar, -np.inf)
        w[:polar] = np.log(polar_weights(polar, n - 1 - a))
        bshape = [1] * n
        bshape[a] = 2 * polar
        log_vol = log_vol + w.reshape(bshape)

    G = christoffel(g, _DerivOnly(axes))
    Rm = (np.einsum("...ij,...kl->...ikjl", g, g) - np.einsum("...il,...kj->...ikjl", g, g)) / radius**2
    coords = {"embedding": radius * np.stack(emb, axis=-1), "angles": np.stack(ang, axis=-1)}
    return Chart(axes, g, log_vol, coords=coords, christoffel=G, riemann=Rm, name="round-sphere")


class _DerivOnly:
    """Minimal stand-in exposing ``partials`` before a Chart exists."""

    def __init__(self, axes):
        self.axes = tuple(axes)

    def partials(self, arr):
        nodes = len(self.axes)
        return np.stack([ax.deriv(arr, a) for a, ax in enumerate(self.axes)], axis=nodes)


def euclidean_chart(n: int, tau: float, order: int = 12) -> Chart:
    """``R^n`` on tensor Gauss-Hermite nodes matched to ``exp(-|x|^2/(4 tau))``."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    axes = [HermiteAxis(order, tau) for _ in range(n)]
    x = np.stack(np.meshgrid(*(ax.nodes for ax in axes), indexing="ij"), axis=-1)
    logw = sum(np.log(ax.weights).reshape([-1 if b == a else 1 for b in range(n)]) for a, ax in enumerate(axes))
    # dvol weights: Hermite weights absorb the normalised reference Gaussian
    log_vol = logw + 0.5 * n * math.log(4 * np.pi * tau) + np.sum(x**2, axis=-1) / (4 * tau)
    g = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
    return Chart(axes, g, log_vol, coords={"x": x}, flat=True, name="euclidean")


def product_chart(*charts: Chart) -> Chart:
    """Riemannian product; curvature and connection are block-diagonal."""
    axes = [ax for c in charts for ax in c.axes]
    shape = tuple(ax.size for ax in axes)
    n = len(axes)
    offs = np.cumsum([0] + [c.n for c in charts])
    nodes = len(shape)

    def embed(arr, k, slots):
        # place factor k's node axes inside the product node grid
        lead = [1] * nodes
        lead[offs[k]:offs[k + 1]] = charts[k].shape
        return arr.reshape(tuple(lead) + arr.shape[len(charts[k].shape):])

    g = np.zeros(shape + (n, n))
    G = np.zeros(shape + (n,) * 3)
    Rm = np.zeros(shape + (n,) * 4)
    log_vol = np.zeros(shape)
    coords = {}
    for k, c in enumerate(charts):
        s = slice(offs[k], offs[k + 1])
        g[..., s, s] = embed(c.metric, k, 2)
        G[..., s, s, s] = embed(c.christoffel, k, 3)
        Rm[..., s, s, s, s] = embed(c.riemann, k, 4)
        log_vol = log_vol + embed(c.log_vol, k, 0)
        for key, val in c.coords.items():
            name = key if key not in coords else f"{key}{k}"
            coords[name] = np.broadcast_to(embed(val, k, 1), shape + val.shape[len(c.shape):]).copy()
    return Chart(
        axes,
        g,
        log_vol,
        coords=coords,
        christoffel=G,
        riemann=Rm,
        flat=all(c.flat for c in charts),
        name="x".join(c.name for c in charts),
        factors=tuple(charts),
    )


def broadcast_factor(chart: Chart, k: int, arr: np.ndarray) -> np.ndarray:
    """Lift a node field of factor ``k`` onto the product chart's nodes."""
    offs = np.cumsum([0] + [c.n for c in chart.factors])
    lead = [1] * len(chart.shape)
    lead[offs[k]:offs[k + 1]] = chart.factors[k].shape
    extra = arr.shape[len(chart.factors[k].shape):]
    return np.broadcast_to(arr.reshape(tuple(lead) + extra), chart.shape + extra)


# --------------------------------------------------------------------------
# manifolds with density
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricDensity:
    """Chart, density potential ``phi`` and parameter.

    With ``tau`` set the parameter is ``lam = 1 / (2 tau)`` (functional
    mode); otherwise ``lam`` is free.
    """

    chart: Chart
    phi: np.ndarray
    tau: float | None = None
    lam: float = 0.0
    kind: str = "grid"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = np.broadcast_to(np.asarray(self.phi, dtype=float), self.chart.shape).copy()
        object.__setattr__(self, "phi", phi)
        if self.tau is not None:
            if not self.tau > 0:
                raise ValueError(f"tau must be positive, got {self.tau}")
            object.__setattr__(self, "tau", float(self.tau))
            object.__setattr__(self, "lam", 1.0 / (2.0 * self.tau))

    @property
    def n(self) -> int:
        return self.chart.n

    def with_phi(self, phi) -> "MetricDensity":
        return replace(self, phi=phi)

    def with_tau(self, tau: float) -> "MetricDensity":
        return replace(self, tau=tau)

    def with_lam(self, lam: float) -> "MetricDensity":
        return replace(self, tau=None, lam=float(lam))

    def scaled(self, c: float) -> "MetricDensity":
        """``(c g, phi, c tau)``."""
        tau = None if self.tau is None else c * self.tau
        lam = self.lam if tau is None else 0.0
        return replace(self, chart=self.chart.scaled(c), tau=tau, lam=lam)


@dataclass(frozen=True, eq=False)
class CurvaturePack:
    chart: Chart
    phi: np.ndarray
    lam: float
    g: np.ndarray
    ginv: np.ndarray
    sqrt_det: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    dphi: np.ndarray
    hess_phi: np.ndarray
    lap_phi: np.ndarray
    grad_phi_sq: np.ndarray
    ric_phi: np.ndarray
    ric_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.chart.n

    @cached_property
    def grad_phi(self) -> np.ndarray:
        """``nabla^k phi`` (index raised)."""
        return np.einsum("...kl,...l->...k", self.ginv, self.dphi)


def curvature_pack(md: MetricDensity, lam: float | None = None) -> CurvaturePack:
    c = md.chart
    lam = md.lam if lam is None else float(lam)
    phi = md.phi
    dphi = c.partials(phi)
    hess = c.partials(dphi) - np.einsum("...kij,...k->...ij", c.christoffel, dphi)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    lap = np.einsum("...ij,...ij->...", hess, c.ginv)
    grad_sq = np.einsum("...i,...ij,...j->...", dphi, c.ginv, dphi)
    ric_phi = c.ricci + hess
    return CurvaturePack(
        chart=c,
        phi=phi,
        lam=lam,
        g=c.metric,
        ginv=c.ginv,
        sqrt_det=c.sqrt_det,
        christoffel=c.christoffel,
        riemann=c.riemann,
        ricci=c.ricci,
        scalar=c.scalar,
        dphi=dphi,
        hess_phi=hess,
        lap_phi=lap,
        grad_phi_sq=grad_sq,
        ric_phi=ric_phi,
        ric_tilde=ric_phi - lam * c.metric,
    )


def min_bakry_emery_gap(md: MetricDensity, tau: float | None = None) -> float:
    """Smallest eigenvalue of ``g^-1 (Ric + Hess phi - g / (2 tau))`` over
    active nodes."""
    tau = md.tau if tau is None else tau
    if tau is None or not tau > 0:
        raise ValueError("tau must be positive")
    pack = curvature_pack(md, lam=1.0 / (2.0 * tau))
    L = np.linalg.cholesky(pack.g)
    Linv = np.linalg.inv(L)
    S = Linv @ pack.ric_tilde @ np.swapaxes(Linv, -1, -2)
    eig = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))[..., 0]
    return float(eig[md.chart.active].min())


# --------------------------------------------------------------------------
# backends
# --------------------------------------------------------------------------


def flat_torus(grid: GridSpec, phi=0.0, *, tau: float | None = None, lam: float = 0.0) -> MetricDensity:
    return MetricDensity(torus_chart(grid), phi, tau=tau, lam=lam, kind="flat-torus")


def grid_chart(grid: GridSpec, metric: np.ndarray, phi=0.0, *, tau: float | None = None, lam: float = 0.0) -> MetricDensity:
    return MetricDensity(torus_chart(grid, metric), phi, tau=tau, lam=lam, kind="grid-chart")


def conformal_torus(grid: GridSpec, u: np.ndarray, phi=0.0, *, tau=None, lam: float = 0.0) -> MetricDensity:
    """Torus with metric ``exp(2u) delta``."""
    n = grid.dim
    g = np.exp(2.0 * np.asarray(u))[..., None, None] * np.eye(n)
    md = grid_chart(grid, g, phi, tau=tau, lam=lam)
    return replace(md, kind="perturbed-torus")


def sphere_soliton_tau(n: int, radius: float = 1.0) -> float:
    return radius**2 / (2.0 * (n - 1))


def sphere_volume(n: int, radius: float = 1.0) -> float:
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2) * radius**n


def round_sphere(
    n: int = 2,
    *,
    radius: float = 1.0,
    tau: float | str | None = "soliton",
    phi: float | np.ndarray | None = None,
    polar: int = 16,
    azimuth: int = 32,
) -> MetricDensity:
    """Round sphere; with ``tau="soliton"`` the shrinking soliton
    normalised into C1 (constant potential)."""
    chart = sphere_chart(n, radius, polar, azimuth)
    if tau == "soliton":
        tau = sphere_soliton_tau(n, radius)
    if phi is None:
        if tau is None:
            phi = 0.0
        else:
            phi = math.log(sphere_volume(n, radius) * (4 * math.pi * tau) ** (-n / 2))
    return MetricDensity(chart, phi, tau=tau, kind="sphere")


def gaussian_soliton(n: int, tau: float = 1.0, order: int = 12, phi=None) -> MetricDensity:
    """Shrinking Gaussian ``phi = |x|^2 / (4 tau)`` (already in C1)."""
    if tau is None or not tau > 0:
        raise ValueError("the Gaussian soliton needs tau > 0")
    chart = euclidean_chart(n, tau, order)
    if phi is None:
        phi = np.sum(chart.coords["x"] ** 2, axis=-1) / (4.0 * tau)
    return MetricDensity(chart, phi, tau=tau, kind="gaussian")


def product(*mds: MetricDensity, tau: float | None = None) -> MetricDensity:
    """Product manifold with density; potentials add."""
    chart = product_chart(*(m.chart for m in mds))
    phi = sum(broadcast_factor(chart, k, m.phi) for k, m in enumerate(mds))
    if tau is None:
        taus = {m.tau for m in mds}
        if len(taus) != 1:
            raise ValueError("factors disagree on tau; pass tau explicitly")
        tau = taus.pop()
    return MetricDensity(chart, phi, tau=tau, kind="product")


def trig_field(grid: GridSpec, *, modes: int = 2, amplitude: float = 0.1, rng=None) -> np.ndarray:
    """Random real trigonometric polynomial with wavenumbers ``|k_a| <= modes``,
    scaled so its sup-norm equals ``amplitude``."""
    rng = np.random.default_rng(rng)
    x = grid.coordinates()
    out = np.zeros(grid.shape)
    ks = np.stack(np.meshgrid(*([np.arange(-modes, modes + 1)] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
    for k in ks:
        if not np.any(k):
            continue
        arg = sum(2 * np.pi * k[a] * x[a] / grid.lengths[a] for a in range(grid.dim))
        a, b = rng.normal(size=2) / (1.0 + np.sum(k**2))
        out += a * np.cos(arg) + b * np.sin(arg)
    return amplitude * out / np.abs(out).max()


def build_backend(spec: dict) -> MetricDensity:
    """Construct a backend from a scenario description.

    Recognised keys: ``scenario`` (gaussian, sphere, flat-torus,
    perturbed-torus, product), ``n``, ``tau`` (number or ``"soliton"``),
    ``lam``, ``grid`` (per-axis sizes), ``length``, ``order``,
    ``perturbation`` (``modes``, ``amplitude``, ``metric_amplitude``,
    ``seed``), ``normalize``.
    """
    scen = spec.get("scenario")
    n = int(spec.get("n", 2))
    if n < 1:
        raise ValueError("n must be >= 1")
    tau = spec.get("tau", None)
    order = int(spec.get("order", 12))
    pert = dict(spec.get("perturbation") or {})

    if scen == "gaussian":
        if tau in (None, "soliton"):
            tau = 1.0
        md = gaussian_soliton(n, float(tau), order)
    elif scen == "sphere":
        if n < 2:
            raise ValueError("sphere scenario needs n >= 2")
        md = round_sphere(n, radius=float(spec.get("radius", 1.0)), tau=tau if tau is not None else "soliton",
                          polar=int(spec.get("polar", 16)), azimuth=int(spec.get("azimuth", 32)))
    elif scen in ("flat-torus", "perturbed-torus"):
        if tau == "soliton":
            raise ValueError("a torus carries no shrinking soliton")
        default = 32 if n <= 2 else 24
        sizes = spec.get("grid") or [default] * n
        if isinstance(sizes, int):
            sizes = [sizes] * n
        length = float(spec.get("length", 2 * np.pi))
        grid = GridSpec(tuple(sizes), (length,) * n)
        rng = np.random.default_rng(pert.get("seed"))
        amp = float(pert.get("amplitude", 0.0 if scen == "flat-torus" and "seed" not in pert else 0.3))
        modes = int(pert.get("modes", 2))
        phi = trig_field(grid, modes=modes, amplitude=amp, rng=rng) if amp else 0.0
        kw = {"tau": float(tau)} if tau is not None else {"lam": float(spec.get("lam", 0.0))}
        if scen == "flat-torus":
            md = flat_torus(grid, phi, **kw)
        else:
            eps = float(pert.get("metric_amplitude", 0.05))
            u = trig_field(grid, modes=modes, amplitude=eps, rng=rng)
            md = conformal_torus(grid, u, phi, **kw)
    elif scen == "product":
        k = int(spec.get("gaussian_dim", 1))
        m = n - k
        if m < 2 or k < 1:
            raise ValueError("product scenario is S^m x R^k with m >= 2, k >= 1")
        sph = round_sphere(m, tau="soliton", polar=int(spec.get("polar", 16)), azimuth=int(spec.get("azimuth", 32)))
        gau = gaussian_soliton(k, sph.tau, order)
        md = product(sph, gau)
    else:
        raise ValueError(f"unknown scenario {scen!r}")

    if spec.get("normalize") and md.tau is not None:
        from .functionals import normalize_to_C1

        md = normalize_to_C1(md)
    return md

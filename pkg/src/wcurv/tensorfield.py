"""Dense tensor fields on structured node sets.

Fields are plain numpy arrays laid out node-major: the leading axes index
nodes, the trailing ``valence`` axes index covariant slots (each of length
``n``).  Differentiation is spectral on periodic axes and polynomial
collocation on Gauss-Hermite axes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

MAGIC = b"WCURVTF1"
HERMITE_ORDER_CAP = 64


# --------------------------------------------------------------------------
# axes
# --------------------------------------------------------------------------


class FourierAxis:
    """Periodic axis with ``size`` equispaced nodes on ``[0, length)``.

    ``offset`` shifts every node by that fraction of the spacing; a half
    offset keeps nodes off the poles of doubled polar angles.
    """

    kind = "fourier"

    def __init__(self, size: int, length: float, offset: float = 0.0):
        if size < 8 or size % 2:
            raise ValueError(f"periodic axis needs an even node count >= 8, got {size}")
        if not length > 0:
            raise ValueError(f"period must be positive, got {length}")
        self.size = int(size)
        self.length = float(length)
        self.offset = float(offset)

    @property
    def spacing(self) -> float:
        return self.length / self.size

    @cached_property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.size) + self.offset) * self.spacing

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.spacing)

    @cached_property
    def _wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.size, d=self.spacing)

    def deriv(self, arr: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        first = np.take(arr, [0], axis=axis)
        if np.all(arr == first):
            return np.zeros_like(arr)
        coef = np.fft.rfft(arr, axis=axis)
        mult = (1j * self._wavenumbers) ** order
        if order % 2:
            # Nyquist mode has no odd derivative on an even grid
            mult[-1] = 0.0
        shape = [1] * arr.ndim
        shape[axis] = mult.size
        out = np.fft.irfft(coef * mult.reshape(shape), n=self.size, axis=axis)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite spectral derivative (field under-resolved)")
        return out

    def __repr__(self) -> str:
        return f"FourierAxis(size={self.size}, length={self.length:g}, offset={self.offset:g})"


class HermiteAxis:
    """Gauss-Hermite axis for the weight ``exp(-x**2 / (4 tau))``.

    Nodes are ``x = 2 sqrt(tau) y`` for the physicists' Hermite nodes ``y``;
    weights are normalised to sum to one.  Derivatives come from the
    barycentric collocation matrix, exact for polynomials of degree
    below ``order``.
    """

    kind = "hermite"

    def __init__(self, order: int, tau: float):
        if order < 2:
            raise ValueError("Hermite order must be >= 2")
        if order > HERMITE_ORDER_CAP:
            raise ValueError(f"Hermite order {order} exceeds stability cap {HERMITE_ORDER_CAP}")
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.size = int(order)
        self.tau = float(tau)
        y, w = np.polynomial.hermite.hermgauss(self.size)
        self.nodes = 2.0 * np.sqrt(self.tau) * y
        self.weights = w / np.sqrt(np.pi)

    @cached_property
    def diff_matrix(self) -> np.ndarray:
        x = self.nodes
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        # log-scaled barycentric weights avoid overflow for large orders
        logc = -np.sum(np.log(np.abs(diff)), axis=1)
        sign = np.prod(np.sign(diff), axis=1)
        ratio = sign[None, :] * sign[:, None] * np.exp(logc[None, :] - logc[:, None])
        D = ratio / diff
        np.fill_diagonal(D, 0.0)
        np.fill_diagonal(D, -D.sum(axis=1))
        return D

    def deriv(self, arr: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        out = arr
        for _ in range(order):
            out = np.moveaxis(np.tensordot(self.diff_matrix, out, axes=(1, axis)), 0, axis)
        return out

    def __repr__(self) -> str:
        return f"HermiteAxis(order={self.size}, tau={self.tau:g})"


# --------------------------------------------------------------------------
# grids, fields, quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Periodic box grid."""

    sizes: tuple[int, ...]
    lengths: tuple[float, ...]
    offsets: tuple[float, ...] | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        lengths = tuple(float(L) for L in self.lengths)
        if not 1 <= len(sizes) <= 4:
            raise ValueError("grid dimension must be 1..4")
        if len(lengths) != len(sizes):
            raise ValueError("sizes and lengths differ in length")
        offsets = self.offsets if self.offsets is not None else (0.0,) * len(sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "offsets", tuple(float(o) for o in offsets))
        # validates counts and periods
        self.axes

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / s for L, s in zip(self.lengths, self.sizes))

    @cached_property
    def axes(self) -> tuple[FourierAxis, ...]:
        return tuple(FourierAxis(s, L, o) for s, L, o in zip(self.sizes, self.lengths, self.offsets))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(ax.nodes for ax in self.axes), indexing="ij"))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))


@dataclass(frozen=True, eq=False)
class TensorField:
    """Covariant tensor field sampled at nodes.

    ``data`` has shape ``node_shape + (n,) * valence``.  A declared
    symmetric or antisymmetric slot pair is imposed on construction.
    """

    data: np.ndarray
    valence: int = 0
    symmetric: tuple[int, int] | None = None
    antisymmetric: tuple[int, int] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        r = int(self.valence)
        if r < 0 or data.ndim < r:
            raise ValueError("valence exceeds array rank")
        if r and len(set(data.shape[data.ndim - r:])) != 1:
            raise ValueError("component slots must all have the same length")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor field has non-finite entries")
        base = data.ndim - r
        if self.symmetric is not None:
            a, b = self.symmetric
            data = 0.5 * (data + np.swapaxes(data, base + a, base + b))
        if self.antisymmetric is not None:
            a, b = self.antisymmetric
            data = 0.5 * (data - np.swapaxes(data, base + a, base + b))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "valence", r)

    @property
    def node_shape(self) -> tuple[int, ...]:
        return self.data.shape[: self.data.ndim - self.valence]

    @property
    def n(self) -> int | None:
        return self.data.shape[-1] if self.valence else None


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray  # (N, dim)
    weights: np.ndarray  # (N,)
    shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if np.any(w < 0):
            raise ValueError("quadrature weights must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float).reshape(w.size, -1))
        if not self.shape:
            object.__setattr__(self, "shape", (w.size,))


def periodic_rule(grid: GridSpec) -> QuadratureRule:
    coords = np.stack([c.reshape(-1) for c in grid.coordinates()], axis=-1)
    w = np.full(coords.shape[0], float(np.prod(grid.spacing)))
    return QuadratureRule(coords, w, grid.shape)


def hermite_rule(order: int, tau: float, dim: int) -> QuadratureRule:
    """Tensor Gauss-Hermite rule for the normalised measure
    ``(4 pi tau)^(-dim/2) exp(-|x|^2 / (4 tau)) dx``."""
    ax = HermiteAxis(order, tau)
    grids = np.meshgrid(*([ax.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([ax.weights] * dim), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
    weights = np.prod(np.stack([w.reshape(-1) for w in wgrids]), axis=0)
    return QuadratureRule(nodes, weights, (order,) * dim)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _axes_of(grid) -> tuple:
    return grid.axes if hasattr(grid, "axes") else tuple(grid)


def deriv(f: TensorField, axis: int, grid) -> TensorField:
    """Partial derivative of every component along node axis ``axis``."""
    axes = _axes_of(grid)
    if not 0 <= axis < len(axes):
        raise IndexError(f"axis {axis} out of range for {len(axes)}-d grid")
    return TensorField(axes[axis].deriv(f.data, axis), f.valence)


def _letters(k: int, start: int = 0) -> str:
    return "abcdefghijklmnopqrstuvw"[start:start + k]


def contract(T: TensorField, slot_a: int, slot_b: int, ginv: TensorField) -> TensorField:
    """Trace slots ``slot_a`` and ``slot_b`` of ``T`` through ``ginv``."""
    r = T.valence
    if slot_a == slot_b or not (0 <= slot_a < r and 0 <= slot_b < r):
        raise IndexError(f"bad slot pair ({slot_a}, {slot_b}) for valence {r}")
    idx = list(_letters(r))
    ia, ib = idx[slot_a], idx[slot_b]
    out = "".join(c for i, c in enumerate(idx) if i not in (slot_a, slot_b))
    expr = f"...{''.join(idx)},...{ia}{ib}->...{out}"
    return TensorField(np.einsum(expr, T.data, ginv.data), r - 2)


def raise_all(T: np.ndarray, valence: int, ginv: np.ndarray) -> np.ndarray:
    out = T
    idx = _letters(valence)
    for k in range(valence):
        expr = f"...{idx},...{idx[k]}z->...{idx[:k]}z{idx[k + 1:]}"
        out = np.einsum(expr, out, ginv)
    return out


def inner_g(S: TensorField, T: TensorField, ginv: TensorField) -> TensorField:
    """Full metric contraction of two tensors of equal valence."""
    if S.valence != T.valence:
        raise ValueError(f"valence mismatch: {S.valence} vs {T.valence}")
    r = S.valence
    if r == 0:
        return TensorField(S.data * T.data)
    up = raise_all(T.data, r, ginv.data)
    axes = tuple(range(-r, 0))
    return TensorField(np.sum(S.data * up, axis=axes))


def integrate(f: TensorField | np.ndarray, rule: QuadratureRule) -> float:
    """Quadrature sum; numpy's pairwise reduction keeps the order fixed."""
    data = f.data if isinstance(f, TensorField) else np.asarray(f)
    if data.size != rule.weights.size:
        raise ValueError("field is not sampled on the rule's nodes")
    return float(np.sum(rule.weights * data.reshape(-1)))


# --------------------------------------------------------------------------
# binary format
# --------------------------------------------------------------------------


def save_field(path: str | Path, f: TensorField) -> None:
    """Write ``MAGIC | u64 header length | JSON header | float64 LE data``."""
    header = {
        "shape": list(f.data.shape),
        "valence": f.valence,
        "symmetric": list(f.symmetric) if f.symmetric else None,
        "antisymmetric": list(f.antisymmetric) if f.antisymmetric else None,
        "dtype": "<f8",
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes(order="C"))


def load_field(path: str | Path) -> TensorField:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a tensor field file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("dtype") != "<f8":
            raise ValueError(f"unsupported dtype {header.get('dtype')!r}")
        shape = tuple(header["shape"])
        body = fh.read()
    count = int(np.prod(shape)) if shape else 1
    if len(body) != 8 * count:
        raise ValueError(f"{path}: expected {8 * count} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f8").reshape(shape).astype(float)
    sym = header.get("symmetric")
    anti = header.get("antisymmetric")
    return TensorField(
        data,
        header["valence"],
        symmetric=tuple(sym) if sym else None,
        antisymmetric=tuple(anti) if anti else None,
    )

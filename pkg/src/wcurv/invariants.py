"""Weighted curvature invariants of a manifold with density.

Everything here is a pure function of a :class:`~wcurv.geometry.CurvaturePack`.
Untilded quantities (``sigma_1``, ``Ric_phi``, ``B_phi``) are the
``lam = 0`` instances of the tilded ones.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import CurvaturePack, MetricDensity, curvature_pack


def norm_sq(S: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """``|S|^2`` for a symmetric 2-tensor."""
    return np.einsum("...ij,...kl,...ik,...jl->...", S, S, ginv, ginv)


def inner2(S: np.ndarray, T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...kl,...ik,...jl->...", S, T, ginv, ginv)


def endo(S: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """``S`` as an endomorphism ``S^i_j``."""
    return np.einsum("...ik,...kj->...ij", ginv, S)


def sigma_tilde(pack: CurvaturePack, lam: float | None = None):
    """``(sigma~_1, sigma~_2, sigma~_3)`` at every node."""
    lam = pack.lam if lam is None else lam
    Rt = pack.ric_tilde if lam == pack.lam else pack.ric_phi - lam * pack.g
    s1 = 0.5 * (pack.scalar + 2.0 * pack.lap_phi - pack.grad_phi_sq + 2.0 * lam * (pack.phi - pack.n))
    s2, s3 = sigma23(s1, Rt, pack.ginv)
    return s1, s2, s3


def sigma23(s1: np.ndarray, Rt: np.ndarray, ginv: np.ndarray):
    """``sigma2 = (s1^2 - |Rt|^2)/2`` and
    ``sigma3 = (s1^3 - 3 s1 |Rt|^2 + 2 tr Rt^3)/6`` for a given ``s1``."""
    A = endo(Rt, ginv)
    tr2 = np.einsum("...ij,...ji->...", A, A)
    tr3 = np.einsum("...ij,...jk,...ki->...", A, A, A)
    return 0.5 * (s1**2 - tr2), (s1**3 - 3.0 * s1 * tr2 + 2.0 * tr3) / 6.0


def sigma1(pack: CurvaturePack) -> np.ndarray:
    """Untilded ``sigma_{1,phi}`` (the ``lam = 0`` instance)."""
    return 0.5 * (pack.scalar + 2.0 * pack.lap_phi - pack.grad_phi_sq)


def cotton(pack: CurvaturePack) -> np.ndarray:
    """``(dR~)_{ijk} = nabla_i R~_jk - nabla_j R~_ik``.

    Only ``Ric + Hess phi`` is differentiated: ``nabla g = 0``.
    """
    D = pack.chart.covariant_derivative(pack.ric_phi, 2)
    return D - np.swapaxes(D, -3, -2)


def weighted_divergence(T: np.ndarray, pack: CurvaturePack, valence: int) -> np.ndarray:
    """Weighted divergence on the first slot:
    ``g^{ik} nabla_i T_{k...} - T_{k...} nabla^k phi``."""
    if valence < 1:
        raise ValueError("weighted divergence needs valence >= 1")
    rest = "abcdefgh"[: valence - 1]
    D = pack.chart.covariant_derivative(T, valence)
    div = np.einsum(f"...ik{rest},...ik->...{rest}", D, pack.ginv)
    return div - np.einsum(f"...k,...k{rest}->...{rest}", pack.grad_phi, T)


def bach(pack: CurvaturePack):
    """``(B~_phi, B_phi)``;
    ``B~_ij = nabla^k (dR~)_kij - (dR~)_kij nabla^k phi + R_ikjl R~^kl``."""
    C = cotton(pack)
    div = weighted_divergence(C, pack, 3)
    up = np.einsum("...ka,...lb,...ab->...kl", pack.ginv, pack.ginv, pack.ric_tilde)
    up0 = np.einsum("...ka,...lb,...ab->...kl", pack.ginv, pack.ginv, pack.ric_phi)
    Bt = div + np.einsum("...ikjl,...kl->...ij", pack.riemann, up)
    B = div + np.einsum("...ikjl,...kl->...ij", pack.riemann, up0)
    return Bt, B


@dataclass(frozen=True)
class BachConvention:
    """Slot and sign reading of ``2 dRic(., grad phi, .) + delta dRic``.

    ``grad_slot``: which slot of ``dRic`` receives ``grad phi`` (0, 1, 2);
    the two free slots keep their order unless ``swap``.  ``delta_slot``:
    which of the first two slots of ``nabla dRic`` is traced with the
    derivative slot; ``delta_sign`` multiplies the result.  With
    ``symmetrize`` the gradient term is replaced by its symmetric part.
    """

    grad_sign: float = 1.0
    grad_slot: int = 1
    swap: bool = False
    delta_sign: float = 1.0
    delta_slot: int = 0
    symmetrize: bool = False


# calibrated against the index definition on curved grid backends: only the
# symmetrised gradient term reproduces it (the bare term is not symmetric)
DEFAULT_BACH_CONVENTION = BachConvention(grad_sign=1.0, grad_slot=1, swap=False, delta_sign=1.0, delta_slot=0,
                                         symmetrize=True)


def _dric(pack: CurvaturePack) -> np.ndarray:
    D = pack.chart.covariant_derivative(pack.ricci, 2)
    return D - np.swapaxes(D, -3, -2)


def bach_alt(pack: CurvaturePack, convention: BachConvention = DEFAULT_BACH_CONVENTION, lam: float | None = None):
    """Expansion ``2 dRic(., grad phi, .) + Rm.(Ric + dphi dphi) + delta dRic - lam Ric``."""
    lam = pack.lam if lam is None else lam
    dR = _dric(pack)
    return _bach_alt_terms(pack, dR, pack.chart.covariant_derivative(dR, 3), convention, lam)


def _bach_alt_terms(pack, dR, DdR, cv: BachConvention, lam):
    gp = pack.grad_phi
    free = ["i", "j"]
    # put grad phi into slot grad_slot, free indices fill the rest in order
    slots = []
    it = iter(free if not cv.swap else free[::-1])
    for p in range(3):
        slots.append("k" if p == cv.grad_slot else next(it))
    t1 = 2.0 * cv.grad_sign * np.einsum(f"...{''.join(slots)},...k->...ij", dR, gp)
    if cv.symmetrize:
        t1 = 0.5 * (t1 + np.swapaxes(t1, -1, -2))
    up = np.einsum("...ka,...lb,...ab->...kl", pack.ginv, pack.ginv, pack.ricci)
    dd = np.einsum("...k,...l->...kl", gp, gp)
    t2 = np.einsum("...ikjl,...kl->...ij", pack.riemann, up + dd)
    # DdR[..., m, a, b, c] = nabla_m dRic_abc
    if cv.delta_slot == 0:
        t3 = np.einsum("...mkij,...mk->...ij", DdR, pack.ginv)
    else:
        t3 = np.einsum("...mikj,...mk->...ij", DdR, pack.ginv)
    return t1 + t2 + cv.delta_sign * t3 - lam * pack.ricci


def calibrate_bach_alt(pack: CurvaturePack):
    """Try every slot/sign reading of the expansion against :func:`bach`.

    Returns ``(best_convention, residuals)`` where ``residuals`` maps each
    convention to its sup-norm disagreement.
    """
    Bt, _ = bach(pack)
    dR = _dric(pack)
    DdR = pack.chart.covariant_derivative(dR, 3)
    act = pack.chart.active
    results = {}
    grid = itertools.product((1.0, -1.0), (0, 1, 2), (False, True), (1.0, -1.0), (0, 1), (False, True))
    for gs, slot, swap, ds, dslot, sym in grid:
        cv = BachConvention(gs, slot, swap, ds, dslot, sym)
        alt = _bach_alt_terms(pack, dR, DdR, cv, pack.lam)
        results[cv] = float(np.abs(alt - Bt)[act].max())
    best = min(results, key=results.get)
    return best, results


def newton_tensors(pack: CurvaturePack, sig=None):
    """``(T~1, E~1, T~2, E~2)``."""
    s1, s2, _ = sig if sig is not None else sigma_tilde(pack)
    g = pack.g
    Rt = pack.ric_tilde
    Rt2 = np.einsum("...ik,...kl,...lj->...ij", Rt, pack.ginv, Rt)
    T1 = s1[..., None, None] * g - Rt
    E1 = -Rt
    T2 = s2[..., None, None] * g - s1[..., None, None] * Rt + Rt2
    E2 = T2 - s2[..., None, None] * g
    return T1, E1, T2, E2


def v_coeffs(pack: CurvaturePack, sig=None, bach_tilde: np.ndarray | None = None):
    """``(v~1, v~2, v~3)`` with ``v~3 = sigma~3 + <B~, R~>/3``."""
    s1, s2, s3 = sig if sig is not None else sigma_tilde(pack)
    Bt = bach(pack)[0] if bach_tilde is None else bach_tilde
    return s1, s2, s3 + inner2(Bt, pack.ric_tilde, pack.ginv) / 3.0


@dataclass(frozen=True, eq=False)
class InvariantPack:
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    sigma1_untilded: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    cotton: np.ndarray
    bach_tilde: np.ndarray
    bach: np.ndarray
    T1: np.ndarray
    E1: np.ndarray
    T2: np.ndarray
    E2: np.ndarray


def invariant_pack(pack: CurvaturePack) -> InvariantPack:
    sig = sigma_tilde(pack)
    C = cotton(pack)
    Bt, B = bach(pack)
    v1, v2, v3 = v_coeffs(pack, sig, Bt)
    T1, E1, T2, E2 = newton_tensors(pack, sig)
    return InvariantPack(sig[0], sig[1], sig[2], sigma1(pack), v1, v2, v3, C, Bt, B, T1, E1, T2, E2)


def div_bach_residual(md: MetricDensity, lam: float | None = None) -> dict:
    """Residual of ``delta_phi B~ = -(dR~ . R~)`` in sup and ``L2(dnu)``
    norms (``dnu`` uses ``lam = 1/(2 tau)`` weights when tau is set, else
    ``exp(-phi) dvol``)."""
    pack = curvature_pack(md, lam)
    Bt, _ = bach(pack)
    C = cotton(pack)
    div = weighted_divergence(Bt, pack, 2)
    up = np.einsum("...ia,...kb,...ab->...ik", pack.ginv, pack.ginv, pack.ric_tilde)
    res = div + np.einsum("...ijk,...ik->...j", C, up)
    pointwise = np.sqrt(np.einsum("...i,...ij,...j->...", res, pack.ginv, res))
    act = md.chart.active
    w = np.exp(md.chart.log_vol - md.phi)
    if md.tau is not None:
        w = w * (4 * np.pi * md.tau) ** (-md.n / 2)
    l2 = float(np.sqrt(np.sum(w[act] * pointwise[act] ** 2) / np.sum(w[act])))
    scale = float(np.abs(div)[act].max())
    return {"sup": float(pointwise[act].max()), "l2": l2, "div_scale": scale}

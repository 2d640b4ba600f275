"""Conformal change F -> e^{phi(x)} F and its effect on the connection.

Every prediction here is assembled from base-metric quantities only
(F^2, g, g^{-1}, C, G, N, gamma, Gamma of F, and the derivatives of phi).
The ``*_check`` functions compare a prediction against a direct jet
computation on the scaled structure, so the two sides never share a path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import FinslerJets, cartan_horizontal_coeffs, cartan_tensor, formal_christoffel, spray
from .fields import ScalarField
from .jets import TangentSample
from .metrics import ConformalScale, MetricSpec


@dataclass(frozen=True)
class ConformalChange:
    base: MetricSpec
    phi: ScalarField

    @cached_property
    def scaled(self) -> ConformalScale:
        return ConformalScale(self.base, self.phi)


@dataclass(frozen=True)
class ConformalDeltas:
    """Spray-level correction tensors of a conformal change.

    ``B_ir[i, r] = B^{ir}``; ``B_irj[i, r, j] = B^{ir}_j``; ``L[i, k] = B^{ir}_k phi_r``
    are the components of the vertical fields L_k = L^i_k d/dy^i.
    ``G_bar`` and ``N_bar`` are the predicted spray and nonlinear connection
    of the scaled structure.
    """

    B_ir: np.ndarray
    B_irj: np.ndarray
    L: np.ndarray
    G_bar: np.ndarray
    N_bar: np.ndarray


def _base_parts(m: MetricSpec, z: TangentSample):
    fj = FinslerJets(m, z, 1, 3)
    return fj


def _b_tensors(F2, g, g_inv, C_mixed, y):
    """B^{ir} and B^{ir}_j from base quantities at the sample."""
    n = y.shape[-1]
    eye = np.eye(n)
    B = 0.5 * F2[..., None, None] * g_inv - y[..., None, :] * y[..., :, None]
    y_low = np.einsum("...jk,...k->...j", g, y)
    # C_j^{ir} = g^{is} C^r_{sj}
    C_up = np.einsum("...is,...rsj->...irj", g_inv, C_mixed)
    Bj = (y_low[..., None, None, :] * g_inv[..., :, :, None]
          - F2[..., None, None, None] * C_up
          - np.einsum("rj,...i->...irj", eye, y)
          - np.einsum("ij,...r->...irj", eye, y))
    return B, Bj


def conformal_deltas(ch: ConformalChange, z: TangentSample) -> ConformalDeltas:
    fj = _base_parts(ch.base, z)
    F2, g, g_inv, C_mixed = fj.F2.value, fj.g.value, fj.g_inv.value, fj.C_mixed.value
    y = z.y
    _, dphi, _ = ch.phi.derivatives(np.broadcast_to(z.x, z.batch_shape + (z.dim,)))
    B, Bj = _b_tensors(F2, g, g_inv, C_mixed, y)
    L = np.einsum("...irk,...r->...ik", Bj, dphi)
    G_bar = fj.G.value - np.einsum("...ir,...r->...i", B, dphi)
    N_bar = fj.N.value - L
    return ConformalDeltas(B_ir=B, B_irj=Bj, L=L, G_bar=G_bar, N_bar=N_bar)


def b_contraction_check(ch: ConformalChange, z: TangentSample) -> float:
    """Relative residual of B^{ir} g_is y^s = -1/2 F^2 y^r."""
    fj = FinslerJets(ch.base, z, 0, 2)
    F2, g, g_inv = fj.F2.value, fj.g.value, fj.g_inv.value
    B, _ = _b_tensors(F2, g, g_inv, np.zeros(g.shape + (z.dim,)), z.y)
    lhs = np.einsum("...ir,...is,...s->...r", B, g, z.y)
    rhs = -0.5 * F2[..., None] * z.y
    scale = np.max(np.abs(rhs), axis=-1, keepdims=True)
    return float(np.max(np.abs(lhs - rhs) / scale))


def predicted_christoffel(ch: ConformalChange, z: TangentSample) -> np.ndarray:
    """gamma^i_jk + (delta^i_j delta^h_k + delta^i_k delta^h_j - g^{ih} g_jk) phi_h."""
    fj = FinslerJets(ch.base, z, 1, 2)
    g, g_inv, gamma = fj.g.value, fj.g_inv.value, fj.gamma.value
    _, dphi, _ = ch.phi.derivatives(np.broadcast_to(z.x, z.batch_shape + (z.dim,)))
    n = z.dim
    eye = np.eye(n)
    term = (eye[:, :, None] * dphi[..., None, None, :]
            + eye[:, None, :] * dphi[..., None, :, None]
            - np.einsum("...ih,...h,...jk->...ijk", g_inv, dphi, g))
    return gamma + term


def conformal_christoffel_check(ch: ConformalChange, z: TangentSample) -> float:
    direct = formal_christoffel(ch.scaled, z)
    return float(np.max(np.abs(predicted_christoffel(ch, z) - direct)))


def conformal_spray_check(ch: ConformalChange, z: TangentSample) -> dict[str, float]:
    """Relative residuals of the spray and nonlinear-connection predictions."""
    deltas = conformal_deltas(ch, z)
    G, N = spray(ch.scaled, z)
    scale_g = np.maximum(np.max(np.abs(G), axis=-1), np.sum(z.y ** 2, axis=-1))
    scale_n = np.maximum(np.max(np.abs(N), axis=(-2, -1)), np.linalg.norm(z.y, axis=-1))
    return {
        "spray": float(np.max(np.abs(deltas.G_bar - G) / scale_g[..., None])),
        "nonlinear_connection": float(np.max(np.abs(deltas.N_bar - N) / scale_n[..., None, None])),
    }


def torsion_terms(ch: ConformalChange, z: TangentSample) -> np.ndarray:
    """Index form of the torsion corrections, with the sigma slot left open.

    Returns ``P[..., h, i, j]`` such that the corrections applied to a
    function sigma are ``P[h, i, j] sigma_h``::

        P^h_ij = B_i^{mr} phi_r C^h_mj + B_j^{mr} phi_r C^h_mi
                 - g^{ht} B_t^{mr} phi_r C_mji
    """
    fj = _base_parts(ch.base, z)
    F2, g, g_inv, C, C_mixed = fj.F2.value, fj.g.value, fj.g_inv.value, fj.C.value, fj.C_mixed.value
    _, dphi, _ = ch.phi.derivatives(np.broadcast_to(z.x, z.batch_shape + (z.dim,)))
    _, Bj = _b_tensors(F2, g, g_inv, C_mixed, z.y)
    L = np.einsum("...mri,...r->...mi", Bj, dphi)  # [m, i] = B_i^{mr} phi_r
    first = np.einsum("...mi,...hmj->...hij", L, C_mixed)
    second = np.einsum("...mj,...hmi->...hij", L, C_mixed)
    third = np.einsum("...ht,...mt,...mji->...hij", g_inv, L, C)
    return first + second - third


def cartan_change_terms(ch: ConformalChange, z: TangentSample, sigma: ScalarField,
                        *, traceless: bool = True) -> np.ndarray:
    """Correction tensor A(sigma) linking the Schwarzian tensors of F and e^phi F.

    With ``traceless=False`` this is the raw torsion contraction
    ``P^h_ij sigma_h``. By default its g-trace part is removed: the three
    Schwarzian tensors in the composition law are g-traceless, so only the
    traceless part of the correction can close the identity, and it does so
    exactly.
    """
    P = torsion_terms(ch, z)
    x = np.broadcast_to(z.x, z.batch_shape + (z.dim,))
    _, dsigma, _ = sigma.derivatives(x)
    A = np.einsum("...hij,...h->...ij", P, dsigma)
    if not traceless:
        return A
    g = FinslerJets(ch.base, z, 0, 2).g.value
    g_inv = np.linalg.inv(g)
    tr = np.einsum("...ij,...ij->...", g_inv, A)
    return A - tr[..., None, None] * g / z.dim


def predicted_cartan_horizontal(ch: ConformalChange, z: TangentSample) -> np.ndarray:
    """Horizontal Cartan coefficients of e^phi F predicted from those of F.

    Gamma-bar^l_ij = Gamma^l_ij + delta^l_j phi_i + delta^l_i phi_j
                     - g_ij phi^l + P^l_ij
    """
    fj = _base_parts(ch.base, z)
    g, g_inv, Gamma = fj.g.value, fj.g_inv.value, fj.Gamma.value
    _, dphi, _ = ch.phi.derivatives(np.broadcast_to(z.x, z.batch_shape + (z.dim,)))
    eye = np.eye(z.dim)
    phi_up = np.einsum("...lh,...h->...l", g_inv, dphi)
    riem = (eye[:, None, :] * dphi[..., None, :, None]
            + eye[:, :, None] * dphi[..., None, None, :]
            - phi_up[..., :, None, None] * g[..., None, :, :])
    return Gamma + riem + torsion_terms(ch, z)


def cartan_covariant_change_check(ch: ConformalChange, z: TangentSample) -> dict[str, float]:
    """Residuals of the horizontal prediction and of the vertical invariance C-bar = C."""
    horizontal = np.max(np.abs(predicted_cartan_horizontal(ch, z) - cartan_horizontal_coeffs(ch.scaled, z)))
    _, Cm = cartan_tensor(ch.base, z)
    _, Cm_bar = cartan_tensor(ch.scaled, z)
    return {"horizontal": float(horizontal), "vertical": float(np.max(np.abs(Cm_bar - Cm)))}


def conformal_metric_check(ch: ConformalChange, z: TangentSample) -> dict[str, float]:
    """Relative residuals of g-bar = e^{2phi} g, its inverse, and F-bar = e^phi F."""
    fj = FinslerJets(ch.base, z, 0, 2)
    fb = FinslerJets(ch.scaled, z, 0, 2)
    x = np.broadcast_to(z.x, z.batch_shape + (z.dim,))
    e2 = np.exp(2.0 * ch.phi.at(x))[..., None, None]
    g, gb = fj.g.value, fb.g.value
    gi, gib = fj.g_inv.value, fb.g_inv.value
    F = ch.base.norm(z.x, z.y)
    Fb = ch.scaled.norm(z.x, z.y)
    return {
        "g": float(np.max(np.abs(gb - e2 * g) / np.max(np.abs(gb), axis=(-2, -1), keepdims=True))),
        "g_inv": float(np.max(np.abs(gib - gi / e2) / np.max(np.abs(gib), axis=(-2, -1), keepdims=True))),
        "F": float(np.max(np.abs(Fb - np.exp(ch.phi.at(x)) * F) / Fb)),
    }


def vertical_action_on_x_functions(ch: ConformalChange, z: TangentSample, f: ScalarField) -> float:
    """Largest |L_k f| for a function of x alone (vanishes identically)."""
    from .jets import jet_eval

    deltas = conformal_deltas(ch, z)
    jt = jet_eval(lambda xs, ys: f(xs), z, 0, 1)
    n = z.dim
    dfy = np.stack([jt.partial([0] * n + [int(i == k) for i in range(n)]) for k in range(n)], axis=-1)
    dfy = np.broadcast_to(dfy, z.batch_shape + (n,))
    return float(np.max(np.abs(np.einsum("...ik,...i->...k", deltas.L, dfy))))

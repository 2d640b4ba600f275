"""Hessian, Laplacian and Schwarzian tensor of functions on a Finsler manifold.

The Schwarzian tensor of a conformal factor phi at a tangent sample is

    B_ij = phi_ij - (Gamma^h_ij + C^h_ij) phi_h - phi_i phi_j - Phi g_ij
    Phi  = (Delta phi - |grad phi|^2) / n

with all contractions taken with g(x, y) at the sample and Delta the total
(horizontal plus vertical) Laplacian, which makes B exactly g-traceless.
The classical one-variable Schwarzian derivative lives here as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jets
from .conformal import ConformalChange, cartan_change_terms
from .core import FinslerJets
from .errors import CriticalPoint
from .fields import ScalarField
from .jets import Jet, JetBasis, TangentSample
from .metrics import ConformalScale, MetricSpec

MOBIUS_TOL = 1e-8
CRITICAL_TOL = 1e-12


@dataclass(frozen=True)
class HessianParts:
    H_h: np.ndarray
    H_v: np.ndarray
    H_full: np.ndarray
    lap_h: np.ndarray
    lap_v: np.ndarray
    lap_total: np.ndarray


@dataclass(frozen=True)
class SchwarzianTensor:
    B: np.ndarray
    Phi: np.ndarray


def _x_of(z: TangentSample) -> np.ndarray:
    return np.broadcast_to(z.x, z.batch_shape + (z.dim,))


def hessian(m: MetricSpec, f: ScalarField, z: TangentSample) -> HessianParts:
    """Horizontal and vertical Hessians of a function of x, and their traces."""
    fj = FinslerJets(m, z, 1, 3)
    g_inv, Gamma, Cm = fj.g_inv.value, fj.Gamma.value, fj.C_mixed.value
    _, df, d2f = f.derivatives(_x_of(z))
    H_h = d2f - np.einsum("...kij,...k->...ij", Gamma, df)
    H_v = -np.einsum("...kij,...k->...ij", Cm, df)
    H = H_h + H_v
    tr = lambda h: np.einsum("...ij,...ij->...", g_inv, h)  # noqa: E731
    return HessianParts(H_h=H_h, H_v=H_v, H_full=H, lap_h=tr(H_h), lap_v=tr(H_v), lap_total=tr(H))


def _assemble(H: np.ndarray, g: np.ndarray, g_inv: np.ndarray, dphi: np.ndarray) -> SchwarzianTensor:
    n = g.shape[-1]
    lap = np.einsum("...ij,...ij->...", g_inv, H)
    grad_sq = np.einsum("...ij,...i,...j->...", g_inv, dphi, dphi)
    Phi = (lap - grad_sq) / n
    B = H - dphi[..., :, None] * dphi[..., None, :] - Phi[..., None, None] * g
    B = 0.5 * (B + np.swapaxes(B, -1, -2))  # exact symmetry; the parts are symmetric to rounding
    return SchwarzianTensor(B=B, Phi=Phi)


def schwarzian_tensor(m: MetricSpec, phi: ScalarField, z: TangentSample) -> SchwarzianTensor:
    fj = FinslerJets(m, z, 1, 3)
    g, g_inv = fj.g.value, fj.g_inv.value
    _, dphi, d2phi = phi.derivatives(_x_of(z))
    conn = fj.Gamma.value + fj.C_mixed.value
    H = d2phi - np.einsum("...hij,...h->...ij", conn, dphi)
    return _assemble(H, g, g_inv, dphi)


def riemannian_schwarzian(m: MetricSpec, phi: ScalarField, z: TangentSample) -> SchwarzianTensor:
    """The classical tensor built from Levi-Civita Christoffel symbols only.

    Meaningful for Riemannian structures, where it must agree with
    :func:`schwarzian_tensor`.
    """
    fj = FinslerJets(m, z, 1, 2)
    g, g_inv = fj.g.value, fj.g_inv.value
    _, dphi, d2phi = phi.derivatives(_x_of(z))
    H = d2phi - np.einsum("...hij,...h->...ij", fj.gamma.value, dphi)
    return _assemble(H, g, g_inv, dphi)


@dataclass
class MobiusReport:
    max_residual: float
    Phi: np.ndarray
    tol: float
    per_sample: np.ndarray = field(repr=False)

    @property
    def is_mobius(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def verdict(self) -> str:
        return "mobius" if self.is_mobius else "not-mobius"


def mobius_residual(m: MetricSpec, phi: ScalarField, z: TangentSample, tol: float = MOBIUS_TOL) -> MobiusReport:
    st = schwarzian_tensor(m, phi, z)
    per = np.max(np.abs(st.B), axis=(-2, -1))
    return MobiusReport(max_residual=float(np.max(per)), Phi=st.Phi, tol=tol, per_sample=per)


def cocycle_terms(m: MetricSpec, phi: ScalarField, sigma: ScalarField, z: TangentSample,
                  *, traceless: bool = True) -> dict[str, np.ndarray]:
    """The four tensors of the composition law, each computed independently."""
    ch = ConformalChange(m, phi)
    return {
        "sum": schwarzian_tensor(m, phi + sigma, z).B,
        "phi": schwarzian_tensor(m, phi, z).B,
        "sigma_scaled": schwarzian_tensor(ConformalScale(m, phi), sigma, z).B,
        "A": cartan_change_terms(ch, z, sigma, traceless=traceless),
    }


def cocycle_check(m: MetricSpec, phi: ScalarField, sigma: ScalarField, z: TangentSample,
                  *, traceless: bool = True) -> float:
    """max |B_F(phi+sigma) - B_F(phi) - B_Fbar(sigma) - A(sigma)| over the samples."""
    t = cocycle_terms(m, phi, sigma, z, traceless=traceless)
    return float(np.max(np.abs(t["sum"] - t["phi"] - t["sigma_scaled"] - t["A"])))


# one variable ---------------------------------------------------------------

_BASIS_1D = JetBasis.get(((1, 3),))


def _derivs_1d(f: Callable, x) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    t = jets.as_jet(f(Jet.variable(_BASIS_1D, 0, x)), _BASIS_1D) + np.zeros(x.shape)
    return t.value, t.partial([1]), t.partial([2]), t.partial([3])


def _check_critical(d1: np.ndarray) -> None:
    if np.any(np.abs(d1) < CRITICAL_TOL):
        raise CriticalPoint(f"derivative below {CRITICAL_TOL:g} in magnitude")


def classic_schwarzian(f: Callable, x) -> np.ndarray:
    """f'''/f' - 3/2 (f''/f')^2, derivatives by jet arithmetic.

    ``f`` is any callable built from jet-aware arithmetic
    (``lambda t: (2*t + 1) / (t + 3)``, ``jets.exp``, ...).
    """
    _, d1, d2, d3 = _derivs_1d(f, x)
    _check_critical(d1)
    r = d2 / d1
    return d3 / d1 - 1.5 * r * r


def classic_composition_check(f: Callable, g: Callable, x) -> float:
    """max |S(f o g) - S(g) - S(f)(g) g'^2| over ``x``."""
    x = np.asarray(x, dtype=float)
    gx, g1, _, _ = _derivs_1d(g, x)
    lhs = classic_schwarzian(lambda t: f(g(t)), x)
    rhs = classic_schwarzian(g, x) + classic_schwarzian(f, gx) * g1 * g1
    return float(np.max(np.abs(lhs - rhs)))


def schwarzian_1d(f: Callable, x) -> np.ndarray:
    """Schwarzian tensor of phi = log|f'| on the Euclidean line.

    In one dimension the traceless projection kills everything, so the
    reduction keeps the unprojected combination phi'' - phi'^2 / 2, which
    equals S(f).
    """
    x = np.asarray(x, dtype=float)
    t = jets.as_jet(f(Jet.variable(_BASIS_1D, 0, x)), _BASIS_1D) + np.zeros(x.shape)
    d1 = t.d(0)
    _check_critical(d1.value)
    phi = jets.log(d1 * np.sign(d1.value))
    p1, p2 = phi.partial([1]), phi.partial([2])
    return p2 - 0.5 * p1 * p1

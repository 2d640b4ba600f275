"""Connection and curvature objects of a Finsler structure.

Every quantity is computed by jet arithmetic on F^2: the fundamental tensor
is the halved fibre Hessian, the spray comes from the usual Euler-Lagrange
expression, and everything downstream (nonlinear connection, Christoffel
and Cartan coefficients, Riemann curvature, Ricci tensor) is obtained by
differentiating those jets again. Functions accept a :class:`TangentSample`
whose arrays may carry batch axes; outputs gain the same leading axes.

Index conventions: ``g[..., i, j]``; ``C[..., i, j, k] = C_ijk``;
``Cm[..., i, j, k] = C^i_jk``; ``gamma[..., i, j, k] = gamma^i_jk``;
``R[..., i, k] = R^i_k``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import jets
from .errors import DegenerateFlag, NoConvergence, NotStronglyConvex
from .fields import ScalarField
from .jets import Jet, TangentSample
from .metrics import MetricSpec

PD_TOL = 1e-10


def _dx(t: Jet, n: int) -> Jet:
    return jets.stack([t.d(k) for k in range(n)], axis=-1)


def _dy(t: Jet, n: int) -> Jet:
    return jets.stack([t.d(n + k) for k in range(n)], axis=-1)


def _christoffel_pattern(g_inv: Jet, D: Jet) -> Jet:
    """½ g^{ih}(D_hkj + D_hjk - D_jkh) with D[a, b, c] a derivative of g_ab along c."""
    lowered = D.transpose(0, 2, 1) + D - D.transpose(2, 0, 1)
    return 0.5 * jets.einsum("ih,hjk->ijk", g_inv, lowered)


class FinslerJets:
    """Lazily evaluated geometric jets at a (batched) tangent sample.

    ``x_order``/``y_order`` bound the jet of F^2; each derived object loses
    the orders its formula consumes, so callers pick the smallest orders
    that leave the object they need at order >= 0.
    """

    def __init__(self, m: MetricSpec, z: TangentSample, x_order: int, y_order: int):
        if z.dim != m.dim:
            raise ValueError(f"sample dimension {z.dim} does not match metric dimension {m.dim}")
        self.metric = m
        self.z = z
        self.n = m.dim
        xs, ys = jets.tangent_variables(z, x_order, y_order)
        self.F2 = jets.as_jet(m.F2(xs, ys), xs[0].basis)
        self.y = jets.stack(ys, axis=-1)

    @cached_property
    def dF2_y(self) -> Jet:
        return _dy(self.F2, self.n)

    @cached_property
    def g(self) -> Jet:
        return 0.5 * _dy(self.dF2_y, self.n)

    @cached_property
    def g_inv(self) -> Jet:
        _check_positive(self.g.value)
        return jets.inv(self.g)

    @cached_property
    def C(self) -> Jet:
        return 0.5 * _dy(self.g, self.n)

    @cached_property
    def C_mixed(self) -> Jet:
        return jets.einsum("il,ljk->ijk", self.g_inv, self.C)

    @cached_property
    def G(self) -> Jet:
        mixed = _dx(self.dF2_y, self.n)  # [l, k] = d_x^k d_y^l F^2
        rhs = jets.einsum("lk,k->l", mixed, self.y) - _dx(self.F2, self.n)
        return 0.25 * jets.einsum("il,l->i", self.g_inv, rhs)

    @cached_property
    def N(self) -> Jet:
        return _dy(self.G, self.n)

    @cached_property
    def gamma(self) -> Jet:
        return _christoffel_pattern(self.g_inv, _dx(self.g, self.n))

    @cached_property
    def delta_g(self) -> Jet:
        """[l, k, j] = delta_j g_lk = d_x^j g_lk - N^m_j d_y^m g_lk."""
        return _dx(self.g, self.n) - 2.0 * jets.einsum("mj,lkm->lkj", self.N, self.C)

    @cached_property
    def Gamma(self) -> Jet:
        return _christoffel_pattern(self.g_inv, self.delta_g)

    @cached_property
    def R(self) -> Jet:
        n = self.n
        dxG = _dx(self.G, n)
        dxN = _dx(self.N, n)  # [i, k, j] = d_x^j d_y^k G^i
        dyN = _dy(self.N, n)  # [i, k, j] = d_y^j d_y^k G^i
        return (2.0 * dxG
                - jets.einsum("ikj,j->ik", dxN, self.y)
                + 2.0 * jets.einsum("ikj,j->ik", dyN, self.G)
                - jets.einsum("ij,jk->ik", self.N, self.N))

    @cached_property
    def ricci_trace(self) -> Jet:
        return _trace(self.R)

    @cached_property
    def ricci_tensor(self) -> Jet:
        return 0.5 * _dy(_dy(self.ricci_trace, self.n), self.n)


def _trace(t: Jet) -> Jet:
    n = t.shape[-1]
    out = t[..., 0, 0]
    for i in range(1, n):
        out = out + t[..., i, i]
    return out


def _check_positive(g: np.ndarray) -> None:
    lam = np.linalg.eigvalsh(g)[..., 0]
    if np.any(~np.isfinite(lam)) or np.any(lam < PD_TOL):
        raise NotStronglyConvex(f"fundamental tensor not positive definite (min eigenvalue {float(np.min(lam)):.3g})")


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionBundle:
    """First-order objects at a sample."""

    g: np.ndarray
    g_inv: np.ndarray
    C: np.ndarray
    C_mixed: np.ndarray
    G: np.ndarray
    N: np.ndarray
    gamma: np.ndarray
    Gamma: np.ndarray


def connection_bundle(m: MetricSpec, z: TangentSample) -> ConnectionBundle:
    fj = FinslerJets(m, z, 1, 3)
    return ConnectionBundle(
        g=fj.g.value, g_inv=fj.g_inv.value, C=fj.C.value, C_mixed=fj.C_mixed.value,
        G=fj.G.value, N=fj.N.value, gamma=fj.gamma.value, Gamma=fj.Gamma.value)


# value-level path ------------------------------------------------------------
#
# ODE right-hand sides need only point values of G, Gamma and C. Those are
# read off the partials of a single F^2 jet and combined with plain linear
# algebra, which is several times cheaper than the full jet pipeline above.

@functools.lru_cache(maxsize=None)
def _partial_table(basis: jets.JetBasis, n: int, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    shape = (n,) * (nx + ny)
    idx = np.empty(shape, dtype=np.int64)
    for slots in itertools.product(range(n), repeat=nx + ny):
        e = np.zeros((1, 2 * n), dtype=np.int64)
        for a in slots[:nx]:
            e[0, a] += 1
        for b in slots[nx:]:
            e[0, n + b] += 1
        idx[slots] = basis.lookup(e)[0]
    return idx, basis.factorial[idx]


def _partials(F2: Jet, n: int, nx: int, ny: int) -> np.ndarray:
    """Tensor of partials d_x^{a..} d_y^{b..} F^2, x-slots first."""
    idx, fact = _partial_table(F2.basis, n, nx, ny)
    return F2.coef[..., idx] * fact


@dataclass(frozen=True)
class PointConnection:
    g: np.ndarray
    G: np.ndarray
    C_mixed: np.ndarray | None = None
    Gamma: np.ndarray | None = None


def point_connection(m: MetricSpec, z: TangentSample, *, full: bool = True) -> PointConnection:
    """g and G (and, with ``full``, C^i_jk and Gamma^i_jk) as plain values.

    Uses 4 g G = d_x d_y F^2 . y - d_x F^2 and its y-derivative
    4 (2 C_lij G^i + g_li N^i_j) = d_y^j (d_x d_y F^2 . y - d_x F^2).
    """
    n = m.dim
    xs, ys = jets.tangent_variables(z, 1, 3 if full else 2)
    F2 = jets.as_jet(m.F2(xs, ys), xs[0].basis)
    y = np.broadcast_to(z.y, z.batch_shape + (n,))
    g = 0.5 * _partials(F2, n, 0, 2)
    P11 = _partials(F2, n, 1, 1)  # [k, l] = d_x^k d_y^l
    r = np.einsum("...kl,...k->...l", P11, y) - _partials(F2, n, 1, 0)
    g_inv = np.linalg.inv(g)
    G = 0.25 * np.einsum("...il,...l->...i", g_inv, r)
    if not full:
        return PointConnection(g=g, G=G)
    C = 0.25 * _partials(F2, n, 0, 3)
    P12 = _partials(F2, n, 1, 2)  # [k, l, j] = d_x^k d_y^l d_y^j
    dr = np.einsum("...klj,...k->...lj", P12, y) + np.swapaxes(P11, -1, -2) - P11
    N = np.einsum("...il,...lj->...ij", g_inv, 0.25 * dr - 2.0 * np.einsum("...lmj,...m->...lj", C, G))
    D = 0.5 * P12.transpose(*range(P12.ndim - 3), -2, -1, -3) - 2.0 * np.einsum("...mj,...lkm->...lkj", N, C)
    lowered = np.swapaxes(D, -1, -2) + D - np.moveaxis(D, -1, -3)
    Gamma = 0.5 * np.einsum("...ih,...hjk->...ijk", g_inv, lowered)
    C_mixed = np.einsum("...il,...ljk->...ijk", g_inv, C)
    return PointConnection(g=g, G=G, C_mixed=C_mixed, Gamma=Gamma)


def fundamental_tensor(m: MetricSpec, z: TangentSample) -> tuple[np.ndarray, np.ndarray]:
    fj = FinslerJets(m, z, 0, 2)
    return fj.g.value, fj.g_inv.value


def cartan_tensor(m: MetricSpec, z: TangentSample) -> tuple[np.ndarray, np.ndarray]:
    fj = FinslerJets(m, z, 0, 3)
    return fj.C.value, fj.C_mixed.value


def spray(m: MetricSpec, z: TangentSample) -> tuple[np.ndarray, np.ndarray]:
    """Spray coefficients G^i and nonlinear connection N^i_j = dG^i/dy^j."""
    fj = FinslerJets(m, z, 1, 3)
    return fj.G.value, fj.N.value


def formal_christoffel(m: MetricSpec, z: TangentSample) -> np.ndarray:
    return FinslerJets(m, z, 1, 2).gamma.value


def cartan_horizontal_coeffs(m: MetricSpec, z: TangentSample) -> np.ndarray:
    return FinslerJets(m, z, 1, 3).Gamma.value


def riemann_curvature(m: MetricSpec, z: TangentSample) -> np.ndarray:
    """R^i_k of the Riemann curvature R_y, normalised so that R_y(u) = R(u, y)y."""
    return FinslerJets(m, z, 2, 4).R.value


def ricci(m: MetricSpec, z: TangentSample) -> tuple[np.ndarray, np.ndarray]:
    """Degree-0 Ricci scalar T/F^2 and the tensor ½ d^2 T / dy dy, T = R^i_i."""
    fj = FinslerJets(m, z, 2, 6)
    T = fj.ricci_trace
    return T.value / fj.F2.value, fj.ricci_tensor.value


def flag_curvature(m: MetricSpec, z: TangentSample, u) -> np.ndarray:
    fj = FinslerJets(m, z, 2, 4)
    g = fj.g.value
    R = fj.R.value
    y = z.y
    u = np.asarray(u, dtype=float)
    gyy = np.einsum("...i,...ij,...j->...", y, g, y)
    guu = np.einsum("...i,...ij,...j->...", u, g, u)
    gyu = np.einsum("...i,...ij,...j->...", y, g, u)
    denom = gyy * guu - gyu ** 2
    if np.any(denom <= 1e-12):
        raise DegenerateFlag("flag pole and transverse vector are (nearly) parallel")
    num = np.einsum("...i,...ij,...jk,...k->...", u, g, R, u)
    return num / denom


def scalar_curvature_residual(m: MetricSpec, z: TangentSample, K) -> np.ndarray:
    """max |R^i_k - K F^2 (delta^i_k - F^{-1} F_{y^k} y^i)| per sample."""
    fj = FinslerJets(m, z, 2, 4)
    F2 = fj.F2.value
    F = np.sqrt(F2)
    Fy = fj.dF2_y.value / (2.0 * F[..., None])
    n = m.dim
    model = np.asarray(K)[..., None, None] * F2[..., None, None] * (
        np.eye(n) - z.y[..., :, None] * Fy[..., None, :] / F[..., None, None])
    return np.max(np.abs(fj.R.value - model), axis=(-2, -1))


def spray_y_derivatives(m: MetricSpec, z: TangentSample) -> np.ndarray:
    """d^3 G^i / dy^j dy^k dy^l, indexed [i, j, k, l]."""
    fj = FinslerJets(m, z, 1, 5)
    return _dy(_dy(fj.N, m.dim), m.dim).value


def berwald_residual(m: MetricSpec, samples: TangentSample) -> float:
    """Largest third fibre derivative of the spray over the samples."""
    return float(np.max(np.abs(spray_y_derivatives(m, samples))))


def einstein_residual(m: MetricSpec, x, directions) -> tuple[float, float]:
    """Fit K(x) from Ric over directions and report the Einstein defect.

    Returns ``(K_hat, residual)`` with residual the largest entry of
    ``Ric_ij - (n-1) K_hat g_ij`` over all directions.
    """
    directions = np.asarray(directions, dtype=float)
    n = m.dim
    if len(directions) < n * (n + 1) // 2:
        raise ValueError(f"need at least {n * (n + 1) // 2} directions")
    x = np.broadcast_to(np.asarray(x, dtype=float), directions.shape)
    z = TangentSample(x, directions)
    fj = FinslerJets(m, z, 2, 6)
    ric = fj.ricci_trace.value / fj.F2.value
    K_hat = float(np.mean(ric) / (n - 1))
    resid = fj.ricci_tensor.value - (n - 1) * K_hat * fj.g.value
    return K_hat, float(np.max(np.abs(resid)))


def finsler_gradient(m: MetricSpec, f: ScalarField, x, *, tol: float = 1e-10,
                     max_iter: int = 100) -> np.ndarray:
    """Gradient vector v^i = g^{ij}(x, v) df_j, solved by damped Newton.

    The Newton matrix is I + 2 C^i_jk(x, v) w^j with w = g^{-1}(x, v) df;
    a step is halved until the residual decreases.
    """
    x = np.asarray(x, dtype=float)
    _, df, _ = f.derivatives(x)
    if np.linalg.norm(df) < 1e-14:
        return np.zeros_like(x)

    def parts(v):
        fj = FinslerJets(m, TangentSample(x, v), 0, 3)
        w = fj.g_inv.value @ df
        return v - w, w, fj.C_mixed.value

    _, g_inv = fundamental_tensor(m, TangentSample(x, df))
    v = g_inv @ df
    r, w, Cm = parts(v)
    res = np.linalg.norm(r)
    for _ in range(max_iter):
        if res <= tol:
            return v
        jac = np.eye(m.dim) + 2.0 * np.einsum("ijk,j->ik", Cm, w)
        step = np.linalg.solve(jac, -r)
        lam = 1.0
        while True:
            cand = v + lam * step
            if np.linalg.norm(cand) >= jets.Y_MIN_TOL:
                rc, wc, Cc = parts(cand)
                rn = np.linalg.norm(rc)
                if rn < res or lam < 1e-8:
                    break
            lam *= 0.5
        v, r, w, Cm, res = cand, rc, wc, Cc, rn
    if res <= tol:
        return v
    raise NoConvergence(f"gradient iteration stalled at residual {res:.3g}")


def connection_invariants(m: MetricSpec, z: TangentSample) -> dict[str, float]:
    """Worst-case residuals of the ConnectionBundle identities over the samples."""
    fj = FinslerJets(m, z, 1, 3)
    n = m.dim
    y = z.y
    g, g_inv, C, G, Gamma = fj.g.value, fj.g_inv.value, fj.C.value, fj.G.value, fj.Gamma.value
    F2 = fj.F2.value
    gscale = np.max(np.abs(g), axis=(-2, -1))
    out = {}
    out["g_symmetry"] = float(np.max(np.abs(g - np.swapaxes(g, -1, -2))))
    out["g_inverse"] = float(np.max(np.abs(g @ g_inv - np.eye(n))))
    out["euler_F2"] = float(np.max(np.abs(np.einsum("...i,...ij,...j->...", y, g, y) - F2) / F2))
    out["cartan_annihilates_y"] = float(np.max(np.abs(np.einsum("...ijk,...k->...ij", C, y))
                                              / gscale[..., None, None]))
    contr = np.einsum("...ijk,...j,...k->...i", Gamma, y, y)
    scale = np.maximum(np.max(np.abs(2.0 * G), axis=-1), 1.0 * np.sum(y * y, axis=-1))
    out["gamma_contraction"] = float(np.max(np.abs(contr - 2.0 * G) / scale[..., None]))
    dg = fj.delta_g.value  # [l, k, j] = delta_j g_lk
    # delta_k g_ij - Gamma^l_ik g_lj - Gamma^l_jk g_il
    compat = (np.einsum("...ijk->...ijk", dg)
              - np.einsum("...lik,...lj->...ijk", Gamma, g)
              - np.einsum("...ljk,...il->...ijk", Gamma, g))
    out["metric_compatibility"] = float(np.max(np.abs(compat)))
    return out

"""Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` stores the Taylor coefficients of a smooth function around an
expansion point, truncated by a *per-group* degree bound. On the slit tangent
bundle the two groups are the base coordinates ``x`` and the fibre
coordinates ``y``, so a jet of order ``(2, 4)`` keeps every monomial
``dx^a dy^b`` with ``|a| <= 2`` and ``|b| <= 4``. That truncation is an ideal,
so products, quotients and analytic functions of jets are exact up to
rounding: no step size, no truncation error.

Coefficients live on the last axis of a numpy array; every leading axis is
free (tensor indices, batches of samples). Differentiating a jet with
respect to a variable shifts coefficients and lowers the bound of that
variable's group by one, which is how the geometry module chains first and
second derivatives of quantities that are themselves derivatives.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import OrderUnsupported, SingularSample

MAX_X_ORDER = 2
MAX_Y_ORDER = 6
Y_MIN_TOL = 1e-8


def _monomials(groups: tuple[tuple[int, int], ...]) -> np.ndarray:
    per_group = []
    for nvars, deg in groups:
        exps = [e for e in itertools.product(range(deg + 1), repeat=nvars) if sum(e) <= deg]
        per_group.append(exps)
    rows = [sum(combo, ()) for combo in itertools.product(*per_group)]
    rows.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return np.array(rows, dtype=np.int64).reshape(len(rows), -1)


class JetBasis:
    """Monomial basis and multiplication tables for one truncation pattern.

    Instances are cached; always obtain them through :meth:`get`.
    """

    def __init__(self, groups: tuple[tuple[int, int], ...]):
        self.groups = groups
        self.nvars = sum(g[0] for g in groups)
        self.exps = _monomials(groups)
        self.size = len(self.exps)
        self.total_degree = sum(g[1] for g in groups)
        self._radix = np.array([self.total_degree + 1] * self.nvars, dtype=np.int64)
        weights = np.cumprod(np.r_[1, self._radix[:-1]])
        self._weights = weights
        codes = self.exps @ weights
        self._order = np.argsort(codes)
        self._codes = codes[self._order]
        self.factorial = np.array(
            [math.prod(math.factorial(int(v)) for v in e) for e in self.exps], dtype=float
        )
        self._build_product_table()

    @classmethod
    @functools.lru_cache(maxsize=None)
    def get(cls, groups: tuple[tuple[int, int], ...]) -> "JetBasis":
        return cls(tuple((int(a), int(b)) for a, b in groups))

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        """Index of each exponent row, or -1 where the monomial is truncated."""
        exps = np.asarray(exps, dtype=np.int64)
        ok = self.contains(exps)
        codes = np.where(ok, exps @ self._weights, -1)
        pos = np.searchsorted(self._codes, codes)
        pos = np.clip(pos, 0, self.size - 1)
        idx = self._order[pos]
        return np.where(ok & (self._codes[pos] == codes), idx, -1)

    def contains(self, exps: np.ndarray) -> np.ndarray:
        ok = np.all(exps >= 0, axis=-1)
        start = 0
        for nvars, deg in self.groups:
            ok &= exps[..., start:start + nvars].sum(axis=-1) <= deg
            start += nvars
        return ok

    def _build_product_table(self) -> None:
        sums = self.exps[:, None, :] + self.exps[None, :, :]
        idx = self.lookup(sums)
        a, b = np.nonzero(idx >= 0)
        k = idx[a, b]
        order = np.argsort(k, kind="stable")
        self._pa, self._pb, k = a[order], b[order], k[order]
        self._starts = np.searchsorted(k, np.arange(self.size))

    def lowered(self, group: int) -> "JetBasis":
        groups = list(self.groups)
        nvars, deg = groups[group]
        if deg == 0:
            raise OrderUnsupported("cannot differentiate a jet already truncated at order 0")
        groups[group] = (nvars, deg - 1)
        return JetBasis.get(tuple(groups))

    def group_of(self, var: int) -> int:
        start = 0
        for gi, (nvars, _) in enumerate(self.groups):
            if var < start + nvars:
                return gi
            start += nvars
        raise IndexError(var)

    @functools.lru_cache(maxsize=None)
    def derivative_map(self, var: int) -> tuple["JetBasis", np.ndarray, np.ndarray]:
        target = self.lowered(self.group_of(var))
        shifted = target.exps.copy()
        shifted[:, var] += 1
        src = self.lookup(shifted)
        return target, src, (target.exps[:, var] + 1).astype(float)

    @functools.lru_cache(maxsize=None)
    def variable_index(self, var: int) -> int:
        e = np.zeros((1, self.nvars), dtype=np.int64)
        e[0, var] = 1
        return int(self.lookup(e)[0])

    @functools.lru_cache(maxsize=None)
    def projection(self, target: "JetBasis") -> np.ndarray:
        return self.lookup(target.exps)

    def meet(self, other: "JetBasis") -> "JetBasis":
        if other is self:
            return self
        if [g[0] for g in self.groups] != [g[0] for g in other.groups]:
            raise ValueError("jets over different variable sets")
        return JetBasis.get(tuple((a[0], min(a[1], b[1])) for a, b in zip(self.groups, other.groups)))

    def __repr__(self) -> str:
        return f"JetBasis({self.groups})"


class Jet:
    """Truncated Taylor expansion, possibly tensor- or batch-valued.

    ``coef[..., k]`` is the coefficient of monomial ``basis.exps[k]``; index 0
    is always the value.
    """

    __slots__ = ("coef", "basis")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, coef: np.ndarray, basis: JetBasis):
        self.coef = coef
        self.basis = basis

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, basis: JetBasis) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (basis.size,))
        coef[..., 0] = value
        return cls(coef, basis)

    @classmethod
    def variable(cls, basis: JetBasis, var: int, value) -> "Jet":
        jet = cls.constant(value, basis)
        idx = basis.variable_index(var)
        if idx >= 0:
            jet.coef[..., idx] = 1.0
        return jet

    # views ------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coef.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.coef[..., 0]

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.coef[key + (slice(None),)], self.basis)

    def __len__(self) -> int:
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def project(self, basis: JetBasis) -> "Jet":
        if basis is self.basis:
            return self
        idx = self.basis.projection(basis)
        return Jet(np.take(self.coef, idx, axis=-1), basis)

    def partial(self, alpha: Sequence[int]) -> np.ndarray:
        """Partial derivative d^|alpha| / dz^alpha at the expansion point."""
        alpha = np.asarray(alpha, dtype=np.int64)[None, :]
        idx = int(self.basis.lookup(alpha)[0])
        if idx < 0:
            raise OrderUnsupported(f"multi-index {tuple(alpha[0])} exceeds jet order {self.basis.groups}")
        return self.coef[..., idx] * self.basis.factorial[idx]

    def partials(self) -> dict[tuple[int, ...], np.ndarray]:
        return {tuple(int(v) for v in e): self.coef[..., k] * self.basis.factorial[k]
                for k, e in enumerate(self.basis.exps)}

    def d(self, var: int) -> "Jet":
        """Exact partial derivative as a jet one order lower in ``var``'s group."""
        target, src, mult = self.basis.derivative_map(var)
        return Jet(np.take(self.coef, src, axis=-1) * mult, target)

    def sum(self, axis) -> "Jet":
        axis = _normalize_axes(axis, len(self.shape))
        return Jet(self.coef.sum(axis=axis), self.basis)

    def transpose(self, *axes: int) -> "Jet":
        """Permute the trailing ``len(axes)`` tensor axes; leading axes stay."""
        nd = len(self.shape)
        lead = nd - len(axes)
        perm = tuple(range(lead)) + tuple(lead + a for a in axes) + (nd,)
        return Jet(self.coef.transpose(perm), self.basis)

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> tuple["Jet", "Jet"]:
        if isinstance(other, Jet):
            if other.basis is self.basis:
                return self, other
            common = self.basis.meet(other.basis)
            return self.project(common), other.project(common)
        return self, Jet.constant(other, self.basis)

    def __add__(self, other):
        if not isinstance(other, Jet):
            shape = np.shape(other)
            if shape == () or shape == self.shape:
                coef = self.coef.copy()
            else:
                coef = np.broadcast_to(self.coef, np.broadcast_shapes(self.shape, shape) + (self.basis.size,)).copy()
            coef[..., 0] += other
            return Jet(coef, self.basis)
        a, b = self._coerce(other)
        return Jet(a.coef + b.coef, a.basis)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef, self.basis)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            if isinstance(other, (float, int)):
                return Jet(self.coef * other, self.basis)
            return Jet(self.coef * np.asarray(other, dtype=float)[..., None], self.basis)
        a, b = self._coerce(other)
        basis = a.basis
        prod = a.coef.take(basis._pa, axis=-1) * b.coef.take(basis._pb, axis=-1)
        return Jet(np.add.reduceat(prod, basis._starts, axis=-1), basis)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coef / np.asarray(other, dtype=float)[..., None], self.basis)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            return _int_power(self, int(p))
        if isinstance(p, Jet):
            return exp(log(self) * p)
        return _compose(self, _power_coeffs(float(p)))

    def __rpow__(self, base):
        return exp(self * math.log(base))

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, basis={self.basis.groups}, value={self.value!r})"


def _normalize_axes(axis, nd):
    if isinstance(axis, int):
        return axis % nd
    return tuple(a % nd for a in axis)


def _int_power(u: Jet, p: int) -> Jet:
    result = None
    base = u
    while p:
        if p & 1:
            result = base if result is None else result * base
        p >>= 1
        if p:
            base = base * base
    return result if result is not None else Jet.constant(np.ones(u.shape), u.basis)


def _compose(u: Jet, coeff_fn: Callable[[np.ndarray, int], list[np.ndarray]]) -> Jet:
    """Evaluate f(u) from the Taylor coefficients of f at u's value."""
    u0 = u.value
    degree = u.basis.total_degree
    coeffs = coeff_fn(u0, degree)
    h = u - u0
    result = Jet.constant(coeffs[degree], u.basis)
    for k in range(degree - 1, -1, -1):
        result = result * h + coeffs[k]
    return result


def _exp_coeffs(u0, degree):
    e = np.exp(u0)
    return [e / math.factorial(k) for k in range(degree + 1)]


def _log_coeffs(u0, degree):
    out = [np.log(u0)]
    for k in range(1, degree + 1):
        out.append((-1.0) ** (k + 1) / (k * u0 ** k))
    return out


def _power_coeffs(p: float):
    def coeffs(u0, degree):
        out = []
        binom = 1.0
        for k in range(degree + 1):
            out.append(binom * u0 ** (p - k))
            binom *= (p - k) / (k + 1)
        return out
    return coeffs


def _sin_coeffs(u0, degree):
    s, c = np.sin(u0), np.cos(u0)
    cycle = [s, c, -s, -c]
    return [cycle[k % 4] / math.factorial(k) for k in range(degree + 1)]


def _cos_coeffs(u0, degree):
    s, c = np.sin(u0), np.cos(u0)
    cycle = [c, -s, -c, s]
    return [cycle[k % 4] / math.factorial(k) for k in range(degree + 1)]


def _atan_coeffs(u0, degree):
    # d^k/du^k atan(u) from the series of 1/(1+u^2) at u0, built by recursion
    # on the coefficients of r(h) = 1/(1 + (u0+h)^2).
    a0 = 1.0 + u0 * u0
    r = [1.0 / a0]
    for k in range(1, degree):
        prev1 = r[k - 1]
        prev2 = r[k - 2] if k >= 2 else 0.0
        r.append(-(2.0 * u0 * prev1 + prev2) / a0)
    return [np.arctan(u0)] + [r[k - 1] / k for k in range(1, degree + 1)]


def exp(u):
    return _compose(u, _exp_coeffs) if isinstance(u, Jet) else np.exp(u)


def log(u):
    return _compose(u, _log_coeffs) if isinstance(u, Jet) else np.log(u)


def sqrt(u):
    return _compose(u, _power_coeffs(0.5)) if isinstance(u, Jet) else np.sqrt(u)


def sin(u):
    return _compose(u, _sin_coeffs) if isinstance(u, Jet) else np.sin(u)


def cos(u):
    return _compose(u, _cos_coeffs) if isinstance(u, Jet) else np.cos(u)


def tan(u):
    return sin(u) / cos(u) if isinstance(u, Jet) else np.tan(u)


def atan(u):
    return _compose(u, _atan_coeffs) if isinstance(u, Jet) else np.arctan(u)


def reciprocal(u):
    return _compose(u, _power_coeffs(-1.0)) if isinstance(u, Jet) else 1.0 / u


def value(u):
    """Plain value of a jet, or the argument itself."""
    return u.value if isinstance(u, Jet) else u


# tensor helpers ------------------------------------------------------------

def stack(items: Sequence, axis: int = -1) -> Jet:
    """Stack jets (or constants) along a new tensor axis."""
    jets = [it for it in items if isinstance(it, Jet)]
    if len(jets) == len(items) and all(j.basis is jets[0].basis and j.coef.shape == jets[0].coef.shape
                                       for j in jets):
        nd = len(jets[0].shape)
        return Jet(np.stack([j.coef for j in jets], axis=axis % (nd + 1) if axis < 0 else axis), jets[0].basis)
    if not jets:
        raise TypeError("stack needs at least one Jet")
    basis = jets[0].basis
    for j in jets[1:]:
        basis = basis.meet(j.basis)
    coefs = [(it.project(basis) if isinstance(it, Jet) else Jet.constant(it, basis)).coef for it in items]
    shape = np.broadcast_shapes(*(c.shape for c in coefs))
    coefs = [np.broadcast_to(c, shape) for c in coefs]
    nd = len(shape) - 1
    ax = axis % (nd + 1) if axis < 0 else axis
    return Jet(np.stack(coefs, axis=ax), basis)


def as_jet(u, basis: JetBasis) -> Jet:
    return u if isinstance(u, Jet) else Jet.constant(u, basis)


def einsum(subscripts: str, a, b) -> Jet:
    """Tensor contraction over trailing axes; leading axes broadcast.

    ``einsum("ij,jk->ik", a, b)`` contracts the last two axes of ``a`` with
    the last two of ``b``. Either operand may be a plain array.
    """
    lhs, out = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        raise TypeError("einsum needs at least one Jet")
    if not isinstance(a, Jet):
        return Jet(np.einsum(f"...{sa},...{sb}z->...{out}z", np.asarray(a, float), b.coef), b.basis)
    if not isinstance(b, Jet):
        return Jet(np.einsum(f"...{sa}z,...{sb}->...{out}z", a.coef, np.asarray(b, float)), a.basis)
    a, b = a._coerce(b)
    basis = a.basis
    pa = np.take(a.coef, basis._pa, axis=-1)
    pb = np.take(b.coef, basis._pb, axis=-1)
    prod = np.einsum(f"...{sa}z,...{sb}z->...{out}z", pa, pb)
    return Jet(np.add.reduceat(prod, basis._starts, axis=-1), basis)


def inv(g: Jet) -> Jet:
    """Inverse of a matrix-valued jet (last two tensor axes)."""
    n = g.shape[-1]
    if n == 2:
        a, b, c, d = g[..., 0, 0], g[..., 0, 1], g[..., 1, 0], g[..., 1, 1]
        rdet = reciprocal(a * d - b * c)
        adj = Jet(np.stack([np.stack([d.coef, -b.coef], axis=-2),
                            np.stack([-c.coef, a.coef], axis=-2)], axis=-3), g.basis)
        return adj * rdet[..., None, None]
    # Newton-Schulz: the residual I - g Z squares each sweep, so after k
    # sweeps only monomials of degree >= 2**k survive.
    z = Jet.constant(np.linalg.inv(g.value), g.basis)
    eye = np.eye(n)
    sweeps = max(1, math.ceil(math.log2(g.basis.total_degree + 1)))
    for _ in range(sweeps):
        resid = einsum("ij,jk->ik", g, z)
        z = einsum("ij,jk->ik", z, 2.0 * eye - resid)
    return z


# tangent-bundle evaluation -------------------------------------------------

@dataclass(frozen=True)
class TangentSample:
    """A point (x, y) of the slit tangent bundle.

    ``x`` and ``y`` may carry leading batch axes; the last axis is the
    coordinate index.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape[-1:] != y.shape[-1:]:
            raise ValueError("x and y must have the same dimension")
        if x.shape[-1] < 2:
            raise ValueError("dimension must be at least 2")
        if np.any(np.linalg.norm(y, axis=-1) < Y_MIN_TOL):
            raise SingularSample(f"|y| below {Y_MIN_TOL:g}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return np.broadcast_shapes(self.x.shape[:-1], self.y.shape[:-1])

    def __getitem__(self, key) -> "TangentSample":
        bx = np.broadcast_to(self.x, self.batch_shape + (self.dim,))
        by = np.broadcast_to(self.y, self.batch_shape + (self.dim,))
        return TangentSample(bx[key], by[key])

    def scaled(self, lam: float) -> "TangentSample":
        return TangentSample(self.x, lam * self.y)


def tangent_basis(n: int, x_order: int, y_order: int) -> JetBasis:
    return JetBasis.get(((n, x_order), (n, y_order)))


def tangent_variables(z: TangentSample, x_order: int, y_order: int) -> tuple[list[Jet], list[Jet]]:
    """Coordinate jets x^i, y^i expanded at ``z``."""
    n = z.dim
    basis = tangent_basis(n, x_order, y_order)
    shape = z.batch_shape
    xb = np.broadcast_to(z.x, shape + (n,))
    yb = np.broadcast_to(z.y, shape + (n,))
    xs = [Jet.variable(basis, i, xb[..., i]) for i in range(n)]
    ys = [Jet.variable(basis, n + i, yb[..., i]) for i in range(n)]
    return xs, ys


def jet_eval(field: Callable, z: TangentSample, x_order: int, y_order: int) -> Jet:
    """All partials of ``field(x, y)`` at ``z`` up to the requested orders.

    ``field`` receives two lists of coordinate jets and must build its value
    from jet-aware arithmetic (the functions of this module, or operators).
    """
    if not (0 <= x_order <= MAX_X_ORDER and 0 <= y_order <= MAX_Y_ORDER):
        raise OrderUnsupported(
            f"orders (x={x_order}, y={y_order}) outside engine limits "
            f"(x<={MAX_X_ORDER}, y<={MAX_Y_ORDER})")
    xs, ys = tangent_variables(z, x_order, y_order)
    out = field(xs, ys)
    return as_jet(out, xs[0].basis)


_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


def oracle_step(coord: float, order: int = 2) -> float:
    # balance truncation h^2 against rounding eps / h^order (extended precision)
    return 10.0 ** (-19.0 / (order + 2)) * max(1.0, abs(coord))


def fd_oracle(field: Callable, z: TangentSample, multi_index: Sequence[int],
              h: float | Sequence[float] | None = None, *, extended: bool = True) -> float:
    """Central-difference estimate of one partial of ``field`` at ``z``.

    ``multi_index`` lists the derivative order in each of the 2n variables
    (x first, then y). The stencil is a tensor product of second-order
    central differences, so the truncation error is O(h^2). With
    ``extended`` the field is evaluated in ``np.longdouble``, and the default
    step grows with the total order so the rounding term eps/h^k stays small.
    """
    n = z.dim
    alpha = list(multi_index)
    if len(alpha) != 2 * n or any(a < 0 or a > 4 for a in alpha):
        raise OrderUnsupported(f"bad multi-index {multi_index}")
    dtype = np.longdouble if extended else float
    center = np.concatenate([z.x, z.y]).astype(dtype)
    if h is None:
        steps = np.array([oracle_step(float(c), sum(alpha)) for c in center], dtype=dtype)
    else:
        steps = np.broadcast_to(np.asarray(h, dtype=dtype), (2 * n,)).astype(dtype)
    offsets, weights = zip(*(_STENCILS[a] for a in alpha))
    grids = np.array(list(itertools.product(*offsets)), dtype=dtype)
    wts = np.array([math.prod(w) for w in itertools.product(*weights)], dtype=dtype)
    pts = center + grids * steps
    ys = pts[:, n:]
    if np.any(np.sqrt(np.sum(ys.astype(float) ** 2, axis=1)) < Y_MIN_TOL):
        raise SingularSample("oracle stencil touches the zero section")
    xs = [pts[:, i] for i in range(n)]
    yl = [pts[:, n + i] for i in range(n)]
    vals = np.asarray(field(xs, yl), dtype=dtype)
    vals = np.broadcast_to(vals, (len(pts),))
    denom = np.prod(steps ** np.array(alpha, dtype=dtype))
    return float(np.sum(wts * vals) / denom)

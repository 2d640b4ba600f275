"""Closed catalog of Finsler structures.

Every structure evaluates F and F^2 from coordinate lists with generic
arithmetic, so the same code runs on plain arrays and on jets. The catalog
is deliberately small: Euclidean, Riemannian ``sqrt(a_ij(x) y^i y^j)``, the
conformal rescaling ``e^{phi(x)} F`` of any member, and Randers
``alpha + beta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import fields, jets
from .errors import ConfigError, NotStronglyConvex
from .fields import Const, ScalarField

Matrix = tuple[tuple[ScalarField, ...], ...]


def _as_matrix(a, n: int | None = None) -> Matrix:
    rows = tuple(tuple(fields._lift(v) for v in row) for row in a)
    size = len(rows)
    if any(len(r) != size for r in rows):
        raise ConfigError("coefficient matrix must be square")
    if n is not None and size != n:
        raise ConfigError(f"coefficient matrix must be {n}x{n}")
    return rows


def _identity(n: int) -> Matrix:
    return tuple(tuple(Const(1.0 if i == j else 0.0) for j in range(n)) for i in range(n))


def _field_value(f: ScalarField, xs):
    return f.value if isinstance(f, Const) else f(xs)


def _quadratic(a: Matrix, xs, ys):
    n = len(a)
    total = 0.0
    for i in range(n):
        for j in range(i, n):
            coeff = a[i][j]
            if isinstance(coeff, Const) and coeff.value == 0.0:
                continue
            term = ys[i] * ys[j] if i == j else 2.0 * ys[i] * ys[j]
            total = total + _field_value(coeff, xs) * term
    return total


def _matrix_at(a: Matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[:-1] + (len(a), len(a)))
    for i, row in enumerate(a):
        for j, f in enumerate(row):
            out[..., i, j] = f.at(x)
    return out


class MetricSpec:
    """Common interface of the catalog."""

    dim: int

    def F2(self, xs: Sequence[Any], ys: Sequence[Any]):
        raise NotImplementedError

    def F(self, xs: Sequence[Any], ys: Sequence[Any]):
        return jets.sqrt(self.F2(xs, ys))

    def norm(self, x, y) -> np.ndarray:
        """F(x, y) for arrays with the coordinate index last."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        x = np.broadcast_to(x, shape)
        y = np.broadcast_to(y, shape)
        val = self.F([x[..., i] for i in range(self.dim)], [y[..., i] for i in range(self.dim)])
        return np.asarray(val, dtype=float) * np.ones(shape[:-1])

    def validate(self, x) -> None:
        """Check the structure's parameter constraints at points ``x``."""

    def describe(self) -> dict:
        raise NotImplementedError

    @property
    def is_riemannian(self) -> bool:
        return False


@dataclass(frozen=True)
class Euclidean(MetricSpec):
    dim: int

    def F2(self, xs, ys):
        total = ys[0] * ys[0]
        for v in ys[1:]:
            total = total + v * v
        return total

    def describe(self) -> dict:
        return {"kind": "euclidean", "dim": self.dim}

    @property
    def is_riemannian(self) -> bool:
        return True


@dataclass(frozen=True)
class Riemannian(MetricSpec):
    a: Matrix

    def __post_init__(self):
        object.__setattr__(self, "a", _as_matrix(self.a))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.a)

    def F2(self, xs, ys):
        return _quadratic(self.a, xs, ys)

    def validate(self, x) -> None:
        _check_spd(_matrix_at(self.a, x))

    def describe(self) -> dict:
        return {"kind": "riemannian", "a": [[str(f) for f in row] for row in self.a]}

    @property
    def is_riemannian(self) -> bool:
        return True


@dataclass(frozen=True)
class ConformalScale(MetricSpec):
    base: MetricSpec
    phi: ScalarField

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.base.dim

    def F2(self, xs, ys):
        phi = _field_value(self.phi, xs)
        return jets.exp(2.0 * phi) * self.base.F2(xs, ys)

    def F(self, xs, ys):
        return jets.exp(_field_value(self.phi, xs)) * self.base.F(xs, ys)

    def validate(self, x) -> None:
        self.base.validate(x)

    def describe(self) -> dict:
        return {"kind": "conformal", "base": self.base.describe(), "phi": str(self.phi)}

    @property
    def is_riemannian(self) -> bool:
        return self.base.is_riemannian


@dataclass(frozen=True)
class Randers(MetricSpec):
    """F = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i."""

    a: Matrix
    b: tuple[ScalarField, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", _as_matrix(self.a))
        object.__setattr__(self, "b", tuple(fields._lift(v) for v in self.b))
        if len(self.b) != len(self.a):
            raise ConfigError("Randers one-form must match the dimension of a")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.a)

    def alpha(self, xs, ys):
        return jets.sqrt(_quadratic(self.a, xs, ys))

    def beta(self, xs, ys):
        total = 0.0
        for i, bi in enumerate(self.b):
            if isinstance(bi, Const) and bi.value == 0.0:
                continue
            total = total + _field_value(bi, xs) * ys[i]
        return total

    def F(self, xs, ys):
        return self.alpha(xs, ys) + self.beta(xs, ys)

    def F2(self, xs, ys):
        f = self.F(xs, ys)
        return f * f

    def b_norm(self, x) -> np.ndarray:
        """alpha-norm of the one-form b at points ``x``."""
        x = np.asarray(x, dtype=float)
        a = _matrix_at(self.a, x)
        b = np.stack([f.at(x) for f in self.b], axis=-1)
        return np.sqrt(np.einsum("...i,...i->...", b, np.linalg.solve(a, b[..., None])[..., 0]))

    def validate(self, x) -> None:
        _check_spd(_matrix_at(self.a, x))
        bn = self.b_norm(x)
        if np.any(bn >= 1.0):
            raise NotStronglyConvex(f"Randers one-form has alpha-norm {float(np.max(bn)):.6g} >= 1")

    def describe(self) -> dict:
        return {"kind": "randers", "a": [[str(f) for f in row] for row in self.a],
                "b": [str(f) for f in self.b]}


def _check_spd(a: np.ndarray) -> None:
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0, atol=1e-12):
        raise NotStronglyConvex("coefficient matrix is not symmetric")
    if np.any(np.linalg.eigvalsh(a)[..., 0] < 1e-10):
        raise NotStronglyConvex("coefficient matrix is not positive definite")


# constructors ----------------------------------------------------------------

def euclidean(n: int = 2) -> Euclidean:
    return Euclidean(n)


def round_sphere(n: int = 2) -> ConformalScale:
    """Unit sphere in stereographic coordinates: e^{2 log(2/(1+|x|^2))} delta."""
    return ConformalScale(Euclidean(n), fields.sphere_factor(n))


def minkowski_randers(b: Sequence[float]) -> Randers:
    """|y| + b.y with constant b (a locally Minkowskian Randers space)."""
    n = len(b)
    return Randers(_identity(n), tuple(Const(float(v)) for v in b))


def randers(a, b) -> Randers:
    n = len(b)
    mat = _identity(n) if isinstance(a, str) and a == "identity" else a
    return Randers(mat, tuple(b))


def from_config(desc: dict) -> MetricSpec:
    """Build a metric from its tagged description."""
    kind = desc.get("kind")
    if kind == "euclidean":
        return Euclidean(int(desc.get("dim", 2)))
    if kind == "round_sphere":
        return round_sphere(int(desc.get("dim", 2)))
    if kind == "riemannian":
        a = desc["a"]
        n = len(a)
        return Riemannian(tuple(tuple(fields.from_config(v, n) for v in row) for row in a))
    if kind == "conformal":
        base = from_config(desc["base"])
        return ConformalScale(base, fields.from_config(desc["phi"], base.dim))
    if kind == "randers":
        b = desc["b"]
        n = len(b)
        a = desc.get("a", "identity")
        mat = _identity(n) if a == "identity" else tuple(tuple(fields.from_config(v, n) for v in row) for row in a)
        return Randers(mat, tuple(fields.from_config(v, n) for v in b))
    raise ConfigError(f"unknown metric kind {kind!r}")

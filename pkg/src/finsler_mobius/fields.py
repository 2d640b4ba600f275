"""Scalar fields on the base manifold.

A :class:`ScalarField` is an immutable expression tree over the coordinates
``x1 .. xn``. Evaluation is generic: the same tree evaluates on floats,
numpy arrays (double or extended precision) and :class:`~.jets.Jet`
objects, which is what gives every field exact x-derivatives.

Fields compose with ordinary operators::

    x1, x2 = coords(2)
    phi = -log(1 + x1**2 + x2**2)

or can be parsed from text with :func:`parse`, or built from the tagged
JSON descriptions used by experiment configs (:func:`from_config`).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import jets
from .errors import ConfigError

_FUNCS = {
    "exp": jets.exp,
    "log": jets.log,
    "sqrt": jets.sqrt,
    "sin": jets.sin,
    "cos": jets.cos,
    "tan": jets.tan,
    "atan": jets.atan,
}


class ScalarField:
    """Base node. Subclasses implement :meth:`__call__` on a coordinate list."""

    def __call__(self, x: Sequence[Any]):
        raise NotImplementedError

    def at(self, x) -> np.ndarray:
        """Evaluate at points ``x`` with the coordinate index on the last axis."""
        x = np.asarray(x, dtype=float)
        return np.asarray(self([x[..., i] for i in range(x.shape[-1])]), dtype=float) * np.ones(x.shape[:-1])

    def jet(self, x, order: int = 2) -> jets.Jet:
        """Jet of the field in x alone, expanded at points ``x``."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        basis = jets.JetBasis.get(((n, order),))
        xs = [jets.Jet.variable(basis, i, x[..., i]) for i in range(n)]
        return jets.as_jet(self(xs), basis) + np.zeros(x.shape[:-1])

    def derivatives(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, gradient (..., n) and Hessian (..., n, n) at ``x``."""
        jt = self.jet(x, 2)
        n = np.shape(x)[-1]
        eye = np.eye(n, dtype=int)
        grad = np.stack([jt.partial(eye[i]) for i in range(n)], axis=-1)
        hess = np.stack([np.stack([jt.partial(eye[i] + eye[j]) for j in range(n)], axis=-1)
                         for i in range(n)], axis=-2)
        return jt.value, grad, hess

    def is_constant(self) -> bool:
        return False

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return BinOp("+", self, _lift(other))

    def __radd__(self, other):
        return BinOp("+", _lift(other), self)

    def __sub__(self, other):
        return BinOp("-", self, _lift(other))

    def __rsub__(self, other):
        return BinOp("-", _lift(other), self)

    def __mul__(self, other):
        return BinOp("*", self, _lift(other))

    def __rmul__(self, other):
        return BinOp("*", _lift(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, _lift(other))

    def __rtruediv__(self, other):
        return BinOp("/", _lift(other), self)

    def __pow__(self, p):
        return Pow(self, p)

    def __neg__(self):
        return Neg(self)


def _lift(v) -> ScalarField:
    if isinstance(v, ScalarField):
        return v
    return Const(float(v))


@dataclass(frozen=True, eq=True)
class Const(ScalarField):
    value: float

    def __call__(self, x):
        return self.value

    def is_constant(self) -> bool:
        return True

    def __str__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True, eq=True)
class Coord(ScalarField):
    index: int  # zero-based

    def __call__(self, x):
        return x[self.index]

    def __str__(self) -> str:
        return f"x{self.index + 1}"


@dataclass(frozen=True, eq=True)
class Neg(ScalarField):
    arg: ScalarField

    def __call__(self, x):
        return -self.arg(x)

    def is_constant(self) -> bool:
        return self.arg.is_constant()

    def __str__(self) -> str:
        return f"(-{self.arg})"


@dataclass(frozen=True, eq=True)
class BinOp(ScalarField):
    op: str
    left: ScalarField
    right: ScalarField

    def __call__(self, x):
        a, b = self.left(x), self.right(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def is_constant(self) -> bool:
        return self.left.is_constant() and self.right.is_constant()

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True, eq=True)
class Pow(ScalarField):
    base: ScalarField
    exponent: float

    def __call__(self, x):
        b = self.base(x)
        p = self.exponent
        if float(p).is_integer() and p >= 0:
            p = int(p)
            if isinstance(b, jets.Jet):
                return b ** p
            return b ** p
        if isinstance(b, jets.Jet):
            return b ** float(p)
        return np.power(b, p)

    def is_constant(self) -> bool:
        return self.base.is_constant()

    def __str__(self) -> str:
        return f"({self.base}**{self.exponent!r})"


@dataclass(frozen=True, eq=True)
class Func(ScalarField):
    name: str
    arg: ScalarField

    def __call__(self, x):
        return _FUNCS[self.name](self.arg(x))

    def is_constant(self) -> bool:
        return self.arg.is_constant()

    def __str__(self) -> str:
        return f"{self.name}({self.arg})"


def coords(n: int) -> list[Coord]:
    return [Coord(i) for i in range(n)]


def exp(f: ScalarField) -> ScalarField:
    return Func("exp", _lift(f))


def log(f: ScalarField) -> ScalarField:
    return Func("log", _lift(f))


def sqrt(f: ScalarField) -> ScalarField:
    return Func("sqrt", _lift(f))


def sin(f: ScalarField) -> ScalarField:
    return Func("sin", _lift(f))


def cos(f: ScalarField) -> ScalarField:
    return Func("cos", _lift(f))


def norm_sq(n: int) -> ScalarField:
    out: ScalarField = Const(0.0)
    for c in coords(n):
        out = c * c if isinstance(out, Const) and out.value == 0.0 else out + c * c
    return out


def linear(coeffs: Sequence[float], offset: float = 0.0) -> ScalarField:
    out: ScalarField = Const(float(offset))
    for i, c in enumerate(coeffs):
        if c != 0.0:
            out = out + float(c) * Coord(i)
    return out


def log_rational(n: int, numerator: float = 1.0, shift: float = 1.0, coeff: float = 1.0) -> ScalarField:
    """log(numerator / (shift + coeff |x|^2))."""
    return log(Const(float(numerator)) / (Const(float(shift)) + float(coeff) * norm_sq(n)))


def sphere_factor(n: int) -> ScalarField:
    """Conformal factor of the unit round sphere in stereographic coordinates."""
    return log_rational(n, 2.0, 1.0, 1.0)


# parsing --------------------------------------------------------------------

_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def parse(text: str, n: int | None = None) -> ScalarField:
    """Parse an arithmetic expression in x1..xn.

    Accepts numbers, ``x1``.., ``+ - * / **``, and the functions
    exp, log, sqrt, sin, cos, tan, atan. The constants ``pi`` and ``e`` are
    recognised. Anything else is rejected.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse field expression {text!r}: {exc.msg}") from None
    return _convert(tree.body, text, n)


def _convert(node, text, n) -> ScalarField:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return Const(math.pi)
        if node.id == "e":
            return Const(math.e)
        if node.id.startswith("x") and node.id[1:].isdigit():
            idx = int(node.id[1:]) - 1
            if idx < 0 or (n is not None and idx >= n):
                raise ConfigError(f"coordinate {node.id} out of range in {text!r}")
            return Coord(idx)
        raise ConfigError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        arg = _convert(node.operand, text, n)
        return Neg(arg) if isinstance(node.op, ast.USub) else arg
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            exponent = _convert(node.right, text, n)
            if not isinstance(exponent, Const):
                raise ConfigError(f"exponent must be a number in {text!r}")
            return Pow(_convert(node.left, text, n), exponent.value)
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ConfigError(f"operator not allowed in {text!r}")
        return BinOp(op, _convert(node.left, text, n), _convert(node.right, text, n))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ConfigError(f"{node.func.id} takes one argument in {text!r}")
        return Func(node.func.id, _convert(node.args[0], text, n))
    raise ConfigError(f"unsupported syntax in {text!r}")


def from_config(desc: Any, n: int) -> ScalarField:
    """Build a field from its tagged description (see the config schema)."""
    if isinstance(desc, (int, float)) and not isinstance(desc, bool):
        return Const(float(desc))
    if isinstance(desc, str):
        return parse(desc, n)
    kind = desc.get("kind")
    if kind == "const":
        return Const(float(desc["value"]))
    if kind == "linear":
        coeffs = desc["coeffs"]
        if len(coeffs) != n:
            raise ConfigError(f"linear field needs {n} coefficients")
        return linear(coeffs, desc.get("offset", 0.0))
    if kind == "log_rational":
        return log_rational(n, desc.get("numerator", 1.0), desc.get("shift", 1.0), desc.get("coeff", 1.0))
    if kind == "expr":
        return parse(desc["expr"], n)
    raise ConfigError(f"unknown scalar field kind {kind!r}")

"""Safe compilation of small arithmetic expressions into numpy callables.

Two dialects share one AST walker:

* decay expressions in the variable ``t`` built from ``const(c)``,
  ``poly(c0, c1, ...)``, ``exp(a)`` (meaning e^{a t}), ``sin``, ``cos``,
  ``abs``, ``sqrt`` joined by ``+`` and ``*``;
* model expressions in ``(t, v)`` with the usual arithmetic operators and
  elementary functions, used for the nonlinearity and its derivatives.

Nothing is ever passed to ``eval``; unknown names or node types raise
``ExpressionError``.
"""
from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np


class ExpressionError(ValueError):
    """Raised for malformed or unsupported expressions."""


_UNARY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sinh": np.sinh,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}


def _literal(node: ast.AST) -> float:
    """Evaluate a numeric literal, allowing a leading sign."""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _literal(node.operand)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Name) and node.id in _CONSTANTS:
        return _CONSTANTS[node.id]
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Mult, ast.Div, ast.Add, ast.Sub)):
        a, b = _literal(node.left), _literal(node.right)
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div):
            return a / b
        if isinstance(node.op, ast.Add):
            return a + b
        return a - b
    raise ExpressionError(f"expected a numeric literal, got {ast.unparse(node)!r}")


def _int_power(fn: Callable, n: int) -> Callable:
    # repeated multiplication is much faster than ** for small integer powers
    if n == 0:
        return lambda *a: np.ones_like(fn(*a))
    if n == 1:
        return fn
    if n == 2:
        def sq(*a):
            x = fn(*a)
            return x * x
        return sq
    if n == 3:
        def cube(*a):
            x = fn(*a)
            return x * x * x
        return cube
    if n == 4:
        def quart(*a):
            x = fn(*a)
            x2 = x * x
            return x2 * x2
        return quart
    return lambda *a: fn(*a) ** n


# ---------------------------------------------------------------------------
# decay dialect, single variable t
# ---------------------------------------------------------------------------

def _decay_node(node: ast.AST) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(node, ast.BinOp):
        left, right = _decay_node(node.left), _decay_node(node.right)
        if isinstance(node.op, ast.Add):
            return lambda t: left(t) + right(t)
        if isinstance(node.op, ast.Mult):
            return lambda t: left(t) * right(t)
        raise ExpressionError(f"operator {type(node.op).__name__} not allowed in decay expressions")
    if isinstance(node, (ast.Constant, ast.UnaryOp)):
        c = _literal(node)
        return lambda t: np.full(np.shape(t), c)
    if isinstance(node, ast.Name):
        if node.id == "t":
            return lambda t: np.asarray(t, dtype=float)
        if node.id == "sin":
            return np.sin
        if node.id == "cos":
            return np.cos
        if node.id == "abs":
            return np.abs
        if node.id in _CONSTANTS:
            c = _CONSTANTS[node.id]
            return lambda t: np.full(np.shape(t), c)
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        name, args = node.func.id, node.args
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        if name == "const":
            if len(args) != 1:
                raise ExpressionError("const takes one argument")
            c = _literal(args[0])
            return lambda t: np.full(np.shape(t), c)
        if name == "poly":
            if not args:
                raise ExpressionError("poly needs at least one coefficient")
            coeffs = [_literal(a) for a in args]

            def poly(t):
                t = np.asarray(t, dtype=float)
                acc = np.full(t.shape, coeffs[-1])
                for c in reversed(coeffs[:-1]):
                    acc = acc * t + c
                return acc
            return poly
        if name == "exp":
            if len(args) != 1:
                raise ExpressionError("exp takes one rate argument")
            a = _literal(args[0])
            return lambda t: np.exp(a * np.asarray(t, dtype=float))
        if name in ("sin", "cos"):
            if len(args) != 1:
                raise ExpressionError(f"{name} takes one frequency argument")
            a = _literal(args[0])
            f = np.sin if name == "sin" else np.cos
            return lambda t: f(a * np.asarray(t, dtype=float))
        if name in ("abs", "sqrt"):
            if len(args) != 1:
                raise ExpressionError(f"{name} takes one argument")
            inner = _decay_node(args[0])
            f = np.abs if name == "abs" else np.sqrt
            return lambda t: f(inner(t))
        raise ExpressionError(f"unknown function {name!r}")
    raise ExpressionError(f"unsupported syntax: {ast.unparse(node)!r}")


def compile_decay(source: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a decay-grammar expression into a vectorized function of t."""
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from exc
    fn = _decay_node(tree.body)

    def wrapped(t):
        return np.asarray(fn(np.asarray(t, dtype=float)), dtype=float)
    return wrapped


# ---------------------------------------------------------------------------
# model dialect, variables t and v
# ---------------------------------------------------------------------------

def _model_node(node: ast.AST) -> Callable:
    if isinstance(node, ast.Constant):
        c = _literal(node)
        return lambda t, v: c
    if isinstance(node, ast.Name):
        if node.id == "t":
            return lambda t, v: t
        if node.id == "v":
            return lambda t, v: v
        if node.id in _CONSTANTS:
            c = _CONSTANTS[node.id]
            return lambda t, v: c
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp):
        inner = _model_node(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda t, v: -inner(t, v)
        if isinstance(node.op, ast.UAdd):
            return inner
        raise ExpressionError("unsupported unary operator")
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            base = _model_node(node.left)
            try:
                p = _literal(node.right)
            except ExpressionError:
                expo = _model_node(node.right)
                return lambda t, v: base(t, v) ** expo(t, v)
            if float(p).is_integer() and 0 <= p <= 8:
                return _int_power(base, int(p))
            return lambda t, v: base(t, v) ** p
        left, right = _model_node(node.left), _model_node(node.right)
        ops = {
            ast.Add: lambda t, v: left(t, v) + right(t, v),
            ast.Sub: lambda t, v: left(t, v) - right(t, v),
            ast.Mult: lambda t, v: left(t, v) * right(t, v),
            ast.Div: lambda t, v: left(t, v) / right(t, v),
        }
        for op_type, fn in ops.items():
            if isinstance(node.op, op_type):
                return fn
        raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        name = node.func.id
        if name not in _UNARY_FUNCS or len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"unsupported call {ast.unparse(node)!r}")
        f, inner = _UNARY_FUNCS[name], _model_node(node.args[0])
        return lambda t, v: f(inner(t, v))
    raise ExpressionError(f"unsupported syntax: {ast.unparse(node)!r}")


def compile_model(source: str | float | int) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Compile an expression in ``t`` and ``v`` into a broadcasting function.

    The result always has the broadcast shape of its two arguments, so a
    constant expression still returns an array.
    """
    text = str(source).strip()
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc
    fn = _model_node(tree.body)

    def wrapped(t, v):
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        out = fn(t, v)
        shape = np.broadcast_shapes(t.shape, v.shape)
        return np.broadcast_to(np.asarray(out, dtype=float), shape)
    return wrapped


def compile_time(source: str | float | int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a model-dialect expression that depends on ``t`` only."""
    fn = compile_model(source)
    return lambda t: fn(t, 0.0)

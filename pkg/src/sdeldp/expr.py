"""A small arithmetic expression language for user-defined coefficient fields.

Grammar (recursive descent, ``^`` binds tightest and associates right):

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/" | "x-glyph" | "division-glyph") unary)*
    unary   := ("+" | "-") unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

so unary minus binds looser than ``^`` (-u^2 is -(u^2)) while exponents
may themselves be signed (u^-2).

Names: ``t`` (time), ``x1``..``xd`` (state components), ``x`` (the state
vector), constants ``pi`` and ``e``.  Functions: abs, sqrt, log, exp, sin,
cos, tanh (elementwise), norm(v) (Euclidean norm over the state axis, or
|v| for scalars), dot(v, w).  Evaluation is vectorized over any batch
shape; scalar and vector values broadcast against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .fields import CoefficientField

__all__ = ["compile_expression", "expression_field", "ExpressionError"]


class ExpressionError(ValidationError):
    """Parse or evaluation failure, pointing at the offending position."""


_MUL_GLYPHS = {"×": "*", "÷": "/"}
_FUNCS_ELEMENTWISE = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "log": np.log,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "sign": np.sign,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _lex(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _MUL_GLYPHS:
            toks.append(_Tok("op", _MUL_GLYPHS[ch], i))
            i += 1
            continue
        if ch in "+-*/^(),":
            toks.append(_Tok("op", ch, i))
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            while j < n and (src[j].isdigit() or src[j] in ".eE" or
                             (src[j] in "+-" and j > i and src[j - 1] in "eE")):
                j += 1
            try:
                float(src[i:j])
            except ValueError:
                raise ExpressionError(f"bad number at position {i}: {src[i:j]!r}") from None
            toks.append(_Tok("num", src[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("name", src[i:j], i))
            i = j
            continue
        raise ExpressionError(f"unexpected character {ch!r} at position {i}")
    toks.append(_Tok("end", "", n))
    return toks


# AST nodes: ("num", v) | ("var", name) | ("neg", e) | ("bin", op, a, b) | ("call", f, args)


class _Parser:
    def __init__(self, src):
        self.src = src
        self.toks = _lex(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, text=None):
        t = self.toks[self.i]
        if kind is not None and t.kind != kind:
            raise ExpressionError(f"expected {kind} at position {t.pos} in {self.src!r}, got {t.text!r}")
        if text is not None and t.text != text:
            raise ExpressionError(f"expected {text!r} at position {t.pos} in {self.src!r}, got {t.text!r}")
        self.i += 1
        return t

    def parse(self):
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ExpressionError(f"trailing input at position {t.pos} in {self.src!r}: {t.text!r}")
        return e

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        t = self.peek()
        if t.kind == "op" and t.text in "+-":
            self.take()
            node = self.unary()
            return node if t.text == "+" else ("neg", node)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return ("num", float(t.text))
        if t.kind == "name":
            self.take()
            if self.peek().kind == "op" and self.peek().text == "(":
                self.take()
                args = [self.expr()]
                while self.peek().text == ",":
                    self.take()
                    args.append(self.expr())
                self.take(text=")")
                return ("call", t.text, args)
            return ("var", t.text)
        if t.kind == "op" and t.text == "(":
            self.take()
            node = self.expr()
            self.take(text=")")
            return node
        raise ExpressionError(f"unexpected {t.text!r} at position {t.pos} in {self.src!r}")


def _validate(node, d, variables):
    kind = node[0]
    if kind == "num":
        return
    if kind == "var":
        name = node[1]
        if name in _CONSTANTS or name in variables:
            return
        raise ExpressionError(f"unknown variable {name!r} (allowed: {sorted(variables)})")
    if kind == "neg":
        _validate(node[1], d, variables)
        return
    if kind == "bin":
        _validate(node[2], d, variables)
        _validate(node[3], d, variables)
        return
    f, args = node[1], node[2]
    if f in _FUNCS_ELEMENTWISE:
        if len(args) != 1:
            raise ExpressionError(f"{f} takes one argument")
    elif f == "norm":
        if len(args) != 1:
            raise ExpressionError("norm takes one argument")
    elif f == "dot":
        if len(args) != 2:
            raise ExpressionError("dot takes two arguments")
    else:
        raise ExpressionError(f"unknown function {f!r}")
    for a in args:
        _validate(a, d, variables)


def _eval(node, env, d):
    """Evaluate to (array, is_vector); vectors carry a trailing axis of size d."""
    kind = node[0]
    if kind == "num":
        return node[1], False
    if kind == "var":
        name = node[1]
        if name in _CONSTANTS:
            return _CONSTANTS[name], False
        return env[name]
    if kind == "neg":
        v, vec = _eval(node[1], env, d)
        return -v, vec
    if kind == "bin":
        op = node[1]
        a, avec = _eval(node[2], env, d)
        b, bvec = _eval(node[3], env, d)
        if avec != bvec:
            # broadcast the scalar across the state axis
            if avec:
                b = np.asarray(b)[..., None]
            else:
                a = np.asarray(a)[..., None]
        if op == "+":
            return a + b, avec or bvec
        if op == "-":
            return a - b, avec or bvec
        if op == "*":
            return a * b, avec or bvec
        if op == "/":
            return a / b, avec or bvec
        return a ** b, avec or bvec
    f, args = node[1], node[2]
    if f in _FUNCS_ELEMENTWISE:
        v, vec = _eval(args[0], env, d)
        return _FUNCS_ELEMENTWISE[f](v), vec
    if f == "norm":
        v, vec = _eval(args[0], env, d)
        if vec:
            return np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1)), False
        return np.abs(v), False
    a, avec = _eval(args[0], env, d)
    b, bvec = _eval(args[1], env, d)
    if avec and bvec:
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1), False
    if avec or bvec:
        raise ExpressionError("dot needs two vectors or two scalars")
    return a * b, False


def compile_expression(src, d, with_time=True):
    """Compile to ``fn(t, x) -> array`` broadcasting over x's batch shape."""
    variables = {f"x{i + 1}" for i in range(d)} | {"x"}
    if with_time:
        variables.add("t")
    ast = _Parser(src).parse()
    _validate(ast, d, variables)

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        env = {f"x{i + 1}": (x[..., i], False) for i in range(d)}
        env["x"] = (x, True)
        if with_time:
            env["t"] = (t, False)
        v, vec = _eval(ast, env, d)
        if vec:
            raise ExpressionError(f"expression {src!r} must produce a scalar component")
        return np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1])

    return fn


def compile_scalar_expression(src, varname="u"):
    """Compile a one-variable expression to a vectorized fn(u)."""
    ast = _Parser(src).parse()
    _validate(ast, 1, {varname})

    def fn(u):
        u = np.asarray(u, dtype=float)
        v, vec = _eval(ast, {varname: (u, False)}, 1)
        return np.broadcast_to(np.asarray(v, dtype=float), u.shape)

    return fn


def expression_field(d, m, drift_exprs, diffusion_exprs, label="custom"):
    """Build a CoefficientField from component expressions.

    ``drift_exprs`` lists d expressions; ``diffusion_exprs`` is a d x m
    nested list (rows = state components, columns = noise channels).
    """
    if len(drift_exprs) != d:
        raise ValidationError(f"need {d} drift expressions, got {len(drift_exprs)}")
    if len(diffusion_exprs) != d or any(len(row) != m for row in diffusion_exprs):
        raise ValidationError(f"diffusion expressions must form a {d}x{m} grid")
    drift_fns = [compile_expression(e, d) for e in drift_exprs]
    diff_fns = [[compile_expression(e, d) for e in row] for row in diffusion_exprs]

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for i, fn in enumerate(drift_fns):
            out[..., i] = fn(t, x)
        return out

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (d, m))
        for i, row in enumerate(diff_fns):
            for j, fn in enumerate(row):
                out[..., i, j] = fn(t, x)
        return out

    return CoefficientField(d=d, m=m, drift=drift, diffusion=diffusion, label=label)

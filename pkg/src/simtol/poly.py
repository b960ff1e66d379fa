"""Exact univariate polynomials in the gossip probability ``p``.

Tolerances are carried both as plain rationals (fixed ``p``) and as
polynomials with rational coefficients (symbolic replay).  A ``Poly`` of
degree zero behaves like its constant, so process weights and tolerance
formulas can be written uniformly.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

Rat = Fraction
Weight = Union[Fraction, "Poly"]


def _coerce(x) -> "Poly | None":
    if isinstance(x, Poly):
        return x
    if isinstance(x, (int, Fraction)):
        return Poly.const(Fraction(x))
    return None


class Poly:
    """Immutable polynomial ``sum(c_k * p**k)`` with Fraction coefficients."""

    __slots__ = ("_coeffs", "_hash")

    def __init__(self, coeffs: dict[int, Fraction]):
        cleaned = {k: Fraction(v) for k, v in coeffs.items() if v != 0}
        object.__setattr__(self, "_coeffs", tuple(sorted(cleaned.items())))
        object.__setattr__(self, "_hash", hash(self._coeffs))

    def __setattr__(self, *a):
        raise AttributeError("Poly is immutable")

    @staticmethod
    def const(c) -> "Poly":
        return Poly({0: Fraction(c)})

    @staticmethod
    def var() -> "Poly":
        return Poly({1: Fraction(1)})

    @property
    def coeffs(self) -> dict[int, Fraction]:
        return dict(self._coeffs)

    def degree(self) -> int:
        return self._coeffs[-1][0] if self._coeffs else 0

    def is_constant(self) -> bool:
        return self.degree() == 0

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"not a constant polynomial: {self}")
        return self._coeffs[0][1] if self._coeffs else Fraction(0)

    def __call__(self, p) -> Fraction:
        p = Fraction(p)
        return sum((c * p**k for k, c in self._coeffs), Fraction(0))

    def __add__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        out = dict(self._coeffs)
        for k, c in o._coeffs:
            out[k] = out.get(k, Fraction(0)) + c
        return Poly(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly({k: -c for k, c in self._coeffs})

    def __sub__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        out: dict[int, Fraction] = {}
        for k1, c1 in self._coeffs:
            for k2, c2 in o._coeffs:
                out[k1 + k2] = out.get(k1 + k2, Fraction(0)) + c1 * c2
        return Poly(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return self * Poly.const(1 / o.constant_value())

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        out = Poly.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        o = _coerce(other)
        if o is None:
            return NotImplemented
        return self._coeffs == o._coeffs

    def __hash__(self):
        # Degree-zero polys hash like their Fraction so mixed-weight
        # canonical forms compare consistently.
        if self.is_constant():
            return hash(self.constant_value())
        return self._hash

    def __str__(self):
        if not self._coeffs:
            return "0"
        parts = []
        for k, c in self._coeffs:
            if k == 0:
                term = str(c)
            else:
                pk = "p" if k == 1 else f"p^{k}"
                if c == 1:
                    term = pk
                elif c == -1:
                    term = f"-{pk}"
                else:
                    term = f"{c}*{pk}"
            parts.append(term)
        out = parts[0]
        for term in parts[1:]:
            out += f" - {term[1:]}" if term.startswith("-") else f" + {term}"
        return out

    __repr__ = __str__


P_VAR = Poly.var()


def as_weight(x) -> Weight:
    """Normalize a user-supplied probability weight to Fraction or Poly."""
    if isinstance(x, Poly):
        return x.constant_value() if x.is_constant() else x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("floats are not exact; pass a Fraction, string or Poly")
    raise TypeError(f"not a weight: {x!r}")


def weight_eval(w: Weight, p: Fraction) -> Fraction:
    return w(p) if isinstance(w, Poly) else w


def weight_key(w: Weight):
    """Total order key usable across Fraction and Poly weights."""
    if isinstance(w, Poly):
        if w.is_constant():
            w = w.constant_value()
        else:
            return (1, w._coeffs)
    return (0, w)


def parse_rational(text: str) -> Fraction:
    """Exact rational from ``a/b``, integer, or decimal literal."""
    return Fraction(text.strip())


class _PolyParser:
    """Recursive-descent parser for tolerance expressions like ``1-(3*p^3-2*p^4)``."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise ValueError(f"tolerance expression: {msg} at column {self.pos + 1} in {self.text!r}")

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def eat(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self) -> Poly:
        out = self.expr()
        if self.peek():
            self.error("trailing input")
        return out

    def expr(self) -> Poly:
        out = self.term()
        while self.peek() and self.peek() in "+-":
            op = self.peek()
            self.pos += 1
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self) -> Poly:
        out = self.factor()
        while True:
            ch = self.peek()
            if ch == "*":
                self.pos += 1
                out = out * self.factor()
            elif ch == "/":
                self.pos += 1
                out = out / self.factor()
            elif ch and (ch in "(p" or ch.isdigit()):
                # implicit multiplication: 2p, p(1-p), (1-p)(1-p)
                out = out * self.factor()
            else:
                return out

    def factor(self) -> Poly:
        ch = self.peek()
        if ch == "-":
            self.pos += 1
            return -self.factor()
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            exp = self.number()
            if exp.denominator != 1:
                self.error("exponent must be an integer")
            return base ** int(exp)
        return base

    def atom(self) -> Poly:
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            out = self.expr()
            self.eat(")")
            return out
        if ch == "p":
            self.pos += 1
            return Poly.var()
        if ch.isdigit() or ch == ".":
            return Poly.const(self.number())
        self.error("expected a factor")

    def number(self) -> Fraction:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isdigit() or self.text[self.pos] == "."):
            self.pos += 1
        if start == self.pos:
            self.error("expected a number")
        return Fraction(self.text[start:self.pos])


def parse_poly(text: str) -> Poly:
    """Parse a univariate polynomial in ``p`` with exact rational arithmetic."""
    return _PolyParser(text).parse()

"""Text format for network descriptions.

::

    externals { tester }
    values { v }
    node s1 nbrs { d } proc snd(v, 4/5)
    node d  nbrs { s1 tester } proc fix X. ?(x).sigma.tau.!<x>.nil else X

Process grammar (macros expand to their definitions)::

    pexpr  := "nil" | "!" "<" NAME ">" "." choice
            | "?" "(" NAME ")" "." choice "else" choice
            | "tau" "." choice | "sigma" "." choice
            | "fix" NAME "." pexpr | NAME
            | macro "(" args ")"
    choice := pexpr | "(" RAT ":" pexpr ("+" RAT ":" pexpr)* ")"
    macro  := snd | resnd | fwd | resndc | fwdc | sndu | resndu | fwdu

Weights are exact rationals: ``a/b``, integers, or decimal literals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .calculus import (
    Bcast, Choice, Fix, Network, Nil, Node, PVar, Process, Recv, Sleep, Tau,
    Value, ValueVar, Violation, check_well_formed,
)
from . import gossip

KEYWORDS = {"nil", "tau", "sigma", "fix", "else", "node", "nbrs", "proc",
            "externals", "values"}

MACROS = {
    "snd": (2, lambda v, p: gossip.mk_snd(v, p)),
    "resnd": (2, lambda v, p: gossip.mk_resnd(v, p)),
    "fwd": (1, lambda p: gossip.mk_fwd(p)),
    "resndc": (2, lambda v, p: gossip.mk_resndc(v, p)),
    "fwdc": (1, lambda p: gossip.mk_fwdc(p)),
    "sndu": (3, lambda v, p, k: gossip.mk_sndu(v, p, k)),
    "resndu": (3, lambda v, p, k: gossip.mk_resndu(v, p, k)),
    "fwdu": (2, lambda p, k: gossip.mk_fwdu(p, k)),
}

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<rat>\d+/\d+|\d+\.\d+|\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[!<>.?():{}+,])
""", re.VERBOSE)


@dataclass(frozen=True)
class ParseError(Exception):
    message: str
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    pos, line, bol = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - bol + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind == "ws":
            line += tok.count("\n")
            if "\n" in tok:
                bol = m.start() + tok.rindex("\n") + 1
        else:
            out.append(_Tok(kind, tok, line, m.start() - bol + 1))
        pos = m.end()
    out.append(_Tok("eof", "", line, len(text) - bol + 1))
    return out


@dataclass(frozen=True)
class NetworkFile:
    network: Network
    externals: frozenset[str]
    values: frozenset[str]


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg: str):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        return t

    def name(self) -> str:
        t = self.next()
        if t.kind != "name":
            raise ParseError(f"expected a name, found {t.text!r}", t.line, t.col)
        if t.text in KEYWORDS:
            raise ParseError(f"{t.text!r} is a keyword", t.line, t.col)
        return t.text

    def name_set(self) -> frozenset[str]:
        self.expect("{")
        out = []
        while self.peek().text != "}":
            out.append(self.name())
        self.expect("}")
        return frozenset(out)

    def rational(self) -> Fraction:
        t = self.next()
        if t.kind != "rat":
            raise ParseError(f"expected a rational, found {t.text!r}", t.line, t.col)
        return Fraction(t.text)

    # -- grammar -------------------------------------------------------------

    def file(self) -> NetworkFile:
        externals: frozenset[str] = frozenset()
        values: frozenset[str] = frozenset()
        if self.peek().text == "externals":
            self.next()
            externals = self.name_set()
        if self.peek().text == "values":
            self.next()
            values = self.name_set()
        nodes = []
        while self.peek().text == "node":
            nodes.append(self.node())
        if self.peek().kind != "eof":
            self.fail(f"expected 'node', found {self.peek().text!r}")
        if not nodes:
            self.fail("a network needs at least one node")
        bad = check_well_formed(nodes, externals)
        if bad:
            raise ParseError("ill-formed network: " + "; ".join(map(str, bad)),
                             self.peek().line, 1)
        return NetworkFile(Network(tuple(nodes)), externals, values)

    def node(self) -> Node:
        self.expect("node")
        name = self.name()
        self.expect("nbrs")
        nbrs = self.name_set()
        self.expect("proc")
        return Node(name, nbrs, self.pexpr(frozenset()))

    def pexpr(self, bound: frozenset[str]) -> Process:
        t = self.peek()
        if t.text == "nil":
            self.next()
            return Nil()
        if t.text == "tau":
            self.next()
            self.expect(".")
            return Tau(self.choice(bound))
        if t.text == "sigma":
            self.next()
            self.expect(".")
            return Sleep(self.choice(bound))
        if t.text == "!":
            self.next()
            self.expect("<")
            val = self.name()
            self.expect(">")
            self.expect(".")
            payload = ValueVar(val) if val in bound else Value(val)
            return Bcast(payload, self.choice(bound))
        if t.text == "?":
            self.next()
            self.expect("(")
            var = self.name()
            self.expect(")")
            self.expect(".")
            then = self.choice(bound | {var})
            self.expect("else")
            return Recv(var, then, self.choice(bound))
        if t.text == "fix":
            self.next()
            var = self.name()
            self.expect(".")
            return Fix(var, self.pexpr(bound))
        if t.kind == "name" and t.text in MACROS:
            return self.macro(bound)
        if t.kind == "name" and t.text not in KEYWORDS:
            self.next()
            return PVar(t.text)
        self.fail(f"expected a process, found {t.text or 'end of input'!r}")

    def macro(self, bound: frozenset[str]) -> Process:
        t = self.next()
        arity, build = MACROS[t.text]
        self.expect("(")
        args = []
        for i in range(arity):
            if i:
                self.expect(",")
            if self.peek().kind == "rat":
                args.append(self.rational())
            else:
                args.append(self.name())
        self.expect(")")
        try:
            conv = []
            for a in args:
                if isinstance(a, str):
                    conv.append(ValueVar(a) if a in bound else Value(a))
                else:
                    conv.append(a)
            # trailing integer arguments are delay windows, not values
            if t.text in ("sndu", "resndu", "fwdu"):
                k = conv[-1]
                if isinstance(k, Fraction):
                    if k.denominator != 1:
                        raise ValueError("delay window must be an integer")
                    conv[-1] = int(k)
                else:
                    raise ValueError("delay window must be an integer")
            return build(*conv)
        except (TypeError, ValueError) as e:
            raise ParseError(f"bad macro {t.text}: {e}", t.line, t.col) from None

    def choice(self, bound: frozenset[str]) -> Choice:
        t = self.peek()
        if t.text == "(" and self._paren_is_choice():
            self.next()
            branches = [self._branch(bound)]
            while self.peek().text == "+":
                self.next()
                branches.append(self._branch(bound))
            self.expect(")")
            return Choice(tuple(branches))
        from .calculus import one

        return one(self.pexpr(bound))

    def _paren_is_choice(self) -> bool:
        # lookahead: "(" RAT ":" starts a weighted branch list
        return (self.toks[self.i + 1].kind == "rat"
                and self.toks[self.i + 2].text == ":")

    def _branch(self, bound: frozenset[str]) -> tuple[Fraction, Process]:
        w = self.rational()
        self.expect(":")
        return (w, self.pexpr(bound))


def parse_network(text: str) -> NetworkFile:
    """Parse a network description; raises ParseError with location."""
    return _Parser(text).file()


# ---------------------------------------------------------------------------
# printing


def _fmt_choice(c: Choice) -> str:
    if len(c.branches) == 1:
        return _fmt_proc(c.branches[0][1])
    inner = " + ".join(f"{w}:{_fmt_proc(q)}" for w, q in c.branches)
    return f"({inner})"


def _fmt_proc(p: Process) -> str:
    if isinstance(p, Nil):
        return "nil"
    if isinstance(p, Bcast):
        return f"!<{p.value}>.{_fmt_choice(p.cont)}"
    if isinstance(p, Recv):
        return f"?({p.var}).{_fmt_choice(p.then)} else {_fmt_choice(p.timeout)}"
    if isinstance(p, Tau):
        return f"tau.{_fmt_choice(p.cont)}"
    if isinstance(p, Sleep):
        return f"sigma.{_fmt_choice(p.cont)}"
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, Fix):
        return f"fix {p.name}.{_fmt_proc(p.body)}"
    raise TypeError(p)


def pretty_network(net: Network, externals: frozenset[str] = frozenset(),
                   values: frozenset[str] = frozenset()) -> str:
    """Render in the file format; parsing the result reproduces the network
    up to canonical form."""
    lines = []
    if externals:
        lines.append("externals { " + " ".join(sorted(externals)) + " }")
    if values:
        lines.append("values { " + " ".join(sorted(values)) + " }")
    for n in net.nodes:
        nbrs = " ".join(sorted(n.nbrs))
        lines.append(f"node {n.name} nbrs {{ {nbrs} }} proc {_fmt_proc(n.proc)}")
    return "\n".join(lines) + "\n"

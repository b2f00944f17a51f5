"""Tiny arithmetic expression language for coefficients and nonlinearities.

Variables x, y, t; operators + - * / ^ (right-assoc) and comparisons
< > <= >= (lowest precedence, evaluating to 1.0/0.0 so indicator factors
like (y > 1) can be written inline); functions exp, log, sqrt, abs,
min, max, pow. No user-defined functions.

Evaluation is IEEE double, vectorized over numpy array bindings, and
never returns NaN: domain violations (log of a nonpositive value,
sqrt of a negative, division by zero, pow with negative base and
non-integer exponent) raise DomainError instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Expr", "ParseError", "DomainError", "parse"]


class ParseError(ValueError):
    """Syntax or name error; .offset is the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class DomainError(ValueError):
    pass


_VARS = ("x", "y", "t")
_FUNCS = {"exp": 1, "log": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2, "pow": 2}

# token kinds: num ident op lparen rparen comma end
_OPS = ("<=", ">=", "<", ">", "+", "-", "*", "/", "^")


def _tokenize(text: str):
    toks = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                val = float(text[i:j])
            except ValueError:
                raise ParseError(f"bad number literal {text[i:j]!r}", i) from None
            if not np.isfinite(val):
                raise ParseError(f"number literal {text[i:j]!r} overflows", i)
            toks.append(("num", val, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("ident", text[i:j], i))
            i = j
            continue
        two = text[i : i + 2]
        if two in ("<=", ">="):
            toks.append(("op", two, i))
            i += 2
            continue
        if ch in "+-*/^<>":
            toks.append(("op", ch, i))
            i += 1
            continue
        if ch == "(":
            toks.append(("lparen", ch, i))
            i += 1
            continue
        if ch == ")":
            toks.append(("rparen", ch, i))
            i += 1
            continue
        if ch == ",":
            toks.append(("comma", ch, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    toks.append(("end", "", n))
    return toks


# binding powers; ^ handled right-associative in _parse_binary
_PREC = {"<": 1, ">": 1, "<=": 1, ">=": 1, "+": 2, "-": 2, "*": 3, "/": 3, "^": 5}
_UNARY_PREC = 4


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str):
        t = self.next()
        if t[0] != kind:
            raise ParseError(f"expected {kind}, found {t[1]!r}", t[2])
        return t

    def parse_expr(self, min_prec: int = 0):
        node = self.parse_prefix()
        while True:
            kind, val, off = self.peek()
            if kind != "op" or _PREC[val] < min_prec:
                return node
            self.next()
            if val == "^":
                rhs = self.parse_expr(_PREC[val])  # right-assoc
            else:
                rhs = self.parse_expr(_PREC[val] + 1)
            node = ("bin", val, node, rhs)

    def parse_prefix(self):
        kind, val, off = self.next()
        if kind == "num":
            return ("num", val)
        if kind == "op" and val == "-":
            return ("neg", self.parse_expr(_UNARY_PREC))
        if kind == "lparen":
            node = self.parse_expr(0)
            self.expect("rparen")
            return node
        if kind == "ident":
            if self.peek()[0] == "lparen":
                if val not in _FUNCS:
                    raise ParseError(f"unknown function {val!r}", off)
                self.next()
                args = [self.parse_expr(0)]
                while self.peek()[0] == "comma":
                    self.next()
                    args.append(self.parse_expr(0))
                self.expect("rparen")
                if len(args) != _FUNCS[val]:
                    raise ParseError(
                        f"{val} takes {_FUNCS[val]} argument(s), got {len(args)}", off
                    )
                return ("call", val, tuple(args))
            if val not in _VARS:
                raise ParseError(f"unknown identifier {val!r}", off)
            return ("var", val)
        raise ParseError(f"unexpected token {val!r}", off)


def _node_prec(node) -> int:
    kind = node[0]
    if kind == "bin":
        return _PREC[node[1]]
    if kind == "neg":
        return _UNARY_PREC
    return 9


def _fmt(node) -> str:
    kind = node[0]
    if kind == "num":
        v = node[1]
        return repr(v) if v != int(v) or abs(v) >= 1e16 else str(int(v))
    if kind == "var":
        return node[1]
    if kind == "neg":
        inner = _fmt(node[1])
        if _node_prec(node[1]) < _UNARY_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if kind == "call":
        return f"{node[1]}({', '.join(_fmt(a) for a in node[2])})"
    _, op, a, b = node
    p = _PREC[op]
    sa, sb = _fmt(a), _fmt(b)
    # keep the re-parsed tree identical, not merely equivalent: float
    # rounding makes (a+b)+c and a+(b+c) different values
    if op == "^":
        if _node_prec(a) <= p:
            sa = f"({sa})"
        if _node_prec(b) < p:
            sb = f"({sb})"
    else:
        if _node_prec(a) < p:
            sa = f"({sa})"
        if _node_prec(b) <= p:
            sb = f"({sb})"
    return f"{sa} {op} {sb}"


def _eval_node(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        try:
            return env[node[1]]
        except KeyError:
            raise DomainError(f"unbound variable {node[1]!r}") from None
    if kind == "neg":
        return -_eval_node(node[1], env)
    if kind == "call":
        name = node[1]
        args = [_eval_node(a, env) for a in node[2]]
        if name == "exp":
            return np.exp(args[0])
        if name == "log":
            if np.any(np.asarray(args[0]) <= 0):
                raise DomainError("log of a nonpositive value")
            return np.log(args[0])
        if name == "sqrt":
            if np.any(np.asarray(args[0]) < 0):
                raise DomainError("sqrt of a negative value")
            return np.sqrt(args[0])
        if name == "abs":
            return np.abs(args[0])
        if name == "min":
            return np.minimum(args[0], args[1])
        if name == "max":
            return np.maximum(args[0], args[1])
        return _power(args[0], args[1])
    _, op, a, b = node
    va = _eval_node(a, env)
    vb = _eval_node(b, env)
    if op == "+":
        return va + vb
    if op == "-":
        return va - vb
    if op == "*":
        return va * vb
    if op == "/":
        if np.any(np.asarray(vb) == 0):
            raise DomainError("division by zero")
        return va / vb
    if op == "^":
        return _power(va, vb)
    if op == "<":
        return (np.less(va, vb)).astype(float) if np.ndim(va) or np.ndim(vb) else float(va < vb)
    if op == ">":
        return (np.greater(va, vb)).astype(float) if np.ndim(va) or np.ndim(vb) else float(va > vb)
    if op == "<=":
        return (np.less_equal(va, vb)).astype(float) if np.ndim(va) or np.ndim(vb) else float(va <= vb)
    return (np.greater_equal(va, vb)).astype(float) if np.ndim(va) or np.ndim(vb) else float(va >= vb)


def _power(base, expo):
    b = np.asarray(base, dtype=float)
    e = np.asarray(expo, dtype=float)
    frac = e != np.floor(e)
    if np.any((b < 0) & frac):
        raise DomainError("pow with negative base and non-integer exponent")
    if np.any((b == 0) & (e < 0)):
        raise DomainError("pow(0, negative)")
    out = np.power(b, e)
    if out.ndim == 0 and np.ndim(base) == 0 and np.ndim(expo) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Expr:
    """Parsed expression; immutable and reentrant."""

    ast: tuple
    source: str

    def eval(self, bindings: dict):
        """Evaluate under {x, y, t} bindings (scalars or numpy arrays)."""
        out = _eval_node(self.ast, bindings)
        if np.any(np.isnan(np.asarray(out))):
            raise DomainError(f"expression {self.source!r} produced NaN")
        return out

    @property
    def variables(self) -> frozenset:
        found = set()
        stack = [self.ast]
        while stack:
            node = stack.pop()
            if node[0] == "var":
                found.add(node[1])
            elif node[0] == "neg":
                stack.append(node[1])
            elif node[0] == "call":
                stack.extend(node[2])
            elif node[0] == "bin":
                stack.extend(node[2:])
        return frozenset(found)

    def __str__(self) -> str:
        return _fmt(self.ast)


def parse(text: str) -> Expr:
    """Parse an expression; raises ParseError with a byte offset on bad input."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    p = _Parser(text)
    ast = p.parse_expr(0)
    tail = p.peek()
    if tail[0] != "end":
        raise ParseError(f"trailing input {tail[1]!r}", tail[2])
    return Expr(ast=ast, source=text)

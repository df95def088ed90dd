"""Expression language for smooth chart maps with exact forward-mode derivatives.

A map source is a list of ``;``-separated components over the variables
``x1 .. xm``::

    maps      := component (';' component)*
    component := 'inf' | expr
    expr      := term (('+' | '-') term)*
    term      := unary (('*' | '/') unary)*
    unary     := ('+' | '-') unary | power
    power     := atom ('^' integer)?
    integer   := ['-' | '+'] DIGITS | '(' ['-' | '+'] DIGITS ')'
    atom      := NUMBER | 'x' DIGITS | func '(' expr ')' | '(' expr ')'
    func      := 'sin' | 'cos' | 'exp' | 'sqrt'

``inf`` denotes the basepoint of the compactified target; it is only allowed
when every component is ``inf`` (the constant map to the basepoint).

Evaluation is vectorised over a batch of points. Each node produces a value
array of shape ``(N,)`` and a gradient array of shape ``(N, m)``, i.e. a
dual number whose infinitesimal part carries all ``m`` directions at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .errors import ArityError, DomainError, DSLSyntaxError

ZOO_VERSION = "zoo/1"

UNARY_FUNCS = ("sin", "cos", "exp", "sqrt")
BINARY = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_ARITY = {"const": 0, "var": 0, "inf": 0, "neg": 1, "pow": 1,
          "add": 2, "sub": 2, "mul": 2, "div": 2,
          "sin": 1, "cos": 1, "exp": 1, "sqrt": 1}


@dataclass(frozen=True)
class Node:
    """One node of an expression tree.

    ``value`` holds the constant for ``const``, the 0-based variable index for
    ``var`` and the integer exponent for ``pow``.
    """

    kind: str
    children: tuple["Node", ...] = ()
    value: float | int | None = None

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if len(self.children) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} expects {_ARITY[self.kind]} children")
        if self.kind == "pow" and not isinstance(self.value, int):
            raise ValueError("only integer powers are allowed")

    def variables(self) -> set[int]:
        if self.kind == "var":
            return {int(self.value)}
        out: set[int] = set()
        for c in self.children:
            out |= c.variables()
        return out


def const(v: float) -> Node:
    return Node("const", value=float(v))


def var(i: int) -> Node:
    return Node("var", value=int(i))


INF = Node("inf")

# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^();−×÷]))"
)
_OP_ALIASES = {"−": "-", "×": "*", "÷": "/"}


@dataclass
class _Tok:
    kind: str  # num | name | op | end
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise DSLSyntaxError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        text = m.group(kind)
        if kind == "op":
            text = _OP_ALIASES.get(text, text)
        toks.append(_Tok(kind, text, start))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str, m: int):
        self.src = src
        self.m = m
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, what: str):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise DSLSyntaxError(f"expected {what}, found {found}", t.pos)

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def _expect(self, text: str):
        if not self._accept(text):
            self._fail(repr(text))

    def components(self) -> list[Node]:
        out = [self.component()]
        while self._accept(";"):
            out.append(self.component())
        if self.tok.kind != "end":
            self._fail("';' or operator")
        return out

    def component(self) -> Node:
        t = self.tok
        if t.kind == "name" and t.text == "inf":
            nxt = self.toks[self.i + 1]
            if nxt.kind == "end" or (nxt.kind == "op" and nxt.text == ";"):
                self.i += 1
                return INF
        return self.expr()

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = Node("add" if op == "+" else "sub", (node, self.term()))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = Node("mul" if op == "*" else "div", (node, self.unary()))
        return node

    def unary(self) -> Node:
        if self._accept("-"):
            return Node("neg", (self.unary(),))
        if self._accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._accept("^"):
            return Node("pow", (base,), self.integer())
        return base

    def integer(self) -> int:
        paren = self._accept("(")
        sign = 1
        if self._accept("-"):
            sign = -1
        else:
            self._accept("+")
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            self._fail("integer exponent")
        self.i += 1
        if paren:
            self._expect(")")
        return sign * int(t.text)

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return const(float(t.text))
        if t.kind == "name":
            if t.text in UNARY_FUNCS:
                self.i += 1
                self._expect("(")
                arg = self.expr()
                self._expect(")")
                return Node(t.text, (arg,))
            vm = re.fullmatch(r"x(\d+)", t.text)
            if vm:
                idx = int(vm.group(1))
                if not 1 <= idx <= self.m:
                    raise ArityError(
                        f"variable {t.text} at offset {t.pos} outside x1..x{self.m}")
                self.i += 1
                return var(idx - 1)
            raise DSLSyntaxError(f"unknown identifier {t.text!r}", t.pos)
        if self._accept("("):
            node = self.expr()
            self._expect(")")
            return node
        self._fail("operand")


# ---------------------------------------------------------------------------
# pretty printer

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _prec(node: Node) -> int:
    if node.kind == "const" and node.value < 0:
        return 3
    return _PREC.get(node.kind, 5)


def _fmt_const(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError("constants must be finite")
    return repr(float(v))


def pretty(node: Node) -> str:
    """Canonical text of an expression tree; parsing it rebuilds the tree."""
    k = node.kind
    if k == "const":
        return _fmt_const(node.value)
    if k == "var":
        return f"x{node.value + 1}"
    if k == "inf":
        return "inf"
    if k in UNARY_FUNCS:
        return f"{k}({pretty(node.children[0])})"
    if k == "neg":
        c = node.children[0]
        s = pretty(c)
        return "-" + (f"({s})" if _prec(c) < 3 else s)
    if k == "pow":
        c = node.children[0]
        s = pretty(c)
        if _prec(c) < 5:
            s = f"({s})"
        return f"{s}^{node.value}"
    left, right = node.children
    p = _PREC[k]
    ls, rs = pretty(left), pretty(right)
    if _prec(left) < p:
        ls = f"({ls})"
    if _prec(right) <= p:
        rs = f"({rs})"
    return f"{ls} {BINARY[k]} {rs}"


# ---------------------------------------------------------------------------
# forward-mode evaluation


class _Batch:
    __slots__ = ("X", "bad")

    def __init__(self, X: np.ndarray):
        self.X = X
        self.bad = np.zeros(X.shape[0], dtype=bool)


def _dual(node: Node, b: _Batch) -> tuple[np.ndarray, np.ndarray]:
    X = b.X
    N, m = X.shape
    k = node.kind
    if k == "const":
        return np.full(N, node.value), np.zeros((N, m))
    if k == "var":
        g = np.zeros((N, m))
        g[:, node.value] = 1.0
        return X[:, node.value].copy(), g
    if k == "neg":
        v, g = _dual(node.children[0], b)
        return -v, -g
    if k in BINARY:
        a, da = _dual(node.children[0], b)
        c, dc = _dual(node.children[1], b)
        if k == "add":
            return a + c, da + dc
        if k == "sub":
            return a - c, da - dc
        if k == "mul":
            return a * c, da * c[:, None] + a[:, None] * dc
        zero = c == 0.0
        b.bad |= zero
        cs = np.where(zero, 1.0, c)
        v = a / cs
        return v, (da - v[:, None] * dc) / cs[:, None]
    if k == "pow":
        a, da = _dual(node.children[0], b)
        p = node.value
        if p == 0:
            return np.ones(N), np.zeros((N, m))
        if p < 0:
            zero = a == 0.0
            b.bad |= zero
            a = np.where(zero, 1.0, a)
        return a ** p, (p * a ** (p - 1))[:, None] * da
    a, da = _dual(node.children[0], b)
    if k == "sin":
        return np.sin(a), np.cos(a)[:, None] * da
    if k == "cos":
        return np.cos(a), -np.sin(a)[:, None] * da
    if k == "exp":
        e = np.exp(a)
        return e, e[:, None] * da
    if k == "sqrt":
        # derivative is unbounded at 0, so 0 is outside the smooth domain
        neg = a <= 0.0
        b.bad |= neg
        s = np.sqrt(np.where(neg, 1.0, a))
        return s, da / (2.0 * s)[:, None]
    raise AssertionError(k)


# ---------------------------------------------------------------------------
# evaluable maps


class SmoothMap:
    """Anything the pipeline can evaluate: a map R^m -> R^n with ∞ sentinel.

    Subclasses implement :meth:`evaluate_batch`. A row of ``inf`` in the value
    array is the basepoint ∞; rows with ``ok == False`` fell outside the
    smooth domain (division by zero, overflow, ...).
    """

    domain_dim: int
    codomain_dim: int
    support_radius: float

    def evaluate_batch(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def seed_hints(self, rng: np.random.Generator) -> np.ndarray | None:
        """Optional extra Newton starts contributed by the map itself."""
        return None

    def _single(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.domain_dim:
            raise ArityError(f"point has {x.shape[0]} coordinates, map expects {self.domain_dim}")
        if not np.all(np.isfinite(x)):
            raise DomainError("point must be finite")
        F, J, ok = self.evaluate_batch(x[None, :])
        if not ok[0]:
            raise DomainError(f"map is not smooth at {x.tolist()}")
        return F[0], J[0]

    def evaluate(self, x) -> np.ndarray:
        return self._single(x)[0]

    def evaluate_with_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Value in R^n (or all-inf for ∞) and the n x m differential."""
        return self._single(x)


def is_infinite(F: np.ndarray) -> np.ndarray:
    """Row mask for the basepoint ∞ in a batch of values."""
    return np.isinf(F).any(axis=-1)


@dataclass(frozen=True)
class ChartMap(SmoothMap):
    """A parsed map R^m -> R^n in compactified chart coordinates."""

    domain_dim: int
    codomain_dim: int
    components: tuple[Node, ...]
    support_radius: float = 10.0
    infinity_flag: bool = False
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.support_radius <= 0:
            raise ValueError("support_radius must be positive")
        if len(self.components) != self.codomain_dim:
            raise ArityError(
                f"{len(self.components)} components for codomain dimension {self.codomain_dim}")
        infs = [c.kind == "inf" for c in self.components]
        if any(infs) and not all(infs):
            raise ArityError("'inf' must be used for every component or none")
        for c in self.components:
            bad = [i for i in c.variables() if i >= self.domain_dim]
            if bad:
                raise ArityError(f"variable x{bad[0] + 1} outside x1..x{self.domain_dim}")

    @property
    def constant_infinity(self) -> bool:
        return self.components[0].kind == "inf"

    def source(self) -> str:
        return "; ".join(pretty(c) for c in self.components)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N = X.shape[0]
        n, m = self.codomain_dim, self.domain_dim
        F = np.empty((N, n))
        J = np.zeros((N, n, m))
        if self.constant_infinity:
            F[:] = np.inf
            return F, J, np.ones(N, dtype=bool)
        b = _Batch(X)
        with np.errstate(all="ignore"):
            for i, c in enumerate(self.components):
                F[:, i], J[:, i, :] = _dual(c, b)
        ok = ~b.bad & np.isfinite(F).all(axis=1) & np.isfinite(J).all(axis=(1, 2))
        if self.infinity_flag:
            out = np.linalg.norm(X, axis=1) > self.support_radius
            F[out] = np.inf
            J[out] = 0.0
            ok |= out
        return F, J, ok

    def shifted(self, t) -> "ChartMap":
        """The translated map x -> f(x) + t."""
        t = np.asarray(t, dtype=float).reshape(-1)
        if self.constant_infinity:
            return self
        comps = tuple(c if ti == 0.0 else Node("add", (c, const(ti)))
                      for c, ti in zip(self.components, t))
        return ChartMap(self.domain_dim, self.codomain_dim, comps,
                        self.support_radius, self.infinity_flag)

    def support_check(self, samples: int = 256, seed: int = 0) -> float:
        """Minimum of ‖f‖ over points of the sphere of radius support_radius.

        Advisory: callers use it to sanity-check that preimages of small
        values stay inside the support ball.
        """
        rng = np.random.default_rng(seed)
        P = rng.standard_normal((samples, self.domain_dim))
        P *= self.support_radius / np.linalg.norm(P, axis=1)[:, None]
        F, _, ok = self.evaluate_batch(P)
        norms = np.where(is_infinite(F), np.inf, np.linalg.norm(np.where(np.isinf(F), 0, F), axis=1))
        norms = np.where(ok, norms, np.inf)
        return float(norms.min())


def parse_map(source: str, m: int, n: int, support_radius: float = 10.0,
              infinity_flag: bool = False, name: str | None = None) -> ChartMap:
    """Parse ``n`` semicolon-separated expressions in ``x1..xm``."""
    comps = _Parser(source, m).components()
    if len(comps) != n:
        raise ArityError(f"expected {n} components, got {len(comps)}")
    return ChartMap(m, n, tuple(comps), support_radius, infinity_flag, name)


def parse_components(source: str, m: int) -> tuple[Node, ...]:
    """All semicolon-separated components, however many there are."""
    return tuple(_Parser(source, m).components())


def parse_expression(source: str, m: int) -> Node:
    comps = _Parser(source, m).components()
    if len(comps) != 1:
        raise ArityError("expected a single expression")
    return comps[0]


# ---------------------------------------------------------------------------
# compactified metric


def to_sphere(y) -> np.ndarray:
    """Inverse stereographic projection R^n ∪ {∞} -> unit S^n from the north pole."""
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    if np.isinf(y).any():
        out = np.zeros(n + 1)
        out[-1] = 1.0
        return out
    r2 = float(y @ y)
    return np.concatenate([2.0 * y, [r2 - 1.0]]) / (r2 + 1.0)


def chart_to_sphere_distance(y1, y2) -> float:
    """Chordal distance between two points of R^n ∪ {∞} on the unit sphere.

    ``None`` stands for ∞, as does any vector containing an infinite entry.
    """
    if y1 is None and y2 is None:
        return 0.0
    if y1 is None:
        y1 = np.full(np.size(y2), np.inf)
    if y2 is None:
        y2 = np.full(np.size(y1), np.inf)
    a, b = to_sphere(y1), to_sphere(y2)
    if a.shape != b.shape:
        raise ArityError("points live in different dimensions")
    return float(min(np.linalg.norm(a - b), 2.0))


# ---------------------------------------------------------------------------
# builtin zoo


def _poly(coeffs: dict[int, int]) -> str:
    terms = []
    for p in sorted(coeffs):
        c = coeffs[p]
        if c == 0:
            continue
        mono = "" if p == 0 else ("x1" if p == 1 else f"x1^{p}")
        mag = abs(c)
        if mono and mag == 1:
            body = mono
        elif mono:
            body = f"{mag}*{mono}"
        else:
            body = str(mag)
        terms.append(("-" if c < 0 else "+", body))
    s = ("-" if terms[0][0] == "-" else "") + terms[0][1]
    for sign, body in terms[1:]:
        s += f" {sign} {body}"
    return s


def winding_source(d: int) -> str:
    """Chart form of z -> z^d on S^1 = R ∪ {∞}.

    The chart x = tan(β) puts ∞ at the fixed point 1 ∈ S^1 of z^d, so the map
    reads tan(dβ + (d-1)π/2): tan(d·atan x) for odd d and -cot(d·atan x) for
    even d, both rational in x via (1 + ix)^|d|.
    """
    if d == 0:
        return "inf"
    a = abs(d)
    re_ = {j: comb(a, j) * (-1) ** (j // 2) for j in range(0, a + 1, 2)}
    im_ = {j: comb(a, j) * (-1) ** ((j - 1) // 2) for j in range(1, a + 1, 2)}
    A, B = _poly(re_), _poly(im_)
    if a % 2 == 1:
        num, den, sign = B, A, 1 if d > 0 else -1
    else:
        num, den, sign = A, B, -1 if d > 0 else 1
    body = num if den == "1" else f"({num}) / ({den})"
    if sign > 0:
        return body
    return f"-{body}" if body == "x1" else f"-({body})"


HOPF_SOURCE = (
    "(4*x1*x3 + 2*x2*(x1^2 + x2^2 + x3^2 - 1)) / (4*x3^2 + (x1^2 + x2^2 + x3^2 - 1)^2); "
    "(4*x2*x3 - 2*x1*(x1^2 + x2^2 + x3^2 - 1)) / (4*x3^2 + (x1^2 + x2^2 + x3^2 - 1)^2)"
)


def builtin(name: str) -> ChartMap:
    """Look up a map of the builtin zoo, e.g. ``"winding:3"`` or ``"builtin:hopf"``.

    The Hopf map composes inverse stereographic projection R^3 -> S^3 ⊂ C^2,
    (z1, z2) -> (2 z1 conj(z2), |z1|^2 - |z2|^2) ∈ S^2 and stereographic
    projection S^2 -> R^2, both from the north pole of unit spheres.
    """
    full = name
    if name.startswith("builtin:"):
        name = name[len("builtin:"):]
    kind, _, arg = name.partition(":")
    try:
        if kind == "identity":
            n = int(arg)
            src = "; ".join(f"x{i}" for i in range(1, n + 1))
            return parse_map(src, n, n, support_radius=5.0, name=full)
        if kind == "reflection":
            n = int(arg)
            src = "; ".join(["-x1"] + [f"x{i}" for i in range(2, n + 1)])
            return parse_map(src, n, n, support_radius=5.0, name=full)
        if kind == "winding":
            d = int(arg)
            radius = 1.5 / math.tan(math.pi / (4 * max(abs(d), 1))) + 2.0
            return parse_map(winding_source(d), 1, 1, support_radius=radius, name=full)
        if kind == "constant-inf":
            n, k = (int(v) for v in arg.split(","))
            return parse_map("; ".join(["inf"] * n), n + k, n, support_radius=1.0, name=full)
        if kind == "hopf" and not arg:
            return parse_map(HOPF_SOURCE, 3, 2, support_radius=6.0, name=full)
    except ValueError as exc:
        if isinstance(exc, (ArityError, DSLSyntaxError)):
            raise
        raise ArityError(f"bad builtin parameters in {full!r}") from exc
    raise ArityError(f"unknown builtin map {full!r}")


BUILTIN_EXAMPLES = ("identity:1", "identity:2", "identity:3", "reflection:1", "reflection:2",
                    "reflection:3", "winding:-3", "winding:-2", "winding:-1", "winding:1",
                    "winding:2", "winding:3", "constant-inf:1,0", "constant-inf:2,1", "hopf")


def central_differences(f: SmoothMap, x, h: float = 1e-5) -> np.ndarray:
    """n x m Jacobian by central differences (independent check of the duals)."""
    x = np.asarray(x, dtype=float)
    m = f.domain_dim
    P = np.repeat(x[None, :], 2 * m, axis=0)
    for i in range(m):
        P[2 * i, i] += h
        P[2 * i + 1, i] -= h
    F, _, _ = f.evaluate_batch(P)
    return np.stack([(F[2 * i] - F[2 * i + 1]) / (2 * h) for i in range(m)], axis=1)


def as_points(xs: Sequence) -> np.ndarray:
    return np.atleast_2d(np.asarray(xs, dtype=float))

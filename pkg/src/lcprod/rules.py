"""Textual rules for block measures and coefficient streams.

Rates are closed-form sequences in a deliberately tiny language (no general
expression parsing), indexed by the 1-based block index k:

    const(c)      c
    geom(a, r)    a * r**k
    pow(a, p)     a * k**p

Measure rules (one block per k, identity embeddings unless explicit):

    gaussian(mean=SEQ, sd=SEQ)          1-d quadratic potential per block
    uniform(halfwidth=SEQ)              1-d flat potential on [-c_k, c_k]
    tilt(slope=SEQ, box=[lo, hi])       1-d tilted potential on a fixed box
    laplace(center=SEQ, rate=SEQ)       1-d scaled-absolute potential
    explicit(POT [@ affine(matrix=[[...],...], shift=[...])]; ...;
             tail=FAMILY)               explicit leading blocks, then a
                                        mandatory tail family rule (the tail
                                        rule sees the global block index)

Explicit potentials (vectors and matrices are bracketed, matrices row-major):

    quadratic(center=[...], precision=[[...], ...])
    uniform(box=[[lo, hi], ...])
    tilt(slope=[...], box=[[lo, hi], ...])
    scaledabs(center=[...], rates=[...])
    pointmass(at=[...])

Coefficient rules produce one vector per block:

    SEQ                                 every coordinate of block k is SEQ(k)
    vector(SEQ, ..., SEQ)               coordinate i follows its own sequence;
                                        block dimension must match
    explicit([...]; ...; tail=SEQ | vector(...))
                                        fixed vectors for leading blocks
"""

from __future__ import annotations

import abc
import re
from dataclasses import dataclass

import numpy as np

from .blocks import AffineMap, BlockMeasure, make_block, point_mass
from .errors import InvalidPotential, RuleSyntaxError, ShapeError
from .potentials import LinearTilt, Quadratic, ScaledAbs, Uniform

__all__ = [
    "Seq",
    "BlockRule",
    "CoeffRule",
    "parse_sequence",
    "parse_measure_rule",
    "parse_coeff_rule",
]


# ---------------------------------------------------------------------------
# Closed-form sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Seq:
    kind: str  # const | geom | pow
    a: float
    b: float = 0.0

    def value(self, k: int) -> float:
        if self.kind == "const":
            return self.a
        if self.kind == "geom":
            return self.a * self.b**k
        return self.a * float(k) ** self.b

    def values(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=float)
        if self.kind == "const":
            return np.full(ks.shape, self.a)
        if self.kind == "geom":
            return self.a * self.b**ks
        return self.a * ks**self.b


# ---------------------------------------------------------------------------
# Tokenizer / recursive-descent parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<punct>[][()=,;@])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise RuleSyntaxError(f"unexpected character {rest[0]!r} at position {pos} in rule {text!r}")
        for kind in ("name", "number", "punct"):
            val = m.group(kind)
            if val is not None:
                tokens.append((kind, val, m.start(kind)))
                break
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.idx = 0

    def fail(self, message: str):
        pos = self.tokens[self.idx][2] if self.idx < len(self.tokens) else len(self.text)
        raise RuleSyntaxError(f"{message} at position {pos} in rule {self.text!r}")

    def peek(self):
        return self.tokens[self.idx] if self.idx < len(self.tokens) else (None, None, None)

    def next(self):
        tok = self.peek()
        if tok[0] is None:
            self.fail("unexpected end of rule")
        self.idx += 1
        return tok

    def accept(self, kind, value=None):
        tok = self.peek()
        if tok[0] == kind and (value is None or tok[1] == value):
            self.idx += 1
            return tok[1]
        return None

    def expect(self, kind, value=None):
        got = self.accept(kind, value)
        if got is None:
            want = value if value is not None else kind
            self.fail(f"expected {want!r}")
        return got

    def done(self):
        if self.idx != len(self.tokens):
            self.fail("trailing input")

    # -- value productions --------------------------------------------------

    def number(self) -> float:
        return float(self.expect("number"))

    def vector(self) -> np.ndarray:
        self.expect("punct", "[")
        out = []
        if self.accept("punct", "]") is not None:
            return np.asarray(out, dtype=float)
        out.append(self.number())
        while self.accept("punct", ",") is not None:
            out.append(self.number())
        self.expect("punct", "]")
        return np.asarray(out, dtype=float)

    def matrix(self) -> np.ndarray:
        self.expect("punct", "[")
        rows = [self.vector()]
        while self.accept("punct", ",") is not None:
            rows.append(self.vector())
        self.expect("punct", "]")
        if len({r.size for r in rows}) > 1:
            self.fail("matrix rows have unequal lengths")
        return np.vstack(rows)

    def sequence(self) -> Seq:
        name = self.expect("name")
        if name not in ("const", "geom", "pow"):
            self.fail(f"unknown sequence {name!r} (expected const/geom/pow)")
        self.expect("punct", "(")
        a = self.number()
        if name == "const":
            self.expect("punct", ")")
            return Seq("const", a)
        self.expect("punct", ",")
        b = self.number()
        self.expect("punct", ")")
        return Seq(name, a, b)

    def kwargs(self, spec: dict):
        """Parse name=value pairs per ``spec`` (name -> parse method)."""
        out = {}
        while True:
            name = self.expect("name")
            if name not in spec:
                self.fail(f"unknown argument {name!r} (expected one of {sorted(spec)})")
            if name in out:
                self.fail(f"duplicate argument {name!r}")
            self.expect("punct", "=")
            out[name] = spec[name]()
            if self.accept("punct", ",") is None:
                break
        missing = set(spec) - set(out)
        if missing:
            self.fail(f"missing argument(s) {sorted(missing)}")
        return out


# ---------------------------------------------------------------------------
# Block rules
# ---------------------------------------------------------------------------

class BlockRule(abc.ABC):
    """Generates the k-th block measure of a product, k = 1, 2, ..."""

    @abc.abstractmethod
    def block(self, k: int) -> BlockMeasure: ...

    @abc.abstractmethod
    def block_dim(self, k: int) -> int: ...

    def scalar_moments(self, ks: np.ndarray):
        """(means, variances) arrays for scalar blocks, or None.

        Only rules whose every block is one-dimensional with closed-form
        moments provide this; it lets tail series over millions of blocks be
        evaluated without instantiating the blocks.
        """
        return None


def _scalar_gaussian(mean: float, sd: float, k: int) -> BlockMeasure:
    if not sd > 0:
        raise InvalidPotential(f"gaussian rule produced sd={sd!r}", block_index=k)
    return make_block(Quadratic(np.array([mean]), np.array([[sd**-2.0]])))


@dataclass(frozen=True)
class GaussianRule(BlockRule):
    mean: Seq
    sd: Seq

    def block(self, k):
        return _scalar_gaussian(self.mean.value(k), self.sd.value(k), k)

    def block_dim(self, k):
        return 1

    def scalar_moments(self, ks):
        return self.mean.values(ks), self.sd.values(ks) ** 2


@dataclass(frozen=True)
class UniformRule(BlockRule):
    halfwidth: Seq

    def block(self, k):
        c = self.halfwidth.value(k)
        if not c > 0:
            raise InvalidPotential(f"uniform rule produced halfwidth={c!r}", block_index=k)
        return make_block(Uniform(np.array([[-c, c]])))

    def block_dim(self, k):
        return 1

    def scalar_moments(self, ks):
        c = self.halfwidth.values(ks)
        return np.zeros_like(c), c**2 / 3.0


@dataclass(frozen=True)
class TiltRule(BlockRule):
    slope: Seq
    lo: float
    hi: float

    def block(self, k):
        s = self.slope.value(k)
        return make_block(LinearTilt(np.array([s]), np.array([[self.lo, self.hi]])))

    def block_dim(self, k):
        return 1


@dataclass(frozen=True)
class LaplaceRule(BlockRule):
    center: Seq
    rate: Seq

    def block(self, k):
        r = self.rate.value(k)
        if not r > 0:
            raise InvalidPotential(f"laplace rule produced rate={r!r}", block_index=k)
        return make_block(ScaledAbs(np.array([self.center.value(k)]), np.array([r])))

    def block_dim(self, k):
        return 1

    def scalar_moments(self, ks):
        r = self.rate.values(ks)
        return self.center.values(ks), 2.0 / r**2


@dataclass(frozen=True)
class ExplicitRule(BlockRule):
    leading: tuple
    tail: BlockRule

    def block(self, k):
        if k <= len(self.leading):
            return self.leading[k - 1]
        return self.tail.block(k)

    def block_dim(self, k):
        if k <= len(self.leading):
            return self.leading[k - 1].dim
        return self.tail.block_dim(k)


# ---------------------------------------------------------------------------
# Coefficient rules
# ---------------------------------------------------------------------------

class CoeffRule(abc.ABC):
    """Generates the coefficient vector paired with block k."""

    @abc.abstractmethod
    def coeff(self, k: int, dim: int) -> np.ndarray: ...

    def scalar_values(self, ks: np.ndarray):
        """Coefficient values for scalar blocks, or None (see scalar_moments)."""
        return None


@dataclass(frozen=True)
class BroadcastCoeff(CoeffRule):
    seq: Seq

    def coeff(self, k, dim):
        return np.full(dim, self.seq.value(k))

    def scalar_values(self, ks):
        return self.seq.values(ks)


@dataclass(frozen=True)
class VectorCoeff(CoeffRule):
    seqs: tuple

    def coeff(self, k, dim):
        if dim != len(self.seqs):
            raise ShapeError(
                f"coefficient rule has {len(self.seqs)} coordinates but block {k} has dimension {dim}"
            )
        return np.array([s.value(k) for s in self.seqs])

    def scalar_values(self, ks):
        if len(self.seqs) == 1:
            return self.seqs[0].values(ks)
        return None


@dataclass(frozen=True)
class ExplicitCoeff(CoeffRule):
    leading: tuple
    tail: CoeffRule

    def coeff(self, k, dim):
        if k <= len(self.leading):
            vec = self.leading[k - 1]
            if vec.size != dim:
                raise ShapeError(
                    f"explicit coefficient {k} has length {vec.size} but block has dimension {dim}"
                )
            return vec
        return self.tail.coeff(k, dim)


# ---------------------------------------------------------------------------
# Rule parsing
# ---------------------------------------------------------------------------

def parse_sequence(text: str) -> Seq:
    p = _Parser(text)
    seq = p.sequence()
    p.done()
    return seq


def _parse_explicit_potential(p: _Parser) -> BlockMeasure:
    name = p.expect("name")
    if name == "quadratic":
        p.expect("punct", "(")
        kw = p.kwargs({"center": p.vector, "precision": p.matrix})
        p.expect("punct", ")")
        pot = Quadratic(kw["center"], kw["precision"])
    elif name == "uniform":
        p.expect("punct", "(")
        kw = p.kwargs({"box": p.matrix})
        p.expect("punct", ")")
        pot = Uniform(kw["box"])
    elif name == "tilt":
        p.expect("punct", "(")
        kw = p.kwargs({"slope": p.vector, "box": p.matrix})
        p.expect("punct", ")")
        pot = LinearTilt(kw["slope"], kw["box"])
    elif name == "scaledabs":
        p.expect("punct", "(")
        kw = p.kwargs({"center": p.vector, "rates": p.vector})
        p.expect("punct", ")")
        pot = ScaledAbs(kw["center"], kw["rates"])
    elif name == "pointmass":
        p.expect("punct", "(")
        kw = p.kwargs({"at": p.vector})
        p.expect("punct", ")")
        return point_mass(kw["at"])
    else:
        p.fail(f"unknown potential {name!r}")
    if p.accept("punct", "@") is not None:
        p.expect("name", "affine")
        p.expect("punct", "(")
        kw = p.kwargs({"matrix": p.matrix, "shift": p.vector})
        p.expect("punct", ")")
        return make_block(pot, AffineMap(kw["matrix"], kw["shift"]))
    return make_block(pot)


def _parse_family_rule(p: _Parser) -> BlockRule:
    name = p.expect("name")
    if name == "gaussian":
        p.expect("punct", "(")
        kw = p.kwargs({"mean": p.sequence, "sd": p.sequence})
        p.expect("punct", ")")
        return GaussianRule(kw["mean"], kw["sd"])
    if name == "uniform":
        p.expect("punct", "(")
        kw = p.kwargs({"halfwidth": p.sequence})
        p.expect("punct", ")")
        return UniformRule(kw["halfwidth"])
    if name == "tilt":
        p.expect("punct", "(")
        kw = p.kwargs({"slope": p.sequence, "box": p.vector})
        p.expect("punct", ")")
        box = kw["box"]
        if box.size != 2 or not box[0] < box[1]:
            p.fail("tilt box must be [lo, hi] with lo < hi")
        return TiltRule(kw["slope"], float(box[0]), float(box[1]))
    if name == "laplace":
        p.expect("punct", "(")
        kw = p.kwargs({"center": p.sequence, "rate": p.sequence})
        p.expect("punct", ")")
        return LaplaceRule(kw["center"], kw["rate"])
    p.fail(f"unknown measure family {name!r}")


def parse_measure_rule(text: str) -> BlockRule:
    p = _Parser(text)
    if p.peek()[:2] == ("name", "explicit"):
        p.next()
        p.expect("punct", "(")
        leading = []
        tail = None
        while True:
            if p.peek()[:2] == ("name", "tail"):
                p.next()
                p.expect("punct", "=")
                tail = _parse_family_rule(p)
                break
            leading.append(_parse_explicit_potential(p))
            p.expect("punct", ";")
        p.expect("punct", ")")
        p.done()
        return ExplicitRule(tuple(leading), tail)
    rule = _parse_family_rule(p)
    p.done()
    return rule


def _parse_coeff_family(p: _Parser) -> CoeffRule:
    if p.peek()[:2] == ("name", "vector"):
        p.next()
        p.expect("punct", "(")
        seqs = [p.sequence()]
        while p.accept("punct", ",") is not None:
            seqs.append(p.sequence())
        p.expect("punct", ")")
        return VectorCoeff(tuple(seqs))
    return BroadcastCoeff(p.sequence())


def parse_coeff_rule(text: str) -> CoeffRule:
    p = _Parser(text)
    if p.peek()[:2] == ("name", "explicit"):
        p.next()
        p.expect("punct", "(")
        leading = []
        tail = None
        while True:
            if p.peek()[:2] == ("name", "tail"):
                p.next()
                p.expect("punct", "=")
                tail = _parse_coeff_family(p)
                break
            vec = p.vector()
            vec.setflags(write=False)
            leading.append(vec)
            p.expect("punct", ";")
        p.expect("punct", ")")
        p.done()
        return ExplicitCoeff(tuple(leading), tail)
    rule = _parse_coeff_family(p)
    p.done()
    return rule

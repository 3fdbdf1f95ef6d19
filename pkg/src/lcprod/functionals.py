"""Linear functionals as coefficient streams.

A functional f(x) = sum_k <a_k, x_k> is represented by the stream of its
block coefficient vectors plus a declared reason why the centered series
converges almost everywhere: either the coefficients vanish beyond a fixed
block, or the variance series sum_k <a_k, Cov_k a_k> converges against the
paired measure.  The declaration is validated, never assumed.

Tail integrals of such functionals factorize over independent blocks, so
the tail constant c_n = integral of f over blocks > n equals
sum_{k>n} <a_k, mean_k> and is computed from block means rather than by
nested Monte Carlo.  Divergent tails are reported via a status flag, never
silently truncated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientDepth,
    RuleSyntaxError,
    ShapeError,
    TailDeclarationError,
)
from .product import ProductMeasure, TruncatedPoint, sample_matrix
from .rules import BroadcastCoeff, CoeffRule, ExplicitCoeff, Seq, parse_coeff_rule

__all__ = [
    "FiniteSupport",
    "SquareSummable",
    "LinearFunctional",
    "TailConstant",
    "SeminormEstimate",
    "parse_tail_declaration",
    "eval_truncated",
    "tail_constant",
    "tail_mean_terms",
    "tail_variance",
    "estimate_seminorm_integral",
]

# Movement thresholds for the Cauchy probes on partial sums.
MEAN_TAIL_TOL = 1e-10
VARIANCE_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class FiniteSupport:
    """Coefficients vanish for every block index beyond ``last_block``."""

    last_block: int


@dataclass(frozen=True)
class SquareSummable:
    """The variance series converges against the paired measure."""


def parse_tail_declaration(text: str):
    text = text.strip()
    if text == "square_summable":
        return SquareSummable()
    if text.startswith("finite(") and text.endswith(")"):
        inner = text[len("finite(") : -1].strip()
        try:
            return FiniteSupport(int(inner))
        except ValueError:
            pass
    raise RuleSyntaxError(
        f"tail declaration must be 'square_summable' or 'finite(K)', got {text!r}"
    )


class _CallableCoeff(CoeffRule):
    def __init__(self, fn):
        self._fn = fn

    def coeff(self, k, dim):
        vec = np.asarray(self._fn(k), dtype=float)
        if vec.shape != (dim,):
            raise ShapeError(
                f"coefficient generator returned shape {vec.shape} for block {k} of dimension {dim}"
            )
        return vec


class LinearFunctional:
    """f(x) = sum_k <a_k, x_k> with declared tail behaviour."""

    def __init__(self, coeffs, declared_tail=None):
        if isinstance(coeffs, str):
            coeffs = parse_coeff_rule(coeffs)
        elif not isinstance(coeffs, CoeffRule):
            if not callable(coeffs):
                raise TypeError("coeffs must be a rule text, a CoeffRule, or a callable")
            coeffs = _CallableCoeff(coeffs)
        if declared_tail is None:
            declared_tail = SquareSummable()
        elif isinstance(declared_tail, str):
            declared_tail = parse_tail_declaration(declared_tail)
        self._rule = coeffs
        self.declared_tail = declared_tail
        self._validated: set[tuple[int, int]] = set()

    @classmethod
    def from_vectors(cls, vectors) -> "LinearFunctional":
        """Finitely supported functional from explicit block coefficients."""
        vecs = tuple(np.asarray(v, dtype=float) for v in vectors)
        rule = ExplicitCoeff(vecs, BroadcastCoeff(Seq("const", 0.0)))
        return cls(rule, FiniteSupport(len(vecs)))

    def coeff(self, k: int, dim: int) -> np.ndarray:
        if k < 1:
            raise ValueError("block index must be >= 1")
        return self._rule.coeff(k, dim)

    def scalar_coeff_values(self, ks: np.ndarray):
        return self._rule.scalar_values(ks)

    def validate_tail(self, mu: ProductMeasure, probe_depth: int) -> None:
        """Check the declared tail against ``mu``; raises if violated.

        FiniteSupport: coefficients in a window past the declared last block
        must vanish.  SquareSummable: the partial sums of the variance
        series must move less than 1e-12 over (probe_depth/2, probe_depth].
        """
        key = (id(mu), probe_depth)
        if key in self._validated:
            return
        decl = self.declared_tail
        if isinstance(decl, FiniteSupport):
            hi = min(probe_depth, decl.last_block + 64)
            for k in range(decl.last_block + 1, hi + 1):
                vec = self.coeff(k, mu.block(k).dim)
                if np.any(vec != 0.0):
                    raise TailDeclarationError(
                        f"declared finite support through block {decl.last_block}, "
                        f"but block {k} has non-zero coefficients"
                    )
        else:
            lo = probe_depth // 2
            terms = _variance_terms(self, mu, lo, probe_depth)
            partial = np.concatenate(([0.0], np.cumsum(terms)))
            movement = float(partial.max() - partial.min())
            if not movement < VARIANCE_TAIL_TOL:
                raise TailDeclarationError(
                    "declared square-summable coefficients, but the variance series "
                    f"moved {movement:.3e} over blocks ({lo}, {probe_depth}]"
                )
        self._validated.add(key)


def _mean_terms(f: LinearFunctional, mu: ProductMeasure, lo: int, hi: int) -> np.ndarray:
    """<a_k, mean_k> for k in (lo, hi]."""
    if hi <= lo:
        return np.zeros(0)
    ks = np.arange(lo + 1, hi + 1)
    moments = mu.scalar_moments(ks)
    if moments is not None:
        values = f.scalar_coeff_values(ks)
        if values is not None:
            return values * moments[0]
    return np.array(
        [float(f.coeff(int(k), mu.block(int(k)).dim) @ mu.block(int(k)).mean) for k in ks]
    )


def _variance_terms(f: LinearFunctional, mu: ProductMeasure, lo: int, hi: int) -> np.ndarray:
    """<a_k, Cov_k a_k> for k in (lo, hi]."""
    if hi <= lo:
        return np.zeros(0)
    ks = np.arange(lo + 1, hi + 1)
    moments = mu.scalar_moments(ks)
    if moments is not None:
        values = f.scalar_coeff_values(ks)
        if values is not None:
            return values**2 * moments[1]
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        blk = mu.block(int(k))
        a = f.coeff(int(k), blk.dim)
        out[i] = float(a @ blk.covariance @ a)
    return out


def tail_mean_terms(f, mu, lo: int, hi: int) -> np.ndarray:
    """Public wrapper: the summands of the tail constant over (lo, hi]."""
    return _mean_terms(f, mu, lo, hi)


def tail_variance(f, mu, lo: int, hi: int) -> float:
    """sum of <a_k, Cov_k a_k> over k in (lo, hi]."""
    return float(_variance_terms(f, mu, lo, hi).sum())


def eval_truncated(f: LinearFunctional, x: TruncatedPoint, n: int) -> float:
    """Value of f on the point truncated by zeros after block n."""
    if n < 0:
        raise ValueError("truncation depth must be >= 0")
    if n > x.depth:
        raise InsufficientDepth(f"point has depth {x.depth}, truncation {n} requested")
    total = 0.0
    for k in range(1, n + 1):
        xk = x.coords[k - 1]
        total += float(f.coeff(k, xk.size) @ xk)
    return total


@dataclass(frozen=True)
class TailConstant:
    """Tail integral past block ``depth``, probed up to ``probe_depth``.

    ``converged`` reports the Cauchy probe: the partial sums over
    (probe_depth/2, probe_depth] moved less than 1e-10.  An unconverged
    value is still returned; downstream code decides whether that is fatal.
    """

    value: float
    converged: bool
    movement: float
    depth: int
    probe_depth: int


def tail_constant(f: LinearFunctional, mu: ProductMeasure, n: int, probe_depth: int) -> TailConstant:
    """c_n = sum_{n < k <= probe_depth} <a_k, mean_k> with a convergence flag.

    This is the exact tail integral of f over blocks past n (truncated at
    the probe depth): the integral of a sum of independent block terms is
    the sum of block means.
    """
    if n < 0:
        raise ValueError("depth must be >= 0")
    if probe_depth <= n:
        raise ValueError(f"probe_depth ({probe_depth}) must exceed depth ({n})")
    f.validate_tail(mu, probe_depth)
    terms = _mean_terms(f, mu, n, probe_depth)
    window_start = max(n, probe_depth // 2)
    window = terms[window_start - n :]
    partial = np.concatenate(([0.0], np.cumsum(window)))
    movement = float(partial.max() - partial.min())
    return TailConstant(
        value=float(terms.sum()),
        converged=movement < MEAN_TAIL_TOL,
        movement=movement,
        depth=n,
        probe_depth=probe_depth,
    )


@dataclass(frozen=True)
class SeminormEstimate:
    mean_abs: float
    std_error: float
    sample_count: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be >= 0")


def estimate_seminorm_integral(
    f: LinearFunctional, mu: ProductMeasure, depth: int, samples: int, seed: int
) -> SeminormEstimate:
    """Monte Carlo estimate of the integral of |f| truncated to ``depth``.

    Used to check empirically that the integral of the seminorm |f| is
    finite and stable as the depth grows.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    mats = sample_matrix(mu, depth, samples, seed)
    values = np.zeros(samples)
    for k, mat in enumerate(mats, start=1):
        values += mat @ f.coeff(k, mat.shape[1])
    magnitudes = np.abs(values)
    return SeminormEstimate(
        mean_abs=float(magnitudes.mean()),
        std_error=float(magnitudes.std(ddof=1) / np.sqrt(samples)),
        sample_count=samples,
    )

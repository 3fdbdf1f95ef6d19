"""Finite-dimensional affine approximants of linear functionals.

Four constructions, all depending only on the first n blocks:

* conditional expectation onto the first n blocks: truncation plus the tail
  constant c_n (or -c_n under the reflected measure);
* affine-support correction: when the prefix support L~ + h~ has h~ != 0, a
  correction functional vanishing on the support turns the conditional
  expectation into a genuinely linear functional (value 0 at the origin)
  that coincides with it on the support;
* half-sum of the plain and reflected conditional expectations: the +-c_n
  constants cancel algebraically, leaving a linear truncation;
* the same half-sum gated by the tail-decay criterion c_n -> 0 rather than
  by support symmetry.

The correction functional is not unique; the minimal-norm choice
w = c_n * h~ / |h~|^2 is used, which satisfies <w, h~> = c_n and w ⊥ L~
because the canonical offset is orthogonal to the linear part.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisNotMet, InsufficientDepth, TailDiverges
from .functionals import LinearFunctional, eval_truncated, tail_constant
from .product import ProductMeasure, TruncatedPoint, prefix_support

__all__ = [
    "ApproximantKind",
    "ApproximantProvenance",
    "AffineApproximant",
    "conditional_expectation",
    "affine_support_approximant",
    "half_sum_approximant",
    "tail_decay_approximant",
    "BoundCheck",
    "check_reflection_bound",
]

_SUPPORT_OFFSET_TOL = 1e-10


class ApproximantKind(str, enum.Enum):
    COND_EXP = "cond_exp"
    COND_EXP_REFLECTED = "cond_exp_reflected"
    AFFINE_SUPPORT = "affine_support"
    HALF_SUM = "half_sum"
    TAIL_LINEAR = "tail_linear"


#: Kinds whose approximants are linear (value 0 at the origin).
LINEAR_KINDS = frozenset(
    {ApproximantKind.AFFINE_SUPPORT, ApproximantKind.HALF_SUM, ApproximantKind.TAIL_LINEAR}
)


@dataclass(frozen=True, eq=False)
class ApproximantProvenance:
    """What the construction saw: the tail pair and any correction vector.

    ``reflected_c_n`` always equals ``-c_n``; the identity between the two
    tail integrals is algebraic for coefficient-stream functionals.
    ``support_symmetric`` reports, for the half-sum kinds, whether every
    probed block support was symmetric about zero (offset = 0).
    """

    c_n: float
    reflected_c_n: float
    psi_vector: np.ndarray | None = None
    support_symmetric: bool | None = None

    def __post_init__(self):
        if abs(self.reflected_c_n + self.c_n) > 1e-12:
            raise ValueError("reflected tail constant must equal -c_n")


@dataclass(frozen=True, eq=False)
class AffineApproximant:
    """sum_{k<=n} <coeffs_k, x_k> + constant, tagged by its construction."""

    n: int
    coeffs: tuple
    constant: float
    kind: ApproximantKind
    provenance: ApproximantProvenance

    def __post_init__(self):
        coeffs = tuple(np.asarray(c, dtype=float) for c in self.coeffs)
        if len(coeffs) != self.n:
            raise ValueError("need exactly one coefficient vector per block")
        for c in coeffs:
            c.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def evaluate(self, x: TruncatedPoint) -> float:
        if x.depth < self.n:
            raise InsufficientDepth(
                f"approximant uses {self.n} blocks, point has depth {x.depth}"
            )
        total = self.constant
        for c, xk in zip(self.coeffs, x.coords):
            total += float(c @ xk)
        return total

    def evaluate_blocks(self, mats) -> np.ndarray:
        """Batch evaluation on per-block sample matrices (rows = points)."""
        if len(mats) < self.n:
            raise InsufficientDepth(
                f"approximant uses {self.n} blocks, got {len(mats)} sample blocks"
            )
        count = mats[0].shape[0] if self.n else 0
        out = np.full(count, self.constant) if self.n else np.zeros(0)
        for c, mat in zip(self.coeffs, mats):
            out += mat @ c
        return out


def _block_coeffs(f: LinearFunctional, mu: ProductMeasure, n: int) -> tuple:
    return tuple(f.coeff(k, mu.block(k).dim) for k in range(1, n + 1))


def _converged_tail(f, mu, n, probe_depth):
    tc = tail_constant(f, mu, n, probe_depth)
    if not tc.converged:
        raise TailDiverges(
            f"tail mean series past block {n} moved {tc.movement:.3e} "
            f"over ({tc.probe_depth // 2}, {tc.probe_depth}]"
        )
    return tc


def _supports_symmetric(mu: ProductMeasure, horizon: int) -> bool:
    return all(
        np.linalg.norm(mu.block(k).support.offset) <= _SUPPORT_OFFSET_TOL
        for k in range(1, horizon + 1)
    )


def conditional_expectation(
    f: LinearFunctional,
    mu: ProductMeasure,
    n: int,
    reflected: bool = False,
    probe_depth: int = 128,
) -> AffineApproximant:
    """Conditional expectation of f onto the first n blocks.

    The result is the truncation of f plus the tail constant c_n; under the
    reflected measure the constant is -c_n.  Affine, hence continuous.
    """
    tc = _converged_tail(f, mu, n, probe_depth)
    constant = -tc.value if reflected else tc.value
    kind = ApproximantKind.COND_EXP_REFLECTED if reflected else ApproximantKind.COND_EXP
    return AffineApproximant(
        n=n,
        coeffs=_block_coeffs(f, mu, n),
        constant=constant,
        kind=kind,
        provenance=ApproximantProvenance(c_n=tc.value, reflected_c_n=-tc.value),
    )


def affine_support_approximant(
    f: LinearFunctional, mu: ProductMeasure, n: int, probe_depth: int = 128
) -> AffineApproximant:
    """Linear approximant that agrees with the conditional expectation on the
    prefix support.

    Requires the prefix support not to pass through the origin (offset
    norm > 1e-10); the correction <w, x> - <w, h~> with w = c_n h~/|h~|^2
    vanishes on the support and cancels the constant at the origin.
    """
    support = prefix_support(mu, n)
    h = support.offset
    h_sq = float(h @ h)
    if not h_sq > _SUPPORT_OFFSET_TOL**2:
        raise HypothesisNotMet(
            f"prefix support through block {n} passes through the origin"
        )
    tc = _converged_tail(f, mu, n, probe_depth)
    w = (tc.value / h_sq) * h
    constant = tc.value - float(w @ h)
    coeffs = []
    row = 0
    for k in range(1, n + 1):
        dim = mu.block(k).dim
        coeffs.append(f.coeff(k, dim) + w[row : row + dim])
        row += dim
    return AffineApproximant(
        n=n,
        coeffs=tuple(coeffs),
        constant=constant,
        kind=ApproximantKind.AFFINE_SUPPORT,
        provenance=ApproximantProvenance(
            c_n=tc.value, reflected_c_n=-tc.value, psi_vector=w
        ),
    )


def half_sum_approximant(
    f: LinearFunctional,
    mu: ProductMeasure,
    n: int,
    probe_depth: int = 128,
    kind: ApproximantKind = ApproximantKind.HALF_SUM,
) -> AffineApproximant:
    """Half-sum of the plain and reflected conditional expectations.

    The constants c_n and -c_n cancel algebraically, so the constant is
    exactly zero for every input.  Whether each probed block support is
    symmetric about zero (offset = 0) is evaluated and reported in the
    provenance; a violation is not fatal since the construction itself is
    always computable.
    """
    if kind not in (ApproximantKind.HALF_SUM, ApproximantKind.TAIL_LINEAR):
        raise ValueError("half-sum kinds are HALF_SUM and TAIL_LINEAR")
    tc = _converged_tail(f, mu, n, probe_depth)
    constant = 0.5 * (tc.value + -tc.value)
    return AffineApproximant(
        n=n,
        coeffs=_block_coeffs(f, mu, n),
        constant=constant,
        kind=kind,
        provenance=ApproximantProvenance(
            c_n=tc.value,
            reflected_c_n=-tc.value,
            support_symmetric=_supports_symmetric(mu, probe_depth),
        ),
    )


def tail_decay_approximant(
    f: LinearFunctional, mu: ProductMeasure, n: int, probe_depth: int = 128
) -> AffineApproximant:
    """The half-sum construction under the tail-decay hypothesis c_n -> 0."""
    return half_sum_approximant(
        f, mu, n, probe_depth=probe_depth, kind=ApproximantKind.TAIL_LINEAR
    )


@dataclass(frozen=True)
class BoundCheck:
    """Per-point comparison of reflected and plain approximation errors.

    ``e_minus <= 2|c_n| + e_plus + 1e-9`` must hold for every point; the
    right-hand side is stored in ``bound``.
    """

    e_minus: float
    e_plus: float
    bound: float
    holds: bool


def check_reflection_bound(
    f: LinearFunctional,
    mu: ProductMeasure,
    n: int,
    points,
    eval_depth: int,
    probe_depth: int = 128,
) -> list[BoundCheck]:
    """Check the triangle bound linking the two conditional expectations.

    f is replaced by its truncation at ``eval_depth`` (the only faithful
    finite proxy); callers account for the truncation error separately.
    """
    if eval_depth <= n:
        raise ValueError(f"eval_depth ({eval_depth}) must exceed n ({n})")
    plus = conditional_expectation(f, mu, n, probe_depth=probe_depth)
    minus = conditional_expectation(f, mu, n, reflected=True, probe_depth=probe_depth)
    c_abs = abs(plus.provenance.c_n)
    out = []
    for x in points:
        if x.depth < eval_depth:
            raise InsufficientDepth(
                f"point depth {x.depth} is below eval_depth {eval_depth}"
            )
        f_hat = eval_truncated(f, x, eval_depth)
        e_minus = abs(minus.evaluate(x) - f_hat)
        e_plus = abs(plus.evaluate(x) - f_hat)
        bound = 2.0 * c_abs + e_plus + 1e-9
        out.append(
            BoundCheck(e_minus=e_minus, e_plus=e_plus, bound=bound, holds=e_minus <= bound)
        )
    return out

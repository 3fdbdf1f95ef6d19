"""Empirical property harnesses.

Three kinds of checks, all seeded and deterministic:

* the log-concavity inequality
      mu(t*A + (1-t)*B) >= mu(A)^t * mu(B)^(1-t)
  on axis-aligned box pairs, estimated by Monte Carlo with binomial error
  propagation (and an exact quadrature cross-check in dimension one);
* convergence studies: error quantiles of |approximant - truncated f| over
  a sampled point set as the approximation depth grows, with a closed-form
  tail-standard-deviation allowance for the truncation of f itself;
* the tail-decay criterion: whether |c_n| falls below a threshold by the
  last probed depth.

Almost-everywhere convergence cannot be tested literally; it is
operationalized as quantile decay over a fixed point set, with the pass
thresholds stated in each report.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .approximation import (
    AffineApproximant,
    ApproximantKind,
    affine_support_approximant,
    conditional_expectation,
    half_sum_approximant,
    tail_decay_approximant,
)
from .blocks import BlockMeasure, sample_block
from .errors import HypothesisNotMet, ShapeError
from .functionals import (
    LinearFunctional,
    tail_constant,
    tail_variance,
)
from .product import ProductMeasure, prefix_support, sample_matrix
from .seeds import substream

__all__ = [
    "Box",
    "BoxPair",
    "CheckStatus",
    "ConvexityCheck",
    "check_convexity_inequality",
    "random_box_pairs",
    "block_box_window",
    "ConvergenceReport",
    "run_convergence_study",
    "TailDecayReport",
    "check_tail_decay",
    "WeakIdentityResult",
    "weak_conditional_identity",
]

# Stream tags (paths of length >= 2 never collide with block streams).
_TAG_CONVEXITY = 1
_TAG_TESTFN = 2
_TAG_BOXES = 3

TAIL_DECAY_THRESHOLD = 1e-6


# ---------------------------------------------------------------------------
# Boxes and the log-concavity inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Box:
    """Closed axis-aligned box, lo <= x <= hi coordinate-wise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError("box corners must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ShapeError("box corners must be finite")
        if np.any(lo > hi):
            raise ShapeError("box must satisfy lo <= hi in every coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @classmethod
    def from_corners(cls, a, b) -> "Box":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(np.minimum(a, b), np.maximum(a, b))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)


@dataclass(frozen=True, eq=False)
class BoxPair:
    """Two boxes and an interpolation weight in [0, 1].

    The Minkowski combination t*A + (1-t)*B of axis-aligned boxes is again a
    box, with corners interpolated coordinate-wise; no sampling error enters
    the set construction.
    """

    box_a: Box
    box_b: Box
    lam: float

    def __post_init__(self):
        if self.box_a.dim != self.box_b.dim:
            raise ShapeError("boxes must have equal dimensions")
        if not 0.0 <= self.lam <= 1.0:
            raise ShapeError("lambda must lie in [0, 1]")

    def combined(self) -> Box:
        t = self.lam
        return Box(
            t * self.box_a.lo + (1.0 - t) * self.box_b.lo,
            t * self.box_a.hi + (1.0 - t) * self.box_b.hi,
        )


class CheckStatus(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ConvexityCheck:
    """Monte Carlo verdict on one box pair, plus the exact 1-d cross-check."""

    status: CheckStatus
    p_a: float
    p_b: float
    p_mid: float
    rhs: float
    margin: float
    se_a: float
    se_b: float
    se_mid: float
    rhs_se: float
    samples: int
    lam: float
    exact_masses: tuple | None = None
    exact_ok: bool | None = None

    @property
    def passed(self) -> bool:
        return self.status is CheckStatus.PASS


def _draw_points(measure, rng, count):
    if isinstance(measure, BlockMeasure):
        return sample_block(measure, rng, count)
    return measure.sample(rng, count)


def _binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n))


def check_convexity_inequality(
    measure, pair: BoxPair, samples: int = 100_000, seed: int = 0
) -> ConvexityCheck:
    """Estimate the log-concavity inequality on one box pair.

    Passes when the estimated mass of the combined box is at least the
    geometric mean of the box masses minus three propagated standard
    errors, so that Monte Carlo noise cannot produce false failures.  Box
    pairs where both endpoint boxes have zero estimated mass are reported
    inconclusive (the test has no power there), not failed.

    ``measure`` is a block measure, or any object with ``dim``,
    ``sample(rng, count)`` and optionally ``interval_mass(lo, hi)``; the
    last enables the exact quadrature cross-check in dimension one.
    """
    if samples < 10_000:
        raise ValueError("need at least 10^4 samples")
    dim = measure.dim
    if pair.box_a.dim != dim:
        raise ShapeError(f"boxes have dimension {pair.box_a.dim}, measure has {dim}")
    rng = substream(seed, _TAG_CONVEXITY, 0)
    points = _draw_points(measure, rng, samples)
    mid_box = pair.combined()
    p_a = float(pair.box_a.contains(points).mean())
    p_b = float(pair.box_b.contains(points).mean())
    p_mid = float(mid_box.contains(points).mean())
    se_a = _binomial_se(p_a, samples)
    se_b = _binomial_se(p_b, samples)
    se_mid = _binomial_se(p_mid, samples)
    lam = pair.lam

    if p_a == 0.0 and p_b == 0.0:
        return ConvexityCheck(
            status=CheckStatus.INCONCLUSIVE,
            p_a=p_a, p_b=p_b, p_mid=p_mid, rhs=0.0, margin=p_mid,
            se_a=se_a, se_b=se_b, se_mid=se_mid, rhs_se=0.0,
            samples=samples, lam=lam,
        )

    rhs = p_a**lam * p_b ** (1.0 - lam)
    if p_a > 0.0 and p_b > 0.0:
        rhs_se = rhs * float(
            np.hypot(lam * se_a / p_a, (1.0 - lam) * se_b / p_b)
        )
    else:
        rhs_se = 0.0
    margin = p_mid - (rhs - 3.0 * float(np.hypot(se_mid, rhs_se)))
    mc_ok = margin >= 0.0

    exact_masses = None
    exact_ok = None
    if dim == 1 and hasattr(measure, "interval_mass"):
        m_a = measure.interval_mass(float(pair.box_a.lo[0]), float(pair.box_a.hi[0]))
        m_b = measure.interval_mass(float(pair.box_b.lo[0]), float(pair.box_b.hi[0]))
        m_mid = measure.interval_mass(float(mid_box.lo[0]), float(mid_box.hi[0]))
        exact_masses = (m_a, m_b, m_mid)
        exact_ok = m_mid >= m_a**lam * m_b ** (1.0 - lam) - 1e-6

    ok = mc_ok and (exact_ok is not False)
    return ConvexityCheck(
        status=CheckStatus.PASS if ok else CheckStatus.FAIL,
        p_a=p_a, p_b=p_b, p_mid=p_mid, rhs=rhs, margin=margin,
        se_a=se_a, se_b=se_b, se_mid=se_mid, rhs_se=rhs_se,
        samples=samples, lam=lam,
        exact_masses=exact_masses, exact_ok=exact_ok,
    )


def block_box_window(measure: BlockMeasure) -> tuple[np.ndarray, np.ndarray]:
    """(center, halfwidth) of a window that random test boxes should cover."""
    sd = np.sqrt(np.clip(np.diag(measure.covariance), 0.0, None))
    return measure.mean.copy(), 3.0 * sd + 0.5


def random_box_pairs(center, halfwidth, count: int, rng: np.random.Generator):
    """Random box pairs with corners drawn inside center +- halfwidth."""
    center = np.asarray(center, dtype=float)
    halfwidth = np.asarray(halfwidth, dtype=float)
    lo = center - halfwidth
    hi = center + halfwidth
    pairs = []
    for _ in range(count):
        corners = rng.uniform(lo, hi, size=(4, center.size))
        lam = float(rng.uniform())
        pairs.append(
            BoxPair(
                Box.from_corners(corners[0], corners[1]),
                Box.from_corners(corners[2], corners[3]),
                lam,
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------

_QUANTILES = (0.5, 0.9, 0.99)


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Error quantiles per depth for one approximant kind.

    ``passed`` means: the 0.9-quantile at the largest depth is at most
    max(5 * truncation_bound, 1e-8) and the 0.9-quantile series is
    non-increasing up to 10% slack.  ``truncation_bound`` is the standard
    deviation of the discarded tail of f at the evaluation depth.
    """

    kind: ApproximantKind
    depths: tuple
    q50: np.ndarray
    q90: np.ndarray
    q99: np.ndarray
    c_values: np.ndarray
    truncation_bound: float
    passed: bool
    hypothesis_ok: bool
    point_count: int
    eval_depth: int
    probe_depth: int
    seed: int

    def __post_init__(self):
        for arrname in ("q50", "q90", "q99", "c_values"):
            arr = np.asarray(getattr(self, arrname), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, arrname, arr)
        finite = np.isfinite(self.q50) & np.isfinite(self.q90) & np.isfinite(self.q99)
        if np.any(self.q50[finite] > self.q90[finite]) or np.any(
            self.q90[finite] > self.q99[finite]
        ):
            raise ValueError("quantiles must be non-decreasing within each depth")

    def to_csv(self) -> str:
        lines = ["n,q50,q90,q99,c_n,truncation_bound"]
        for i, n in enumerate(self.depths):
            lines.append(
                f"{n},{self.q50[i]:.12g},{self.q90[i]:.12g},{self.q99[i]:.12g},"
                f"{self.c_values[i]:.12g},{self.truncation_bound:.12g}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "depths": list(self.depths),
            "q50": [_json_float(v) for v in self.q50],
            "q90": [_json_float(v) for v in self.q90],
            "q99": [_json_float(v) for v in self.q99],
            "c_values": [_json_float(v) for v in self.c_values],
            "truncation_bound": _json_float(self.truncation_bound),
            "passed": self.passed,
            "hypothesis_ok": self.hypothesis_ok,
            "point_count": self.point_count,
            "eval_depth": self.eval_depth,
            "probe_depth": self.probe_depth,
            "seed": self.seed,
        }


def _json_float(v) -> float | None:
    v = float(v)
    return v if np.isfinite(v) else None


_BUILDERS = {
    ApproximantKind.COND_EXP: lambda f, mu, n, pd: conditional_expectation(
        f, mu, n, probe_depth=pd
    ),
    ApproximantKind.COND_EXP_REFLECTED: lambda f, mu, n, pd: conditional_expectation(
        f, mu, n, reflected=True, probe_depth=pd
    ),
    ApproximantKind.AFFINE_SUPPORT: lambda f, mu, n, pd: affine_support_approximant(
        f, mu, n, probe_depth=pd
    ),
    ApproximantKind.HALF_SUM: lambda f, mu, n, pd: half_sum_approximant(
        f, mu, n, probe_depth=pd
    ),
    ApproximantKind.TAIL_LINEAR: lambda f, mu, n, pd: tail_decay_approximant(
        f, mu, n, probe_depth=pd
    ),
}


def _hypothesis_ok(kind, f, mu, depths, probe_depth) -> bool:
    if kind is ApproximantKind.AFFINE_SUPPORT:
        return all(
            np.linalg.norm(prefix_support(mu, n).offset) > 1e-10 for n in depths
        )
    if kind is ApproximantKind.HALF_SUM:
        return all(
            np.linalg.norm(mu.block(k).support.offset) <= 1e-10
            for k in range(1, probe_depth + 1)
        )
    if kind is ApproximantKind.TAIL_LINEAR:
        tc = tail_constant(f, mu, depths[-1], probe_depth)
        return abs(tc.value) < TAIL_DECAY_THRESHOLD
    return True


def run_convergence_study(
    f: LinearFunctional,
    mu: ProductMeasure,
    kind,
    depths,
    point_count: int,
    eval_depth: int,
    seed: int,
    probe_depth: int | None = None,
) -> ConvergenceReport:
    """Sample a point set once, then track approximation error over depths.

    The proxy for f is its truncation at ``eval_depth``; the report's
    ``truncation_bound`` (tail standard deviation past the evaluation
    depth, from the closed-form variance series) quantifies what that proxy
    discards.  A failed construction hypothesis is marked on the report,
    not raised; a divergent tail is raised (:class:`TailDiverges`).
    """
    kind = ApproximantKind(kind)
    depths = tuple(int(n) for n in depths)
    if not depths or any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must be a non-empty strictly increasing list")
    if depths[0] < 1:
        raise ValueError("depths must be >= 1")
    if depths[-1] >= eval_depth:
        raise ValueError(
            f"max depth ({depths[-1]}) must be smaller than eval_depth ({eval_depth})"
        )
    if point_count < 1:
        raise ValueError("point_count must be >= 1")
    if probe_depth is None:
        probe_depth = max(2 * eval_depth, 2 * depths[-1])
    if probe_depth <= eval_depth:
        raise ValueError("probe_depth must exceed eval_depth")

    hypothesis_ok = _hypothesis_ok(kind, f, mu, depths, probe_depth)

    mats = sample_matrix(mu, eval_depth, point_count, seed)
    f_hat = np.zeros(point_count)
    for k, mat in enumerate(mats, start=1):
        f_hat += mat @ f.coeff(k, mat.shape[1])

    build = _BUILDERS[kind]
    q50 = np.full(len(depths), np.nan)
    q90 = np.full(len(depths), np.nan)
    q99 = np.full(len(depths), np.nan)
    c_values = np.full(len(depths), np.nan)
    for i, n in enumerate(depths):
        try:
            approx: AffineApproximant = build(f, mu, n, probe_depth)
        except HypothesisNotMet:
            hypothesis_ok = False
            continue
        errors = np.abs(approx.evaluate_blocks(mats[:n]) - f_hat)
        q50[i], q90[i], q99[i] = np.quantile(errors, _QUANTILES)
        c_values[i] = approx.provenance.c_n

    truncation_bound = float(np.sqrt(tail_variance(f, mu, eval_depth, probe_depth)))
    floor = max(5.0 * truncation_bound, 1e-8)
    monotone = bool(
        np.all(np.isfinite(q90)) and np.all(q90[1:] <= 1.1 * q90[:-1])
    )
    passed = bool(np.isfinite(q90[-1]) and q90[-1] <= floor and monotone)
    return ConvergenceReport(
        kind=kind,
        depths=depths,
        q50=q50,
        q90=q90,
        q99=q99,
        c_values=c_values,
        truncation_bound=truncation_bound,
        passed=passed,
        hypothesis_ok=hypothesis_ok,
        point_count=point_count,
        eval_depth=eval_depth,
        probe_depth=probe_depth,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Tail-decay criterion
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TailDecayReport:
    """c_n over a depth ladder and whether it decays below the threshold.

    ``status`` is ``satisfied`` when |c_n| at the last depth is below the
    threshold; ``divergent`` when it is not and the tail probe flagged the
    series as unconverged; ``unverified`` otherwise (converged but not yet
    small: the diagnostic for scenarios outside every hypothesis).
    """

    depths: tuple
    c_values: np.ndarray
    movements: np.ndarray
    converged: tuple
    threshold: float
    probe_depth: int

    def __post_init__(self):
        for arrname in ("c_values", "movements"):
            arr = np.asarray(getattr(self, arrname), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, arrname, arr)

    @property
    def satisfied(self) -> bool:
        return bool(abs(self.c_values[-1]) < self.threshold)

    @property
    def status(self) -> str:
        if self.satisfied:
            return "satisfied"
        if not self.converged[-1]:
            return "divergent"
        return "unverified"

    def to_csv(self) -> str:
        lines = ["n,c_n,movement,converged"]
        for i, n in enumerate(self.depths):
            lines.append(
                f"{n},{self.c_values[i]:.12g},{self.movements[i]:.12g},"
                f"{int(self.converged[i])}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "depths": list(self.depths),
            "c_values": [_json_float(v) for v in self.c_values],
            "movements": [_json_float(v) for v in self.movements],
            "converged": [bool(c) for c in self.converged],
            "threshold": self.threshold,
            "probe_depth": self.probe_depth,
            "satisfied": self.satisfied,
            "status": self.status,
        }


def check_tail_decay(
    f: LinearFunctional,
    mu: ProductMeasure,
    depths,
    probe_depth: int,
    threshold: float = TAIL_DECAY_THRESHOLD,
) -> TailDecayReport:
    """Evaluate the tail constants over a depth ladder."""
    depths = tuple(int(n) for n in depths)
    if not depths or any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must be a non-empty strictly increasing list")
    if probe_depth <= depths[-1]:
        raise ValueError("probe_depth must exceed the last depth")
    cs, moves, flags = [], [], []
    for n in depths:
        tc = tail_constant(f, mu, n, probe_depth)
        cs.append(tc.value)
        moves.append(tc.movement)
        flags.append(tc.converged)
    return TailDecayReport(
        depths=depths,
        c_values=np.array(cs),
        movements=np.array(moves),
        converged=tuple(flags),
        threshold=threshold,
        probe_depth=probe_depth,
    )


# ---------------------------------------------------------------------------
# Weak (defining) identity of the conditional expectation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakIdentityResult:
    test_index: int
    lhs: float
    rhs: float
    diff: float
    combined_se: float
    ok: bool


def weak_conditional_identity(
    f: LinearFunctional,
    mu: ProductMeasure,
    n: int,
    samples: int,
    eval_depth: int,
    seed: int,
    test_count: int = 5,
    probe_depth: int | None = None,
) -> list[WeakIdentityResult]:
    """Monte Carlo check that integrating g*f and g*E[f | first n blocks]
    agree for bounded test functions g of the first n blocks.

    Both integrals are estimated on a shared sample set; g is a tanh of a
    random affine function of the first-n coordinates (bounded, measurable
    with respect to them).  f is proxied by its truncation at ``eval_depth``
    plus the tail constant there, which keeps the identity exact in
    expectation.  Agreement is required within four combined (root sum of
    squares) standard errors.
    """
    if eval_depth <= n:
        raise ValueError("eval_depth must exceed n")
    if probe_depth is None:
        probe_depth = 2 * eval_depth
    approx = conditional_expectation(f, mu, n, probe_depth=probe_depth)
    c_eval = tail_constant(f, mu, eval_depth, probe_depth).value

    mats = sample_matrix(mu, eval_depth, samples, seed)
    f_proxy = np.full(samples, c_eval)
    for k, mat in enumerate(mats, start=1):
        f_proxy += mat @ f.coeff(k, mat.shape[1])
    e_vals = approx.evaluate_blocks(mats[:n])

    first_n = np.hstack(mats[:n])
    results = []
    for j in range(test_count):
        rng = substream(seed, _TAG_TESTFN, j)
        direction = rng.standard_normal(first_n.shape[1])
        bias = rng.standard_normal()
        g = np.tanh(first_n @ direction + bias)
        lhs_samples = g * f_proxy
        rhs_samples = g * e_vals
        lhs = float(lhs_samples.mean())
        rhs = float(rhs_samples.mean())
        se = float(
            np.hypot(
                lhs_samples.std(ddof=1) / np.sqrt(samples),
                rhs_samples.std(ddof=1) / np.sqrt(samples),
            )
        )
        diff = lhs - rhs
        results.append(
            WeakIdentityResult(
                test_index=j, lhs=lhs, rhs=rhs, diff=diff,
                combined_se=se, ok=abs(diff) <= 4.0 * se,
            )
        )
    return results

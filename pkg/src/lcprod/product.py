"""Lazy infinite products of independent block measures.

A product measure is a pure generator of blocks k = 1, 2, ... together with
the cumulative-dimension bookkeeping for its finite prefixes.  Points are
only ever materialized as truncations; the per-block seed derivation in
:mod:`.seeds` makes "the same point at a larger depth" well defined, and no
operation ever picks a truncation depth silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockMeasure, SupportDecomposition, reflect, sample_block
from .errors import InsufficientDepth, InvalidPotential
from .rules import BlockRule, parse_measure_rule
from .seeds import block_stream

__all__ = [
    "ProductMeasure",
    "TruncatedPoint",
    "make_product",
    "reflect_product",
    "sample_matrix",
    "sample_point",
    "sample_points",
    "extend_point",
    "prefix_support",
]

# Blocks up to this index are memoized; deeper blocks are rebuilt on demand
# so that million-block tail scans do not hold a million objects.
_BLOCK_CACHE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class TruncatedPoint:
    """Finite shadow of a point of the infinite product: blocks 1..depth.

    ``seed_path = (seed, index)`` records how the point was drawn so it can
    be extended to a larger depth without changing existing coordinates.
    Hand-built points (no path) cannot be extended.
    """

    coords: tuple
    depth: int
    seed_path: tuple | None = None

    def __post_init__(self):
        coords = tuple(np.asarray(c, dtype=float) for c in self.coords)
        if len(coords) != self.depth:
            raise ValueError(f"depth {self.depth} != number of blocks {len(coords)}")
        for c in coords:
            c.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def block(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.depth:
            raise InsufficientDepth(f"point has depth {self.depth}, block {k} requested")
        return self.coords[k - 1]

    def stacked(self, n: int | None = None) -> np.ndarray:
        """Concatenate blocks 1..n (default: all) into one coordinate vector."""
        n = self.depth if n is None else n
        if n > self.depth:
            raise InsufficientDepth(f"point has depth {self.depth}, prefix {n} requested")
        if n == 0:
            return np.zeros(0)
        return np.concatenate(self.coords[:n])


class ProductMeasure:
    """Product of independent blocks over R^{m_1} x R^{m_2} x ...

    ``block_fn`` must be pure: requesting block k twice yields identical
    parameters.  The measure is immutable and safe for concurrent reads.
    """

    def __init__(self, block_fn, rule: BlockRule | None = None):
        self._block_fn = block_fn
        self.rule = rule
        self._cache: dict[int, BlockMeasure] = {}
        self._cum = [0]

    def block(self, k: int) -> BlockMeasure:
        if k < 1:
            raise ValueError("block index must be >= 1")
        cached = self._cache.get(k)
        if cached is not None:
            return cached
        try:
            blk = self._block_fn(k)
        except InvalidPotential as err:
            if err.block_index is None:
                raise InvalidPotential(str(err), block_index=k) from err
            raise
        if k <= _BLOCK_CACHE_LIMIT:
            self._cache[k] = blk
        return blk

    def cum_dim(self, n: int) -> int:
        """Total dimension of blocks 1..n."""
        if n < 0:
            raise ValueError("prefix length must be >= 0")
        while len(self._cum) <= n:
            self._cum.append(self._cum[-1] + self.block(len(self._cum)).dim)
        return self._cum[n]

    def scalar_moments(self, ks: np.ndarray):
        """Vectorized (means, variances) for scalar-block rules, else None."""
        if self.rule is None:
            return None
        return self.rule.scalar_moments(ks)


def make_product(block_spec) -> ProductMeasure:
    """Build a product measure from a rule text, a BlockRule, or a callable."""
    if isinstance(block_spec, str):
        block_spec = parse_measure_rule(block_spec)
    if isinstance(block_spec, BlockRule):
        return ProductMeasure(block_spec.block, rule=block_spec)
    if callable(block_spec):
        return ProductMeasure(block_spec)
    raise TypeError(f"cannot build a product measure from {type(block_spec).__name__}")


class _ReflectedRule(BlockRule):
    def __init__(self, inner: BlockRule):
        self._inner = inner

    def block(self, k):
        return reflect(self._inner.block(k))

    def block_dim(self, k):
        return self._inner.block_dim(k)

    def scalar_moments(self, ks):
        moments = self._inner.scalar_moments(ks)
        if moments is None:
            return None
        means, variances = moments
        return -means, variances


def reflect_product(mu: ProductMeasure) -> ProductMeasure:
    """The image of the product under x -> -x (blockwise reflection)."""
    rule = _ReflectedRule(mu.rule) if mu.rule is not None else None
    return ProductMeasure(lambda k: reflect(mu.block(k)), rule=rule)


def sample_matrix(mu: ProductMeasure, depth: int, count: int, seed: int) -> list[np.ndarray]:
    """Per-block sample arrays of shape (count, m_k) for blocks 1..depth.

    Block k is drawn from its own stream (seed, k); row i across all blocks
    is the i-th sampled point, so results merge deterministically by index.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return [sample_block(mu.block(k), block_stream(seed, k), count) for k in range(1, depth + 1)]


def sample_points(mu: ProductMeasure, depth: int, count: int, seed: int) -> list[TruncatedPoint]:
    mats = sample_matrix(mu, depth, count, seed)
    return [
        TruncatedPoint(
            coords=tuple(m[i] for m in mats), depth=depth, seed_path=(seed, i)
        )
        for i in range(count)
    ]


def sample_point(mu: ProductMeasure, depth: int, seed: int) -> TruncatedPoint:
    """Sample one point of the product, truncated to ``depth`` blocks."""
    return sample_points(mu, depth, 1, seed)[0]


def extend_point(mu: ProductMeasure, point: TruncatedPoint, new_depth: int) -> TruncatedPoint:
    """Same point, more blocks; existing coordinates are unchanged."""
    if new_depth < point.depth:
        raise ValueError("new depth is smaller than the current depth")
    if new_depth == point.depth:
        return point
    if point.seed_path is None:
        raise ValueError("point carries no seed path and cannot be extended")
    seed, index = point.seed_path
    extra = tuple(
        sample_block(mu.block(k), block_stream(seed, k), index + 1)[index]
        for k in range(point.depth + 1, new_depth + 1)
    )
    return TruncatedPoint(
        coords=point.coords + extra, depth=new_depth, seed_path=point.seed_path
    )


def prefix_support(mu: ProductMeasure, n: int) -> SupportDecomposition:
    """Support of the prefix measure on R^{m_1 + ... + m_n}.

    The linear part is the direct (block-diagonal) sum of the block linear
    parts and the offset is the concatenation of the block offsets,
    re-canonicalized so that it stays orthogonal to the linear part.
    """
    if n < 1:
        raise ValueError("prefix length must be >= 1")
    blocks = [mu.block(k) for k in range(1, n + 1)]
    total_dim = sum(b.dim for b in blocks)
    total_rank = sum(b.support.dim for b in blocks)
    basis = np.zeros((total_dim, total_rank))
    offset = np.zeros(total_dim)
    row = col = 0
    for b in blocks:
        r = b.support.dim
        basis[row : row + b.dim, col : col + r] = b.support.basis
        offset[row : row + b.dim] = b.support.offset
        row += b.dim
        col += r
    if total_rank:
        offset = offset - basis @ (basis.T @ offset)
    return SupportDecomposition(basis, offset)

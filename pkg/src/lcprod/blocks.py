"""Finite-dimensional log-concave block measures.

A block measure on R^m is specified generatively: the caller supplies a
convex potential V (a full-support log-concave density exp(-V) on R^l) and
an injective affine map T from R^l into R^m; the block is the image measure.
Every log-concave measure used by the package arises this way, and the
construction makes the key structural facts directly checkable:

* the support is the affine subspace T(R^l) = L + h, stored canonically
  with h orthogonal to L, so "the support passes through the origin" is the
  literal field test h = 0;
* sampled points lie on the support exactly, because sampling maps domain
  draws through T;
* the mean is the image of the domain mean.

Degenerate blocks (a point mass at h) are permitted via a zero-column
embedding; their sampler returns h constantly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidEmbedding, ShapeError
from .potentials import ConvexPotential, Uniform

__all__ = [
    "AffineMap",
    "SupportDecomposition",
    "BlockMeasure",
    "make_block",
    "point_mass",
    "sample_block",
    "reflect",
    "embed_affine",
]

_ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> matrix @ x + shift with a full-column-rank matrix."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        shift = np.array(self.shift, dtype=float)
        if matrix.ndim != 2:
            raise InvalidEmbedding(f"matrix must be 2-d, got shape {matrix.shape}")
        if shift.ndim != 1 or shift.size != matrix.shape[0]:
            raise InvalidEmbedding(
                f"shift must be a vector of length {matrix.shape[0]}, got shape {shift.shape}"
            )
        if matrix.size and not np.all(np.isfinite(matrix)):
            raise InvalidEmbedding("matrix must be finite")
        if shift.size and not np.all(np.isfinite(shift)):
            raise InvalidEmbedding("shift must be finite")
        m, n = matrix.shape
        if n > m:
            raise InvalidEmbedding(f"matrix {m}x{n} cannot have full column rank")
        if n > 0:
            s = np.linalg.svd(matrix, compute_uv=False)
            if s[0] == 0.0 or s[-1] <= max(m, n) * np.finfo(float).eps * s[0]:
                raise InvalidEmbedding("matrix is rank deficient")
        matrix.setflags(write=False)
        shift.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "shift", shift)

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.eye(dim), np.zeros(dim))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map a batch of row vectors (count, in_dim) -> (count, out_dim)."""
        return points @ self.matrix.T + self.shift

    def apply_vector(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float) + self.shift

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """The map self(inner(x)); raises if the composition loses rank."""
        if inner.out_dim != self.in_dim:
            raise InvalidEmbedding(
                f"cannot compose: inner output dim {inner.out_dim} != outer input dim {self.in_dim}"
            )
        return AffineMap(self.matrix @ inner.matrix, self.matrix @ inner.shift + self.shift)


@dataclass(frozen=True, eq=False)
class SupportDecomposition:
    """Affine subspace L + offset with orthonormal basis of L and offset ⊥ L."""

    basis: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        offset = np.array(self.offset, dtype=float)
        if basis.ndim != 2:
            raise ShapeError(f"basis must be 2-d, got shape {basis.shape}")
        if offset.ndim != 1 or offset.size != basis.shape[0]:
            raise ShapeError("offset length must equal the ambient dimension")
        r = basis.shape[1]
        if r:
            gram = basis.T @ basis
            if np.abs(gram - np.eye(r)).max() > _ORTHO_TOL:
                raise ShapeError("basis columns are not orthonormal")
            if np.abs(basis.T @ offset).max() > _ORTHO_TOL:
                raise ShapeError("offset is not orthogonal to the basis")
        basis.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offset", offset)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def from_affine_map(cls, amap: AffineMap) -> "SupportDecomposition":
        """Canonical decomposition of the image of an injective affine map."""
        m, r = amap.out_dim, amap.in_dim
        if r == 0:
            return cls(np.zeros((m, 0)), amap.shift.copy())
        q, _ = np.linalg.qr(amap.matrix)
        offset = amap.shift - q @ (q.T @ amap.shift)
        return cls(q, offset)

    def distance(self, points) -> np.ndarray | float:
        """Euclidean distance from point(s) to the affine subspace."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        centered = pts - self.offset
        if self.dim:
            centered = centered - (centered @ self.basis) @ self.basis.T
        d = np.linalg.norm(centered, axis=1)
        return float(d[0]) if single else d

    def contains(self, points, tol: float = 1e-10):
        d = self.distance(points)
        return d <= tol

    def passes_through_origin(self, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(self.offset) <= tol)


@dataclass(frozen=True, eq=False)
class BlockMeasure:
    """One factor of the product: a log-concave measure on R^dim."""

    dim: int
    potential: ConvexPotential
    embedding: AffineMap
    support: SupportDecomposition
    mean: np.ndarray

    @cached_property
    def covariance(self) -> np.ndarray:
        m = self.embedding.matrix
        cov = m @ self.potential.domain_covariance() @ m.T
        cov.setflags(write=False)
        return cov

    def interval_mass(self, lo: float, hi: float) -> float:
        """Mass of the interval [lo, hi]; one-dimensional blocks only."""
        if self.dim != 1:
            raise ShapeError("interval_mass is only defined for 1-d blocks")
        b = float(self.embedding.shift[0])
        if self.embedding.in_dim == 0:
            return 1.0 if lo <= b <= hi else 0.0
        a = float(self.embedding.matrix[0, 0])
        lo_d, hi_d = sorted(((lo - b) / a, (hi - b) / a))
        return self.potential.density_interval_mass(lo_d, hi_d)


def make_block(potential: ConvexPotential, embedding: AffineMap | None = None) -> BlockMeasure:
    """Build the image of the density exp(-V) under an injective affine map.

    The support decomposition and the mean are computed here: the mean is
    analytic for the quadratic and flat families and deterministic
    quadrature (abs. tolerance below 1e-8 per coordinate) for the tilted and
    scaled-absolute families, then mapped through the embedding.
    """
    if embedding is None:
        embedding = AffineMap.identity(potential.domain_dim)
    if embedding.in_dim != potential.domain_dim:
        raise InvalidEmbedding(
            f"embedding expects input dimension {embedding.in_dim}, "
            f"potential lives on dimension {potential.domain_dim}"
        )
    support = SupportDecomposition.from_affine_map(embedding)
    mean = embedding.apply_vector(potential.domain_mean())
    mean.setflags(write=False)
    return BlockMeasure(
        dim=embedding.out_dim,
        potential=potential,
        embedding=embedding,
        support=support,
        mean=mean,
    )


def point_mass(location) -> BlockMeasure:
    """Degenerate block: all mass at ``location`` (support = {location})."""
    loc = np.asarray(location, dtype=float)
    embedding = AffineMap(np.zeros((loc.size, 0)), loc)
    return make_block(Uniform(np.zeros((0, 2))), embedding)


def sample_block(measure: BlockMeasure, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` points as rows; deterministic given the generator state.

    Every point lies on the support subspace exactly because draws are made
    in the domain and pushed through the embedding.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    domain = measure.potential.sample_domain(rng, count)
    return measure.embedding.apply(domain)


def reflect(measure: BlockMeasure) -> BlockMeasure:
    """Image of the measure under x -> -x (again log-concave)."""
    embedding = AffineMap(-measure.embedding.matrix, -measure.embedding.shift)
    support = SupportDecomposition(measure.support.basis, -measure.support.offset)
    return BlockMeasure(
        dim=measure.dim,
        potential=measure.potential,
        embedding=embedding,
        support=support,
        mean=-measure.mean,
    )


def embed_affine(measure: BlockMeasure, amap: AffineMap) -> BlockMeasure:
    """Pushforward of a block under a further injective affine map."""
    if amap.in_dim != measure.dim:
        raise InvalidEmbedding(
            f"map expects input dimension {amap.in_dim}, block has dimension {measure.dim}"
        )
    composed = amap.compose(measure.embedding)
    support = SupportDecomposition.from_affine_map(composed)
    mean = amap.apply_vector(measure.mean)
    mean.setflags(write=False)
    return BlockMeasure(
        dim=amap.out_dim,
        potential=measure.potential,
        embedding=composed,
        support=support,
        mean=mean,
    )

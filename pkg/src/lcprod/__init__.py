"""Log-concave product measures on countable products of finite-dimensional
spaces, and finite-dimensional affine approximation of linear functionals.

The package builds product measures whose blocks are affine images of
full-support log-concave densities, represents linear functionals as block
coefficient streams, constructs their conditional expectations onto finite
prefixes (plus the affine-support and half-sum corrections that make the
approximants genuinely linear), and verifies the defining properties
empirically: the log-concavity inequality on box pairs, quantile decay of
approximation errors, tail-constant decay, and the reflection error bound.
"""

__version__ = "0.1.0"

from .approximation import (
    AffineApproximant,
    ApproximantKind,
    ApproximantProvenance,
    BoundCheck,
    affine_support_approximant,
    check_reflection_bound,
    conditional_expectation,
    half_sum_approximant,
    tail_decay_approximant,
)
from .blocks import (
    AffineMap,
    BlockMeasure,
    SupportDecomposition,
    embed_affine,
    make_block,
    point_mass,
    reflect,
    sample_block,
)
from .errors import (
    ConfigError,
    HypothesisNotMet,
    InsufficientDepth,
    InvalidEmbedding,
    InvalidPotential,
    LcprodError,
    RuleSyntaxError,
    ShapeError,
    TailDeclarationError,
    TailDiverges,
    UnsupportedDomain,
)
from .functionals import (
    FiniteSupport,
    LinearFunctional,
    SeminormEstimate,
    SquareSummable,
    TailConstant,
    estimate_seminorm_integral,
    eval_truncated,
    tail_constant,
)
from .potentials import ConvexPotential, LinearTilt, Quadratic, ScaledAbs, Uniform
from .product import (
    ProductMeasure,
    TruncatedPoint,
    extend_point,
    make_product,
    prefix_support,
    reflect_product,
    sample_matrix,
    sample_point,
    sample_points,
)
from .rules import parse_coeff_rule, parse_measure_rule, parse_sequence
from .seeds import block_stream, substream
from .verify import (
    Box,
    BoxPair,
    CheckStatus,
    ConvergenceReport,
    ConvexityCheck,
    TailDecayReport,
    check_convexity_inequality,
    check_tail_decay,
    random_box_pairs,
    run_convergence_study,
    weak_conditional_identity,
)

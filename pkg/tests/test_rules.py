"""The closed-form sequence language and its rule parsers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcprod.errors import RuleSyntaxError, ShapeError
from lcprod.functionals import FiniteSupport, SquareSummable, parse_tail_declaration
from lcprod.rules import (
    parse_coeff_rule,
    parse_measure_rule,
    parse_sequence,
)


class TestSequences:
    @given(
        a=st.floats(-4.0, 4.0),
        r=st.floats(-2.0, 2.0),
        k=st.integers(1, 40),
    )
    @settings(max_examples=100, deadline=None, derandomize=True)
    def test_geom_matches_formula(self, a, r, k):
        seq = parse_sequence(f"geom({a!r}, {r!r})")
        assert seq.value(k) == a * r**k
        np.testing.assert_array_equal(
            seq.values(np.arange(1, 9)), a * r ** np.arange(1.0, 9.0)
        )

    @given(a=st.floats(-4.0, 4.0), p=st.floats(-3.0, 3.0), k=st.integers(1, 40))
    @settings(max_examples=100, deadline=None, derandomize=True)
    def test_pow_matches_formula(self, a, p, k):
        seq = parse_sequence(f"pow({a!r}, {p!r})")
        assert seq.value(k) == a * float(k) ** p

    def test_const(self):
        seq = parse_sequence("const(2.5)")
        assert [seq.value(k) for k in (1, 7)] == [2.5, 2.5]

    def test_scientific_notation_and_signs(self):
        seq = parse_sequence("geom(-1e-2, +0.5)")
        assert seq.value(2) == -1e-2 * 0.25

    @pytest.mark.parametrize(
        "text",
        ["halt(1)", "const()", "geom(1)", "const(1) extra", "geom(1, 0.5", "const(x)"],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(RuleSyntaxError):
            parse_sequence(text)


class TestMeasureRules:
    def test_gaussian_rule(self):
        rule = parse_measure_rule("gaussian(mean=geom(1, 0.5), sd=geom(1, 0.5))")
        block = rule.block(2)
        np.testing.assert_allclose(block.mean, [0.25])
        np.testing.assert_allclose(block.covariance, [[0.0625]])
        means, variances = rule.scalar_moments(np.array([2]))
        assert means[0] == 0.25 and variances[0] == 0.0625

    def test_uniform_rule_moments(self):
        rule = parse_measure_rule("uniform(halfwidth=geom(2, 0.5))")
        means, variances = rule.scalar_moments(np.array([1, 2]))
        np.testing.assert_array_equal(means, [0.0, 0.0])
        np.testing.assert_allclose(variances, [1.0 / 3.0, 0.25 / 3.0])

    def test_tilt_rule_has_no_scalar_moments(self):
        rule = parse_measure_rule("tilt(slope=const(-1), box=[-1, 1])")
        assert rule.scalar_moments(np.array([1])) is None
        assert rule.block(3).dim == 1

    def test_laplace_rule(self):
        rule = parse_measure_rule("laplace(center=const(1), rate=const(2))")
        block = rule.block(1)
        np.testing.assert_allclose(block.mean, [1.0], atol=1e-8)
        np.testing.assert_allclose(block.covariance, [[0.5]])

    def test_explicit_rule_with_pointmass_and_tail(self):
        rule = parse_measure_rule(
            "explicit(pointmass(at=[2, 2]); uniform(box=[[0, 1]]);"
            " tail=gaussian(mean=const(0), sd=const(1)))"
        )
        assert rule.block(1).dim == 2
        np.testing.assert_allclose(rule.block(2).mean, [0.5])
        assert rule.block(3).dim == 1
        assert rule.block_dim(1) == 2 and rule.block_dim(5) == 1

    def test_explicit_embedding_row_major(self):
        rule = parse_measure_rule(
            "explicit(quadratic(center=[0], precision=[[1]])"
            " @ affine(matrix=[[1], [-1]], shift=[0, 1]);"
            " tail=gaussian(mean=const(0), sd=const(1)))"
        )
        block = rule.block(1)
        np.testing.assert_array_equal(block.embedding.matrix, [[1.0], [-1.0]])
        np.testing.assert_array_equal(block.embedding.shift, [0.0, 1.0])

    @pytest.mark.parametrize(
        "text",
        [
            "gauss(mean=const(0), sd=const(1))",
            "gaussian(mean=const(0))",
            "gaussian(mean=const(0), sd=const(1), extra=const(1))",
            "tilt(slope=const(1), box=[1])",
            "explicit(tail=gaussian(mean=const(0), sd=const(1)); pointmass(at=[1]))",
            "explicit(pointmass(at=[1]))",
        ],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(RuleSyntaxError):
            parse_measure_rule(text)


class TestCoeffRules:
    def test_broadcast(self):
        rule = parse_coeff_rule("geom(1, 0.5)")
        np.testing.assert_array_equal(rule.coeff(2, 3), [0.25, 0.25, 0.25])
        np.testing.assert_array_equal(rule.scalar_values(np.array([1, 2])), [0.5, 0.25])

    def test_vector_rule_checks_dimension(self):
        rule = parse_coeff_rule("vector(const(1), const(0))")
        np.testing.assert_array_equal(rule.coeff(5, 2), [1.0, 0.0])
        with pytest.raises(ShapeError):
            rule.coeff(5, 3)

    def test_explicit_with_tail(self):
        rule = parse_coeff_rule("explicit([1, 0]; [2]; tail=const(3))")
        np.testing.assert_array_equal(rule.coeff(1, 2), [1.0, 0.0])
        np.testing.assert_array_equal(rule.coeff(2, 1), [2.0])
        np.testing.assert_array_equal(rule.coeff(3, 2), [3.0, 3.0])
        with pytest.raises(ShapeError):
            rule.coeff(1, 3)

    def test_rejects_malformed(self):
        with pytest.raises(RuleSyntaxError):
            parse_coeff_rule("vector()")
        with pytest.raises(RuleSyntaxError):
            parse_coeff_rule("explicit([1]")


class TestTailDeclarations:
    def test_parses_both_forms(self):
        assert parse_tail_declaration("square_summable") == SquareSummable()
        assert parse_tail_declaration("finite(3)") == FiniteSupport(3)

    @pytest.mark.parametrize("text", ["finite", "finite(a)", "bounded", ""])
    def test_rejects_malformed(self, text):
        with pytest.raises(RuleSyntaxError):
            parse_tail_declaration(text)

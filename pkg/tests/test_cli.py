"""Config parsing, experiment runs, exit codes, determinism."""

import json
from dataclasses import replace

import pytest

from lcprod.cli import (
    DEFAULT_PAIRS,
    DEFAULT_SAMPLES,
    EXIT_HYPOTHESIS_NOT_MET,
    EXIT_PASS,
    EXIT_PROPERTY_FAILURE,
    EXIT_TAIL_DIVERGES,
    main,
    parse_config,
    run_experiment,
)
from lcprod.errors import ConfigError

from scenarios import GAUSS_GEOM_RULE, GAUSS_ZERO_RULE

MINIMAL_CONVEXITY = """
[measure]
rule = "gaussian(mean=const(0), sd=const(1))"

[experiment]
type = convexity
seed = 5
output = {out}
"""

CONVERGENCE = """
[measure]
rule = "{rule}"

[functional]
coeffs = "const(1)"
tail = "square_summable"

[experiment]
type = convergence
kind = {kind}
depths = {depths}
eval_depth = {eval_depth}
probe_depth = {probe_depth}
point_count = {point_count}
seed = {seed}
output = {out}
"""


def quiet(*args, **kwargs):
    pass


class TestParseConfig:
    def test_minimal_convexity_defaults(self, tmp_path):
        config = parse_config(MINIMAL_CONVEXITY.format(out=tmp_path / "o"))
        assert config.experiment == "convexity"
        assert config.samples == DEFAULT_SAMPLES
        assert config.pairs == DEFAULT_PAIRS
        assert config.seed == 5

    def test_depths_must_stay_below_eval_depth(self, tmp_path):
        text = CONVERGENCE.format(
            rule=GAUSS_ZERO_RULE, kind="condexp", depths="2, 4, 12",
            eval_depth=12, probe_depth=32, point_count=100, seed=1, out=tmp_path / "o",
        )
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        message = "\n".join(err.value.errors)
        assert "depths" in message and "eval_depth" in message

    def test_all_errors_collected(self):
        text = """
[measure]
rule = "gaussian(mean=const(0))"

[functional]
bogus = 1

[experiment]
type = convergence
depths = 4, 2
"""
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        message = "\n".join(err.value.errors)
        assert "unknown key 'bogus'" in message
        assert "missing argument" in message
        assert "strictly increasing" in message
        assert "seed is required" in message
        assert "output is required" in message

    def test_unknown_section_and_key_have_line_numbers(self):
        text = "[nowhere]\nx = 1\n"
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any("line 1" in e for e in err.value.errors)

    def test_rule_arithmetic_via_config(self, tmp_path):
        text = CONVERGENCE.format(
            rule=GAUSS_GEOM_RULE, kind="condexp", depths="2, 4",
            eval_depth=12, probe_depth=96, point_count=100, seed=3, out=tmp_path / "o",
        )
        config = parse_config(text)
        from lcprod.product import make_product

        mu = make_product(config.measure_rule)
        assert float(mu.block(2).mean[0]) == 0.25


class TestRunExperiment:
    def test_convergence_pass_and_artifacts(self, tmp_path):
        out = tmp_path / "run" / "gauss"
        config = parse_config(
            CONVERGENCE.format(
                rule=GAUSS_ZERO_RULE, kind="condexp", depths="2, 4, 6, 12, 20, 28, 36",
                eval_depth=40, probe_depth=80, point_count=400, seed=42, out=out,
            )
        )
        code = run_experiment(config, echo=quiet)
        assert code == EXIT_PASS
        csv_text = (tmp_path / "run" / "gauss.csv").read_text()
        assert csv_text.startswith("n,q50,q90,q99,c_n,truncation_bound")
        payload = json.loads((tmp_path / "run" / "gauss.json").read_text())
        assert payload["passed"] is True
        manifest = json.loads((tmp_path / "run" / "gauss.manifest.json").read_text())
        assert manifest["seed"] == 42
        assert "lcprod" in manifest["versions"]

    def test_manifest_config_roundtrip(self, tmp_path):
        out = tmp_path / "rt"
        config = parse_config(
            CONVERGENCE.format(
                rule=GAUSS_ZERO_RULE, kind="condexp", depths="2, 4",
                eval_depth=12, probe_depth=48, point_count=100, seed=9, out=out,
            )
        )
        assert run_experiment(config, echo=quiet) in (EXIT_PASS, EXIT_PROPERTY_FAILURE)
        manifest = json.loads((tmp_path / "rt.manifest.json").read_text())
        assert parse_config(manifest["config_echo"]) == config

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "det"
        config = parse_config(
            CONVERGENCE.format(
                rule=GAUSS_ZERO_RULE, kind="condexp", depths="2, 4, 6",
                eval_depth=16, probe_depth=48, point_count=300, seed=123, out=out,
            )
        )
        run_experiment(config, echo=quiet)
        first_csv = (tmp_path / "det.csv").read_bytes()
        first_json = (tmp_path / "det.json").read_bytes()
        run_experiment(config, echo=quiet)
        assert (tmp_path / "det.csv").read_bytes() == first_csv
        assert (tmp_path / "det.json").read_bytes() == first_json

    def test_convexity_passes(self, tmp_path):
        config = parse_config(MINIMAL_CONVEXITY.format(out=tmp_path / "cvx"))
        config = replace(config, pairs=10, samples=20_000)
        assert run_experiment(config, echo=quiet) == EXIT_PASS
        csv_text = (tmp_path / "cvx.csv").read_text()
        assert csv_text.splitlines()[0] == "pair,lambda,p_a,p_b,p_mid,rhs,margin,status"

    def test_biased_reflected_study_fails_property(self, tmp_path):
        # Reflected conditional expectations carry a -2c_n bias under the
        # geometric-mean scenario, far above the pass floor at shallow depth.
        config = parse_config(
            CONVERGENCE.format(
                rule=GAUSS_GEOM_RULE, kind="condexp_reflected", depths="2, 4",
                eval_depth=12, probe_depth=96, point_count=200, seed=7, out=tmp_path / "bias",
            )
        )
        assert run_experiment(config, echo=quiet) == EXIT_PROPERTY_FAILURE

    def test_affine_support_on_symmetric_measure_exits_hypothesis(self, tmp_path):
        config = parse_config(
            CONVERGENCE.format(
                rule=GAUSS_ZERO_RULE, kind="affine_support", depths="2, 4",
                eval_depth=12, probe_depth=32, point_count=100, seed=8, out=tmp_path / "hyp",
            )
        )
        assert run_experiment(config, echo=quiet) == EXIT_HYPOTHESIS_NOT_MET

    def test_harmonic_criterion_exits_tail_divergence(self, tmp_path):
        text = """
[measure]
rule = "gaussian(mean=pow(1, -1), sd=geom(1, 0.5))"

[functional]
coeffs = "const(1)"

[experiment]
type = criterion
depths = 10, 100, 1000
probe_depth = 100000
seed = 11
output = {out}
""".format(out=tmp_path / "harm")
        config = parse_config(text)
        assert run_experiment(config, echo=quiet) == EXIT_TAIL_DIVERGES
        payload = json.loads((tmp_path / "harm.json").read_text())
        assert payload["status"] == "divergent"
        assert payload["exit_code"] == EXIT_TAIL_DIVERGES

    def test_bound_experiment_passes(self, tmp_path):
        text = """
[measure]
rule = "{rule}"

[functional]
coeffs = "const(1)"

[experiment]
type = bound
depths = 1, 2, 4
eval_depth = 16
point_count = 100
probe_depth = 96
seed = 13
output = {out}
""".format(rule=GAUSS_GEOM_RULE, out=tmp_path / "bound")
        config = parse_config(text)
        assert run_experiment(config, echo=quiet) == EXIT_PASS
        csv_text = (tmp_path / "bound.csv").read_text()
        assert csv_text.splitlines()[0] == "n,c_n,max_e_minus,max_e_plus,max_slack,holds"


class TestMain:
    def test_missing_config_file(self, capsys):
        assert main(["/nonexistent/config.cfg"]) == 1
        assert "cannot read config" in capsys.readouterr().err

    def test_invalid_config_lists_errors(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("[experiment]\ntype = convexity\n")
        assert main([str(path)]) == 1
        err = capsys.readouterr().err
        assert "seed is required" in err
        assert "[measure] rule is required" in err

    def test_output_override(self, tmp_path, capsys):
        path = tmp_path / "ok.cfg"
        path.write_text(
            CONVERGENCE.format(
                rule=GAUSS_ZERO_RULE, kind="condexp", depths="2, 4",
                eval_depth=12, probe_depth=48, point_count=100, seed=21, out=tmp_path / "ignored",
            )
        )
        override = tmp_path / "actual"
        code = main([str(path), "--output", str(override)])
        assert code == EXIT_PASS
        assert (tmp_path / "actual.csv").exists()
        assert not (tmp_path / "ignored.csv").exists()

"""Batch experiment runner.

Configs are flat ``key = value`` files with ``[measure]``, ``[functional]``
and ``[experiment]`` sections; rules are quoted strings in the closed-form
sequence language (see :mod:`.rules`).  Example::

    [measure]
    rule = "gaussian(mean=geom(1, 0.5), sd=geom(1, 0.5))"

    [functional]
    coeffs = "const(1)"
    tail = "square_summable"

    [experiment]
    type = convergence
    kind = condexp
    depths = 2, 4, 6, 12, 20, 28, 36
    eval_depth = 40
    point_count = 1000
    seed = 42
    output = out/gauss

Each run writes ``<output>.csv``, ``<output>.json`` and
``<output>.manifest.json`` (config echo, seed, versions, wall time).  Exit
codes separate mathematical failure from unmet hypotheses: 0 pass,
1 configuration or I/O error, 2 property failure, 3 hypothesis not met,
4 tail divergence.  Given one platform, (config, seed) -> output bytes is
deterministic.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .approximation import ApproximantKind, check_reflection_bound
from .errors import (
    ConfigError,
    HypothesisNotMet,
    InvalidPotential,
    LcprodError,
    RuleSyntaxError,
    TailDeclarationError,
    TailDiverges,
)
from .functionals import LinearFunctional, parse_tail_declaration, tail_constant
from .product import make_product, sample_points
from .rules import parse_coeff_rule, parse_measure_rule
from .seeds import substream
from .verify import (
    _TAG_BOXES,
    block_box_window,
    check_convexity_inequality,
    check_tail_decay,
    random_box_pairs,
    run_convergence_study,
)

__all__ = ["ExperimentConfig", "parse_config", "run_experiment", "main"]

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_PROPERTY_FAILURE = 2
EXIT_HYPOTHESIS_NOT_MET = 3
EXIT_TAIL_DIVERGES = 4

_EXPERIMENTS = ("convexity", "convergence", "criterion", "bound")

_KINDS = {
    "condexp": ApproximantKind.COND_EXP,
    "condexp_reflected": ApproximantKind.COND_EXP_REFLECTED,
    "affine_support": ApproximantKind.AFFINE_SUPPORT,
    "half_sum": ApproximantKind.HALF_SUM,
    "tail_linear": ApproximantKind.TAIL_LINEAR,
}

DEFAULT_SAMPLES = 100_000
DEFAULT_POINT_COUNT = 1_000
DEFAULT_PAIRS = 50


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    measure_rule: str
    seed: int
    output: str
    coeff_rule: str | None = None
    tail_declaration: str = "square_summable"
    kind: str = "condexp"
    depths: tuple = ()
    eval_depth: int | None = None
    probe_depth: int | None = None
    point_count: int = DEFAULT_POINT_COUNT
    samples: int = DEFAULT_SAMPLES
    pairs: int = DEFAULT_PAIRS
    block: int = 1
    source_text: str = ""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_SECTION_KEYS = {
    "measure": {"rule"},
    "functional": {"coeffs", "tail"},
    "experiment": {
        "type", "kind", "depths", "eval_depth", "probe_depth",
        "point_count", "samples", "pairs", "block", "seed", "output",
    },
}


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _parse_int(value: str, where: str, errors: list) -> int | None:
    try:
        return int(value)
    except ValueError:
        errors.append(f"{where}: expected an integer, got {value!r}")
        return None


def _parse_depths(value: str, where: str, errors: list) -> tuple:
    value = value.strip()
    if value.startswith("[") and value.endswith("]"):
        value = value[1:-1]
    out = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        n = _parse_int(part, where, errors)
        if n is None:
            return ()
        out.append(n)
    return tuple(out)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a config; raises ConfigError listing every problem."""
    errors: list[str] = []
    raw: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if section not in _SECTION_KEYS:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside of any section")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _SECTION_KEYS[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in section [{section}]")
            continue
        if (section, key) in raw:
            errors.append(f"line {lineno}: duplicate key {key!r} in section [{section}]")
            continue
        raw[(section, key)] = (value, lineno)

    def take(section, key, default=None):
        entry = raw.get((section, key))
        return entry[0] if entry is not None else default

    experiment = take("experiment", "type", "")
    if experiment not in _EXPERIMENTS:
        errors.append(
            f"[experiment] type: expected one of {', '.join(_EXPERIMENTS)}, got {experiment!r}"
        )

    measure_rule = take("measure", "rule")
    if measure_rule is None:
        errors.append("[measure] rule is required")
        measure_rule = ""
    else:
        measure_rule = _unquote(measure_rule)
        try:
            parse_measure_rule(measure_rule)
        except (RuleSyntaxError, InvalidPotential, LcprodError) as err:
            errors.append(f"[measure] rule: {err}")

    coeff_rule = take("functional", "coeffs")
    if coeff_rule is not None:
        coeff_rule = _unquote(coeff_rule)
        try:
            parse_coeff_rule(coeff_rule)
        except (RuleSyntaxError, LcprodError) as err:
            errors.append(f"[functional] coeffs: {err}")

    tail_declaration = _unquote(take("functional", "tail", "square_summable"))
    try:
        parse_tail_declaration(tail_declaration)
    except RuleSyntaxError as err:
        errors.append(f"[functional] tail: {err}")

    kind = take("experiment", "kind", "condexp")
    if kind not in _KINDS:
        errors.append(
            f"[experiment] kind: expected one of {', '.join(sorted(_KINDS))}, got {kind!r}"
        )
        kind = "condexp"

    depths = _parse_depths(take("experiment", "depths", ""), "[experiment] depths", errors)
    if depths and any(b <= a for a, b in zip(depths, depths[1:])):
        errors.append("[experiment] depths: must be strictly increasing")
    if depths and depths[0] < 1:
        errors.append("[experiment] depths: entries must be >= 1")

    def int_field(section, key, default):
        value = take(section, key)
        if value is None:
            return default
        return _parse_int(value, f"[{section}] {key}", errors)

    eval_depth = int_field("experiment", "eval_depth", None)
    probe_depth = int_field("experiment", "probe_depth", None)
    point_count = int_field("experiment", "point_count", DEFAULT_POINT_COUNT)
    samples = int_field("experiment", "samples", DEFAULT_SAMPLES)
    pairs = int_field("experiment", "pairs", DEFAULT_PAIRS)
    block = int_field("experiment", "block", 1)

    seed_value = take("experiment", "seed")
    seed = None
    if seed_value is None:
        errors.append("[experiment] seed is required (no nondeterministic defaults)")
    else:
        seed = _parse_int(seed_value, "[experiment] seed", errors)
        if seed is not None and seed < 0:
            errors.append("[experiment] seed must be >= 0")

    output = take("experiment", "output")
    if output is None:
        errors.append("[experiment] output is required")
    else:
        output = _unquote(output)

    # Cross-field requirements per experiment type.
    needs_functional = experiment in ("convergence", "criterion", "bound")
    if needs_functional and coeff_rule is None:
        errors.append(f"[functional] coeffs is required for the {experiment} experiment")
    if experiment in ("convergence", "bound"):
        if not depths:
            errors.append(f"[experiment] depths is required for the {experiment} experiment")
        if eval_depth is None:
            errors.append(f"[experiment] eval_depth is required for the {experiment} experiment")
        elif depths and depths[-1] >= eval_depth:
            errors.append(
                f"[experiment] depths: last entry ({depths[-1]}) must be smaller than "
                f"eval_depth ({eval_depth})"
            )
    if experiment == "criterion" and not depths:
        errors.append("[experiment] depths is required for the criterion experiment")
    if experiment == "convexity":
        if samples is not None and samples < 10_000:
            errors.append("[experiment] samples: convexity checks need at least 10000")
        if pairs is not None and pairs < 1:
            errors.append("[experiment] pairs must be >= 1")
        if block is not None and block < 1:
            errors.append("[experiment] block must be >= 1")

    if errors:
        raise ConfigError([f"{source}: {e}" for e in errors])

    return ExperimentConfig(
        experiment=experiment,
        measure_rule=measure_rule,
        coeff_rule=coeff_rule,
        tail_declaration=tail_declaration,
        kind=kind,
        depths=depths,
        eval_depth=eval_depth,
        probe_depth=probe_depth,
        point_count=point_count,
        samples=samples,
        pairs=pairs,
        block=block,
        seed=seed,
        output=output,
        source_text=text,
    )


# ---------------------------------------------------------------------------
# Experiment dispatch
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _functional(config: ExperimentConfig) -> LinearFunctional:
    return LinearFunctional(config.coeff_rule, config.tail_declaration)


def _run_convexity(config: ExperimentConfig):
    mu = make_product(config.measure_rule)
    measure = mu.block(config.block)
    center, halfwidth = block_box_window(measure)
    pairs = random_box_pairs(
        center, halfwidth, config.pairs, substream(config.seed, _TAG_BOXES, config.block)
    )
    rows = ["pair,lambda,p_a,p_b,p_mid,rhs,margin,status"]
    checks = []
    for i, pair in enumerate(pairs):
        check = check_convexity_inequality(
            measure, pair, samples=config.samples, seed=config.seed + i
        )
        checks.append(check)
        rows.append(
            f"{i},{_fmt(pair.lam)},{_fmt(check.p_a)},{_fmt(check.p_b)},"
            f"{_fmt(check.p_mid)},{_fmt(check.rhs)},{_fmt(check.margin)},{check.status.value}"
        )
    failed = sum(c.status.value == "fail" for c in checks)
    inconclusive = sum(c.status.value == "inconclusive" for c in checks)
    payload = {
        "experiment": "convexity",
        "block": config.block,
        "pairs": config.pairs,
        "samples": config.samples,
        "failed": failed,
        "inconclusive": inconclusive,
        "checks": [
            {
                "pair": i,
                "lambda": c.lam,
                "p_a": c.p_a,
                "p_b": c.p_b,
                "p_mid": c.p_mid,
                "rhs": c.rhs,
                "margin": c.margin,
                "status": c.status.value,
                "exact_ok": c.exact_ok,
            }
            for i, c in enumerate(checks)
        ],
    }
    code = EXIT_PASS if failed == 0 else EXIT_PROPERTY_FAILURE
    summary = f"convexity: {len(checks) - failed - inconclusive} pass, {failed} fail, {inconclusive} inconclusive"
    return code, "\n".join(rows) + "\n", payload, summary


def _run_convergence(config: ExperimentConfig):
    mu = make_product(config.measure_rule)
    f = _functional(config)
    report = run_convergence_study(
        f,
        mu,
        _KINDS[config.kind],
        config.depths,
        config.point_count,
        config.eval_depth,
        config.seed,
        probe_depth=config.probe_depth,
    )
    payload = {"experiment": "convergence", **report.to_json_dict()}
    if not report.hypothesis_ok:
        code = EXIT_HYPOTHESIS_NOT_MET
    elif report.passed:
        code = EXIT_PASS
    else:
        code = EXIT_PROPERTY_FAILURE
    summary = (
        f"convergence[{config.kind}]: passed={report.passed} "
        f"hypothesis_ok={report.hypothesis_ok} q90_last={report.q90[-1]:.3e}"
    )
    return code, report.to_csv(), payload, summary


def _run_criterion(config: ExperimentConfig):
    mu = make_product(config.measure_rule)
    f = _functional(config)
    probe = config.probe_depth or 2 * config.depths[-1]
    report = check_tail_decay(f, mu, config.depths, probe)
    payload = {"experiment": "criterion", **report.to_json_dict()}
    status_codes = {
        "satisfied": EXIT_PASS,
        "divergent": EXIT_TAIL_DIVERGES,
        "unverified": EXIT_HYPOTHESIS_NOT_MET,
    }
    summary = f"criterion: status={report.status} c_last={report.c_values[-1]:.6g}"
    return status_codes[report.status], report.to_csv(), payload, summary


def _run_bound(config: ExperimentConfig):
    mu = make_product(config.measure_rule)
    f = _functional(config)
    probe = config.probe_depth or 2 * config.eval_depth
    points = sample_points(mu, config.eval_depth, config.point_count, config.seed)
    rows = ["n,c_n,max_e_minus,max_e_plus,max_slack,holds"]
    all_hold = True
    detail = []
    for n in config.depths:
        checks = check_reflection_bound(
            f, mu, n, points, config.eval_depth, probe_depth=probe
        )
        holds = all(c.holds for c in checks)
        all_hold &= holds
        slack = max(c.e_minus - c.bound for c in checks)
        c_n = tail_constant(f, mu, n, probe).value
        rows.append(
            f"{n},{_fmt(c_n)},{_fmt(max(c.e_minus for c in checks))},"
            f"{_fmt(max(c.e_plus for c in checks))},{_fmt(slack)},{int(holds)}"
        )
        detail.append(
            {
                "n": n,
                "holds": holds,
                "max_e_minus": max(c.e_minus for c in checks),
                "max_e_plus": max(c.e_plus for c in checks),
                "max_slack": slack,
            }
        )
    payload = {
        "experiment": "bound",
        "eval_depth": config.eval_depth,
        "point_count": config.point_count,
        "all_hold": all_hold,
        "per_depth": detail,
    }
    code = EXIT_PASS if all_hold else EXIT_PROPERTY_FAILURE
    summary = f"bound: all_hold={all_hold} over depths {list(config.depths)}"
    return code, "\n".join(rows) + "\n", payload, summary


_RUNNERS = {
    "convexity": _run_convexity,
    "convergence": _run_convergence,
    "criterion": _run_criterion,
    "bound": _run_bound,
}


def run_experiment(config: ExperimentConfig, echo=print) -> int:
    """Run one experiment, persist CSV/JSON/manifest, return the exit code."""
    start = time.monotonic()
    out = Path(config.output)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        echo(f"error: cannot create output directory: {err}", file=sys.stderr)
        return EXIT_ERROR

    status_note = None
    try:
        code, csv_text, payload, summary = _RUNNERS[config.experiment](config)
    except TailDiverges as err:
        code, csv_text, payload = EXIT_TAIL_DIVERGES, None, {"error": str(err)}
        summary = status_note = f"tail diverges: {err}"
    except HypothesisNotMet as err:
        code, csv_text, payload = EXIT_HYPOTHESIS_NOT_MET, None, {"error": str(err)}
        summary = status_note = f"hypothesis not met: {err}"
    except (TailDeclarationError, InvalidPotential) as err:
        echo(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR

    wall = time.monotonic() - start
    payload = dict(payload)
    payload["exit_code"] = code
    if status_note is not None:
        payload["status_note"] = status_note
    manifest = {
        "config_echo": config.source_text,
        "seed": config.seed,
        "experiment": config.experiment,
        "versions": {
            "lcprod": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": wall,
        "outputs": {
            "csv": str(out) + ".csv" if csv_text is not None else None,
            "json": str(out) + ".json",
        },
    }
    try:
        if csv_text is not None:
            Path(str(out) + ".csv").write_text(csv_text)
        Path(str(out) + ".json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n"
        )
        Path(str(out) + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
    except OSError as err:
        echo(f"error: failed to write outputs: {err}", file=sys.stderr)
        return EXIT_ERROR
    echo(summary)
    echo(f"exit {code}; outputs at {out}.csv/.json/.manifest.json ({wall:.2f}s)")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lcprod",
        description="Run log-concave product-measure experiments from a config file.",
    )
    parser.add_argument("config", help="path to the experiment config file")
    parser.add_argument(
        "--output", help="override the [experiment] output path stem", default=None
    )
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_ERROR
    try:
        config = parse_config(text, source=args.config)
    except ConfigError as err:
        for entry in err.errors:
            print(f"error: {entry}", file=sys.stderr)
        return EXIT_ERROR
    if args.output is not None:
        config = replace(config, output=args.output)
    return run_experiment(config)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

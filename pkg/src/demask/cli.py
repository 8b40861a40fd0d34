"""Batch command-line interface.

Every randomized command takes an explicit ``--seed`` (no environment
fallback), so a pipeline script with fixed seeds reproduces its output
byte for byte.  Exit codes: 0 success, 2 usage error, 3 violated
precondition, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import assess, io
from .audit import AuditInstance, conditional_probability, monte_carlo_audit
from .core import NoiseSpec, ObfuscationScheme, Pmf, cdf as pmf_cdf, pmf_from_histogram
from .errors import DemaskError, ValidationError
from .estimators import (
    coordinate_mle,
    ls_constrained,
    mle_backward,
    mle_combined,
    mle_forward,
)
from .likelihood import loglik, model_from_published
from .obfuscate import mask, publish
from .preprocess import split_grouped
from .quantiles import estimate_max, lln_max_estimate, quantile
from .synth import GeneratorConfig, gen_poisson_mixture

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_RUNTIME = 4


def parse_noise(text: str) -> NoiseSpec:
    """Parse a noise flag: ``uniform:a:b``, ``point:c`` or ``pmf:min:p0,p1,...``."""
    parts = text.split(":")
    try:
        if parts[0] == "uniform" and len(parts) == 3:
            return NoiseSpec.uniform(int(parts[1]), int(parts[2]))
        if parts[0] == "point" and len(parts) == 2:
            return NoiseSpec.point_mass(int(parts[1]))
        if parts[0] == "pmf" and len(parts) == 3:
            probs = np.asarray([float(v) for v in parts[2].split(",")])
            return NoiseSpec(Pmf(int(parts[1]), probs))
    except ValueError as exc:
        raise ValidationError(f"bad noise spec {text!r}: {exc}") from exc
    raise ValidationError(
        f"bad noise spec {text!r}; use uniform:a:b, point:c or pmf:min:p0,p1,..."
    )


def parse_range(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValidationError(f"bad range {text!r}; use lo:hi")
    return int(parts[0]), int(parts[1])


def cmd_synth(args) -> int:
    cfg = GeneratorConfig(
        n=args.n, exp_param=args.exp, max_class=args.max_class, seed=args.seed
    )
    hist = gen_poisson_mixture(cfg)
    io.write_histogram_csv(hist, args.output)
    print(
        f"synth: wrote {len(hist.counts)} classes, total {hist.total}, "
        f"to {args.output}"
    )
    return EXIT_OK


def cmd_obfuscate(args) -> int:
    raw = io.read_histogram_csv(args.input)
    scheme = ObfuscationScheme(
        noise=parse_noise(args.noise),
        truncation_at=args.truncate,
        declared_support=parse_range(args.declare_range) if args.declare_range else None,
    )
    masked = mask(raw, scheme, seed=args.seed)
    pub = publish(masked, scheme)
    meta_path = args.meta or str(Path(args.output).with_suffix(".meta.json"))
    io.write_published(pub, args.output, meta_path)
    print(
        f"obfuscate: masked support [{pub.histogram.support_min}, "
        f"{pub.histogram.support_max}], total {pub.histogram.total}; "
        f"wrote {args.output} and {meta_path}"
    )
    return EXIT_OK


def _require_untruncated_uniform(pub, method: str) -> int:
    if pub.truncation_at is not None:
        raise ValidationError(
            f"method {method} needs an untruncated bundle; this one is "
            f"truncated at {pub.truncation_at}"
        )
    probs = pub.noise.pmf.probs
    if not np.allclose(probs, probs[0], rtol=0, atol=1e-12):
        raise ValidationError(f"method {method} needs uniform noise")
    return len(probs)


def cmd_estimate(args) -> int:
    pub = io.read_published(args.input, args.meta)
    model = model_from_published(pub)
    obs = model.obs

    if args.method in ("ls", "ls-qr"):
        report = ls_constrained(model, obs, use_qr=(args.method == "ls-qr"))
    elif args.method in ("mle-fwd", "mle-bwd", "mle-combined"):
        m = _require_untruncated_uniform(pub, args.method)
        fn = {
            "mle-fwd": mle_forward,
            "mle-bwd": mle_backward,
            "mle-combined": mle_combined,
        }[args.method]
        report = fn(obs, m, model.x_len)
    elif args.method == "coord":
        report = coordinate_mle(
            model, grid=args.grid, max_epochs=args.max_epochs, tol=args.tol
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown method {args.method}")

    groups = report.groups or tuple((int(v),) for v in model.mixing.x_values)
    payload = {
        "schema": io.SCHEMA_ESTIMATE,
        "method": report.method,
        "support": [list(g) for g in groups],
        "support_min": int(model.mixing.x_values[0]),
        "p_hat": report.p_hat,
        "cdf": np.cumsum(report.p_hat),
        "negative_components": list(report.negative_components),
        "iterations": report.iterations,
        "final_loglik": report.final_loglik,
        "warnings": list(report.warnings),
    }
    io.dump_json(payload, args.output)

    if args.truth:
        truth_hist = io.read_histogram_csv(args.truth)
        truth_pmf = pmf_from_histogram(truth_hist)
        plot_path = args.plot_csv or str(Path(args.output).with_suffix(".plot.csv"))
        _write_plot_csv(plot_path, groups, report.p_hat, truth_pmf)
        print(f"estimate: wrote comparison CSV to {plot_path}")

    negs = len(report.negative_components)
    print(
        f"estimate[{report.method}]: {model.x_len} components, "
        f"{negs} negative, wrote {args.output}"
    )
    for w in report.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _write_plot_csv(path, groups, p_hat, truth_pmf):
    true_by_value = dict(zip(truth_pmf.support.tolist(), truth_pmf.probs.tolist()))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "true_prob", "estimated_prob"])
        for g, p in zip(groups, p_hat.tolist()):
            for v in g:
                writer.writerow([v, true_by_value.get(v, 0.0), p / len(g)])


def _pmf_from_report(path) -> Pmf:
    report = io.load_json(path)
    if report.get("schema") != io.SCHEMA_ESTIMATE:
        raise ValidationError(f"{path}: not a {io.SCHEMA_ESTIMATE} file")
    p_hat = np.asarray(report["p_hat"], dtype=np.float64)
    if np.any(p_hat < 0):
        raise ValidationError(
            f"{path}: estimate has negative components; quantiles need a "
            "valid PMF (use the coord method)"
        )
    support = report["support"]
    values = [v for g in support for v in g]
    lo, hi = min(values), max(values)
    probs = np.zeros(hi - lo + 1)
    for g, p in zip(support, p_hat.tolist()):
        for v in g:
            probs[v - lo] += p / len(g)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"{path}: estimate does not sum to 1")
    return Pmf(lo, probs / total)


def cmd_quantiles(args) -> int:
    p = _pmf_from_report(args.report)
    levels = sorted(args.q)
    values = [quantile(p, q) for q in levels]
    io.dump_json(
        {"schema": io.SCHEMA_QUANTILES, "levels": levels, "quantiles": values},
        args.output,
    )
    for q, v in zip(levels, values):
        print(f"q={q:g}: {v}")
    return EXIT_OK


def cmd_max(args) -> int:
    p = _pmf_from_report(args.report)
    est = estimate_max(p, eps=args.eps)
    io.dump_json(
        {"schema": io.SCHEMA_MAX, "estimate": est, "eps": args.eps}, args.output
    )
    print(f"max estimate: {est}")
    return EXIT_OK


def cmd_lln_max(args) -> int:
    masked = io.read_histogram_csv(args.input)
    noise = parse_noise(args.noise)
    est = lln_max_estimate(masked, noise, extra_rounds=args.rounds, seed=args.seed)
    io.dump_json(
        {
            "schema": io.SCHEMA_LLN,
            "estimate": est,
            "extra_rounds": args.rounds,
            "noise_mean": noise.mean,
        },
        args.output,
    )
    print(f"lln max estimate: {est}")
    return EXIT_OK


def _parse_counts(text: str):
    return tuple(int(v) for v in text.split(","))


def cmd_audit(args) -> int:
    instance = AuditInstance(
        x_counts=_parse_counts(args.x_counts),
        z_counts=_parse_counts(args.z_counts),
        noise_size=args.noise_size,
    )
    payload = {"schema": io.SCHEMA_AUDIT, "n_classes": instance.n_classes,
               "noise_size": instance.noise_size, "total": instance.total}
    if args.monte_carlo:
        if args.seed is None:
            raise ValidationError("--monte-carlo requires --seed")
        mc = monte_carlo_audit(instance, samples=args.monte_carlo, seed=args.seed)
        payload.update(
            {
                "mode": "monte-carlo",
                "estimate": mc.estimate,
                "std_error": mc.std_error,
                "samples": mc.samples,
                "hits": mc.hits,
                "warnings": list(mc.warnings),
            }
        )
        print(f"audit (mc): estimate {mc.estimate:.6g} +- {mc.std_error:.2g}")
    else:
        res = conditional_probability(instance, max_states=args.max_states)
        payload.update(
            {
                "mode": "exact",
                "numerator": res.numerator,
                "denominator": res.denominator,
                "probability": res.probability,
                "log10_probability": res.log10_probability,
            }
        )
        print(
            f"audit: P = {res.numerator}/{res.denominator} "
            f"(log10 = {res.log10_probability:.4f})"
        )
    io.dump_json(payload, args.output)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    pub = io.read_published(args.input, args.meta)
    model = model_from_published(pub)
    report_json = io.load_json(args.p_hat)
    p_hat = np.asarray(report_json["p_hat"], dtype=np.float64)
    n = args.n or model.total
    options = {}
    if args.estimator == "coord":
        options = {"grid": args.grid, "max_epochs": args.max_epochs, "tol": args.tol}
    noise_size = len(pub.noise.pmf.probs)
    result = assess.bootstrap(
        model,
        p_hat,
        n=n,
        B=args.B,
        estimator=args.estimator,
        seed=args.seed,
        estimator_options=options,
        noise_size=noise_size,
    )
    io.dump_json(
        {
            "schema": io.SCHEMA_BOOTSTRAP,
            "estimator": args.estimator,
            "n": n,
            "B": args.B,
            "replicates": result.replicates,
            "failed": result.failed,
            "variance": result.variance,
            "mse": result.mse,
            "mean": result.mean,
        },
        args.output,
    )
    print(
        f"bootstrap: {result.replicates} replicates ({result.failed} failed), "
        f"variance range [{result.variance.min():.3g}, {result.variance.max():.3g}]"
    )
    return EXIT_OK


def cmd_split_classes(args) -> int:
    groups = io.read_grouped_csv(args.input)
    hist = split_grouped(groups, poisson_mean=args.mean, cap=args.cap)
    io.write_histogram_csv(hist, args.output)
    print(
        f"split-classes: {len(groups)} groups -> support "
        f"[{hist.support_min}, {hist.support_max}], total {hist.total}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demask",
        description="Mask discrete data with additive noise and recover "
        "distributional statistics from the masked histogram.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic raw histogram")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--exp", type=float, default=2.5, help="exponential rate")
    p.add_argument("--max-class", type=int, default=12)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("obfuscate", help="mask a raw histogram and publish the bundle")
    p.add_argument("input")
    p.add_argument("--noise", required=True, help="uniform:a:b | point:c | pmf:min:p0,p1,...")
    p.add_argument("--truncate", type=int, default=None)
    p.add_argument("--declare-range", default=None, help="lo:hi")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True, help="masked histogram CSV")
    p.add_argument("--meta", default=None, help="metadata JSON (default: <output>.meta.json)")
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("estimate", help="recover the true PMF from a published bundle")
    p.add_argument("input", help="published histogram CSV")
    p.add_argument("--meta", required=True, help="metadata JSON of the bundle")
    p.add_argument(
        "--method",
        required=True,
        choices=["ls", "ls-qr", "mle-fwd", "mle-bwd", "mle-combined", "coord"],
    )
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--truth", default=None, help="raw histogram CSV for comparison")
    p.add_argument("--plot-csv", default=None)
    p.add_argument("-o", "--output", required=True, help="estimate report JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("quantiles", help="quantiles of an estimated PMF")
    p.add_argument("--report", required=True, help="estimate report JSON")
    p.add_argument("--q", type=float, action="append", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_quantiles)

    p = sub.add_parser("max", help="extremum estimate from an estimated PMF")
    p.add_argument("--report", required=True)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_max)

    p = sub.add_parser("lln-max", help="repeated-noise range estimator (fails by design)")
    p.add_argument("input", help="masked histogram CSV (untruncated)")
    p.add_argument("--noise", required=True)
    p.add_argument("--rounds", type=int, default=999)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_lln_max)

    p = sub.add_parser("audit", help="matrix-counting disclosure audit")
    p.add_argument("--x-counts", required=True, help="comma-separated row sums")
    p.add_argument("--z-counts", required=True, help="comma-separated anti-diagonal sums")
    p.add_argument("--noise-size", type=int, required=True)
    p.add_argument("--monte-carlo", type=int, default=None, help="sample count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-states", type=int, default=2_000_000)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bootstrap", help="parametric bootstrap variance/MSE")
    p.add_argument("input", help="published histogram CSV")
    p.add_argument("--meta", required=True)
    p.add_argument("--p-hat", required=True, help="estimate report JSON")
    p.add_argument("--n", type=int, default=None, help="replicate sample size")
    p.add_argument("--B", type=int, default=200)
    p.add_argument(
        "--estimator",
        default="coord",
        choices=["coord", "ls", "ls-qr", "mle-fwd", "mle-bwd", "mle-combined", "multinomial"],
    )
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("split-classes", help="split grouped classes into per-value counts")
    p.add_argument("input", help="grouped CSV")
    p.add_argument("--mean", type=float, required=True, help="Poisson reference mean")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_split_classes)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except DemaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

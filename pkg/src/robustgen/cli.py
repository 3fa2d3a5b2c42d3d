"""Configuration-driven command line.

Subcommands: certify, bound, verify, quantile, markov.  Each writes a
deterministic JSON report (manifest + records) plus plot-ready CSV data into
the output directory; wall-clock metadata goes to a separate run_meta.json so
reports stay byte-identical across reruns with the same config and seed.

Exit codes: 0 success, 1 assertion failure, 2 configuration error,
3 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    TRUNCATION_NOTE,
    adaptive_gap_bound,
    iid_gap_bound,
    pseudo_gap_bound,
    sharp_adaptive_gap_bound,
)
from .certificates import certify_margin
from .config import (
    build_experiment,
    load_config,
    load_dataset_csv,
    verify_options,
)
from .errors import ConfigError, RobustgenError
from .harness import (
    certificates_for,
    run_iid_experiment,
    run_markov_experiment,
    run_quantile_experiment,
    train_for,
    verify_certificates,
)
from .sampling import doeblin_params, sample_iid, stationary_distribution


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _write_csv(path: Path, header, rows) -> None:
    def cell(v):
        if hasattr(v, "item"):
            v = v.item()
        return repr(v) if isinstance(v, float) else str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _manifest(subcommand: str, config_path: Path, seed: int, warnings) -> dict:
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    return {
        "toolkit": "robustgen",
        "version": __version__,
        "subcommand": subcommand,
        "config_digest": digest,
        "seed": seed,
        "warnings": sorted(set(warnings)),
    }


def _violation_histogram(outcomes):
    ratios = [
        o.gap / o.bound for o in outcomes
        if o.error is None and o.bound and o.bound > 0
    ]
    edges = np.linspace(0.0, 1.5, 16)
    counts, _ = np.histogram(ratios, bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i]))
        for i in range(len(counts))
    ]


def _cert_records(certs):
    records = []
    for cert in certs:
        records.append({
            "provenance": cert.provenance,
            "gamma": cert.gamma,
            "K": cert.K,
            "epsilon": cert.epsilon,
            "n": cert.n,
            "n_hat": cert.n_hat,
            "sample_independent": cert.sample_independent,
            "aux": dict(cert.aux),
            "notes": list(cert.notes),
        })
    return records


def _training_data(config, args):
    if args.data is not None:
        data = load_dataset_csv(args.data, config.source.space)
        if len(data) != config.n:
            raise ConfigError(
                f"dataset has {len(data)} rows but 'experiment.n' is {config.n}"
            )
        return data
    return sample_iid(config.source, config.n, config.seed, trial=0)


def _cmd_certify(kind, config, args, out_dir):
    if kind == "markov":
        raise ConfigError("certify works on iid/quantile configs; use the markov subcommand")
    samples = _training_data(config, args)
    hyp = train_for(config.learner, samples, config.source.space, seed=config.seed)
    if config.learner.margin_certificate:
        certs = [
            certify_margin(hyp, samples, g, config.source.space, seed=config.seed,
                           max_cells=config.max_cells)
            for g in config.gamma_grid
        ]
    else:
        certs = certificates_for(config.learner, hyp, samples, config.source.space,
                                 config.gamma_grid, config.max_cells)
    records = _cert_records(certs)
    warnings = [note for c in certs for note in c.notes]
    _write_csv(out_dir / "certify_curve.csv",
               ("gamma", "K", "epsilon", "n_hat"),
               [(c.gamma, c.K, c.epsilon, -1 if c.n_hat is None else c.n_hat)
                for c in certs])
    return records, warnings, True


def _cmd_bound(kind, config, args, out_dir):
    if kind == "markov":
        raise ConfigError("bound works on iid/quantile configs; use the markov subcommand")
    samples = _training_data(config, args)
    hyp = train_for(config.learner, samples, config.source.space, seed=config.seed)
    records = []
    warnings = []
    curve = []
    if config.learner.margin_certificate:
        for g in config.gamma_grid:
            cert = certify_margin(hyp, samples, g, config.source.space,
                                  seed=config.seed, max_cells=config.max_cells)
            report = pseudo_gap_bound(cert, config.n, config.delta, config.M)
            records.append(report.as_record())
            warnings.extend(report.notes)
            curve.append((g, cert.K, cert.epsilon, report.value))
    else:
        certs = certificates_for(config.learner, hyp, samples, config.source.space,
                                 config.gamma_grid, config.max_cells)
        for cert in certs:
            report = iid_gap_bound(cert, config.n, config.delta, config.M)
            records.append(report.as_record())
            warnings.extend(report.notes)
            curve.append((cert.gamma, cert.K, cert.epsilon, report.value))
        adaptive = adaptive_gap_bound(certs, config.n, config.delta, config.M)
        records.append(adaptive.as_record())
        warnings.extend(adaptive.notes)
        if all(c.sample_independent for c in certs):
            sharp = sharp_adaptive_gap_bound(certs, config.n, config.delta, config.M)
            records.append(sharp.as_record())
            warnings.extend(sharp.notes)
    _write_csv(out_dir / "bound_curve.csv",
               ("gamma", "K", "epsilon", "bound"), curve)
    return records, warnings, True


def _cmd_verify(kind, config, args, out_dir, raw):
    if kind != "iid":
        raise ConfigError("the verify suite runs on an iid config")
    result = run_iid_experiment(config, threads=args.threads)
    options = verify_options(raw)
    cert_report = verify_certificates(seed=config.seed, **options)
    records = {
        "experiment": {
            "violation_rate": result.violation_rate,
            "violations": result.violations,
            "completed": result.completed,
            "passed": result.passed,
            "outcomes": result.as_records(),
        },
        "certificates": {
            "passed": cert_report.passed,
            "rows": cert_report.as_records(),
        },
    }
    _write_csv(out_dir / "violation_hist.csv",
               ("ratio_lo", "ratio_hi", "count"),
               _violation_histogram(result.outcomes))
    ok = result.passed and cert_report.passed
    return records, [], ok


def _cmd_quantile(kind, config, args, out_dir):
    if kind != "quantile":
        raise ConfigError("'experiment.kind' must be 'quantile' for this subcommand")
    result = run_quantile_experiment(config, threads=args.threads)
    records = {
        "coverage": result.details.get("coverage"),
        "lambda0": result.details.get("lambda0"),
        "passed": result.passed,
        "completed": result.completed,
        "outcomes": result.as_records(),
    }
    rows = []
    for o in result.outcomes:
        if o.error is None:
            d = o.details
            rows.append((o.trial, d["q_lower"], d["q_upper"], d["t_lower"],
                         d["t_upper"], d["pop_quantile"], d["pop_truncated_mean"],
                         int(not o.violated)))
    _write_csv(out_dir / "sandwich.csv",
               ("trial", "q_lower", "q_upper", "t_lower", "t_upper",
                "pop_quantile", "pop_truncated_mean", "covered"), rows)
    ok = result.passed if args.validate else True
    return records, [TRUNCATION_NOTE], ok


def _cmd_markov(kind, config, args, out_dir):
    if kind != "markov":
        raise ConfigError("'experiment.kind' must be 'markov' for this subcommand")
    try:
        alpha, T = doeblin_params(config.source.transition, config.t_max)
    except RobustgenError as exc:
        raise ConfigError(f"chain is not usable: {exc}") from exc
    pi = stationary_distribution(config.source.transition)
    result = run_markov_experiment(config, threads=args.threads)
    records = {
        "alpha": alpha,
        "T": T,
        "pi": [float(p) for p in pi],
        "violation_rate": result.violation_rate,
        "passed": result.passed,
        "completed": result.completed,
        "outcomes": result.as_records(),
    }
    _write_csv(out_dir / "violation_hist.csv",
               ("ratio_lo", "ratio_hi", "count"),
               _violation_histogram(result.outcomes))
    ok = result.passed if args.validate else True
    return records, [], ok


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustgen",
        description="Robustness certificates, generalization bounds, and their"
                    " Monte-Carlo validation.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, text in (
        ("certify", "train a learner and emit its certificates over the gamma grid"),
        ("bound", "evaluate gap bounds on fresh certificates"),
        ("verify", "run the violation-rate suite and certificate soundness checks"),
        ("quantile", "run the quantile/truncated-mean sandwich experiment"),
        ("markov", "chain diagnostics plus the Markov-bound experiment"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--data", default=None, help="CSV dataset (certify/bound)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--threads", type=int, default=1, help="concurrent trials")
        p.add_argument("--validate", action="store_true",
                       help="exit 1 unless all statistical assertions pass")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = time.time()
    try:
        raw = load_config(args.config)
        kind, config = build_experiment(raw, seed_override=args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.subcommand == "certify":
            records, warnings, ok = _cmd_certify(kind, config, args, out_dir)
        elif args.subcommand == "bound":
            records, warnings, ok = _cmd_bound(kind, config, args, out_dir)
        elif args.subcommand == "verify":
            records, warnings, ok = _cmd_verify(kind, config, args, out_dir, raw)
        elif args.subcommand == "quantile":
            records, warnings, ok = _cmd_quantile(kind, config, args, out_dir)
        else:
            records, warnings, ok = _cmd_markov(kind, config, args, out_dir)
        payload = {
            "manifest": _manifest(args.subcommand, args.config, config.seed, warnings),
            "records": records,
        }
        _write_json(out_dir / f"{args.subcommand}_report.json", payload)
        _write_json(out_dir / "run_meta.json", {
            "started_unix": started,
            "elapsed_seconds": time.time() - started,
        })
        if not ok:
            print("assertion failed: see the report for failing records",
                  file=sys.stderr)
            return 1
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RobustgenError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Configuration files and dataset ingestion for the command line.

Configs are TOML with fixed sections; unknown keys are rejected so typos
fail loudly.  Datasets are CSV with a header row, feature columns first and
the label column last.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .harness import ExperimentConfig, LearnerSpec
from .metric_cover import BinaryLabels, Box, Interval, SampleSpace
from .sampling import DistributionSpec, DoeblinChain, LabelModel, Marginal

_NUMBER = (int, float)

# section -> key -> (type, required)
_SCHEMA = {
    "experiment": {
        "kind": (str, True),
        "n": (int, True),
        "delta": (_NUMBER, True),
        "M": (_NUMBER, True),
        "trials": (int, True),
        "gamma_grid": (list, True),
        "probes_per_cell": (int, False),
        "n_mc": (int, False),
        "seed": (int, False),
        "beta": (_NUMBER, False),
        "initial_state": (int, False),
        "t_max": (int, False),
    },
    "space": {
        "lo": (list, True),
        "hi": (list, True),
        "metric": (str, False),
        "labels": (str, True),
        "y_lo": (_NUMBER, False),
        "y_hi": (_NUMBER, False),
    },
    "learner": {
        "kind": (str, True),
        "c": (_NUMBER, False),
        "kernel": (str, False),
        "kernel_width": (_NUMBER, False),
        "margin_certificate": (bool, False),
        "gamma_x": (_NUMBER, False),
        "hidden": (list, False),
        "alpha": (_NUMBER, False),
        "beta": (_NUMBER, False),
        "activation": (str, False),
        "components": (int, False),
    },
    "distribution": {
        "marginals": (str, False),
        "means": (list, False),
        "sds": (list, False),
        "label_kind": (str, False),
        "label_weights": (list, False),
        "label_bias": (_NUMBER, False),
        "label_noise": (_NUMBER, False),
    },
    "chain": {
        "transition": (list, True),
        "emission_lo": (list, True),
        "emission_hi": (list, True),
    },
    "verify": {
        "n_datasets": (int, False),
        "n_train": (int, False),
        "probes_per_cell": (int, False),
        "pairs": (int, False),
    },
}

_KINDS = ("iid", "markov", "quantile")


def load_config(path) -> dict:
    """Parse and schema-check a TOML config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in content.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{section}.{key}'")
            expected, _ = _SCHEMA[section][key]
            if not isinstance(value, expected) or isinstance(value, bool) != (expected is bool):
                raise ConfigError(
                    f"'{section}.{key}' has the wrong type: expected "
                    f"{getattr(expected, '__name__', 'number')}"
                )
    for section, keys in _SCHEMA.items():
        required = [k for k, (_, req) in keys.items() if req]
        if required and section in raw:
            for key in required:
                if key not in raw[section]:
                    raise ConfigError(f"missing required key '{section}.{key}'")
    for section in ("experiment", "space", "learner"):
        if section not in raw:
            raise ConfigError(f"missing required section [{section}]")
    return raw


def build_space(raw: dict) -> SampleSpace:
    sec = raw["space"]
    box = Box(tuple(float(v) for v in sec["lo"]), tuple(float(v) for v in sec["hi"]))
    labels = sec["labels"]
    if labels == "binary":
        outputs = BinaryLabels()
    elif labels == "interval":
        if "y_lo" not in sec or "y_hi" not in sec:
            raise ConfigError("interval labels need 'space.y_lo' and 'space.y_hi'")
        outputs = Interval(float(sec["y_lo"]), float(sec["y_hi"]))
    elif labels == "none":
        outputs = None
    else:
        raise ConfigError(f"'space.labels' must be binary, interval, or none, got {labels!r}")
    return SampleSpace(box, sec.get("metric", "euclidean"), outputs)


def build_learner(raw: dict) -> LearnerSpec:
    sec = raw["learner"]
    return LearnerSpec(
        kind=sec["kind"],
        c=float(sec.get("c", 1.0)),
        kernel=sec.get("kernel", "linear"),
        kernel_width=float(sec.get("kernel_width", 0.5)),
        margin_certificate=sec.get("margin_certificate", False),
        gamma_x=float(sec.get("gamma_x", 0.5)),
        hidden=tuple(int(h) for h in sec.get("hidden", [])),
        alpha=float(sec.get("alpha", 1.0)),
        beta=float(sec.get("beta", 1.0)),
        activation=sec.get("activation", "clipped-identity"),
        components=int(sec.get("components", 1)),
    )


def build_distribution(raw: dict, space: SampleSpace) -> DistributionSpec:
    if "distribution" not in raw:
        raise ConfigError("this experiment needs a [distribution] section")
    sec = raw["distribution"]
    dim = space.input_dim
    kind = sec.get("marginals", "uniform")
    means = sec.get("means", [0.0] * dim)
    sds = sec.get("sds", [1.0] * dim)
    if len(means) != dim or len(sds) != dim:
        raise ConfigError("'distribution.means' and 'distribution.sds' must match the input dimension")
    marginals = tuple(
        Marginal(kind, float(means[j]), float(sds[j])) for j in range(dim)
    )
    label_kind = sec.get("label_kind", "none")
    if label_kind == "none":
        labels = None
    else:
        weights = sec.get("label_weights", [0.0] * dim)
        if len(weights) != dim:
            raise ConfigError("'distribution.label_weights' must match the input dimension")
        labels = LabelModel(
            kind=label_kind,
            weights=tuple(float(w) for w in weights),
            bias=float(sec.get("label_bias", 0.0)),
            noise=float(sec.get("label_noise", 0.0)),
        )
    return DistributionSpec(space, marginals, labels)


def build_chain(raw: dict, space: SampleSpace) -> DoeblinChain:
    if "chain" not in raw:
        raise ConfigError("markov experiments need a [chain] section")
    sec = raw["chain"]
    return DoeblinChain(
        transition=np.array(sec["transition"], dtype=float),
        emission_lo=np.array(sec["emission_lo"], dtype=float),
        emission_hi=np.array(sec["emission_hi"], dtype=float),
        space=space,
    )


def build_experiment(raw: dict, seed_override: int = None):
    """Assemble (kind, ExperimentConfig) from a parsed config."""
    exp = raw["experiment"]
    kind = exp["kind"]
    if kind not in _KINDS:
        raise ConfigError(f"'experiment.kind' must be one of {_KINDS}, got {kind!r}")
    space = build_space(raw)
    learner = build_learner(raw)
    if kind == "markov":
        source = build_chain(raw, space)
    else:
        source = build_distribution(raw, space)
    seed = int(exp.get("seed", 0)) if seed_override is None else int(seed_override)
    config = ExperimentConfig(
        learner=learner,
        source=source,
        n=int(exp["n"]),
        delta=float(exp["delta"]),
        M=float(exp["M"]),
        gamma_grid=tuple(float(g) for g in exp["gamma_grid"]),
        trials=int(exp["trials"]),
        probes_per_cell=int(exp.get("probes_per_cell", 50)),
        n_mc=int(exp.get("n_mc", 50_000)),
        seed=seed,
        beta=float(exp["beta"]) if "beta" in exp else None,
        initial_state=int(exp.get("initial_state", 0)),
        t_max=int(exp.get("t_max", 64)),
    )
    return kind, config


def verify_options(raw: dict) -> dict:
    sec = raw.get("verify", {})
    probes_default = int(raw["experiment"].get("probes_per_cell", 50))
    return {
        "n_datasets": int(sec.get("n_datasets", 20)),
        "n_train": int(sec.get("n_train", 60)),
        "probes_per_cell": int(sec.get("probes_per_cell", probes_default)),
        "pairs": int(sec.get("pairs", 10_000)),
    }


def load_dataset_csv(path, space: SampleSpace) -> np.ndarray:
    """Load a CSV dataset and check every row against the declared space.

    Expects a header row, then numeric rows of feature columns followed by
    the label column (when the space has outputs).  Violations are reported
    with 1-based data row numbers.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    expected = space.point_dim
    rows = []
    bad_rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path} is empty") from None
        if len(header) != expected:
            raise ConfigError(
                f"{path} has {len(header)} columns, the declared space needs {expected}"
            )
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != expected:
                raise ConfigError(f"{path} row {lineno}: expected {expected} cells")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ConfigError(f"{path} row {lineno}: {exc}") from None
    if not rows:
        raise ConfigError(f"{path} contains no data rows")
    data = np.array(rows, dtype=float)
    inside = space.contains(data)
    if not inside.all():
        bad_rows = [int(i) + 1 for i in np.flatnonzero(~inside)[:10]]
        raise ConfigError(
            f"{path}: rows {bad_rows} lie outside the declared space"
        )
    return data

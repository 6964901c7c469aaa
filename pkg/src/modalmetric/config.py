"""Run configuration: sectioned key=value files (INI syntax) with
command-line overrides, resolved into the dataclasses the library
consumes.

Sections mirror the package layout: [data] for the dataset source and
zero-shot split, [train] for the optimization loop, [loss] for margins
and weighting, [eval] for metric knobs, [run] for seeds and output.
"""

import configparser
import os
from dataclasses import dataclass, replace

from .data import (
    CSV_MODALITY_TAGS,
    SyntheticConfig,
    generate_synthetic,
    read_dataset,
    zero_shot_split,
)
from .errors import ConfigError
from .losses import LossConfig
from .training import TrainConfig

# section -> key -> (type, default); the single source of truth for what
# a config file / override may set.
SCHEMA = {
    "data": {
        "source": (str, "synthetic"),
        "n_classes": (int, 16),
        "samples_per_class_per_modality": (int, 32),
        "d_in": (int, 32),
        "sigma": (float, 0.3),
        "offset_norm": (float, 0.6),
        "n_unseen": (int, 4),
        "seed": (int, 7),
    },
    "train": {
        "method": (str, "mathm"),
        "d_emb": (int, 16),
        "classes_per_batch": (int, 8),
        "samples_per_class": (int, 4),
        "base_lr": (float, 1e-4),
        "total_iters": (int, 2000),
        "disc_lr_scale": (float, 100.0),
    },
    "loss": {
        "margin": (float, 0.2),
        "lam": (float, 1.0),
        "eps_g": (float, 1e-6),
    },
    "eval": {
        "k": (int, 100),
        "query_modality": (str, "sketch"),
    },
    "run": {
        "n_seeds": (int, 1),
        "base_seed": (int, 0),
        "out": (str, "runs"),
    },
}


def _convert(section, key, raw):
    kind, _ = SCHEMA[section][key]
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(
            f"[{section}] {key}: expected {kind.__name__}, got {raw!r}"
        ) from None


def _resolve_key(dotted):
    """Map 'section.key' or a unique bare 'key' to (section, key)."""
    if "." in dotted:
        section, _, key = dotted.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        return section, key
    hits = [s for s in SCHEMA if dotted in SCHEMA[s]]
    if not hits:
        raise ConfigError(f"unknown config key {dotted!r}")
    if len(hits) > 1:
        raise ConfigError(
            f"ambiguous config key {dotted!r}; qualify as one of "
            + ", ".join(f"{s}.{dotted}" for s in sorted(hits))
        )
    return hits[0], dotted


def parse_overrides(tokens):
    """Turn leftover CLI tokens ['--key', 'value', ...] into a
    {(section, key): raw value} dict."""
    if len(tokens) % 2 != 0:
        raise ConfigError(f"override flags come in --key value pairs: {tokens}")
    overrides = {}
    for flag, value in zip(tokens[::2], tokens[1::2]):
        if not flag.startswith("--"):
            raise ConfigError(f"expected an override flag, got {flag!r}")
        overrides[_resolve_key(flag[2:])] = value
    return overrides


@dataclass
class RunConfig:
    """Fully resolved experiment description."""

    data: dict
    train: TrainConfig
    eval_k: int
    query_modality: int
    n_seeds: int
    base_seed: int
    out: str

    def seeds(self):
        return [self.base_seed + i for i in range(self.n_seeds)]

    def train_config(self, seed):
        return replace(self.train, seed=seed)

    def load_data(self):
        """Materialize the dataset and its zero-shot split.

        Returns:
            (train_set, test_set): Datasets with disjoint original
            class ids.
        """
        d = self.data
        if d["source"] == "synthetic":
            try:
                synth = SyntheticConfig(
                    n_classes=d["n_classes"],
                    samples_per_class_per_modality=
                        d["samples_per_class_per_modality"],
                    d_in=d["d_in"],
                    sigma=d["sigma"],
                    offset_norm=d["offset_norm"],
                    seed=d["seed"],
                )
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            full = generate_synthetic(synth)
        else:
            full = read_dataset(d["source"])
        try:
            return zero_shot_split(full, d["n_unseen"], seed=d["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path=None, overrides=None, method=None, seed=None, out=None):
    """Assemble a RunConfig from defaults <- file <- overrides <- the
    dedicated --method/--seed/--out flags (highest precedence).

    A --seed flag pins a single run: n_seeds = 1, base_seed = seed.
    """
    values = {s: {k: v for k, (_, v) in keys.items()}
              for s, keys in SCHEMA.items()}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(
                        f"{path}: unknown key {key!r} in [{section}]"
                    )
                values[section][key] = _convert(section, key, raw)
    for (section, key), raw in (overrides or {}).items():
        values[section][key] = _convert(section, key, raw)
    if method is not None:
        values["train"]["method"] = method
    if seed is not None:
        values["run"]["base_seed"] = seed
        values["run"]["n_seeds"] = 1
    if out is not None:
        values["run"]["out"] = out

    if values["run"]["n_seeds"] < 1:
        raise ConfigError("run.n_seeds must be >= 1")
    source = values["data"]["source"]
    if source != "synthetic" and not os.path.exists(source):
        raise ConfigError(f"dataset file not found: {source}")
    tag = values["eval"]["query_modality"].strip().lower()
    if tag not in CSV_MODALITY_TAGS:
        raise ConfigError(
            f"eval.query_modality must be sketch or photo, got {tag!r}"
        )
    query_modality = CSV_MODALITY_TAGS[tag]
    if values["eval"]["k"] < 1:
        raise ConfigError("eval.k must be >= 1")

    try:
        loss = LossConfig(
            margin=values["loss"]["margin"],
            lam=values["loss"]["lam"],
            eps_g=values["loss"]["eps_g"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    train = TrainConfig(
        method=values["train"]["method"],
        d_emb=values["train"]["d_emb"],
        classes_per_batch=values["train"]["classes_per_batch"],
        samples_per_class=values["train"]["samples_per_class"],
        base_lr=values["train"]["base_lr"],
        total_iters=values["train"]["total_iters"],
        disc_lr_scale=values["train"]["disc_lr_scale"],
        seed=values["run"]["base_seed"],
        loss=loss,
    )
    return RunConfig(
        data=dict(values["data"]),
        train=train,
        eval_k=values["eval"]["k"],
        query_modality=query_modality,
        n_seeds=values["run"]["n_seeds"],
        base_seed=values["run"]["base_seed"],
        out=values["run"]["out"],
    )

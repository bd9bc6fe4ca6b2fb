"""Command-line entry point.

Every command takes a JSON run configuration. Exit codes: 0 success,
1 configuration error, 2 input or output error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import numkit
from .datagen import SynthParams, synth_graph
from .evaluation import (
    ClassifierSpec,
    attack_eval,
    link_eval,
    sweep,
    utility_attr_eval,
    write_report,
)
from .gradcheck import run_suite
from .graphcore import AttributeSchema, InputError, load_graph, save_graph, split_edges
from .numkit import NumericError, derive_seed
from .training import (
    ConfigError,
    TrainConfig,
    export_embeddings,
    export_trace,
    load_embeddings,
    train,
)

MODEL_DEFAULTS = {
    "variant": "GAE",
    "d": 64,
    "d_prime": None,
    "hidden": 128,
    "lambda": None,
    "T": 200,
    "k_att": 1,
    "k_dis": 1,
    "lr": 1e-3,
    "lr_att": 1e-3,
    "lr_dis": 1e-3,
    "lr_gen": None,
    "link_loss": "auto",
    "negatives_per_positive": 5,
    "edge_holdout": 0.15,
}

EVAL_DEFAULTS = {
    "classifiers": ["mlp"],
    "fraction": 0.5,
    "utility_fraction": 0.7,
    "repeats": 10,
    "lambda_values": [0.0, 1.0, 10.0, 100.0],
    "dprime_values": [2, 4, 8, 16],
    "fractions": [0.1, 0.3, 0.5, 0.7, 0.9],
    "sweep_repeats": 5,
}

SYNTH_DEFAULTS = {
    "n": 500,
    "private_classes": 2,
    "utility_classes": 4,
    "p_in": 0.08,
    "p_out": 0.01,
    "rho": 0.3,
    "flip_rate": 0.1,
}


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def _merge_section(defaults: dict, given, section: str) -> dict:
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"'{section}' must be an object")
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{key}' in '{section}'")
        merged[key] = value
    return merged


def resolve_config(raw: dict) -> dict:
    conf = {
        "seed": raw.get("seed", 0),
        "output": raw.get("output", "out"),
        "model": _merge_section(MODEL_DEFAULTS, raw.get("model"), "model"),
        "eval": _merge_section(EVAL_DEFAULTS, raw.get("eval"), "eval"),
    }
    if not isinstance(conf["seed"], int):
        raise ConfigError("seed must be an integer")
    known = {"seed", "output", "model", "eval", "data", "synth"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown top-level key '{key}'")
    if "data" in raw and "synth" in raw:
        raise ConfigError("config may declare either 'data' or 'synth', not both")
    if "data" in raw:
        data = raw["data"]
        for need in ("edges", "attributes", "schema"):
            if not isinstance(data, dict) or need not in data:
                raise ConfigError(f"'data' needs '{need}'")
        conf["data"] = data
    if "synth" in raw:
        conf["synth"] = _merge_section(SYNTH_DEFAULTS, raw["synth"], "synth")
    return conf


def build_train_config(conf: dict) -> TrainConfig:
    m = conf["model"]
    cfg = TrainConfig(
        variant=m["variant"],
        d=m["d"],
        d_prime=m["d_prime"],
        hidden=m["hidden"],
        lam=m["lambda"],
        iterations=m["T"],
        k_att=m["k_att"],
        k_dis=m["k_dis"],
        lr=m["lr"],
        lr_att=m["lr_att"],
        lr_dis=m["lr_dis"],
        lr_gen=m["lr_gen"],
        link_mode=m["link_loss"],
        negs_per_pos=m["negatives_per_positive"],
        edge_holdout=m["edge_holdout"],
        seed=conf["seed"],
    )
    return cfg.resolved()


def load_dataset(conf: dict):
    if "data" in conf:
        data = conf["data"]
        try:
            schema = AttributeSchema.from_config(data["schema"])
        except InputError:
            raise
        g = load_graph(data["edges"], data["attributes"], schema)
        return g, schema
    if "synth" in conf:
        s = conf["synth"]
        try:
            params = SynthParams(seed=derive_seed(conf["seed"], "synth"), **s)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad synth parameters: {e}")
        return synth_graph(params)
    raise ConfigError("config needs a 'data' or 'synth' section")


def _out_dir(conf: dict, args) -> Path:
    out = Path(args.out) if args.out else Path(conf["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(conf: dict, out: Path) -> None:
    with open(out / "config_resolved.json", "w", encoding="utf-8") as fh:
        json.dump(conf, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _classifier_specs(conf: dict):
    kinds = conf["eval"]["classifiers"]
    if not isinstance(kinds, list) or not kinds:
        raise ConfigError("eval.classifiers must be a non-empty list")
    try:
        return [ClassifierSpec(kind=k) for k in kinds]
    except ValueError as e:
        raise ConfigError(str(e))


def cmd_synth(conf: dict, args) -> int:
    if "synth" not in conf:
        raise ConfigError("synth command needs a 'synth' section")
    out = _out_dir(conf, args)
    g, schema = load_dataset({k: v for k, v in conf.items() if k != "data"})
    save_graph(g, schema, out / "edges.tsv", out / "attributes.csv")
    _echo_config(conf, out)
    print(f"wrote {out / 'edges.tsv'} ({len(g.edges)} edges) and "
          f"{out / 'attributes.csv'} ({g.n} nodes)")
    return 0


def cmd_train(conf: dict, args) -> int:
    g, schema = load_dataset(conf)
    cfg = build_train_config(conf)
    out = _out_dir(conf, args)
    result = train(g, schema, cfg)
    export_embeddings(result, out / "embeddings.csv")
    export_trace(result.trace, out / "loss_trace.csv")
    _echo_config(conf, out)
    last = result.trace[-1]
    parts = ", ".join(f"{k}={last[k]:.4f}" for k in ("l_link", "l_attr", "l_att", "l_dc", "l_obf")
                      if last.get(k) is not None)
    print(f"{cfg.variant}: {cfg.iterations} iterations in {result.wall_time:.1f}s ({parts})")
    print(f"wrote {out / 'embeddings.csv'}")
    return 0


def _load_labels(g, schema, name):
    labels = g.attributes[name]
    mask = np.where(labels > 0)[0]
    return labels, mask


def cmd_attack(conf: dict, args) -> int:
    g, schema = load_dataset(conf)
    cfg = build_train_config(conf)
    z = load_embeddings(args.embeddings)
    if z.shape[0] != g.n:
        raise InputError(f"embeddings have {z.shape[0]} rows for a {g.n}-node graph")
    out = _out_dir(conf, args)
    priv = schema.private_attribute
    labels, mask = _load_labels(g, schema, priv)
    records = []
    for spec in _classifier_specs(conf):
        records.extend(attack_eval(z, labels, mask, schema.classes[priv], spec,
                                   fraction=conf["eval"]["fraction"],
                                   seed=derive_seed(conf["seed"], "eval/attack"),
                                   repeats=conf["eval"]["repeats"],
                                   method=cfg.variant))
    write_report(records, out / "report.csv")
    _echo_config(conf, out)
    for r in records:
        print(f"{r.task} {r.classifier} {r.metric}: {r.mean:.4f} +/- {r.std:.4f}")
    return 0


def cmd_eval_attr(conf: dict, args) -> int:
    g, schema = load_dataset(conf)
    cfg = build_train_config(conf)
    z = load_embeddings(args.embeddings)
    if z.shape[0] != g.n:
        raise InputError(f"embeddings have {z.shape[0]} rows for a {g.n}-node graph")
    out = _out_dir(conf, args)
    records = []
    for name in schema.utility_attributes:
        labels, mask = _load_labels(g, schema, name)
        for spec in _classifier_specs(conf):
            records.extend(utility_attr_eval(z, labels, mask, schema.classes[name], spec,
                                             fraction=conf["eval"]["utility_fraction"],
                                             seed=derive_seed(conf["seed"], f"eval/{name}"),
                                             repeats=conf["eval"]["repeats"],
                                             method=cfg.variant, name=name))
    write_report(records, out / "report.csv")
    _echo_config(conf, out)
    for r in records:
        print(f"{r.task} {r.classifier} {r.metric}: {r.mean:.4f} +/- {r.std:.4f}")
    return 0


def cmd_eval_link(conf: dict, args) -> int:
    g, schema = load_dataset(conf)
    cfg = build_train_config(conf)
    z = load_embeddings(args.embeddings)
    if z.shape[0] != g.n:
        raise InputError(f"embeddings have {z.shape[0]} rows for a {g.n}-node graph")
    out = _out_dir(conf, args)
    split = split_edges(g, cfg.edge_holdout, derive_seed(cfg.seed, "edges"))
    records = []
    for spec in _classifier_specs(conf):
        records.extend(link_eval(z, split, spec,
                                 seed=derive_seed(conf["seed"], "eval/link"),
                                 method=cfg.variant))
    write_report(records, out / "report.csv")
    _echo_config(conf, out)
    for r in records:
        print(f"{r.task} {r.classifier} {r.metric}: {r.mean:.4f}")
    return 0


def cmd_sweep(conf: dict, args) -> int:
    g, schema = load_dataset(conf)
    cfg = build_train_config(conf)
    out = _out_dir(conf, args)
    axis = args.axis
    values = {"lambda": conf["eval"]["lambda_values"],
              "dprime": conf["eval"]["dprime_values"],
              "fraction": conf["eval"]["fractions"]}[axis]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"no sweep values configured for axis '{axis}'")
    spec = _classifier_specs(conf)[0]
    records = sweep(axis, values, g, schema, cfg, spec,
                    repeats=conf["eval"]["sweep_repeats"],
                    fraction=conf["eval"]["fraction"],
                    seed=derive_seed(conf["seed"], f"sweep/{axis}"))
    write_report(records, out / "report.csv")
    _echo_config(conf, out)
    print(f"wrote {out / 'report.csv'} ({len(records)} rows)")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite()
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  max_err={r.max_error:.3e}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return 0 if failed == 0 else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="privemb",
        description="Privacy-preserving graph embeddings and inference-attack audits.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_config=True, needs_embeddings=False):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--deterministic", action="store_true",
                       help="strict mode: validate kernel outputs for NaN/Inf")
        if needs_embeddings:
            p.add_argument("--embeddings", required=True, help="embeddings CSV to audit")
        return p

    add("synth", "generate a synthetic graph and write it to disk")
    add("train", "train one variant and export the embedding")
    add("attack", "run the inference attack on an exported embedding",
        needs_embeddings=True)
    add("eval-attr", "predict utility attributes from an exported embedding",
        needs_embeddings=True)
    add("eval-link", "score link prediction on the held-out edges",
        needs_embeddings=True)
    p_sweep = add("sweep", "sweep lambda, dprime, or the knowledge fraction")
    p_sweep.add_argument("--axis", required=True, choices=["lambda", "dprime", "fraction"])
    add("gradcheck", "verify every kernel and loss against finite differences",
        needs_config=False)

    args = parser.parse_args(argv)
    if args.deterministic:
        numkit.set_deterministic(True)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        conf = resolve_config(load_config(args.config))
        handler = {
            "synth": cmd_synth,
            "train": cmd_train,
            "attack": cmd_attack,
            "eval-attr": cmd_eval_attr,
            "eval-link": cmd_eval_link,
            "sweep": cmd_sweep,
        }[args.command]
        return handler(conf, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (InputError, OSError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Subcommands: gen-samples, chow-liu, fit, eval, sample, experiment.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .chow_liu import chow_liu_tree, mi_matrix
from .estimator import RankOverestimateError, fit_ttns
from .experiment import (
    ConfigError,
    build_sketch,
    config_template,
    parse_n_list,
    parse_sketch_flag,
    run_experiment,
    validate_config,
)
from .metrics import MetricReport, nll, pairwise_mi, rel_l2_error
from .models import mrf_full_tensor, mrf_sample, preset_model, tree_gm_to_ttns
from .serialize import (
    FormatError,
    load_samples_binary,
    load_samples_text,
    load_ttns,
    save_samples_binary,
    save_samples_text,
    save_ttns,
)
from .tree import RootedTree, TreeStructureError
from .ttns import SamplingError

CONFIG_ERRORS = (ConfigError, FormatError, TreeStructureError, FileNotFoundError)
NUMERICAL_ERRORS = (RankOverestimateError, SamplingError, np.linalg.LinAlgError)


def _load_samples(path: str):
    return (
        load_samples_binary(path)
        if Path(str(path) + ".json").exists()
        else load_samples_text(path)
    )


def _save_samples(samples, path: str, binary: bool):
    if binary:
        save_samples_binary(samples, path)
    else:
        save_samples_text(samples, path)


def cmd_gen_samples(args) -> int:
    preset = preset_model(args.preset)
    samples = mrf_sample(preset.mrf, args.n, seed=args.seed)
    _save_samples(samples, args.out, args.binary)
    print(f"wrote {samples.n_rows} rows over d={samples.d} to {args.out}")
    return 0


def cmd_chow_liu(args) -> int:
    samples = _load_samples(args.samples)
    if args.emit_mi:
        M = mi_matrix(samples)
        np.savetxt(args.emit_mi, M, delimiter=",", fmt="%.17g")
        print(f"wrote MI matrix to {args.emit_mi}")
    tree = chow_liu_tree(samples, root=args.root)
    Path(args.out).write_text(json.dumps(tree.to_dict(), sort_keys=True))
    print(f"wrote tree with edges {list(tree.edges)} to {args.out}")
    return 0


def _resolve_tree(args, samples) -> RootedTree:
    if args.tree:
        return RootedTree.from_dict(json.loads(Path(args.tree).read_text()))
    if not args.preset:
        raise ConfigError("give --tree FILE or --preset NAME")
    preset = preset_model(args.preset)
    source = args.tree_source
    if source == "true":
        return preset.tree
    if source == "path":
        return preset.path
    if source == "chow-liu":
        return chow_liu_tree(samples, root=1)
    raise ConfigError(f"unknown tree source {source!r}")


def cmd_fit(args) -> int:
    samples = _load_samples(args.samples)
    tree = _resolve_tree(args, samples)
    sketch_cfg = parse_sketch_flag(args.sketch)
    if args.seed is not None:
        sketch_cfg.setdefault("seed", args.seed)
    sk = build_sketch(sketch_cfg, tree, samples.state_counts, samples.n_rows)
    if (args.rank is None) == (args.delta is None):
        raise ConfigError("give exactly one of --rank or --delta")
    fit = fit_ttns(samples, tree, sk, ranks=args.rank, delta=args.delta)
    save_ttns(fit.model, args.out)
    diag = fit.diagnostics
    print(f"ranks: { {f'{c}-{p}': r for (c, p), r in sorted(diag.ranks.items())} }")
    print(f"max condition number: {max(diag.cond.values()):.3e}")
    for msg in diag.warnings:
        print(f"warning: {msg}")
    print(f"wrote model to {args.out}.json / {args.out}.bin")
    return 0


def cmd_eval(args) -> int:
    model = load_ttns(args.model)
    rows = []
    if args.samples:
        samples = _load_samples(args.samples)
        val, floored = nll(model, samples)
        rows.append(
            MetricReport("nll", val, "sample-based", model_id=args.model,
                         reference_id=args.samples, n_samples=samples.n_rows)
        )
        if floored:
            print(f"note: {floored} rows hit the probability floor", file=sys.stderr)
    if args.preset:
        preset = preset_model(args.preset)
        size = int(np.prod(preset.mrf.state_counts))
        if size <= 2**20:
            ref = mrf_full_tensor(preset.mrf)
            rows.append(
                MetricReport("rel_l2_error",
                             rel_l2_error(model.contract_full(), ref),
                             "dense", model_id=args.model, reference_id=args.preset)
            )
        elif preset.mrf.is_tree_structured():
            ref = tree_gm_to_ttns(preset.mrf, preset.tree)
            rows.append(
                MetricReport("rel_l2_error", rel_l2_error(model, ref),
                             "ttns-contraction", model_id=args.model,
                             reference_id=args.preset)
            )
    if args.pair:
        i, j = (int(x) for x in args.pair.split(","))
        rows.append(
            MetricReport(f"pairwise_mi_{i}_{j}", pairwise_mi(model, i, j),
                         "ttns-contraction", model_id=args.model)
        )
    text = MetricReport.csv_header() + "\n" + "".join(r.csv_row() + "\n" for r in rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sample(args) -> int:
    model = load_ttns(args.model)
    samples = model.draw_samples(args.n, seed=args.seed)
    _save_samples(samples, args.out, args.binary)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    if args.emit_template:
        text = json.dumps(config_template(), indent=2, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text)
        else:
            print(text)
        return 0
    obj = {}
    if args.config:
        obj = json.loads(Path(args.config).read_text())
    if args.preset:
        obj["preset"] = args.preset
    if args.out:
        obj["out"] = args.out
    if args.n_list:
        obj["n_list"] = parse_n_list(args.n_list)
    if args.seeds:
        obj["seeds"] = [int(s) for s in args.seeds.split(",")]
    if args.sketch:
        obj["sketch"] = parse_sketch_flag(args.sketch)
    if args.rank is not None:
        obj["rank"] = args.rank
        obj.pop("delta", None)
    if args.delta is not None:
        obj["delta"] = args.delta
        obj.pop("rank", None)
    if args.emit_mi:
        obj["emit_mi"] = True
    cfg = validate_config(obj)
    out_dir = run_experiment(cfg)
    print(f"experiment outputs in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttnsketch",
        description="Tree tensor network density estimation via sketched linear systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-samples", help="draw exact samples from a preset model")
    p.add_argument("--preset", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_gen_samples)

    p = sub.add_parser("chow-liu", help="recover a tree topology from samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--root", type=int, default=1)
    p.add_argument("--emit-mi", metavar="PATH", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_chow_liu)

    p = sub.add_parser("fit", help="fit a model by sketched linear systems")
    p.add_argument("--samples", required=True)
    p.add_argument("--tree", help="tree JSON file")
    p.add_argument("--preset", help="preset supplying the tree")
    p.add_argument("--tree-source", choices=["true", "path", "chow-liu"], default="true")
    p.add_argument("--sketch", default="markov",
                   help="markov | lmarkov:L | perturbative[:eps[:l]] | ring-sets")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="sketch seed")
    p.add_argument("--out", required=True, help="output base path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a fitted model")
    p.add_argument("--model", required=True, help="model base path")
    p.add_argument("--samples", default=None)
    p.add_argument("--preset", default=None, help="reference ground truth")
    p.add_argument("--pair", default=None, help="i,j for pairwise MI")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw i.i.d. rows from a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("experiment", help="run a configured N-sweep with baselines")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--n-list", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--sketch", default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--emit-mi", action="store_true")
    p.add_argument("--emit-template", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

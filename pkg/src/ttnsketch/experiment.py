"""Config-driven experiment runs: N-sweeps over seeds with baselines,
per-run metric rows, and a median/slope aggregate."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .chow_liu import chow_liu_model, chow_liu_tree, mi_matrix
from .estimator import fit_ttns
from .metrics import MetricReport, nll, rel_l2_error
from .models import ModelPreset, mrf_full_tensor, mrf_sample, preset_model, tree_gm_to_ttns
from .sketches import l_markov_sketch, markov_sketch, perturbative_sketch
from .serialize import save_ttns
from .tree import RootedTree

DENSE_METRIC_GUARD = 2**20


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    preset: str
    tree: str = "true"  # true | path | chow-liu
    sketch: dict[str, Any] = field(default_factory=lambda: {"kind": "markov"})
    rank: int | None = None
    ranks: dict[tuple[int, int], int] | None = None
    delta: float | None = None
    n_list: list[int] = field(default_factory=lambda: [2**12])
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "runs"
    baselines: list[str] = field(default_factory=lambda: ["gm-true", "chow-liu"])
    save_models: bool = False
    emit_mi: bool = False

    def resolved(self) -> dict:
        return {
            "preset": self.preset,
            "tree": self.tree,
            "sketch": self.sketch,
            "rank": self.rank,
            "ranks": None
            if self.ranks is None
            else {f"{c}-{p}": r for (c, p), r in sorted(self.ranks.items())},
            "delta": self.delta,
            "n_list": self.n_list,
            "seeds": self.seeds,
            "out": self.out,
            "baselines": self.baselines,
            "save_models": self.save_models,
            "emit_mi": self.emit_mi,
        }


def parse_n_list(text: str) -> list[int]:
    """Comma-separated counts; each entry is an integer or 2^k."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item.startswith("2^"):
            out.append(2 ** int(item[2:]))
        else:
            out.append(int(item))
    if not out:
        raise ConfigError(f"empty sample-size list: {text!r}")
    return out


def config_template() -> dict:
    return {
        "preset": "trident10",
        "tree": "true",
        "sketch": {"kind": "markov"},
        "rank": 2,
        "delta": None,
        "n_list": [1024, 4096],
        "seeds": [0, 1, 2],
        "out": "runs",
        "baselines": ["gm-true", "chow-liu"],
        "save_models": False,
        "emit_mi": False,
    }


def validate_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - set(config_template())
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "preset" not in obj:
        raise ConfigError("config needs a preset name")
    cfg = ExperimentConfig(preset=obj["preset"])
    cfg.tree = obj.get("tree", "true")
    if cfg.tree not in ("true", "path", "chow-liu"):
        raise ConfigError(f"unknown tree source: {cfg.tree!r}")
    cfg.sketch = obj.get("sketch", {"kind": "markov"})
    if "kind" not in cfg.sketch:
        raise ConfigError("sketch block needs a kind")
    n_list = obj.get("n_list", [2**12])
    if isinstance(n_list, str):
        n_list = parse_n_list(n_list)
    cfg.n_list = [int(n) for n in n_list]
    if any(n < 1 for n in cfg.n_list):
        raise ConfigError("sample sizes must be positive")
    cfg.seeds = [int(s) for s in obj.get("seeds", [0])]
    cfg.rank = obj.get("rank")
    cfg.delta = obj.get("delta")
    ranks = obj.get("ranks")
    if ranks is not None:
        cfg.ranks = {}
        for key, r in ranks.items():
            c, p = key.split("-")
            cfg.ranks[(int(c), int(p))] = int(r)
    given = sum(x is not None for x in (cfg.rank, cfg.ranks, cfg.delta))
    if given != 1:
        raise ConfigError("give exactly one of rank, ranks, or delta")
    cfg.out = obj.get("out", "runs")
    cfg.baselines = list(obj.get("baselines", ["gm-true", "chow-liu"]))
    unknown_b = set(cfg.baselines) - {"gm-true", "gm-path", "chow-liu"}
    if unknown_b:
        raise ConfigError(f"unknown baselines: {sorted(unknown_b)}")
    cfg.save_models = bool(obj.get("save_models", False))
    cfg.emit_mi = bool(obj.get("emit_mi", False))
    return cfg


def build_sketch(cfg_sketch: dict, tree: RootedTree, state_counts, n_samples: int):
    """Instantiate the sketch family named by a config block."""
    kind = cfg_sketch["kind"]
    if kind == "markov":
        return markov_sketch(tree, state_counts)
    if kind in ("lmarkov", "l-markov"):
        return l_markov_sketch(tree, state_counts, L=int(cfg_sketch.get("L", 2)))
    if kind == "custom-sets":
        sets = {int(k): v for k, v in cfg_sketch["sets"].items()}
        return l_markov_sketch(tree, state_counts, sets=sets)
    if kind == "ring-sets":
        # the long-range set family used for cycles: neighbors plus both ends
        d = tree.d
        sets = {
            k: sorted({v for v in (k - 1, k, k + 1) if 1 <= v <= d} | {1, d})
            for k in tree.nodes
        }
        return l_markov_sketch(tree, state_counts, sets=sets)
    if kind == "perturbative":
        eps = cfg_sketch.get("eps")
        if eps is None and "eps_c" in cfg_sketch:
            eps = float(cfg_sketch["eps_c"]) * n_samples ** (
                -float(cfg_sketch.get("eps_f", 0.0))
            )
        eps = 0.05 if eps is None else float(eps)
        return perturbative_sketch(
            tree,
            state_counts,
            eps=eps,
            bond_dims=int(cfg_sketch.get("l", 20)),
            seed=int(cfg_sketch.get("seed", 0)),
            distribution=cfg_sketch.get("distribution", "uniform"),
        )
    raise ConfigError(f"unknown sketch kind: {kind!r}")


def parse_sketch_flag(text: str) -> dict:
    """CLI shorthand: markov | lmarkov:L | perturbative | ring-sets."""
    parts = text.split(":")
    kind = parts[0]
    if kind == "markov":
        return {"kind": "markov"}
    if kind == "lmarkov":
        return {"kind": "lmarkov", "L": int(parts[1]) if len(parts) > 1 else 2}
    if kind == "perturbative":
        out: dict[str, Any] = {"kind": "perturbative"}
        if len(parts) > 1:
            out["eps"] = float(parts[1])
        if len(parts) > 2:
            out["l"] = int(parts[2])
        return out
    if kind == "ring-sets":
        return {"kind": "ring-sets"}
    raise ConfigError(f"unknown sketch spec: {text!r}")


def _reference_models(preset: ModelPreset):
    """Dense tensor (small state spaces) and exact TTNS (tree models)."""
    size = int(np.prod(preset.mrf.state_counts))
    dense = mrf_full_tensor(preset.mrf) if size <= DENSE_METRIC_GUARD else None
    exact = (
        tree_gm_to_ttns(preset.mrf, preset.tree)
        if preset.mrf.is_tree_structured()
        else None
    )
    return dense, exact


def _error_row(model, dense_ref, ttns_ref, name, N, seed) -> MetricReport | None:
    if dense_ref is not None:
        return MetricReport(
            "rel_l2_error",
            rel_l2_error(model.contract_full(), dense_ref),
            "dense",
            model_id=name,
            reference_id="ground-truth",
            n_samples=N,
            seed=seed,
        )
    if ttns_ref is not None and model.tree.to_dict() == ttns_ref.tree.to_dict():
        return MetricReport(
            "rel_l2_error",
            rel_l2_error(model, ttns_ref),
            "ttns-contraction",
            model_id=name,
            reference_id="ground-truth",
            n_samples=N,
            seed=seed,
        )
    return None


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Execute the sweep; returns the output directory.

    Writes runs.csv (per-run metric rows), aggregate.csv (median error per
    sample size and the fitted log-log slope) and manifest.json. Per-run
    failures are recorded in the manifest and do not stop the sweep.
    """
    preset = preset_model(cfg.preset)
    dense_ref, ttns_ref = _reference_models(preset)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[MetricReport] = []
    failures: list[dict] = []
    errors_by_model: dict[str, dict[int, list[float]]] = {}

    for N in cfg.n_list:
        for seed in cfg.seeds:
            try:
                samples = mrf_sample(preset.mrf, N, seed=seed)
                if cfg.tree == "true":
                    tree = preset.tree
                elif cfg.tree == "path":
                    tree = preset.path
                else:
                    tree = chow_liu_tree(samples, root=1)
                if cfg.emit_mi:
                    M = mi_matrix(samples)
                    np.savetxt(
                        out_dir / f"mi-N{N}-s{seed}.csv", M, delimiter=",", fmt="%.17g"
                    )
                sk = build_sketch(cfg.sketch, tree, preset.mrf.state_counts, N)
                ranks = cfg.ranks if cfg.ranks is not None else cfg.rank
                fit = fit_ttns(
                    samples, tree, sk, ranks=ranks, delta=cfg.delta
                )
                fitted = {"ttns-sketch": fit.model}
                if "gm-true" in cfg.baselines:
                    fitted["gm-true"] = chow_liu_model(samples, preset.tree)
                if "gm-path" in cfg.baselines:
                    fitted["gm-path"] = chow_liu_model(samples, preset.path)
                if "chow-liu" in cfg.baselines:
                    cl_tree = chow_liu_tree(samples, root=1)
                    fitted["chow-liu"] = chow_liu_model(samples, cl_tree)
                for name, model in fitted.items():
                    row = _error_row(model, dense_ref, ttns_ref, name, N, seed)
                    if row is not None:
                        rows.append(row)
                        errors_by_model.setdefault(name, {}).setdefault(
                            N, []
                        ).append(row.value)
                    val, _ = nll(model, samples)
                    rows.append(
                        MetricReport(
                            "nll", val, "sample-based",
                            model_id=name, reference_id="train-samples",
                            n_samples=N, seed=seed,
                        )
                    )
                if cfg.save_models:
                    save_ttns(fit.model, out_dir / f"fit-N{N}-s{seed}")
            except Exception as exc:  # recorded, sweep continues
                failures.append(
                    {"N": N, "seed": seed, "error": f"{type(exc).__name__}: {exc}"}
                )

    runs_path = out_dir / "runs.csv"
    with runs_path.open("w") as fh:
        fh.write(MetricReport.csv_header() + "\n")
        for row in rows:
            fh.write(row.csv_row() + "\n")

    agg_path = out_dir / "aggregate.csv"
    with agg_path.open("w") as fh:
        fh.write("model,N,median_rel_l2_error\n")
        slopes = {}
        for name in sorted(errors_by_model):
            by_n = errors_by_model[name]
            meds = {N: float(np.median(v)) for N, v in sorted(by_n.items())}
            for N, med in meds.items():
                fh.write(f"{name},{N},{med!r}\n")
            if len(meds) >= 2 and all(m > 0 for m in meds.values()):
                xs = np.log(np.array(sorted(meds)))
                ys = np.log(np.array([meds[N] for N in sorted(meds)]))
                slopes[name] = float(np.polyfit(xs, ys, 1)[0])
        for name, slope in sorted(slopes.items()):
            fh.write(f"{name},slope,{slope!r}\n")

    manifest = {
        "config": cfg.resolved(),
        "format_versions": {"samples": 1, "model": 1},
        "runs_total": len(cfg.n_list) * len(cfg.seeds),
        "failures": failures,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out_dir

"""Command-line entry point.

Every subcommand reads one TOML config. Relative paths in the config are
resolved against the config file's directory. Exit codes: 0 success,
1 usage or config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import zlib
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .geometry import GeometryError, GridSpec
from .graph import GraphError, Material, Structure, agn_forward, create_library, gen_topology, load_material_map, wheel_topology
from .nn import MLPSpec, NonFiniteGradientError, OptimizerConfig
from .search import AnnealingSchedule, BounceGradConfig, MetaState, NumericError, adapt, bouncegrad, evaluate
from .taskbench import (
    MetasetError,
    NormalizationStats,
    SyntheticSpec,
    TaskDataset,
    apply_normalization,
    atomic_write,
    dump_json,
    fit_normalization,
    generate_gen_metaset,
    generate_synthetic_metaset,
    load_metaset,
    mse_to_distance,
    normalized_mse,
    pooled_baseline,
    read_task_csv,
    save_metaset,
    split_roles,
)

log = logging.getLogger("modagn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT_FORMAT = "modagn-checkpoint"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


SCHEMA: dict[str, dict] = {
    "paths": {"metaset": None, "checkpoint": None, "output": None},
    "run": {"seed": 0},
    "data": {
        "kind": "wheel",
        "n_tasks": 50,
        "n_meta_train": 40,
        "points_per_task": 250,
        "n_train": 50,
        "n_node_modules": 4,
        "n_edge_modules": 4,
        "n_exterior": 4,
        "noise_sigma": 0.05,
        "hidden_dim": 16,
        "module_hidden": [32],
        "mp_steps": 5,
        "generator_gain": 2.0,
        "material_probs": [0.55, 0.15, 0.1, 0.2],
    },
    "grid": {"x_min": -0.1, "x_max": 0.1, "y_min": -0.1, "y_max": 0.1, "rows": 5, "cols": 5},
    "model": {
        "kind": "wheel",
        "n_exterior": 4,
        "hidden_dim": 16,
        "module_hidden": [32],
        "activation": "tanh",
        "n_node_modules": 4,
        "n_edge_modules": 4,
        "mp_steps": 5,
        "material_map": None,
    },
    "train": {
        "steps": 2000,
        "batch_size": 32,
        "grad_batch_size": 32,
        "t0": 1.0,
        "t_final": 0.01,
        "optimizer": "adam",
        "lr": 1e-3,
        "propose": True,
        "log_every": 500,
    },
    "adapt": {"budget": 500, "t0": 1.0, "t_final": 0.01},
    "baseline": {"hidden": [64, 64], "steps": 5000, "batch_size": 64, "lr": 1e-3},
}

_CHOICES = {("data", "kind"): ("wheel", "gen"), ("model", "kind"): ("wheel", "gen"),
            ("model", "activation"): ("tanh", "relu"), ("train", "optimizer"): ("adam", "sgd")}
_PATH_KEYS = {("paths", "metaset"), ("paths", "checkpoint"), ("paths", "output"), ("model", "material_map")}


def _check_type(section, key, value, default):
    where = f"[{section}] {key}"
    if default is None:  # optional path
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
    elif isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
    elif isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where} must be a list of numbers")
    choices = _CHOICES.get((section, key))
    if choices and value not in choices:
        raise ConfigError(f"{where} must be one of {', '.join(choices)}, got {value!r}")
    return value


def load_config(path, seed_override: int | None = None) -> dict:
    """Parse and validate a TOML run config; unknown sections or keys are errors."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    cfg = {}
    for section, defaults in SCHEMA.items():
        given = raw.pop(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = sorted(set(given) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
        sec = {}
        for key, default in defaults.items():
            value = _check_type(section, key, given[key], default) if key in given else default
            if (section, key) in _PATH_KEYS and value is not None:
                value = str((path.parent / value).resolve()) if not Path(value).is_absolute() else value
            sec[key] = value
        cfg[section] = sec
    if raw:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(raw))}")
    if seed_override is not None:
        cfg["run"]["seed"] = seed_override
    return cfg


def _need(cfg, section, key, command):
    if cfg[section][key] is None:
        raise ConfigError(f"{command} requires [{section}] {key}")
    return cfg[section][key]


def _grid(cfg) -> GridSpec:
    try:
        return GridSpec(**cfg["grid"])
    except GeometryError as e:
        raise ConfigError(f"[grid] {e}") from None


def _seed(seed: int, *words) -> np.random.SeedSequence:
    """Child seed for one consumer, keyed by name so adding consumers never shifts others."""
    return np.random.SeedSequence([seed, *(zlib.crc32(w.encode()) for w in words)])


def _int_seed(seed: int, *words) -> int:
    return int(_seed(seed, *words).generate_state(1)[0])


# --- generate ---------------------------------------------------------------------------


def cmd_generate(cfg) -> int:
    out = _need(cfg, "paths", "metaset", "generate")
    d = cfg["data"]
    if not 0 <= d["n_meta_train"] <= d["n_tasks"]:
        raise ConfigError("[data] n_meta_train must lie between 0 and n_tasks")
    try:
        spec = SyntheticSpec(
            n_tasks=d["n_tasks"], points_per_task=d["points_per_task"], n_train=d["n_train"],
            n_node_modules=d["n_node_modules"], n_edge_modules=d["n_edge_modules"], n_exterior=d["n_exterior"],
            noise_sigma=d["noise_sigma"], seed=cfg["run"]["seed"], hidden_dim=d["hidden_dim"],
            module_hidden=tuple(int(h) for h in d["module_hidden"]), mp_steps=d["mp_steps"],
            generator_gain=d["generator_gain"],
        )
    except ValueError as e:
        raise ConfigError(f"[data] {e}") from None
    if d["kind"] == "gen":
        tasks, truth = generate_gen_metaset(spec, _grid(cfg), tuple(d["material_probs"]))
    else:
        tasks, truth = generate_synthetic_metaset(spec)
    split_roles(tasks, d["n_meta_train"])
    stats = fit_normalization([t for t in tasks if t.role == "meta_train"]) if d["n_meta_train"] else None
    extra = {"kind": d["kind"], "seed": cfg["run"]["seed"]}
    if d["kind"] == "gen":
        extra["grid"] = cfg["grid"]
    save_metaset(out, tasks, stats, truth, extra)
    log.info("wrote %d tasks to %s", len(tasks), out)
    return EXIT_OK


# --- shared model plumbing ----------------------------------------------------------------


class Model:
    """Topology factory plus hyperparameters, restored identically from a checkpoint."""

    def __init__(self, model_cfg: dict, grid_cfg: dict, stats: NormalizationStats):
        self.cfg = dict(model_cfg)
        self.grid_cfg = dict(grid_cfg)
        self.stats = stats
        self.kind = model_cfg["kind"]
        self.T = model_cfg["mp_steps"]
        if self.kind == "wheel":
            try:
                self._wheel = wheel_topology(model_cfg["n_exterior"])
            except GraphError as e:
                raise ConfigError(f"[model] {e}") from None
        else:
            # inputs are normalized, so the grid lives in normalized coordinates too
            self.grid = GridSpec(**grid_cfg).scaled(stats.in_scale[0], stats.in_scale[1])

    def sizes(self) -> tuple[int, int]:
        if self.kind == "gen":
            return len(Material), 1
        return self.cfg["n_node_modules"], self.cfg["n_edge_modules"]

    def new_library(self, seed: int):
        n_node, n_edge = self.sizes()
        try:
            return create_library(
                n_node, n_edge, self.cfg["hidden_dim"], tuple(int(h) for h in self.cfg["module_hidden"]),
                self.cfg["activation"], seed, pusher=self.kind == "wheel", readout=self.kind == "gen",
            )
        except (GraphError, ValueError) as e:
            raise ConfigError(f"[model] {e}") from None

    def topology(self, task: TaskDataset):
        """(topology, fixed structure or None) for one task."""
        if self.kind == "wheel":
            return self._wheel, None
        if task.materials is None:
            raise DataError(f"task {task.task_id} has no material map; GEN models need one")
        try:
            return gen_topology(self.grid, task.materials)
        except GraphError as e:
            raise DataError(f"task {task.task_id}: {e}") from None

    def to_dict(self) -> dict:
        return {"model": self.cfg, "grid": self.grid_cfg}


def _load_tasks(cfg):
    path = _need(cfg, "paths", "metaset", "this command")
    if not Path(path).exists():
        raise DataError(f"metaset not found: {path}")
    return load_metaset(path)


def _check_schedule(sec: dict, name: str):
    if not 0 < sec["t_final"] <= sec["t0"]:
        raise ConfigError(f"[{name}] needs 0 < t_final <= t0")


def _adapt_task(model: Model, library, task: TaskDataset, cfg: dict, seed: int) -> dict:
    """Frozen-library search on the task's train split; metrics on its test split."""
    topo, fixed = model.topology(task)
    Xtr, Ytr = task.train
    Xte, Yte = task.test
    a = cfg["adapt"]
    _check_schedule(a, "adapt")
    if a["budget"] < 0:
        raise ConfigError("[adapt] budget must be >= 0")
    if fixed is not None:
        S = init = fixed
        loss = init_loss = evaluate(topo, fixed, library, Xtr, Ytr, model.T) if len(Xtr) else None
    else:
        if len(Xtr) == 0:
            raise DataError(f"task {task.task_id} has no training rows to adapt on")
        sched = AnnealingSchedule.reaching(a["t0"], a["t_final"], a["budget"])
        r = adapt(Xtr, Ytr, topo, library, a["budget"], sched, np.random.default_rng(_seed(seed, "adapt", task.task_id)),
                  model.T)
        S, loss, init, init_loss = r.structure, r.loss, r.initial, r.initial_loss
    test_mse = None
    if len(Xte):
        pred, _ = agn_forward(topo, S, library, Xte, model.T)
        test_mse = normalized_mse(pred, Yte)
        if not math.isfinite(test_mse):
            raise NumericError(f"non-finite test error on task {task.task_id}")
    return {
        "id": task.task_id,
        "structure": S.to_dict(),
        "train_loss": loss,
        "initial_structure": init.to_dict(),
        "initial_train_loss": init_loss,
        "test_normalized_mse": test_mse,
        "test_distance_mm": None if test_mse is None else mse_to_distance(test_mse),
    }


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _method_row(name, mse):
    return {"method": name, "normalized_mse": mse, "distance_mm": None if mse is None else mse_to_distance(mse)}


# --- train -------------------------------------------------------------------------------


def cmd_train(cfg) -> int:
    ckpt_path = Path(_need(cfg, "paths", "checkpoint", "train"))
    out = Path(_need(cfg, "paths", "output", "train"))
    ms = _load_tasks(cfg)
    train_tasks = ms.meta_train
    if not train_tasks:
        raise DataError("metaset has no meta_train tasks")
    stats = ms.stats or fit_normalization(train_tasks)
    seed = cfg["run"]["seed"]
    model = Model(cfg["model"], cfg["grid"], stats)
    norm_train = [apply_normalization(stats, t) for t in train_tasks]
    topos, fixed = zip(*(model.topology(t) for t in norm_train))
    t = cfg["train"]
    gen = model.kind == "gen"
    try:
        bg = BounceGradConfig(
            steps=t["steps"], batch_size=t["batch_size"], grad_batch_size=t["grad_batch_size"], mp_steps=model.T,
            t0=t["t0"], t_final=t["t_final"], optimizer=OptimizerConfig(t["optimizer"], t["lr"]),
            propose=t["propose"] and not gen,
        )
    except ValueError as e:
        raise ConfigError(f"[train] {e}") from None
    _check_schedule(t, "train")
    library = model.new_library(_int_seed(seed, "library"))
    # meta-train tasks contribute every sample; their split only matters at meta-test time
    pools = [(t.x, t.y) for t in norm_train]
    curve = io.StringIO()
    w = csv.writer(curve, lineterminator="\n")
    w.writerow(["step", "task", "train_loss", "accepted", "temperature"])
    every = max(1, t["log_every"])

    def on_step(r):
        w.writerow([r.step, train_tasks[r.task].task_id, repr(r.loss), "" if r.accepted is None else int(r.accepted), repr(r.temperature)])
        if (r.step + 1) % every == 0:
            log.info("step %d  task %s  loss %.4g  T %.3g", r.step + 1, train_tasks[r.task].task_id, r.loss, r.temperature)

    state = bouncegrad(
        pools, list(topos), library, bg, seed=_int_seed(seed, "bouncegrad"),
        structures=list(fixed) if gen else None, on_step=on_step,
    )
    checkpoint = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "seed": seed,
        **model.to_dict(),
        "normalization": stats.to_dict(),
        "train": t,
        "task_ids": [t.task_id for t in train_tasks],
        "state": state.to_dict(),
    }
    per_task = [_adapt_task(model, state.library, apply_normalization(stats, t), cfg, seed) for t in ms.meta_test]
    mean = _mean_or_none(r["test_normalized_mse"] for r in per_task)
    summary = {
        "method": "meta-learned AGN",
        "meta_test_normalized_mse": mean,
        "distance_mm": None if mean is None else mse_to_distance(mean),
        "seed": seed,
        "steps": state.step,
        "meta_test_tasks": per_task,
        "meta_train_structures": {tid: s.to_dict() for tid, s in zip(checkpoint["task_ids"], state.structures)},
    }
    atomic_write(ckpt_path, dump_json(checkpoint))
    atomic_write(out / "curve.csv", curve.getvalue())
    atomic_write(out / "summary.json", dump_json(summary))
    log.info("meta-test normalized MSE %s", "n/a" if mean is None else f"{mean:.4f}")
    return EXIT_OK


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        ck = json.loads(path.read_text())
        if ck.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"{path} is not a checkpoint")
        stats = NormalizationStats.from_dict(ck["normalization"])
        state = MetaState.from_dict(ck["state"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: malformed checkpoint ({e})") from None
    return ck, stats, state


# --- adapt -------------------------------------------------------------------------------


def _resolve_task(cfg, spec: str, n_train: int) -> TaskDataset:
    p = Path(spec)
    if p.suffix == ".csv" or p.exists():
        if not p.exists():
            raise DataError(f"task file not found: {p}")
        task = read_task_csv(p, n_train=n_train)
        mats = p.with_suffix(".materials")
        if mats.exists():
            task.materials = load_material_map(mats)
        elif cfg["model"]["material_map"]:
            task.materials = load_material_map(cfg["model"]["material_map"])
        return task
    return _load_tasks(cfg).by_id(spec)


def cmd_adapt(cfg, task_spec: str) -> int:
    ck, stats, state = load_checkpoint(_need(cfg, "paths", "checkpoint", "adapt"))
    out = Path(_need(cfg, "paths", "output", "adapt"))
    model = Model(ck["model"], ck["grid"], stats)
    task = _resolve_task(cfg, task_spec, cfg["data"]["n_train"])
    res = _adapt_task(model, state.library, apply_normalization(stats, task), cfg, cfg["run"]["seed"])
    res["method"] = f"meta-learned AGN, task {task.task_id}"
    res["budget"] = cfg["adapt"]["budget"]
    atomic_write(out / f"adapt_{task.task_id}.json", dump_json(res))
    log.info("task %s: test normalized MSE %s", task.task_id, res["test_normalized_mse"])
    return EXIT_OK


# --- eval --------------------------------------------------------------------------------


def cmd_eval(cfg) -> int:
    ck, stats, state = load_checkpoint(_need(cfg, "paths", "checkpoint", "eval"))
    out = Path(_need(cfg, "paths", "output", "eval"))
    ms = _load_tasks(cfg)
    if not ms.meta_test:
        raise DataError("metaset has no meta_test tasks")
    seed = cfg["run"]["seed"]
    model = Model(ck["model"], ck["grid"], stats)
    test = [apply_normalization(stats, t) for t in ms.meta_test]
    per_task = [_adapt_task(model, state.library, t, cfg, seed) for t in test]
    rows = [_method_row("predict no movement", _mean_or_none(normalized_mse(np.zeros_like(t.test[1]), t.test[1]) for t in test))]
    b = cfg["baseline"]
    if ms.meta_train:
        pooled = pooled_baseline(
            [apply_normalization(stats, t) for t in ms.meta_train], MLPSpec(3, tuple(int(h) for h in b["hidden"]), 3),
            OptimizerConfig(lr=b["lr"]), b["steps"], b["batch_size"], _int_seed(seed, "pooled"),
        )
        rows.append(_method_row("pooled regressor", _mean_or_none(normalized_mse(pooled.predict(t.test[0]), t.test[1]) for t in test)))
    rows.append(_method_row("meta-learned AGN", _mean_or_none(r["test_normalized_mse"] for r in per_task)))
    truth = ms.ground_truth()
    if truth is not None:
        rows.append(_method_row("ground-truth generator", _oracle_mse(ms, truth, stats)))
    atomic_write(out / "eval.json", dump_json({"results": rows, "meta_test_tasks": per_task, "seed": seed}))
    for r in rows:
        log.info("%-24s %s", r["method"], r["normalized_mse"])
    return EXIT_OK


def _oracle_mse(ms, truth: dict, stats: NormalizationStats):
    from .graph import ModuleLibrary

    library = ModuleLibrary.from_dict(truth["library"])
    index = {t.task_id: i for i, t in enumerate(ms.tasks)}
    gen = ms.manifest.get("kind") == "gen"
    vals = []
    for t in ms.meta_test:
        S = Structure.from_dict(truth["structures"][index[t.task_id]])
        if gen:
            if "grid" not in ms.manifest or t.materials is None:
                continue
            topo, _ = gen_topology(GridSpec(**ms.manifest["grid"]), t.materials)
        else:
            topo = wheel_topology(len(S.node_assign) - 1)
        X, Y = t.test
        pred, _ = agn_forward(topo, S, library, X, truth["mp_steps"])
        vals.append(normalized_mse(pred * np.array(stats.out_scale), Y * np.array(stats.out_scale)))
    return _mean_or_none(vals)


# --- report ------------------------------------------------------------------------------


def _summary_rows(path: Path) -> list[dict]:
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed summary ({e})") from None
    if isinstance(d, dict) and d.get("format") == CHECKPOINT_FORMAT:
        return []  # checkpoints often share the output directory
    if isinstance(d, dict) and isinstance(d.get("results"), list):
        raw = d["results"]
    elif isinstance(d, dict) and "method" in d and "meta_test_normalized_mse" in d:
        raw = [{"method": d["method"], "normalized_mse": d["meta_test_normalized_mse"]}]
    elif isinstance(d, dict) and "method" in d and "test_normalized_mse" in d:
        raw = [{"method": d["method"], "normalized_mse": d["test_normalized_mse"]}]
    else:
        raise DataError(f"{path}: malformed summary (no results)")
    rows = []
    for r in raw:
        if not isinstance(r, dict) or not isinstance(r.get("method"), str) or "normalized_mse" not in r:
            raise DataError(f"{path}: malformed summary row {r!r}")
        m = r["normalized_mse"]
        if m is not None and (isinstance(m, bool) or not isinstance(m, (int, float)) or m < 0 or not math.isfinite(m)):
            raise DataError(f"{path}: bad normalized_mse {m!r} for {r['method']}")
        rows.append(_method_row(r["method"], None if m is None else float(m)))
    return rows


def format_table(rows: list[dict]) -> tuple[str, str]:
    """(csv text, aligned text) built from the same formatted cells."""
    cells = [("method", "normalized MSE", "distance equivalent (mm)")]
    for r in rows:
        mse = "n/a" if r["normalized_mse"] is None else f"{r['normalized_mse']:.2f}"
        mm = "n/a" if r["distance_mm"] is None else f"{r['distance_mm']:.1f}"
        cells.append((r["method"], mse, mm))
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(cells)
    widths = [max(len(c[i]) for c in cells) for i in range(3)]
    lines = [f"{c[0]:<{widths[0]}}  {c[1]:>{widths[1]}}  {c[2]:>{widths[2]}}" for c in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return buf.getvalue(), "\n".join(lines) + "\n"


def cmd_report(in_dir, out_dir) -> int:
    src = Path(in_dir)
    if not src.is_dir():
        raise ConfigError(f"report input is not a directory: {src}")
    files = sorted(src.glob("*.json"))
    if not files:
        raise ConfigError(f"no summary JSON files in {src}")
    rows = [r for f in files for r in _summary_rows(f)]
    if not rows:
        raise ConfigError(f"no summary JSON files in {src}")
    text_csv, text = format_table(rows)
    atomic_write(Path(out_dir) / "results.csv", text_csv)
    atomic_write(Path(out_dir) / "results.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


# --- entry point -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override [run] seed")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS, help="log progress to stderr")
    p = _Parser(prog="modagn", description="Modular meta-learning over abstract graph networks.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("generate", "write a synthetic metaset"), ("train", "run BounceGrad and evaluate on meta-test tasks"),
                       ("eval", "compare baselines and the trained model on meta-test tasks")):
        s = sub.add_parser(name, help=text, parents=[common])
        s.add_argument("--config", required=True)
    s = sub.add_parser("adapt", help="search a structure for one task with the library frozen", parents=[common])
    s.add_argument("--config", required=True)
    s.add_argument("--task", required=True, help="task id in the metaset, or a task CSV path")
    s = sub.add_parser("report", help="tabulate summary JSON files", parents=[common])
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--out", dest="out_dir", required=True)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"modagn: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    seed = getattr(args, "seed", None)
    try:
        if args.command == "report":
            return cmd_report(args.in_dir, args.out_dir)
        cfg = load_config(args.config, seed)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "adapt":
            return cmd_adapt(cfg, args.task)
        return cmd_eval(cfg)
    except ConfigError as e:
        print(f"modagn: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, MetasetError, GraphError, GeometryError, OSError) as e:
        print(f"modagn: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, NonFiniteGradientError, FloatingPointError) as e:
        print(f"modagn: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Meta-datasets: synthetic task generation, file I/O, normalization, metrics, pooled baseline."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import GridSpec
from .graph import (
    GraphTopology,
    Material,
    ModuleLibrary,
    Structure,
    agn_forward,
    create_library,
    format_material_map,
    gen_topology,
    load_material_map,
    wheel_topology,
)
from .nn import MLPParams, MLPSpec, Optimizer, OptimizerConfig, init_params, mlp_backward, mlp_forward
from .search import initialize_structure, sample_batch

CSV_HEADER = ["x_px", "x_py", "x_pth", "y_dx", "y_dy", "y_dth"]
MM_PER_UNIT_RMSE = 21.6  # no-motion error on the reference surface, in millimetres
MANIFEST = "manifest.json"


class MetasetError(ValueError):
    pass


@dataclass
class TaskDataset:
    task_id: str
    x: np.ndarray  # (n, 3)
    y: np.ndarray  # (n, 3)
    n_train: int
    role: str = "meta_train"  # or "meta_test"
    materials: list | None = None  # GEN tasks: rows x cols Material grid

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1, 3)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1, 3)
        if len(self.x) != len(self.y):
            raise MetasetError(f"task {self.task_id}: {len(self.x)} inputs but {len(self.y)} outputs")
        if not 0 <= self.n_train <= len(self.x):
            raise MetasetError(f"task {self.task_id}: train split {self.n_train} exceeds {len(self.x)} samples")

    @property
    def train_idx(self) -> np.ndarray:
        return np.arange(self.n_train)

    @property
    def test_idx(self) -> np.ndarray:
        return np.arange(self.n_train, len(self.x))

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[: self.n_train], self.y[: self.n_train]

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[self.n_train :], self.y[self.n_train :]


@dataclass(frozen=True)
class NormalizationStats:
    in_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    out_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if any(not (s > 0 and math.isfinite(s)) for s in (*self.in_scale, *self.out_scale)):
            raise MetasetError("normalization scales must be positive and finite")

    def to_dict(self) -> dict:
        return {"in_scale": list(self.in_scale), "out_scale": list(self.out_scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(tuple(d["in_scale"]), tuple(d["out_scale"]))


def _rms_scale(v: np.ndarray, what: str) -> tuple[float, float, float]:
    ms = (v**2).mean(axis=0)
    if np.any(ms == 0):
        raise MetasetError(f"{what} coordinate {int(np.argmin(ms))} is identically zero; scale undefined")
    return tuple(float(s) for s in 1.0 / np.sqrt(ms))


def fit_normalization(tasks: Sequence[TaskDataset]) -> NormalizationStats:
    """Root-mean-square scales (no centering) from every sample of the given tasks."""
    if not tasks or sum(len(t.x) for t in tasks) == 0:
        raise MetasetError("cannot fit normalization on an empty task set")
    x = np.concatenate([t.x for t in tasks])
    y = np.concatenate([t.y for t in tasks])
    return NormalizationStats(_rms_scale(x, "input"), _rms_scale(y, "output"))


def apply_normalization(stats: NormalizationStats, task: TaskDataset) -> TaskDataset:
    return TaskDataset(
        task.task_id, task.x * np.array(stats.in_scale), task.y * np.array(stats.out_scale),
        task.n_train, task.role, task.materials,
    )


def normalize_inputs(stats: NormalizationStats, x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * np.array(stats.in_scale)


def normalize_outputs(stats: NormalizationStats, y) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) * np.array(stats.out_scale)


def invert_normalization(stats: NormalizationStats, y) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) / np.array(stats.out_scale)


def normalized_mse(preds, targets) -> float:
    """Mean over samples and coordinates; predicting zero on normalized meta-train data scores 1."""
    p, t = np.asarray(preds, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {t.shape}")
    return float(((p - t) ** 2).mean())


def mse_to_distance(mse: float, calibration_mm: float = MM_PER_UNIT_RMSE) -> float:
    """Millimetre-equivalent of a normalized MSE."""
    if mse < 0:
        raise ValueError("MSE cannot be negative")
    return calibration_mm * math.sqrt(mse)


# --- synthetic tasks ----------------------------------------------------------


@dataclass
class SyntheticSpec:
    n_tasks: int = 50
    points_per_task: int = 250
    n_train: int = 50
    n_node_modules: int = 4
    n_edge_modules: int = 4
    n_exterior: int = 4
    noise_sigma: float = 0.05
    seed: int = 0
    hidden_dim: int = 16
    module_hidden: tuple[int, ...] = (32,)
    mp_steps: int = 5
    generator_gain: float = 2.0  # weight multiplier on the generator library
    audit: bool = True

    def __post_init__(self):
        if self.n_tasks < 1 or self.points_per_task < 1:
            raise ValueError("need at least one task and one point per task")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class GroundTruth:
    library: ModuleLibrary
    structures: list[Structure]
    topologies: list[GraphTopology]
    mp_steps: int = 5

    def predict(self, task_index: int, x) -> np.ndarray:
        y, _ = agn_forward(self.topologies[task_index], self.structures[task_index], self.library, x, self.mp_steps)
        return y


def _gained(library: ModuleLibrary, gain: float) -> ModuleLibrary:
    if gain == 1.0:
        return library
    return library.replace({k: MLPParams(p.spec, tuple(w * gain for w in p.weights), p.biases) for k, p in library.items()})


def separation_audit(
    topology: GraphTopology,
    library: ModuleLibrary,
    threshold: float,
    rng: np.random.Generator,
    n_pairs: int = 50,
    n_inputs: int = 1000,
    T: int = 5,
) -> float:
    """Fraction of random structure pairs whose mean output distance exceeds ``threshold``."""
    X = rng.uniform(-1, 1, size=(n_inputs, 3))
    hits, total = 0, 0
    for _ in range(n_pairs):
        a = initialize_structure(topology, library.sizes, rng)
        b = initialize_structure(topology, library.sizes, rng)
        if a == b:
            continue
        ya, _ = agn_forward(topology, a, library, X, T)
        yb, _ = agn_forward(topology, b, library, X, T)
        hits += np.linalg.norm(ya - yb, axis=1).mean() > threshold
        total += 1
    return hits / total if total else 1.0


def generate_synthetic_metaset(spec: SyntheticSpec, max_attempts: int = 10) -> tuple[list[TaskDataset], GroundTruth]:
    """Wheel-graph tasks drawn from a hidden generator library; deterministic in ``spec.seed``."""
    topo = wheel_topology(spec.n_exterior)
    seeds = np.random.SeedSequence(spec.seed).spawn(max_attempts + 1)
    for attempt in range(max_attempts):
        lib_seed = int(seeds[attempt].generate_state(1)[0])
        library = _gained(
            create_library(spec.n_node_modules, spec.n_edge_modules, spec.hidden_dim, spec.module_hidden, seed=lib_seed),
            spec.generator_gain,
        )
        if not spec.audit or spec.noise_sigma == 0:
            break
        frac = separation_audit(topo, library, 10 * spec.noise_sigma, np.random.default_rng(lib_seed), T=spec.mp_steps)
        if frac >= 0.8:
            break
    else:
        raise MetasetError("could not draw a generator library whose tasks are separable at this noise level")
    rng = np.random.default_rng(seeds[-1])
    structures, tasks = [], []
    for i in range(spec.n_tasks):
        S = initialize_structure(topo, library.sizes, rng)
        x = rng.uniform(-1, 1, size=(spec.points_per_task, 3))
        y, _ = agn_forward(topo, S, library, x, spec.mp_steps)
        y = y + rng.normal(0.0, spec.noise_sigma, size=y.shape) if spec.noise_sigma > 0 else y
        structures.append(S)
        tasks.append(TaskDataset(f"task_{i:03d}", x, y, min(spec.n_train, spec.points_per_task)))
    return tasks, GroundTruth(library, structures, [topo] * spec.n_tasks, spec.mp_steps)


def generate_gen_metaset(
    spec: SyntheticSpec, grid: GridSpec, material_probs=(0.55, 0.15, 0.1, 0.2)
) -> tuple[list[TaskDataset], GroundTruth]:
    """Grid-GEN tasks: each object is a random material map; inputs land inside the grid box."""
    rng = np.random.default_rng(spec.seed)
    lib_seed = int(rng.integers(2**31))
    library = _gained(
        create_library(len(Material), 1, spec.hidden_dim, spec.module_hidden, seed=lib_seed, pusher=False, readout=True),
        spec.generator_gain,
    )
    tasks, structures, topologies = [], [], []
    lo = np.array([grid.x_min, grid.y_min, -1.0])
    hi = np.array([grid.x_max, grid.y_max, 1.0])
    for i in range(spec.n_tasks):
        mats = rng.choice(len(Material), size=(grid.rows, grid.cols), p=material_probs)
        mats = [[Material(int(m)) for m in row] for row in mats]
        topo, S = gen_topology(grid, mats)
        x = rng.uniform(lo, hi, size=(spec.points_per_task, 3))
        y, _ = agn_forward(topo, S, library, x, spec.mp_steps)
        if spec.noise_sigma > 0:
            y = y + rng.normal(0.0, spec.noise_sigma, size=y.shape)
        tasks.append(TaskDataset(f"task_{i:03d}", x, y, min(spec.n_train, spec.points_per_task), materials=mats))
        structures.append(S)
        topologies.append(topo)
    return tasks, GroundTruth(library, structures, topologies, spec.mp_steps)


def split_roles(tasks: list[TaskDataset], n_meta_train: int) -> list[TaskDataset]:
    for i, t in enumerate(tasks):
        t.role = "meta_train" if i < n_meta_train else "meta_test"
    return tasks


# --- pooled baseline -----------------------------------------------------------


@dataclass
class PooledBaseline:
    params: MLPParams

    def predict(self, x) -> np.ndarray:
        y, _ = mlp_forward(self.params, np.asarray(x, dtype=np.float64))
        return y


def pooled_baseline(
    tasks: Sequence[TaskDataset],
    spec: MLPSpec | None = None,
    optimizer: OptimizerConfig | None = None,
    steps: int = 5000,
    batch_size: int = 64,
    seed: int = 0,
) -> PooledBaseline:
    """One regressor fit to the union of every sample of every task, no task identity."""
    spec = spec or MLPSpec(3, (64, 64), 3)
    x = np.concatenate([t.x for t in tasks])
    y = np.concatenate([t.y for t in tasks])
    if len(x) == 0:
        raise MetasetError("pooled baseline needs data")
    rng = np.random.default_rng(seed)
    params = init_params(spec, int(rng.integers(2**31)))
    opt = Optimizer(optimizer or OptimizerConfig(lr=1e-3))
    for _ in range(steps):
        idx = sample_batch(rng, len(x), batch_size)
        pred, tape = mlp_forward(params, x[idx])
        _, g = mlp_backward(tape, 2.0 * (pred - y[idx]) / len(idx))
        params = opt.step("pooled", params, g)
    return PooledBaseline(params)


# --- files ---------------------------------------------------------------------


def atomic_write(path, data: str | bytes) -> None:
    """Write to a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def task_to_csv(task: TaskDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for xi, yi in zip(task.x, task.y):
        w.writerow([repr(float(v)) for v in (*xi, *yi)])
    return buf.getvalue()


def read_task_csv(path, task_id: str | None = None, n_train: int = 50, role: str = "meta_test") -> TaskDataset:
    path = Path(path)
    if not path.exists():
        raise MetasetError(f"task file not found: {path}")
    rows = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if lineno == 1 and row and row[0].strip() == CSV_HEADER[0]:
                if [c.strip() for c in row] != CSV_HEADER:
                    raise MetasetError(f"{path}: bad header {row}")
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise MetasetError(f"{path} line {lineno}: expected 6 fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as e:
                raise MetasetError(f"{path} line {lineno}: {e}") from None
            if not all(math.isfinite(v) for v in vals):
                raise MetasetError(f"{path} line {lineno}: non-finite value")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 6)
    return TaskDataset(task_id or path.stem, arr[:, :3], arr[:, 3:], min(n_train, len(arr)), role)


def save_metaset(
    path,
    tasks: Sequence[TaskDataset],
    stats: NormalizationStats | None = None,
    truth: GroundTruth | None = None,
    extra: dict | None = None,
) -> None:
    """Directory layout: manifest.json, one CSV per task, optional material maps and ground truth."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for t in tasks:
        entry = {"id": t.task_id, "file": f"{t.task_id}.csv", "n_train": t.n_train,
                 "n_test": len(t.x) - t.n_train, "role": t.role}
        atomic_write(root / entry["file"], task_to_csv(t))
        if t.materials is not None:
            entry["materials"] = f"{t.task_id}.materials"
            atomic_write(root / entry["materials"], format_material_map(t.materials))
        entries.append(entry)
    manifest = {"version": 1, "tasks": entries, "normalization": stats.to_dict() if stats else None}
    if truth is not None:
        manifest["ground_truth"] = "ground_truth.json"
        atomic_write(root / "ground_truth.json", dump_json({
            "library": truth.library.to_dict(),
            "structures": [s.to_dict() for s in truth.structures],
            "mp_steps": truth.mp_steps,
        }))
    if extra:
        manifest.update(extra)
    atomic_write(root / MANIFEST, dump_json(manifest))


@dataclass
class Metaset:
    tasks: list[TaskDataset]
    stats: NormalizationStats | None
    manifest: dict = field(default_factory=dict)
    root: Path | None = None

    @property
    def meta_train(self) -> list[TaskDataset]:
        return [t for t in self.tasks if t.role == "meta_train"]

    @property
    def meta_test(self) -> list[TaskDataset]:
        return [t for t in self.tasks if t.role == "meta_test"]

    def by_id(self, task_id: str) -> TaskDataset:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise MetasetError(f"no task {task_id!r} in metaset")

    def ground_truth(self) -> dict | None:
        name = self.manifest.get("ground_truth")
        if not name or self.root is None:
            return None
        return json.loads((self.root / name).read_text())


def load_metaset(path) -> Metaset:
    root = Path(path)
    mpath = root / MANIFEST
    if not mpath.exists():
        raise MetasetError(f"metaset manifest not found: {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise MetasetError(f"{mpath}: {e}") from None
    tasks = []
    for k, entry in enumerate(manifest.get("tasks", [])):
        for key in ("id", "file", "n_train"):
            if key not in entry:
                raise MetasetError(f"{mpath}: task entry {k} is missing {key!r}")
        t = read_task_csv(root / entry["file"], entry["id"], entry["n_train"], entry.get("role", "meta_train"))
        if "n_test" in entry and len(t.x) - t.n_train != entry["n_test"]:
            raise MetasetError(f"{entry['file']}: manifest says {entry['n_test']} test rows, file has {len(t.x) - t.n_train}")
        if t.n_train != entry["n_train"]:
            raise MetasetError(f"{entry['file']}: fewer rows than the manifest's train split")
        if "materials" in entry:
            t.materials = load_material_map(root / entry["materials"])
        tasks.append(t)
    stats = NormalizationStats.from_dict(manifest["normalization"]) if manifest.get("normalization") else None
    return Metaset(tasks, stats, manifest, root)

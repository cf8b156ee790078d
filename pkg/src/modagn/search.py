"""Structure search and BounceGrad training over a shared module library.

Per task the learner keeps a structure (module per slot). Each BounceGrad
iteration proposes a one-slot change for a random task, keeps or rejects it
with a Metropolis test, then takes one optimizer step on the modules the
chosen structure uses. :func:`adapt` is the same search with the library
frozen, which is what happens on a new task.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import GraphTopology, ModuleLibrary, Structure, agn_backward, agn_forward
from .nn import Optimizer, OptimizerConfig

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    """A loss or gradient went non-finite during training."""


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric cooling, in normalized-MSE units (mean over output coordinates).

    The search loss sums over coordinates, so callers multiply by the output
    dimension before the Metropolis test (see :func:`loss_temperature`).
    """

    t0: float = 1.0
    gamma: float = 0.999

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("initial temperature must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    def temperature(self, step: int) -> float:
        return self.t0 * self.gamma**step

    @classmethod
    def reaching(cls, t0: float, t_final: float, steps: int) -> "AnnealingSchedule":
        """Geometric decay that hits ``t_final`` after ``steps`` steps."""
        if steps <= 0 or t_final >= t0:
            return cls(t0, 1.0 - 1e-12)
        return cls(t0, (t_final / t0) ** (1.0 / steps))


def initialize_structure(topology: GraphTopology, sizes: tuple[int, int], rng: np.random.Generator) -> Structure:
    n_node, n_edge = sizes
    if n_node < 1 or n_edge < 1:
        raise ValueError("empty module library")
    nodes = rng.integers(0, n_node, size=len(topology.node_slots))
    edges = rng.integers(0, n_edge, size=len(topology.edge_slots))
    return Structure(tuple(nodes.tolist()), tuple(edges.tolist()))


def propose_structure(
    structure: Structure, topology: GraphTopology, sizes: tuple[int, int], rng: np.random.Generator
) -> Structure:
    """Resample one node slot (probability 1/2) or one edge slot, uniformly.

    The incumbent module may be drawn again, in which case the proposal
    equals the input.
    """
    n_node, n_edge = sizes
    n_slots, e_slots = len(structure.node_assign), len(structure.edge_assign)
    if (rng.random() < 0.5 and n_slots) or not e_slots:
        return structure.with_node(int(rng.integers(n_slots)), int(rng.integers(n_node)))
    return structure.with_edge(int(rng.integers(e_slots)), int(rng.integers(n_edge)))


def squared_error(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the squared error summed over the output coordinates."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if len(target) == 0:
        raise ValueError("empty batch")
    return float(((pred - target) ** 2).sum(axis=-1).mean())


def evaluate(topology, structure, library, X, Y, T: int = 5) -> float:
    pred, _ = agn_forward(topology, structure, library, X, T)
    return squared_error(pred, Y)


def loss_and_grads(topology, structure, library, X, Y, T: int = 5):
    pred, tape = agn_forward(topology, structure, library, X, T)
    Y = np.asarray(Y, dtype=np.float64)
    loss = squared_error(pred, Y)
    dy = 2.0 * (pred - Y) / len(Y)
    return loss, agn_backward(tape, dy)


def loss_temperature(temperature: float, Y) -> float:
    """Schedule temperature expressed in units of the coordinate-summed loss."""
    return temperature * np.shape(Y)[-1]


def sa_accept(loss_current: float, loss_proposal: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule; a random number is drawn only for uphill moves."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if loss_proposal <= loss_current:
        return True
    return bool(rng.random() < math.exp(-(loss_proposal - loss_current) / temperature))


@dataclass
class BounceGradConfig:
    steps: int = 2000
    batch_size: int = 32  # batch used to score the incumbent against the proposal
    grad_batch_size: int = 32
    mp_steps: int = 5
    t0: float = 1.0
    t_final: float = 0.01
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    propose: bool = True  # False: structures stay fixed (pure multitask training)
    train_modules: bool = True


@dataclass
class MetaState:
    """Everything needed to resume BounceGrad bit-exactly."""

    library: ModuleLibrary
    structures: list[Structure]
    schedule: AnnealingSchedule
    step: int
    rng: np.random.Generator
    optimizer: Optimizer

    def to_dict(self) -> dict:
        return {
            "library": self.library.to_dict(),
            "structures": [s.to_dict() for s in self.structures],
            "schedule": {"t0": self.schedule.t0, "gamma": self.schedule.gamma},
            "step": self.step,
            "rng_state": self.rng.bit_generator.state,
            "optimizer": self.optimizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetaState":
        rng = np.random.default_rng()
        rng.bit_generator.state = d["rng_state"]
        return cls(
            ModuleLibrary.from_dict(d["library"]),
            [Structure.from_dict(s) for s in d["structures"]],
            AnnealingSchedule(**d["schedule"]),
            int(d["step"]),
            rng,
            Optimizer.from_dict(d["optimizer"]),
        )


@dataclass
class StepRecord:
    step: int
    task: int
    loss: float
    accepted: bool | None
    temperature: float


def sample_batch(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Row indices of a minibatch drawn without replacement (all rows if size >= n)."""
    if size >= n:
        return np.arange(n)
    return rng.choice(n, size=size, replace=False)


def _topology_for(topology, l):
    return topology[l] if isinstance(topology, (list, tuple)) else topology


def init_meta_state(
    n_tasks: int,
    topology: GraphTopology | Sequence[GraphTopology],
    library: ModuleLibrary,
    config: BounceGradConfig,
    seed: int = 0,
    structures: Sequence[Structure] | None = None,
) -> MetaState:
    if n_tasks < 1:
        raise ValueError("BounceGrad needs at least one task")
    rng = np.random.default_rng(seed)
    if structures is None:
        structures = [initialize_structure(_topology_for(topology, l), library.sizes, rng) for l in range(n_tasks)]
    schedule = AnnealingSchedule.reaching(config.t0, config.t_final, config.steps)
    return MetaState(library, list(structures), schedule, 0, rng, Optimizer(config.optimizer))


def bouncegrad(
    tasks: Sequence[tuple[np.ndarray, np.ndarray]],
    topology: GraphTopology | Sequence[GraphTopology],
    library: ModuleLibrary | None = None,
    config: BounceGradConfig | None = None,
    seed: int = 0,
    state: MetaState | None = None,
    structures: Sequence[Structure] | None = None,
    until: int | None = None,
    on_step: Callable[[StepRecord], None] | None = None,
) -> MetaState:
    """Alternate structure proposals and module gradient steps.

    ``tasks`` holds each task's training pool as (X, Y). ``topology`` is
    either shared or given per task (GEN graphs differ per object). Pass
    ``state`` to resume; ``until`` stops early at that step count.
    """
    config = config or BounceGradConfig()
    if not tasks:
        raise ValueError("BounceGrad needs at least one task")
    if state is None:
        if library is None:
            raise ValueError("need either a library or a state to resume")
        state = init_meta_state(len(tasks), topology, library, config, seed, structures)
    if len(state.structures) != len(tasks):
        raise ValueError("one structure per task is required")
    rng, T = state.rng, config.mp_steps
    stop = config.steps if until is None else min(until, config.steps)
    while state.step < stop:
        l = int(rng.integers(len(tasks)))
        X, Y = tasks[l]
        topo = _topology_for(topology, l)
        temp = state.schedule.temperature(state.step)
        accepted = None
        if config.propose:
            S = state.structures[l]
            P = propose_structure(S, topo, state.library.sizes, rng)
            idx = sample_batch(rng, len(X), config.batch_size)
            if P == S:
                accepted = True
            else:
                ls = evaluate(topo, S, state.library, X[idx], Y[idx], T)
                lp = evaluate(topo, P, state.library, X[idx], Y[idx], T)
                if not (math.isfinite(ls) and math.isfinite(lp)):
                    raise NumericError(f"non-finite loss at step {state.step} on task {l}")
                accepted = sa_accept(ls, lp, loss_temperature(temp, Y), rng)
                if accepted:
                    state.structures[l] = P
        idx = sample_batch(rng, len(X), config.grad_batch_size)
        if config.train_modules:
            loss, grads = loss_and_grads(topo, state.structures[l], state.library, X[idx], Y[idx], T)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at step {state.step} on task {l}")
            updates = {k: state.optimizer.step(k, state.library.get(k), g) for k, g in sorted(grads.items())}
            state.library = state.library.replace(updates)
        else:
            loss = evaluate(topo, state.structures[l], state.library, X[idx], Y[idx], T)
        if on_step is not None:
            on_step(StepRecord(state.step, l, loss, accepted, temp))
        state.step += 1
    return state


@dataclass
class AdaptResult:
    structure: Structure
    loss: float
    initial: Structure
    initial_loss: float
    evaluations: int


def adapt(
    X: np.ndarray,
    Y: np.ndarray,
    topology: GraphTopology,
    library: ModuleLibrary,
    budget: int = 500,
    schedule: AnnealingSchedule | None = None,
    rng: np.random.Generator | int | None = 0,
    T: int = 5,
    init: Structure | None = None,
) -> AdaptResult:
    """Simulated-annealing structure search on a task's training data, modules frozen.

    Returns the lowest-loss structure seen, which is never worse than the
    starting one.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    schedule = schedule or AnnealingSchedule.reaching(1.0, 0.01, budget)
    S = init if init is not None else initialize_structure(topology, library.sizes, rng)
    loss = evaluate(topology, S, library, X, Y, T)
    best, best_loss = S, loss
    start, start_loss = S, loss
    cache = {S: loss}
    for step in range(budget):
        P = propose_structure(S, topology, library.sizes, rng)
        if P not in cache:
            cache[P] = evaluate(topology, P, library, X, Y, T)
        lp = cache[P]
        if sa_accept(loss, lp, loss_temperature(schedule.temperature(step), Y), rng):
            S, loss = P, lp
            if loss < best_loss:
                best, best_loss = S, loss
    return AdaptResult(best, best_loss, start, start_loss, len(cache))

"""Abstract graph networks: wheel graphs and grid graph element networks.

A :class:`GraphTopology` is the fixed scaffold, a :class:`Structure` fills
its node and edge slots with indices into a :class:`ModuleLibrary`, and
:func:`agn_forward` runs encode -> T message-passing steps -> decode on a
batch of inputs, recording a tape for :func:`agn_backward`.

Hidden states are arrays of shape (batch, nodes, d). The leading ``code``
slots of every node are read-only: they are rewritten after every step, so
modules can read them but never change them.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterator

import numpy as np

from .geometry import GridSpec, grid_topology
from .nn import GradientSet, MLPParams, MLPSpec, MLPTape, init_params, mlp_backward, mlp_forward

WHEEL_CODE = 7
GEN_CODE = 4
EDGE_KINDS = ("cw", "ccw", "to_center", "from_center", "pusher_out", "grid")


class Material(IntEnum):
    EMPTY = 0
    SMALL_MASS = 1
    BIG_MASS = 2
    NO_MASS = 3


MATERIAL_CHARS = {"e": Material.EMPTY, "s": Material.SMALL_MASS, "b": Material.BIG_MASS, "n": Material.NO_MASS}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    kind: str  # exterior | center | pusher | cell
    index: int | None = None
    position: tuple[float, float] | None = None
    material: Material | None = None


@dataclass(frozen=True, eq=False)
class GraphTopology:
    kind: str  # "wheel" or "gen"
    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int, str], ...]
    n_exterior: int = 0

    def __post_init__(self):
        for s, t, k in self.edges:
            if s == t:
                raise GraphError(f"self-edge on node {s}")
            if not (0 <= s < len(self.nodes) and 0 <= t < len(self.nodes)):
                raise GraphError(f"edge ({s}, {t}) references a missing node")
            if k not in EDGE_KINDS:
                raise GraphError(f"unknown edge kind {k!r}")

    @functools.cached_property
    def pusher(self) -> int | None:
        for i, n in enumerate(self.nodes):
            if n.kind == "pusher":
                return i
        return None

    @functools.cached_property
    def node_slots(self) -> tuple[int, ...]:
        """Nodes that receive a searchable module (everything but the pusher)."""
        return tuple(i for i, n in enumerate(self.nodes) if n.kind != "pusher")

    @functools.cached_property
    def edge_slots(self) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.edges) if e[2] != "pusher_out")

    @functools.cached_property
    def pusher_edges(self) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.edges) if e[2] == "pusher_out")

    @functools.cached_property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=np.float64)

    @property
    def materials(self) -> tuple[Material, ...]:
        return tuple(n.material for n in self.nodes)

    def in_degree(self, v: int) -> int:
        return sum(1 for _, t, _ in self.edges if t == v)


@dataclass(frozen=True)
class Structure:
    """Module index per searchable node slot and per searchable edge slot."""

    node_assign: tuple[int, ...]
    edge_assign: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "node_assign", tuple(int(i) for i in self.node_assign))
        object.__setattr__(self, "edge_assign", tuple(int(i) for i in self.edge_assign))

    def hamming(self, other: "Structure") -> int:
        return sum(a != b for a, b in zip(self.node_assign, other.node_assign)) + sum(
            a != b for a, b in zip(self.edge_assign, other.edge_assign)
        )

    def with_node(self, slot: int, module: int) -> "Structure":
        na = list(self.node_assign)
        na[slot] = module
        return Structure(tuple(na), self.edge_assign)

    def with_edge(self, slot: int, module: int) -> "Structure":
        ea = list(self.edge_assign)
        ea[slot] = module
        return Structure(self.node_assign, tuple(ea))

    def validate(self, topology: GraphTopology, n_node: int, n_edge: int) -> None:
        if len(self.node_assign) != len(topology.node_slots) or len(self.edge_assign) != len(topology.edge_slots):
            raise GraphError("structure does not match the topology's slot counts")
        if any(not 0 <= m < n_node for m in self.node_assign):
            raise GraphError("node slot assigned to a module outside the library")
        if any(not 0 <= m < n_edge for m in self.edge_assign):
            raise GraphError("edge slot assigned to a module outside the library")

    def to_dict(self) -> dict:
        return {"node_assign": list(self.node_assign), "edge_assign": list(self.edge_assign)}

    @classmethod
    def from_dict(cls, d: dict) -> "Structure":
        return cls(tuple(d["node_assign"]), tuple(d["edge_assign"]))


@dataclass(frozen=True, eq=False)
class ModuleLibrary:
    node_modules: tuple[MLPParams, ...]
    edge_modules: tuple[MLPParams, ...]
    pusher_edge: MLPParams | None = None
    gen_readout: MLPParams | None = None

    @property
    def hidden_dim(self) -> int:
        return self.node_modules[0].spec.output_dim

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.node_modules), len(self.edge_modules)

    def items(self) -> Iterator[tuple[str, MLPParams]]:
        for i, p in enumerate(self.node_modules):
            yield f"node/{i}", p
        for i, p in enumerate(self.edge_modules):
            yield f"edge/{i}", p
        if self.pusher_edge is not None:
            yield "pusher", self.pusher_edge
        if self.gen_readout is not None:
            yield "readout", self.gen_readout

    def get(self, key: str) -> MLPParams:
        return dict(self.items())[key]

    def replace(self, updates: dict[str, MLPParams]) -> "ModuleLibrary":
        if not updates:
            return self
        node = list(self.node_modules)
        edge = list(self.edge_modules)
        pusher, readout = self.pusher_edge, self.gen_readout
        for key, p in updates.items():
            if key.startswith("node/"):
                node[int(key[5:])] = p
            elif key.startswith("edge/"):
                edge[int(key[5:])] = p
            elif key == "pusher":
                pusher = p
            elif key == "readout":
                readout = p
            else:
                raise KeyError(key)
        return ModuleLibrary(tuple(node), tuple(edge), pusher, readout)

    def equals(self, other: "ModuleLibrary") -> bool:
        a, b = list(self.items()), list(other.items())
        return len(a) == len(b) and all(ka == kb and pa.equals(pb) for (ka, pa), (kb, pb) in zip(a, b))

    def to_dict(self) -> dict:
        return {k: p.to_dict() for k, p in self.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModuleLibrary":
        node = [MLPParams.from_dict(d[k]) for k in sorted((k for k in d if k.startswith("node/")), key=lambda k: int(k[5:]))]
        edge = [MLPParams.from_dict(d[k]) for k in sorted((k for k in d if k.startswith("edge/")), key=lambda k: int(k[5:]))]
        pusher = MLPParams.from_dict(d["pusher"]) if "pusher" in d else None
        readout = MLPParams.from_dict(d["readout"]) if "readout" in d else None
        return cls(tuple(node), tuple(edge), pusher, readout)


def create_library(
    n_node: int,
    n_edge: int,
    hidden_dim: int = 16,
    module_hidden: tuple[int, ...] = (32,),
    activation: str = "tanh",
    seed: int = 0,
    pusher: bool = True,
    readout: bool = False,
) -> ModuleLibrary:
    """Freshly initialised library; every module gets its own derived seed."""
    if n_node < 1 or n_edge < 1:
        raise GraphError("library needs at least one node and one edge module")
    d = hidden_dim
    seeds = iter(np.random.SeedSequence(seed).generate_state(n_node + n_edge + 2))
    node_spec = MLPSpec(2 * d, module_hidden, d, activation)
    nodes = tuple(init_params(node_spec, int(next(seeds))) for _ in range(n_node))
    edges = tuple(init_params(node_spec, int(next(seeds))) for _ in range(n_edge))
    p_seed, r_seed = int(next(seeds)), int(next(seeds))
    p = init_params(MLPSpec(2 * d, module_hidden, d + 1, activation), p_seed) if pusher else None
    r = init_params(MLPSpec(d, module_hidden, 3, activation), r_seed) if readout else None
    return ModuleLibrary(nodes, edges, p, r)


# --- topologies -------------------------------------------------------------


def wheel_topology(n_exterior: int) -> GraphTopology:
    """N exterior nodes on a ring, a center hub, and a pusher feeding all of them.

    Node order: exterior 0..N-1, center N, pusher N+1. Edge order: N clockwise,
    N counter-clockwise, N to center, N from center, then N+1 pusher edges.
    """
    N = n_exterior
    if N < 2:
        raise GraphError("a wheel needs at least 2 exterior nodes")
    nodes = tuple(Node("exterior", i) for i in range(N)) + (Node("center"), Node("pusher"))
    center, pusher = N, N + 1
    edges = [(i, (i + 1) % N, "cw") for i in range(N)]
    edges += [(i, (i - 1) % N, "ccw") for i in range(N)]
    edges += [(i, center, "to_center") for i in range(N)]
    edges += [(center, i, "from_center") for i in range(N)]
    edges += [(pusher, v, "pusher_out") for v in range(N + 1)]
    return GraphTopology("wheel", nodes, tuple(edges), N)


def parse_material_map(text: str) -> list[list[Material]]:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    out = []
    for r, line in enumerate(rows, start=1):
        row = []
        for c, ch in enumerate(line, start=1):
            if ch not in MATERIAL_CHARS:
                raise GraphError(f"material map row {r}, column {c}: unknown material {ch!r}")
            row.append(MATERIAL_CHARS[ch])
        out.append(row)
    if len({len(r) for r in out}) > 1:
        raise GraphError("material map rows have different lengths")
    return out


def load_material_map(path) -> list[list[Material]]:
    return parse_material_map(Path(path).read_text())


def format_material_map(materials) -> str:
    inv = {v: k for k, v in MATERIAL_CHARS.items()}
    return "\n".join("".join(inv[Material(m)] for m in row) for row in materials) + "\n"


def gen_topology(grid: GridSpec, materials) -> tuple[GraphTopology, Structure]:
    """Grid GEN whose node modules are the materials under each node."""
    mats = [Material(m) for row in materials for m in row]
    if len(materials) != grid.rows or any(len(r) != grid.cols for r in materials):
        raise GraphError(f"material map must be {grid.rows}x{grid.cols}")
    points, undirected = grid_topology(grid)
    nodes = tuple(Node("cell", i, (float(p[0]), float(p[1])), m) for i, (p, m) in enumerate(zip(points, mats)))
    edges = []
    for a, b in undirected:
        edges += [(a, b, "grid"), (b, a, "grid")]
    topo = GraphTopology("gen", nodes, tuple(edges))
    return topo, Structure(tuple(int(m) for m in mats), (0,) * len(edges))


# --- states, encoders, decoders --------------------------------------------


@dataclass
class HiddenStates:
    values: np.ndarray  # (B, n, d)
    codes: np.ndarray  # (B, n, c): the read-only leading slots

    @property
    def code_len(self) -> int:
        return self.codes.shape[-1]


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        squeeze = True
    else:
        squeeze = False
    if x.ndim != 2 or x.shape[1] != 3:
        raise GraphError(f"inputs must be 3-vectors, got shape {x.shape}")
    return x, squeeze


@functools.lru_cache(maxsize=64)
def wheel_angles(N: int) -> np.ndarray:
    a = 2 * np.pi * np.arange(N) / N
    a.setflags(write=False)
    return a


def wheel_encode(x, N: int, d: int = 16) -> HiddenStates:
    if d < 13:
        raise GraphError("wheel graphs need hidden dim >= 13")
    x, _ = _batch(x)
    B = len(x)
    codes = np.zeros((B, N + 2, WHEEL_CODE))
    ang = wheel_angles(N)
    codes[:, :N, 0] = np.cos(ang)
    codes[:, :N, 1] = np.sin(ang)
    codes[:, N, 2] = 1.0
    codes[:, N + 1, 3] = 1.0
    codes[:, N + 1, 4:7] = x
    values = np.zeros((B, N + 2, d))
    values[..., :WHEEL_CODE] = codes
    return HiddenStates(values, codes)


def wheel_decode(states: HiddenStates, N: int) -> np.ndarray:
    """Angle-weighted average of the exterior nodes' last six slots -> (B, 3)."""
    h = states.values
    d = h.shape[-1]
    if d < 13 or h.shape[1] != N + 2:
        raise GraphError("states do not come from a wheel topology")
    ang = wheel_angles(N)
    ext = h[:, :N]
    y = np.cos(ang)[None, :, None] * ext[..., d - 3 :] + np.sin(ang)[None, :, None] * ext[..., d - 6 : d - 3]
    return y.mean(axis=1)


def gen_encode(x, topology: GraphTopology, d: int = 16) -> HiddenStates:
    """One-hot material code in every node; the input goes to the node nearest the pusher."""
    if topology.kind != "gen":
        raise GraphError("gen_encode needs a GEN topology")
    if d < GEN_CODE + 3:
        raise GraphError("GEN needs hidden dim >= 7")
    x, _ = _batch(x)
    B, n = len(x), len(topology.nodes)
    codes = np.zeros((B, n, GEN_CODE))
    codes[:, np.arange(n), [int(m) for m in topology.materials]] = 1.0
    values = np.zeros((B, n, d))
    values[..., :GEN_CODE] = codes
    d2 = ((topology.positions[None, :, :] - x[:, None, :2]) ** 2).sum(axis=-1)
    near = np.argmin(d2, axis=1)  # first minimum, so ties go to the lowest index
    values[np.arange(B), near, GEN_CODE : GEN_CODE + 3] = x
    return HiddenStates(values, codes)


def gen_decode(states: HiddenStates, library: ModuleLibrary) -> np.ndarray:
    y, _ = _gen_decode(states, library)
    return y


def _gen_decode(states, library):
    if library.gen_readout is None:
        raise GraphError("library has no GEN readout module")
    B, n, d = states.values.shape
    out, tape = mlp_forward(library.gen_readout, states.values.reshape(B * n, d))
    return out.reshape(B, n, 3).mean(axis=1), tape


def encode(topology: GraphTopology, x, d: int) -> HiddenStates:
    if topology.kind == "wheel":
        return wheel_encode(x, topology.n_exterior, d)
    return gen_encode(x, topology, d)


# --- message passing --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Plan:
    """Index bookkeeping for one (topology, structure) pair.

    Edges and nodes are reordered so each module owns a contiguous block;
    every step then does one gather per side and one scatter matmul.
    """

    src: np.ndarray
    dst: np.ndarray
    edge_blocks: tuple  # (module, start, stop)
    scatter_src: np.ndarray  # (n, E) one-hot
    scatter_dst: np.ndarray
    order: np.ndarray  # module-carrying nodes, grouped by module
    node_blocks: tuple
    passive: np.ndarray  # nodes carried over unchanged (the pusher)
    pusher: int | None
    p_src: np.ndarray | None
    p_dst: np.ndarray | None
    p_scatter: np.ndarray | None


def _scatter(idx, n):
    m = np.zeros((n, len(idx)))
    m[idx, np.arange(len(idx))] = 1.0
    return m


def _blocks(assign):
    out, start = [], 0
    for m in sorted(set(assign)):
        k = assign.count(m)
        out.append((m, start, start + k))
        start += k
    return tuple(out)


@functools.lru_cache(maxsize=4096)
def _plan(topology: GraphTopology, structure: Structure) -> _Plan:
    n = len(topology.nodes)
    edges = topology.edges
    eslots = sorted(range(len(topology.edge_slots)), key=lambda k: structure.edge_assign[k])
    eids = [topology.edge_slots[k] for k in eslots]
    src = np.array([edges[e][0] for e in eids], dtype=int)
    dst = np.array([edges[e][1] for e in eids], dtype=int)
    nslots = sorted(range(len(topology.node_slots)), key=lambda k: structure.node_assign[k])
    order = np.array([topology.node_slots[k] for k in nslots], dtype=int)
    active = set(order.tolist())
    passive = np.array([v for v in range(n) if v not in active], dtype=int)
    p_src = p_dst = p_scat = None
    if topology.pusher_edges:
        p_dst = np.array([edges[e][1] for e in topology.pusher_edges], dtype=int)
        p_src = np.full(len(p_dst), topology.pusher, dtype=int)
        p_scat = _scatter(p_dst, n)
    return _Plan(
        src,
        dst,
        _blocks(list(structure.edge_assign)),
        _scatter(src, n),
        _scatter(dst, n),
        order,
        _blocks(list(structure.node_assign)),
        passive,
        topology.pusher,
        p_src,
        p_dst,
        p_scat,
    )


def _softmax(z, axis):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class _StepTape:
    edges: list = field(default_factory=list)  # mlp tape per edge block
    pusher: tuple | None = None  # (mlp tape, raw output, attention)
    nodes: list = field(default_factory=list)  # mlp tape per node block


def _step(plan: _Plan, library: ModuleLibrary, H: np.ndarray, codes: np.ndarray):
    B, n, d = H.shape
    tape = _StepTape()
    if len(plan.src):
        inp = np.concatenate((H[:, plan.src], H[:, plan.dst]), axis=-1)
        msgs = np.empty((B, len(plan.src), d))
        for m, a, b in plan.edge_blocks:
            out, t = mlp_forward(library.edge_modules[m], inp[:, a:b].reshape(-1, 2 * d))
            msgs[:, a:b] = out.reshape(B, b - a, d)
            tape.edges.append(t)
        agg = plan.scatter_dst @ msgs
    else:
        agg = np.zeros_like(H)
    if plan.p_dst is not None:
        if library.pusher_edge is None:
            raise GraphError("topology has a pusher but the library has no pusher edge module")
        inp = np.concatenate((H[:, plan.p_src], H[:, plan.p_dst]), axis=-1)
        out, t = mlp_forward(library.pusher_edge, inp.reshape(-1, 2 * d))
        out = out.reshape(B, len(plan.p_dst), d + 1)
        att = _softmax(out[..., d], axis=1)
        agg = agg + plan.p_scatter @ (att[..., None] * out[..., :d])
        tape.pusher = (t, out, att)
    ninp = np.concatenate((H[:, plan.order], agg[:, plan.order]), axis=-1)
    new = H.copy()
    for m, a, b in plan.node_blocks:
        out, t = mlp_forward(library.node_modules[m], ninp[:, a:b].reshape(-1, 2 * d))
        new[:, plan.order[a:b]] = out.reshape(B, b - a, d)
        tape.nodes.append(t)
    new[..., : codes.shape[-1]] = codes
    return new, tape


def _step_backward(plan: _Plan, tape: _StepTape, dnew: np.ndarray, c: int, grads: dict):
    B, n, d = dnew.shape
    dnew = dnew.copy()
    dnew[..., :c] = 0.0  # code slots are overwritten, nothing flows back through them
    dH = np.zeros_like(dnew)
    dH[:, plan.passive] = dnew[:, plan.passive]
    dninp = np.empty((B, len(plan.order), 2 * d))
    for (m, a, b), t in zip(plan.node_blocks, tape.nodes):
        dinp, g = mlp_backward(t, dnew[:, plan.order[a:b]].reshape(-1, d))
        dninp[:, a:b] = dinp.reshape(B, b - a, 2 * d)
        _accumulate(grads, f"node/{m}", g)
    dH[:, plan.order] += dninp[..., :d]
    dagg = np.zeros_like(dnew)
    dagg[:, plan.order] = dninp[..., d:]
    if tape.pusher is not None:
        t, out, att = tape.pusher
        dmsg = dagg[:, plan.p_dst]
        datt = (dmsg * out[..., :d]).sum(axis=-1)
        dlogit = att * (datt - (att * datt).sum(axis=1, keepdims=True))
        dout = np.concatenate((att[..., None] * dmsg, dlogit[..., None]), axis=-1)
        dinp, g = mlp_backward(t, dout.reshape(-1, d + 1))
        dinp = dinp.reshape(B, -1, 2 * d)
        dH[:, plan.pusher] += dinp[..., :d].sum(axis=1)
        dH += plan.p_scatter @ dinp[..., d:]
        _accumulate(grads, "pusher", g)
    if len(plan.src):
        dmsgs = dagg[:, plan.dst]
        dinp_all = np.empty((B, len(plan.src), 2 * d))
        for (m, a, b), t in zip(plan.edge_blocks, tape.edges):
            dinp, g = mlp_backward(t, dmsgs[:, a:b].reshape(-1, d))
            dinp_all[:, a:b] = dinp.reshape(B, b - a, 2 * d)
            _accumulate(grads, f"edge/{m}", g)
        dH += plan.scatter_src @ dinp_all[..., :d]
        dH += plan.scatter_dst @ dinp_all[..., d:]
    return dH


def _accumulate(grads: dict, key: str, g: GradientSet):
    grads[key] = grads[key] + g if key in grads else g


def message_passing_step(
    topology: GraphTopology, structure: Structure, library: ModuleLibrary, states: HiddenStates
) -> HiddenStates:
    structure.validate(topology, *library.sizes)
    new, _ = _step(_plan(topology, structure), library, states.values, states.codes)
    return HiddenStates(new, states.codes)


@dataclass
class AGNTape:
    topology: GraphTopology
    structure: Structure
    library: ModuleLibrary
    steps: list
    final: HiddenStates
    readout: MLPTape | None
    squeeze: bool


def run_message_passing(topology, structure, library, x, T: int = 5) -> HiddenStates:
    """Encode and run T steps; returns the final states (no decoding)."""
    structure.validate(topology, *library.sizes)
    plan = _plan(topology, structure)
    st = encode(topology, x, library.hidden_dim)
    H = st.values
    for _ in range(T):
        H, _ = _step(plan, library, H, st.codes)
    return HiddenStates(H, st.codes)


def agn_forward(
    topology: GraphTopology, structure: Structure, library: ModuleLibrary, x, T: int = 5
) -> tuple[np.ndarray, AGNTape]:
    """Predict outputs for one input (3,) or a batch (B, 3)."""
    if T < 0:
        raise GraphError("number of message-passing steps must be >= 0")
    structure.validate(topology, *library.sizes)
    _, squeeze = _batch(x)
    plan = _plan(topology, structure)
    st = encode(topology, x, library.hidden_dim)
    H = st.values
    steps = []
    for _ in range(T):
        H, t = _step(plan, library, H, st.codes)
        steps.append(t)
    final = HiddenStates(H, st.codes)
    readout = None
    if topology.kind == "wheel":
        y = wheel_decode(final, topology.n_exterior)
    else:
        y, readout = _gen_decode(final, library)
    tape = AGNTape(topology, structure, library, steps, final, readout, squeeze)
    return (y[0] if squeeze else y), tape


def agn_backward(tape: AGNTape, dy) -> dict[str, GradientSet]:
    """Gradients of ``sum(y * dy)`` keyed by library module ("node/i", "edge/j", "pusher", "readout").

    Only modules that took part in the forward pass appear; a module placed
    in several slots receives the sum of its per-slot contributions.
    """
    dy = np.asarray(dy, dtype=np.float64)
    if tape.squeeze:
        dy = dy[None, :]
    H = tape.final.values
    B, n, d = H.shape
    if dy.shape != (B, 3):
        raise GraphError(f"dy shape {dy.shape} does not match the tape's batch ({B}, 3)")
    grads: dict[str, GradientSet] = {}
    dH = np.zeros_like(H)
    if tape.topology.kind == "wheel":
        N = tape.topology.n_exterior
        ang = wheel_angles(N)
        dH[:, :N, d - 3 :] = np.cos(ang)[None, :, None] * dy[:, None, :] / N
        dH[:, :N, d - 6 : d - 3] = np.sin(ang)[None, :, None] * dy[:, None, :] / N
    else:
        dout = np.broadcast_to(dy[:, None, :] / n, (B, n, 3)).reshape(B * n, 3)
        dflat, g = mlp_backward(tape.readout, dout)
        dH = dflat.reshape(B, n, d)
        _accumulate(grads, "readout", g)
    plan = _plan(tape.topology, tape.structure)
    c = tape.final.code_len
    for st in reversed(tape.steps):
        dH = _step_backward(plan, st, dH, c, grads)
    return grads


def pusher_attention(topology, structure, library, states: HiddenStates) -> np.ndarray:
    """Attention weights (B, N+1) the pusher puts on its outgoing edges for the given states."""
    plan = _plan(topology, structure)
    _, tape = _step(plan, library, states.values, states.codes)
    return tape.pusher[2]

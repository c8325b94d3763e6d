"""Steady state of linear resistive networks posed as a quadratic program.

Node potentials minimize ``1/2 x^T L x + c^T x`` where ``L`` is the
conductance Laplacian and ``c_j`` is the net current *drawn out of* node
``j`` by current sources, so stationarity ``L x = -c`` is Kirchhoff's current
law.  A current source ``{a, b, I}`` moves ``I`` amperes from node ``a`` to
node ``b`` through the source.  The ground node (if any) is held at 0 V and
dropped from the variables; voltage pins become equality rows.

The standard-form bound ``x >= 0`` cannot be dropped, so the builder can shift
the potentials by an ``offset``: the QP variable is ``potential + offset``.
Without a shift, nodes sitting at exactly 0 V make the bound active with a
zero multiplier (a degenerate optimum the interior-point method only reaches
to about ``sqrt(eps)``); with one, the optimum is interior as long as every
potential exceeds ``-offset``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse.csgraph

from ..errors import FloatingNetwork, ParseError
from ..ipm import IpmConfig, SolveReport, solve
from ..qp_core import QpProblem


@dataclass
class ResistiveNetwork:
    nodes: int
    resistors: list[tuple[int, int, float]] = field(default_factory=list)
    current_sources: list[tuple[int, int, float]] = field(default_factory=list)
    voltage_pins: list[tuple[int, float]] = field(default_factory=list)
    ground: int | None = None

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("network needs at least one node")
        self.resistors = [(int(a), int(b), float(g)) for a, b, g in self.resistors]
        self.current_sources = [(int(a), int(b), float(i)) for a, b, i in self.current_sources]
        self.voltage_pins = [(int(k), float(v)) for k, v in self.voltage_pins]
        for a, b, g in self.resistors:
            self._check_node(a)
            self._check_node(b)
            if a == b:
                raise ValueError(f"resistor {a}-{b} is a self loop")
            if g <= 0:
                raise ValueError(f"conductance must be positive, got {g}")
        for a, b, _ in self.current_sources:
            self._check_node(a)
            self._check_node(b)
        pinned = [k for k, _ in self.voltage_pins]
        for k in pinned:
            self._check_node(k)
        if len(set(pinned)) != len(pinned):
            raise ValueError("a node is pinned twice")
        if self.ground is not None:
            self._check_node(self.ground)
            if self.ground in pinned:
                raise ValueError("the ground node cannot also carry a voltage pin")

    def _check_node(self, k):
        if not 0 <= k < self.nodes:
            raise ValueError(f"node index {k} out of range 0..{self.nodes - 1}")

    def laplacian(self) -> np.ndarray:
        L = np.zeros((self.nodes, self.nodes))
        for a, b, g in self.resistors:
            L[a, a] += g
            L[b, b] += g
            L[a, b] -= g
            L[b, a] -= g
        return L

    def source_vector(self) -> np.ndarray:
        """Net current drawn out of each node by the current sources."""
        c = np.zeros(self.nodes)
        for a, b, i in self.current_sources:
            c[a] += i
            c[b] -= i
        return c

    def free_nodes(self) -> np.ndarray:
        return np.array([k for k in range(self.nodes) if k != self.ground], dtype=int)

    def check_referenced(self) -> None:
        refs = {k for k, _ in self.voltage_pins}
        if self.ground is not None:
            refs.add(self.ground)
        if not refs:
            raise FloatingNetwork("network has neither a ground node nor a voltage pin")
        adj = (self.laplacian() != 0).astype(int)
        _, comp = scipy.sparse.csgraph.connected_components(adj, directed=False)
        anchored = {comp[k] for k in refs}
        floating = sorted(k for k in range(self.nodes) if comp[k] not in anchored)
        if floating:
            raise FloatingNetwork(f"nodes {floating} have no path to a voltage reference")


def potential_bound(network: ResistiveNetwork) -> float:
    """Crude bound on ``|potential|``: pins plus the total source current pushed
    through the weakest resistor along a path of every node."""
    pins = max((abs(v) for _, v in network.voltage_pins), default=0.0)
    current = sum(abs(i) for _, _, i in network.current_sources)
    g_min = min((g for _, _, g in network.resistors), default=1.0)
    return pins + current * (network.nodes - 1) / g_min


def build_nrn_qp(network: ResistiveNetwork, offset: float = 0.0) -> QpProblem:
    """QP in the shifted potentials ``x = potential + offset`` (ground excluded)."""
    network.check_referenced()
    if offset < 0:
        raise ValueError("offset must be non-negative")
    free = network.free_nodes()
    L = network.laplacian()[np.ix_(free, free)]
    c = network.source_vector()[free] - offset * L.sum(axis=1)
    pos = {node: i for i, node in enumerate(free)}
    A = np.zeros((len(network.voltage_pins), len(free)))
    b = np.zeros(len(network.voltage_pins))
    for row, (node, volts) in enumerate(network.voltage_pins):
        A[row, pos[node]] = 1.0
        b[row] = volts + offset
    return QpProblem(Q=L, c=c, A=A if len(b) else None, b=b if len(b) else None)


def _expand(network: ResistiveNetwork, x_free: np.ndarray) -> np.ndarray:
    full = np.zeros(network.nodes)
    full[network.free_nodes()] = x_free
    return full


def nrn_steady_state(
    network: ResistiveNetwork,
    config: IpmConfig | None = None,
    *,
    offset: float | None = None,
    return_report: bool = False,
):
    """Node potentials (all nodes, ground included) from the interior-point solve.

    ``offset=None`` picks ``1 + potential_bound(network)``; pass ``0.0`` for the
    unshifted encoding.
    """
    if config is None:
        config = IpmConfig(eps_p=1e-10, eps_d=1e-10, eps_o=1e-10)
    if offset is None:
        offset = 1.0 + potential_bound(network)
    report: SolveReport = solve(build_nrn_qp(network, offset), config)
    potentials = _expand(network, report.x_star - offset)
    return (potentials, report) if return_report else potentials


def kirchhoff_solve(network: ResistiveNetwork) -> np.ndarray:
    """Direct nodal analysis: solve the reduced Laplacian with pins eliminated."""
    network.check_referenced()
    L = network.laplacian()
    inj = -network.source_vector()
    fixed = {k: v for k, v in network.voltage_pins}
    if network.ground is not None:
        fixed[network.ground] = 0.0
    fixed_idx = np.array(sorted(fixed), dtype=int)
    fixed_val = np.array([fixed[k] for k in fixed_idx])
    free_idx = np.array([k for k in range(network.nodes) if k not in fixed], dtype=int)
    x = np.zeros(network.nodes)
    x[fixed_idx] = fixed_val
    if len(free_idx):
        rhs = inj[free_idx] - L[np.ix_(free_idx, fixed_idx)] @ fixed_val
        x[free_idx] = np.linalg.solve(L[np.ix_(free_idx, free_idx)], rhs)
    return x


def network_from_dict(data: dict) -> ResistiveNetwork:
    if not isinstance(data, dict) or "nodes" not in data:
        raise ParseError("missing required field 'nodes'", field="nodes")
    try:
        return ResistiveNetwork(
            nodes=int(data["nodes"]),
            resistors=[(r["a"], r["b"], r["g"]) for r in data.get("resistors", [])],
            current_sources=[(s["a"], s["b"], s["I"]) for s in data.get("current_sources", [])],
            voltage_pins=[(p["node"], p["V"]) for p in data.get("voltage_pins", [])],
            ground=data.get("ground"),
        )
    except KeyError as exc:
        raise ParseError(f"branch entry lacks key {exc.args[0]!r}", field=exc.args[0]) from exc


def network_to_dict(network: ResistiveNetwork) -> dict:
    out = {
        "nodes": network.nodes,
        "resistors": [{"a": a, "b": b, "g": g} for a, b, g in network.resistors],
        "current_sources": [{"a": a, "b": b, "I": i} for a, b, i in network.current_sources],
        "voltage_pins": [{"node": k, "V": v} for k, v in network.voltage_pins],
    }
    if network.ground is not None:
        out["ground"] = network.ground
    return out


def load_network(path) -> ResistiveNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return network_from_dict(data)


def random_network(nodes: int, rng, extra_edges: int | None = None, n_pins: int = 1, n_sources: int = 2) -> ResistiveNetwork:
    """Connected random network grounded at node 0 with positive pins and injections."""
    rng = np.random.default_rng(rng)
    edges = set()
    order = rng.permutation(nodes)
    for i in range(1, nodes):
        j = int(order[rng.integers(0, i)])
        edges.add(tuple(sorted((int(order[i]), j))))
    if extra_edges is None:
        extra_edges = nodes
    for _ in range(extra_edges):
        a, b = rng.choice(nodes, size=2, replace=False)
        edges.add(tuple(sorted((int(a), int(b)))))
    resistors = [(a, b, float(rng.uniform(0.1, 10.0))) for a, b in sorted(edges)]
    others = rng.permutation(np.arange(1, nodes)) if nodes > 1 else np.array([], dtype=int)
    pins = [(int(k), float(rng.uniform(0.5, 2.0))) for k in others[:n_pins]]
    pinned = {k for k, _ in pins}
    candidates = [int(k) for k in others if int(k) not in pinned] or [0]
    sources = [
        (0, int(rng.choice(candidates)), float(rng.uniform(0.0, 1.0))) for _ in range(n_sources)
    ]
    return ResistiveNetwork(nodes, resistors, sources, pins, ground=0)

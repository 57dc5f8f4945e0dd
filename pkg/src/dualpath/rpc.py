"""Routing-problem-with-congestion benchmark.

Random instances of min-cost multicommodity flow where flow above a
link's congestion threshold b_ij is allowed at a convex extra cost
w_ij * g_ij(v_ij), g in {-ln v, v ln v}.  Epigraph slacks make the
objective linear; each link becomes one block with variables
(u_ij1..u_ijC, v_ij, s_ij), the local equality sum_k u_ijk - v_ij = b_ij,
and a product barrier (orthant on u, congestion epigraph on (v, s)).

Both congestion kinds require v > 0 strictly, so every link must carry
flow above its threshold at any interior point.  The generator therefore
lays a directed cycle through all nodes before sprinkling extra links:
every link then sits on a directed cycle and positive circulations can
exceed all thresholds, which also gives every commodity a path and every
intermediate node both an in- and an out-link.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .problem import Block, SeparableProblem
from .scfun import (EntropyEpigraphBarrier, HalfspaceBarrier,
                    LogCongestionEpigraphBarrier, OrthantBarrier,
                    ProductBarrier)

__all__ = ["Link", "Commodity", "RpcInstance", "generate", "to_problem",
           "save_instance", "load_instance", "is_rpc_document"]


@dataclass
class Link:
    tail: int
    head: int
    capacity: float     # congestion threshold b_ij
    cost: float         # linear cost per unit (Euclidean length)
    weight: float       # congestion weight w_ij
    kind: str           # "log" | "entropy"


@dataclass
class Commodity:
    source: int
    target: int
    demand: float


@dataclass
class RpcInstance:
    coords: np.ndarray           # (n_nodes, 2) planar positions
    links: list
    commodities: list
    seed: int = 0

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_commodities(self):
        return len(self.commodities)

    def model_dims(self):
        """Raw model bookkeeping: M blocks, n variables, m conservation
        constraints (one per node and commodity, before removing the one
        redundant row each commodity's conservation system carries)."""
        nA, nC, nN = self.n_links, self.n_commodities, self.n_nodes
        return {"M": nA, "n": nC * nA + 2 * nA, "m": nC * nN,
                "m_reduced": nC * (nN - 1)}

    def has_path(self, source, target):
        out = {}
        for lk in self.links:
            out.setdefault(lk.tail, []).append(lk.head)
        seen = {source}
        stack = [source]
        while stack:
            u = stack.pop()
            if u == target:
                return True
            for v in out.get(u, []):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False


def generate(seed, n_nodes, n_links, n_commodities) -> RpcInstance:
    """Deterministic random instance in the benchmark's parameter ranges."""
    if n_links < n_nodes:
        raise ValueError("need n_links >= n_nodes (a spanning cycle plus extras)")
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    max_extra = n_nodes * (n_nodes - 1) - n_nodes
    if n_links - n_nodes > max_extra:
        raise ValueError("too many links for a simple directed graph")
    rng = np.random.default_rng(seed)
    coords = np.column_stack([rng.uniform(0.0, 100.0, n_nodes),
                              rng.uniform(0.0, 300.0, n_nodes)])
    order = rng.permutation(n_nodes)
    pairs = [(int(order[i]), int(order[(i + 1) % n_nodes]))
             for i in range(n_nodes)]
    used = set(pairs)
    while len(pairs) < n_links:
        i = int(rng.integers(n_nodes))
        j = int(rng.integers(n_nodes))
        if i == j or (i, j) in used:
            continue
        used.add((i, j))
        pairs.append((i, j))
    links = []
    for (i, j) in pairs:
        links.append(Link(
            tail=i, head=j,
            capacity=float(rng.uniform(10.0, 100.0)),
            cost=float(np.hypot(*(coords[i] - coords[j]))),
            weight=10.0,
            kind="log" if rng.uniform() < 0.5 else "entropy",
        ))
    commodities = []
    for _ in range(n_commodities):
        for _attempt in range(1000):
            s = int(rng.integers(n_nodes))
            tgt = int(rng.integers(n_nodes))
            if s != tgt:
                commodities.append(Commodity(source=s, target=tgt,
                                             demand=float(rng.uniform(50.0, 500.0))))
                break
        else:
            raise RuntimeError("could not sample a commodity pair")
    inst = RpcInstance(coords=coords, links=links, commodities=commodities,
                       seed=int(seed))
    for com in inst.commodities:
        if not inst.has_path(com.source, com.target):
            raise RuntimeError("generated instance misses a commodity path")
    return inst


def _link_barrier(link: Link, n_c, u_cap, s_cap):
    epi = LogCongestionEpigraphBarrier(s_cap) if link.kind == "log" \
        else EntropyEpigraphBarrier(s_cap)
    return ProductBarrier(
        [OrthantBarrier(n_c),
         HalfspaceBarrier(np.ones(n_c), u_cap),
         epi],
        ranges=[(0, n_c), (0, n_c), (n_c, n_c + 2)])


def to_problem(instance: RpcInstance, cap_factor=10.0) -> SeparableProblem:
    """Translate an instance into a separable problem.

    The per-link sets are made compact with generous inactive caps
    (total u per link, upper bound on the epigraph slack s): bounded
    blocks have analytic centers and keep every price subproblem
    solvable.  One redundant conservation row per commodity (its target
    node) is dropped so the coupling matrix has full row rank.
    """
    n_c = instance.n_commodities
    n_n = instance.n_nodes
    total_demand = sum(c.demand for c in instance.commodities)
    max_cap = max(lk.capacity for lk in instance.links)
    u_cap = cap_factor * (total_demand + max_cap + 10.0)
    # conservation rows: (commodity k, node i) for i != target_k
    row_of = {}
    for k, com in enumerate(instance.commodities):
        for node in range(n_n):
            if node != com.target:
                row_of[(k, node)] = len(row_of)
    m = len(row_of)
    b_coupling = np.zeros(m)
    for k, com in enumerate(instance.commodities):
        b_coupling[row_of[(k, com.source)]] = com.demand
    blocks = []
    for lk in instance.links:
        n_i = n_c + 2
        if lk.kind == "log":
            s_cap = 25.0 + abs(np.log1p(n_c * u_cap))
        else:
            vmax = n_c * u_cap
            s_cap = 1.1 * vmax * np.log(vmax) + 100.0
        barrier = _link_barrier(lk, n_c, u_cap, s_cap)
        A = np.zeros((m, n_i))
        for k in range(n_c):
            tgt = instance.commodities[k].target
            if lk.tail != tgt:
                A[row_of[(k, lk.tail)], k] += 1.0
            if lk.head != tgt:
                A[row_of[(k, lk.head)], k] -= 1.0
        c = np.zeros(n_i)
        c[:n_c] = -lk.cost         # solver maximizes; costs enter negated
        c[n_c + 1] = -lk.weight
        E = np.zeros((1, n_i))
        E[0, :n_c] = 1.0
        E[0, n_c] = -1.0
        f = np.array([lk.capacity])
        v0 = 1.0
        u0 = (lk.capacity + v0) / n_c
        g0 = -np.log(v0) if lk.kind == "log" else v0 * np.log(v0)
        x_start = np.concatenate([np.full(n_c, u0), [v0], [g0 + 1.0]])
        blocks.append(Block(c=c, A=A, barrier=barrier, x_start=x_start,
                            E=E, f=f))
    return SeparableProblem(blocks, b_coupling)


def rpc_cost(instance: RpcInstance, x_blocks):
    """Original minimization objective at block points (linear + slack part)."""
    total = 0.0
    n_c = instance.n_commodities
    for lk, x in zip(instance.links, x_blocks):
        total += lk.cost * float(np.sum(x[:n_c])) + lk.weight * float(x[n_c + 1])
    return total


# -- compact instance file format ------------------------------------------

def instance_to_dict(instance: RpcInstance) -> dict:
    return {
        "seed": instance.seed,
        "nodes": [{"x": float(p[0]), "y": float(p[1])} for p in instance.coords],
        "links": [{"tail": lk.tail, "head": lk.head, "capacity": lk.capacity,
                   "cost": lk.cost, "weight": lk.weight, "kind": lk.kind}
                  for lk in instance.links],
        "commodities": [{"source": c.source, "target": c.target,
                         "demand": c.demand} for c in instance.commodities],
    }


def instance_from_dict(doc: dict) -> RpcInstance:
    coords = np.array([[nd["x"], nd["y"]] for nd in doc["nodes"]])
    links = [Link(tail=int(l["tail"]), head=int(l["head"]),
                  capacity=float(l["capacity"]), cost=float(l["cost"]),
                  weight=float(l["weight"]), kind=l["kind"])
             for l in doc["links"]]
    commodities = [Commodity(source=int(c["source"]), target=int(c["target"]),
                             demand=float(c["demand"]))
                   for c in doc["commodities"]]
    return RpcInstance(coords=coords, links=links, commodities=commodities,
                       seed=int(doc.get("seed", 0)))


def is_rpc_document(doc: dict) -> bool:
    return "links" in doc and "commodities" in doc


def save_instance(instance: RpcInstance, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> RpcInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))

"""Cross-category model: a DAG of categories linked by transition matrices.

After choosing option ``i`` in a parent category ``U`` the customer is drawn
to option ``m`` of the child ``W`` with probability ``lam[i, m]`` (row ``i``
of the edge matrix, which includes the child's no-purchase column).  If ``m``
is not offered, the child's own kernel decides the substitute.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .choice import (
    INPUT_TOL,
    Kernel,
    choice_operator,
    choice_probs,
    kernel_from_dict,
)
from .errors import DomainError, ModelError


@dataclass(frozen=True, eq=False)
class CategoryNode:
    id: str
    kernel: Kernel

    @property
    def n(self) -> int:
        return self.kernel.n


@dataclass(frozen=True, eq=False)
class EdgeLambda:
    """Transition rows from every option of ``source`` to every option of ``target``."""

    source: str
    target: str
    matrix: np.ndarray

    def __post_init__(self):
        lam = np.array(self.matrix, dtype=float)
        if lam.ndim != 2:
            raise ModelError("lambda must be a matrix")
        if np.any(lam < 0) or np.any(np.abs(lam.sum(axis=1) - 1.0) > INPUT_TOL):
            raise ModelError(f"lambda rows of edge {self.source}->{self.target} must sum to 1")
        lam.setflags(write=False)
        object.__setattr__(self, "matrix", lam)


@dataclass(frozen=True, eq=False)
class CrossCatModel:
    nodes: tuple
    edges: tuple
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        edges = tuple(self.edges)
        index = {}
        for node in nodes:
            if node.id in index:
                raise ModelError(f"duplicate category id {node.id!r}")
            index[node.id] = node
        seen = set()
        for e in edges:
            if e.source not in index or e.target not in index:
                raise ModelError(f"edge {e.source}->{e.target} references an unknown category")
            if (e.source, e.target) in seen:
                raise ModelError(f"duplicate edge {e.source}->{e.target}")
            seen.add((e.source, e.target))
            expect = (index[e.source].n + 1, index[e.target].n + 1)
            if e.matrix.shape != expect:
                raise ModelError(f"lambda for {e.source}->{e.target} has shape "
                                 f"{e.matrix.shape}, expected {expect}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_index", index)
        self.topological_order()  # raises on cycles

    # -- structure
    def node(self, cid: str) -> CategoryNode:
        try:
            return self._index[cid]
        except KeyError:
            raise DomainError(f"unknown category {cid!r}") from None

    @property
    def ids(self) -> list:
        return [n.id for n in self.nodes]

    def edge(self, source: str, target: str) -> EdgeLambda:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        raise DomainError(f"no edge {source}->{target}")

    def parents(self, cid: str) -> list:
        return [e.source for e in self.edges if e.target == cid]

    def children(self, cid: str) -> list:
        return [e.target for e in self.edges if e.source == cid]

    def roots(self) -> list:
        return [c for c in self.ids if not self.parents(c)]

    def max_in_degree(self) -> int:
        return max((len(self.parents(c)) for c in self.ids), default=0)

    def topological_order(self) -> list:
        indeg = {c: len(self.parents(c)) for c in self.ids}
        ready = [c for c in self.ids if indeg[c] == 0]
        order = []
        while ready:
            c = ready.pop(0)
            order.append(c)
            for w in self.children(c):
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        if len(order) != len(self.nodes):
            raise ModelError("category graph has a cycle")
        return order

    # -- serialisation
    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "kernel": n.kernel.to_dict()} for n in self.nodes],
            "edges": [{"from": e.source, "to": e.target, "lambda": e.matrix.tolist()}
                      for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CrossCatModel":
        try:
            nodes = [CategoryNode(str(n["id"]), kernel_from_dict(n["kernel"])) for n in d["nodes"]]
            edges = [EdgeLambda(str(e["from"]), str(e["to"]), e["lambda"]) for e in d.get("edges", [])]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model JSON: {exc}") from exc
        return cls(tuple(nodes), tuple(edges))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "CrossCatModel":
        return cls.from_dict(json.loads(text))


def two_category(kernel_a: Kernel, kernel_b: Kernel, lam, ids=("A", "B")) -> CrossCatModel:
    """Convenience constructor for the ``A -> B`` model."""
    a, b = ids
    return CrossCatModel((CategoryNode(a, kernel_a), CategoryNode(b, kernel_b)),
                         (EdgeLambda(a, b, lam),))


def _two_ids(model: CrossCatModel):
    if len(model.nodes) != 2 or len(model.edges) != 1:
        raise DomainError("operation needs a two-category model with a single edge")
    e = model.edges[0]
    return e.source, e.target


@dataclass(frozen=True, eq=False)
class JointChoiceTable:
    """``probs[i, j]`` = P(choose i in A and j in B); zero outside the offer sets."""

    probs: np.ndarray

    def marginal_a(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.probs.sum(axis=0)


def conditional_b_prob(model: CrossCatModel, edge, i: int, S_B) -> np.ndarray:
    """Distribution of the child's choice given option ``i`` chosen upstream.

    ``edge`` is an :class:`EdgeLambda` or a ``(source, target)`` pair.
    """
    if not isinstance(edge, EdgeLambda):
        edge = model.edge(*edge)
    lam = edge.matrix
    if not 0 <= i < lam.shape[0]:
        raise DomainError(f"upstream option {i} out of range")
    kernel = model.node(edge.target).kernel
    return choice_operator(kernel, S_B) @ lam[i]


def joint_choice_prob(model: CrossCatModel, S_A, S_B) -> JointChoiceTable:
    a, b = _two_ids(model)
    phi_a = choice_probs(model.node(a).kernel, S_A)
    M = choice_operator(model.node(b).kernel, S_B)
    cond = model.edge(a, b).matrix @ M.T  # row i = conditional B distribution
    return JointChoiceTable(phi_a[:, None] * cond)


def aggregate_arrival(model: CrossCatModel, S_A) -> np.ndarray:
    """Initial-attraction distribution in B after mixing over A's choice."""
    a, b = _two_ids(model)
    phi_a = choice_probs(model.node(a).kernel, S_A)
    return phi_a @ model.edge(a, b).matrix


def category_marginals(model: CrossCatModel, sets: Mapping, operators: Mapping | None = None) -> dict:
    """Marginal choice distribution of every category under the given offer sets.

    Choice operators are linear in the attraction vector, so the marginals
    propagate exactly in topological order.  Nodes with several parents use
    the uniform mixture of the parents' attraction rows.
    """
    marg = {}
    for cid in model.topological_order():
        node = model.node(cid)
        S = sets.get(cid, ())
        parents = model.parents(cid)
        if not parents:
            marg[cid] = choice_probs(node.kernel, S)
            continue
        arrival = sum(marg[p] @ model.edge(p, cid).matrix for p in parents) / len(parents)
        M = operators[cid] if operators is not None else choice_operator(node.kernel, S)
        marg[cid] = M @ arrival
    return marg


def sample_paths(model: CrossCatModel, assortments: Mapping, size: int, rng) -> dict:
    """Draw ``size`` independent customer journeys; returns ``{id: int array}``.

    Categories are visited in topological order.  A child with several parents
    picks one parent uniformly at random and uses that parent's attraction row.
    Mass lost by a ranking kernel that has no ranking starting with the
    attracted product is assigned to the no-purchase option.
    """
    out = {}
    for cid in model.topological_order():
        node = model.node(cid)
        S = assortments[cid]
        parents = model.parents(cid)
        if not parents:
            out[cid] = _draw(np.broadcast_to(choice_probs(node.kernel, S), (size, node.n + 1)), rng)
            continue
        if len(parents) == 1:
            which = np.zeros(size, dtype=int)
        else:
            which = rng.integers(len(parents), size=size)
        attraction = np.empty(size, dtype=int)
        for k, p in enumerate(parents):
            sel = which == k
            rows = model.edge(p, cid).matrix[out[p][sel]]
            attraction[sel] = _draw(rows, rng)
        M = choice_operator(node.kernel, S)
        cols = M.T.copy()
        cols[:, 0] += np.clip(1.0 - cols.sum(axis=1), 0.0, None)
        out[cid] = _draw(cols[attraction], rng)
    return out


def sample_path(model: CrossCatModel, assortments: Mapping, rng) -> dict:
    """One customer journey: ``{category id: chosen option}``."""
    return {k: int(v[0]) for k, v in sample_paths(model, assortments, 1, rng).items()}


def _draw(prob_rows: np.ndarray, rng) -> np.ndarray:
    """Inverse-CDF draw of one index per row."""
    if prob_rows.shape[0] == 0:
        return np.zeros(0, dtype=int)
    cdf = np.cumsum(prob_rows, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(prob_rows.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)

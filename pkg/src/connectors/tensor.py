"""Labelled real tensors, contraction graphs and environments."""

from dataclasses import dataclass

import numpy as np

IN, OUT = "in", "out"


class StructureError(ValueError):
    """Malformed contraction graph."""


@dataclass(frozen=True)
class Tensor:
    """Dense real array whose axes are named legs with a direction."""

    data: np.ndarray
    legs: tuple

    def __init__(self, data, legs):
        data = np.asarray(data, dtype=float)
        legs = tuple((str(l), d) for l, d in legs)
        if data.ndim != len(legs):
            raise StructureError(f"tensor of rank {data.ndim} given {len(legs)} legs")
        labels = [l for l, _ in legs]
        if len(set(labels)) != len(labels):
            raise StructureError(f"duplicate leg labels {labels}")
        if any(d not in (IN, OUT) for _, d in legs):
            raise StructureError("leg direction must be 'in' or 'out'")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "legs", legs)

    @property
    def shape(self):
        return self.data.shape

    @property
    def labels(self):
        return [l for l, _ in self.legs]

    def axis(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no leg {label!r}; legs are {self.labels}") from None

    def extent(self, label):
        return self.data.shape[self.axis(label)]

    def permuted(self, labels):
        """Explicit reordering of legs."""
        axes = [self.axis(l) for l in labels]
        return Tensor(self.data.transpose(axes), [self.legs[a] for a in axes])

    def scalar(self):
        if self.data.ndim:
            raise StructureError(f"tensor still has open legs {self.labels}")
        return float(self.data)


class ContractionGraph:
    """Nodes are tensors; edges join one leg of a node to one leg of another."""

    def __init__(self):
        self.nodes = {}
        self.edges = []
        self._bound = {}

    def add(self, node, tensor):
        if node in self.nodes:
            raise StructureError(f"node {node!r} already present")
        self.nodes[node] = tensor
        return node

    def replace(self, node, tensor):
        if node not in self.nodes:
            raise KeyError(f"node {node!r} not in graph")
        if tensor.shape != self.nodes[node].shape or tensor.legs != self.nodes[node].legs:
            raise StructureError(f"replacement for {node!r} must keep legs {self.nodes[node].legs}")
        self.nodes[node] = tensor

    def connect(self, a, b):
        """Join ``a = (node, leg)`` with ``b = (node, leg)``."""
        for end in (a, b):
            if end[0] not in self.nodes:
                raise KeyError(f"node {end[0]!r} not in graph")
            if end in self._bound:
                raise StructureError(f"leg {end} already connected")
        ta, tb = self.nodes[a[0]], self.nodes[b[0]]
        ea, eb = ta.extent(a[1]), tb.extent(b[1])
        if ea != eb:
            raise StructureError(f"dimension mismatch: {a} has extent {ea} but {b} has extent {eb}")
        da = dict(ta.legs)[a[1]]
        db = dict(tb.legs)[b[1]]
        if da == db:
            raise StructureError(f"legs {a} and {b} both point {da}")
        self.edges.append((a, b))
        self._bound[a] = b
        self._bound[b] = a

    def open_legs(self):
        out = []
        for node, t in self.nodes.items():
            for label, d in t.legs:
                if (node, label) not in self._bound:
                    out.append((node, label, d))
        return out

    def check_witness(self):
        """A witness network is acyclic and has no open outgoing legs."""
        bad = [(n, l) for n, l, d in self.open_legs() if d == OUT]
        if bad:
            raise StructureError(f"open outgoing legs {bad}")
        succ = {n: set() for n in self.nodes}
        for a, b in self.edges:
            src, dst = (a, b) if dict(self.nodes[a[0]].legs)[a[1]] == OUT else (b, a)
            succ[src[0]].add(dst[0])
        state = {}

        def visit(n):
            state[n] = 1
            for s in succ[n]:
                if state.get(s) == 1:
                    raise StructureError(f"cycle through {n!r} and {s!r}")
                if s not in state:
                    visit(s)
            state[n] = 2

        for n in self.nodes:
            if n not in state:
                visit(n)


def _merge(ta, tb, shared):
    """Contract two tensors over ``shared = [(leg_a, leg_b)]``."""
    la, lb = ta.labels, tb.labels
    ids = {}
    nxt = 0
    sa, sb = [], []
    for l in la:
        ids[("a", l)] = nxt
        sa.append(nxt)
        nxt += 1
    pair = {b: a for a, b in shared}
    for l in lb:
        if l in pair:
            sb.append(ids[("a", pair[l])])
        else:
            sb.append(nxt)
            nxt += 1
    gone_a = {a for a, _ in shared}
    out_legs, out_ids = [], []
    for l, d in ta.legs:
        if l not in gone_a:
            out_legs.append((l, d))
            out_ids.append(ids[("a", l)])
    for (l, d), i in zip(tb.legs, sb):
        if l not in pair:
            out_legs.append((l, d))
            out_ids.append(i)
    data = np.einsum(ta.data, sa, tb.data, sb, out_ids, optimize=True)
    return data, out_legs


def contract(graph: ContractionGraph, order=None):
    """Contract every edge; the result carries the open legs as ``node:leg`` labels.

    Pairs of nodes are merged greedily by smallest intermediate size unless
    ``order`` (a list of node pairs) is given.
    """
    # internal working copies with globally unique labels
    work = {}
    for node, t in graph.nodes.items():
        work[node] = Tensor(t.data, [(f"{node}:{l}", d) for l, d in t.legs])
    links = {}
    for (na, la), (nb, lb) in graph.edges:
        key = frozenset((na, nb)) if na != nb else None
        if key is None:
            raise StructureError(f"self-loop on node {na!r}")
        links.setdefault(key, []).append(((na, f"{na}:{la}"), (nb, f"{nb}:{lb}")))
    owner = {n: n for n in work}

    def find(n):
        while owner[n] != n:
            n = owner[n]
        return n

    pending = list(order) if order is not None else None

    def pair_cost(a, b):
        ta, tb = work[a], work[b]
        shared = set()
        for key, lst in links.items():
            ends = {find(x) for x in key}
            if ends == {a, b}:
                for (xa, la), (xb, lb) in lst:
                    shared.add(la)
                    shared.add(lb)
        size = 1
        for t in (ta, tb):
            for l, s in zip(t.labels, t.shape):
                if l not in shared:
                    size *= s
        return size

    while True:
        roots = sorted({find(n) for n in work}, key=lambda n: str(n))
        cand = set()
        for key in links:
            ends = tuple(sorted({find(x) for x in key}, key=str))
            if len(ends) == 2:
                cand.add(ends)
        if not cand:
            break
        if pending:
            a, b = pending.pop(0)
            a, b = find(a), find(b)
            if (a, b) not in cand and (b, a) not in cand:
                raise StructureError(f"order step ({a!r}, {b!r}) joins unconnected nodes")
        else:
            a, b = min(cand, key=lambda ab: (pair_cost(*ab), str(ab)))
        shared = []
        for key, lst in links.items():
            if {find(x) for x in key} == {a, b}:
                for (xa, la), (xb, lb) in lst:
                    if la in work[a].labels:
                        shared.append((la, lb))
                    else:
                        shared.append((lb, la))
        data, legs = _merge(work[a], work[b], shared)
        work[a] = Tensor(data, legs)
        del work[b]
        owner[b] = a
        for key in list(links):
            if {find(x) for x in key} == {a}:
                del links[key]
    roots = list(work)
    result = work[roots[0]]
    for r in roots[1:]:
        data, legs = _merge(result, work[r], [])
        result = Tensor(data, legs)
    open_order = [f"{n}:{l}" for n, l, _ in graph.open_legs()]
    return result.permuted(open_order)


def environment(graph: ContractionGraph, node):
    """Tensor E with ``contract(graph) == sum(E * W_node)``; legs mirror the node's legs."""
    if node not in graph.nodes:
        raise KeyError(f"node {node!r} not in graph")
    t = graph.nodes[node]
    rest = ContractionGraph()
    for n, tt in graph.nodes.items():
        if n != node:
            rest.add(n, tt)
    partner = {}
    for a, b in graph.edges:
        if a[0] == node:
            partner[a[1]] = b
        elif b[0] == node:
            partner[b[1]] = a
        else:
            rest.connect(a, b)
    if len(partner) != len(t.legs):
        raise StructureError(f"node {node!r} has open legs; environment needs a scalar network")
    if not rest.nodes:
        raise StructureError("environment of the only node is undefined")
    env = contract(rest)
    labels = [f"{partner[l][0]}:{partner[l][1]}" for l in t.labels]
    # every other open leg must be absent for a scalar network
    extra = [l for l in env.labels if l not in labels]
    if extra:
        raise StructureError(f"network has open legs {extra}")
    env = env.permuted(labels)
    return Tensor(env.data, t.legs)

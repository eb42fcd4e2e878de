"""Directed social graph with a humans/sources partition.

Edge convention: a stored pair (i, j) means "j influences i", i.e. j is an
in-neighbor of i.  Indices are 1-based and contiguous, humans first, then the
broadcast sources (targets) as a tail block.  That ordering is what lets the
stacked vectors used elsewhere avoid permutation maps.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed graph files; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class SocialGraph:
    """Immutable digraph over nodes 1..n with a trailing target block."""

    n: int
    targets: tuple[int, ...]
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphFormatError(f"need at least one node, got n={self.n}")
        tgt = tuple(self.targets)
        if len(set(tgt)) != len(tgt):
            raise GraphFormatError(f"duplicate target indices: {tgt}")
        expected = tuple(range(self.n - len(tgt) + 1, self.n + 1))
        if tgt != expected:
            raise GraphFormatError(
                f"targets must be the contiguous tail {expected}, got {tgt}"
            )
        for i, j in self.edges:
            for v in (i, j):
                if not (1 <= v <= self.n):
                    raise GraphFormatError(
                        f"edge ({i}, {j}) references node {v} outside 1..{self.n}"
                    )

    @property
    def n_targets(self):
        return len(self.targets)

    @property
    def n_humans(self):
        return self.n - len(self.targets)

    @property
    def humans(self):
        return tuple(range(1, self.n_humans + 1))

    def is_human(self, i):
        return 1 <= i <= self.n_humans

    def is_target(self, i):
        return self.n_humans < i <= self.n

    def in_neighbors(self, i):
        """All j with (i, j) an edge, ascending. Deterministic."""
        if not (1 <= i <= self.n):
            raise GraphFormatError(f"node index {i} outside 1..{self.n}")
        return tuple(sorted(j for (a, j) in self.edges if a == i))

    def adjacency(self):
        """Boolean matrix A with A[i-1, j-1] True iff j influences i."""
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i - 1, j - 1] = True
        return A


def loads_graph(text):
    """Parse the edge-list text format into a SocialGraph."""
    n = None
    targets = None
    edges = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            parts = line.split()
            kv = {}
            for part in parts:
                if "=" not in part:
                    raise GraphFormatError(
                        f"expected header 'n=<int> targets=<list>', got {raw!r}",
                        line_no,
                    )
                key, _, val = part.partition("=")
                kv[key] = val
            if "n" not in kv or "targets" not in kv:
                raise GraphFormatError(
                    f"header must define n and targets, got {raw!r}", line_no
                )
            try:
                n = int(kv["n"])
            except ValueError:
                raise GraphFormatError(f"bad node count {kv['n']!r}", line_no)
            if kv["targets"]:
                try:
                    targets = tuple(int(t) for t in kv["targets"].split(","))
                except ValueError:
                    raise GraphFormatError(
                        f"bad target list {kv['targets']!r}", line_no
                    )
            else:
                targets = ()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"expected 'i j' pair, got {raw!r}", line_no)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"non-integer edge entry in {raw!r}", line_no)
        if not (1 <= i <= n) or not (1 <= j <= n):
            raise GraphFormatError(
                f"edge ({i}, {j}) references a node outside 1..{n}", line_no
            )
        edges.add((i, j))
    if n is None:
        raise GraphFormatError("empty graph file: missing header")
    return SocialGraph(n=n, targets=targets, edges=frozenset(edges))


def load_graph(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise GraphFormatError(f"cannot read graph file {path}: {exc}")
    return loads_graph(text)


def dumps_graph(g):
    """Canonical text form: header, then edges sorted by (i, j)."""
    tgt = ",".join(str(t) for t in g.targets)
    lines = [f"n={g.n} targets={tgt}"]
    lines.extend(f"{i} {j}" for (i, j) in sorted(g.edges))
    return "\n".join(lines) + "\n"


def write_graph(g, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_graph(g))


def bundled_graph():
    """The 9-node, 2-source demonstration graph shipped with the package."""
    ref = importlib.resources.files("opinionflow").joinpath(
        "data/nine_node_two_source.txt"
    )
    return loads_graph(ref.read_text(encoding="utf-8"))

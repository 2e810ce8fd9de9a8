"""Graphs made of triangles and the built-in constructors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class TriangleGraph:
    """Vertices 0..vertex_count-1 with an edge set partitioned into triangles.

    ``extra_edges`` is a test-only escape hatch for plain edge graphs; when
    it is given, the triangle invariants are not enforced.
    """

    vertex_count: int
    triangles: tuple[tuple[int, int, int], ...]
    extra_edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        tris = tuple(tuple(sorted(int(v) for v in t)) for t in self.triangles)
        object.__setattr__(self, "triangles", tris)
        extra = tuple(tuple(sorted(int(v) for v in e)) for e in self.extra_edges)
        object.__setattr__(self, "extra_edges", extra)
        if not extra:
            self._validate()

    def _validate(self):
        n = self.vertex_count
        seen = set()
        for t in self.triangles:
            if len(set(t)) != 3 or min(t) < 0 or max(t) >= n:
                raise ValidationError(f"bad triangle {t}")
            for e in combinations(t, 2):
                if e in seen:
                    raise ValidationError(f"edge {e} belongs to two triangles")
                seen.add(e)
        deg = self.degrees
        bad = [v for v in range(n) if deg[v] not in (2, 4)]
        if bad:
            raise ValidationError(f"vertices {bad} have degree outside {{2, 4}}")
        if not self.is_connected():
            raise ValidationError("graph is not connected")

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        out = [e for t in self.triangles for e in combinations(t, 2)]
        return tuple(out) + self.extra_edges

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.vertex_count, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    @property
    def triangle_array(self) -> np.ndarray:
        return np.array(self.triangles, dtype=int).reshape(-1, 3)

    @property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=int).reshape(-1, 2)

    def is_connected(self) -> bool:
        n = self.vertex_count
        adj = [[] for _ in range(n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == n

    def relabel(self, perm) -> "TriangleGraph":
        """Graph with vertex v renamed perm[v]."""
        perm = list(perm)
        tris = [tuple(perm[v] for v in t) for t in self.triangles]
        extra = [tuple(perm[v] for v in e) for e in self.extra_edges]
        return TriangleGraph(self.vertex_count, tuple(tris), tuple(extra))

    def to_dict(self) -> dict:
        return {"vertices": self.vertex_count, "triangles": [list(t) for t in self.triangles]}

    @classmethod
    def from_dict(cls, d: dict) -> "TriangleGraph":
        return cls(int(d["vertices"]), tuple(tuple(t) for t in d["triangles"]))

    @classmethod
    def from_json(cls, text: str) -> "TriangleGraph":
        return cls.from_dict(json.loads(text))


def edge_graph(n: int, edges) -> TriangleGraph:
    """Plain edge graph without triangle structure (tests only)."""
    return TriangleGraph(n, (), tuple(tuple(e) for e in edges))


def triangle() -> TriangleGraph:
    return TriangleGraph(3, ((0, 1, 2),))


def leaf() -> TriangleGraph:
    """Triangle 0-1-2 with a child triangle 2-3-4 hanging from vertex 2."""
    return TriangleGraph(5, ((0, 1, 2), (2, 3, 4)))


def husimi(depth: int, root_branches: int = 3) -> TriangleGraph:
    """Husimi cactus: every free vertex of the last layer grows a new triangle.

    ``root_branches`` limits how many root vertices receive a child, so
    ``husimi(1, 2)`` is the root triangle with two children.
    """
    tris = [(0, 1, 2)]
    frontier = [0, 1, 2][:root_branches]
    n = 3
    for _ in range(depth):
        nxt = []
        for v in frontier:
            tris.append((v, n, n + 1))
            nxt += [n, n + 1]
            n += 2
        frontier = nxt
    return TriangleGraph(n, tuple(tris))


def loop(k: int) -> TriangleGraph:
    """Ring of k triangles: inner cycle 0..k-1, outer tips k..2k-1.

    Triangle i is (i, i+1 mod k, k+i).
    """
    if k < 3:
        raise ValidationError("a loop needs at least 3 triangles")
    return TriangleGraph(2 * k, tuple((i, (i + 1) % k, k + i) for i in range(k)))


def kagome_patch(rows: int, cols: int) -> TriangleGraph:
    """Open kagome patch on a rows x cols block of Bravais cells.

    Each cell carries an up-triangle and every complete down-triangle is
    added.  The corner cell (0, 0) touches no down-triangle, so it is left
    out whenever the block has more than one cell.
    """
    if rows < 1 or cols < 1 or (rows * cols > 1 and min(rows, cols) < 2):
        raise ValidationError("kagome patch needs rows = cols = 1 or both >= 2")
    cells = [(i, j) for i in range(rows) for j in range(cols) if rows * cols == 1 or (i, j) != (0, 0)]
    index = {cell: k for k, cell in enumerate(cells)}

    def vid(i, j, s):
        return 3 * index[(i, j)] + s

    tris = [(vid(i, j, 0), vid(i, j, 1), vid(i, j, 2)) for i, j in cells]
    for i in range(1, rows):
        for j in range(cols - 1):
            tris.append((vid(i, j, 1), vid(i, j + 1, 0), vid(i - 1, j + 1, 2)))
    return TriangleGraph(3 * len(cells), tuple(tris))


def obstructed5() -> TriangleGraph:
    """Five triangles on eight vertices admitting no zero-sum configuration.

    Smallest obstructed graph found by exhaustive enumeration of triangle
    graphs; its minimal energy is -15/2 + 1/10.
    """
    return TriangleGraph(8, ((0, 1, 2), (0, 3, 4), (1, 5, 6), (2, 3, 7), (4, 5, 7)))


BUILTIN = {
    "triangle": triangle,
    "leaf": leaf,
    "husimi": husimi,
    "loop": loop,
    "kagome_patch": kagome_patch,
    "obstructed5": obstructed5,
}


def build_graph(spec) -> TriangleGraph:
    """Graph from a JSON-like spec: a builtin name, {"builtin": name, "args": [...]}, or explicit triangles."""
    if isinstance(spec, str):
        spec = {"builtin": spec}
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN:
            raise ValidationError(f"unknown graph {name!r}")
        return BUILTIN[name](*spec.get("args", []))
    return TriangleGraph.from_dict(spec)

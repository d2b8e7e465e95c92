"""Criss-cross triangulations of the unit square and their uniform refinements.

Coordinates are kept on an integer lattice of spacing ``2**-(level + 1)`` so
that refinement, ordering and nestedness checks are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Local edge k of a triangle joins local vertices LOCAL_EDGES[k].
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh of (0, 1)^2.

    Attributes
    ----------
    lattice : (V, 2) int array
        Vertex coordinates in units of ``2**-(level + 1)``.
    triangles : (T, 3) int array
        Counterclockwise vertex indices.
    edges : (E, 2) int array
        Sorted vertex pairs, lexicographically ordered.
    triangle_edges : (T, 3) int array
        Edge index of local edge k, see ``LOCAL_EDGES``.
    level : int
        Number of uniform refinements applied to the 4-triangle mesh.
    parent : (T,) int array or None
        Coarse triangle containing each triangle (``None`` on level 0).
        Triangle ``t`` is child number ``t % 4`` of ``parent[t]``.
    vertex_origin : (V, 2) int array or None
        For each vertex ``(0, i)`` if it is coarse vertex ``i`` and
        ``(1, e)`` if it is the midpoint of coarse edge ``e``.
    """

    lattice: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    level: int
    parent: np.ndarray | None = field(default=None, repr=False)
    vertex_origin: np.ndarray | None = field(default=None, repr=False)

    @property
    def scale(self) -> int:
        return 2 ** (self.level + 1)

    @property
    def vertices(self) -> np.ndarray:
        return self.lattice / self.scale

    @property
    def n_vertices(self) -> int:
        return len(self.lattice)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def h(self) -> float:
        """Length of the axis-aligned edges."""
        return 1.0 / 2**self.level

    @property
    def areas(self) -> np.ndarray:
        """Signed triangle areas."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * self.vertices[self.edges].sum(axis=1)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles


def _edge_table(triangles):
    pairs = triangles[:, LOCAL_EDGES].reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def _canonical_order(lattice):
    """Permutation sorting lattice points by (y, x)."""
    return np.lexsort((lattice[:, 0], lattice[:, 1]))


def _make_mesh(lattice, triangles, level, parent=None, vertex_origin=None):
    order = _canonical_order(lattice)
    new_index = np.empty_like(order)
    new_index[order] = np.arange(len(order))
    lattice = lattice[order]
    triangles = new_index[triangles]
    if vertex_origin is not None:
        vertex_origin = vertex_origin[order]
    edges, triangle_edges = _edge_table(triangles)
    for a in (lattice, triangles, edges, triangle_edges):
        a.setflags(write=False)
    return Mesh(lattice, triangles, edges, triangle_edges, level, parent, vertex_origin)


def unit_square_initial_mesh() -> Mesh:
    """The 4-triangle mesh of (0, 1)^2 cut by both diagonals."""
    lattice = np.array([[0, 0], [2, 0], [0, 2], [2, 2], [1, 1]])
    # corners 0..3, center 4
    triangles = np.array([[0, 1, 4], [1, 3, 4], [3, 2, 4], [2, 0, 4]])
    return _make_mesh(lattice, triangles, level=0)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four by joining its edge midpoints.

    Children of triangle ``(a, b, c)`` with midpoints ``ab, bc, ca`` are
    ``(a, ab, ca)``, ``(ab, b, bc)``, ``(ca, bc, c)``, ``(ab, bc, ca)`` in
    that order, so their orientation matches the parent.
    """
    V, E, T = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    lattice = np.vstack([2 * mesh.lattice, mesh.lattice[mesh.edges].sum(axis=1)])
    tri = mesh.triangles
    mid = V + mesh.triangle_edges  # columns: ab, bc, ca
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    ).reshape(4 * T, 3)
    parent = np.repeat(np.arange(T), 4)
    origin = np.vstack(
        [
            np.column_stack([np.zeros(V, dtype=int), np.arange(V)]),
            np.column_stack([np.ones(E, dtype=int), np.arange(E)]),
        ]
    )
    parent.setflags(write=False)
    return _make_mesh(lattice, children, mesh.level + 1, parent, origin)


@dataclass(frozen=True)
class MeshHierarchy:
    """Nested meshes, coarsest first."""

    levels: tuple

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    @property
    def finest(self) -> Mesh:
        return self.levels[-1]

    @property
    def child_map(self) -> list:
        """Per level k >= 1, parent triangle (on level k-1) of each triangle."""
        return [m.parent for m in self.levels[1:]]


def build_hierarchy(num_levels: int) -> MeshHierarchy:
    """Meshes of levels ``0 .. num_levels - 1``."""
    if num_levels < 1:
        raise ValueError(f"num_levels must be >= 1, got {num_levels}")
    meshes = [unit_square_initial_mesh()]
    for _ in range(num_levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return MeshHierarchy(tuple(meshes))


def is_nested(coarse: Mesh, fine: Mesh) -> bool:
    """Check that every fine vertex is a coarse vertex or coarse edge midpoint."""
    if fine.level != coarse.level + 1 or fine.vertex_origin is None:
        return False
    kind, idx = fine.vertex_origin[:, 0], fine.vertex_origin[:, 1]
    expected = np.where(
        (kind == 0)[:, None],
        2 * coarse.lattice[np.where(kind == 0, idx, 0)],
        coarse.lattice[coarse.edges[np.where(kind == 1, idx, 0)]].sum(axis=1),
    )
    return bool(np.array_equal(expected, fine.lattice))


def p2_node_count(level: int) -> int:
    """Number of vertices plus edges of the level-``level`` mesh, by formula."""
    n = 2**level
    return (2 * n + 1) ** 2 + (2 * n) ** 2

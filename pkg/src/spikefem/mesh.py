"""Structured triangular meshes on the unit square.

The grid has ``n_side`` nodes per side at coordinates ``(i, j) / (n_side - 1)``
and every grid square is split into two right triangles along the same
diagonal (lower-left to upper-right), so the assembled stiffness stencil can
be checked analytically. Node numbering is row-major in ``(j, i)`` and
boundary membership is decided on the integer grid indices, which makes it
exact regardless of floating-point coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Node:
    """A mesh vertex with its boundary flag."""

    id: int
    x: float
    y: float
    on_boundary: bool


@dataclass(frozen=True)
class Element:
    """A triangle given by three node ids in counter-clockwise order."""

    node_ids: tuple[int, int, int]


class Mesh:
    """Triangulation of the unit square.

    Array views (``coords``, ``triangles``, ``boundary_mask``) back the
    record-style ``nodes`` / ``elements`` accessors; both describe the same
    immutable mesh.
    """

    def __init__(self, n_side: int, coords: np.ndarray, triangles: np.ndarray,
                 boundary_mask: np.ndarray):
        self.n_side = n_side
        self.coords = coords
        self.triangles = triangles
        self.boundary_mask = boundary_mask
        coords.setflags(write=False)
        triangles.setflags(write=False)
        boundary_mask.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def nodes(self) -> tuple[Node, ...]:
        return tuple(
            Node(i, float(self.coords[i, 0]), float(self.coords[i, 1]),
                 bool(self.boundary_mask[i]))
            for i in range(self.n_nodes)
        )

    @cached_property
    def elements(self) -> tuple[Element, ...]:
        return tuple(Element(tuple(int(n) for n in tri)) for tri in self.triangles)

    def element_coords(self, e: int) -> np.ndarray:
        """Coordinates of element ``e`` as a (3, 2) array."""
        return self.coords[self.triangles[e]]

    def node_id(self, i: int, j: int) -> int:
        """Node id at grid position (column ``i``, row ``j``)."""
        return j * self.n_side + i


def build_unit_square_mesh(n_side: int) -> Mesh:
    """Build the structured unit-square mesh with ``n_side`` nodes per side.

    Raises ``ValueError`` for ``n_side < 2``.
    """
    if n_side < 2:
        raise ValueError(f"n_side must be >= 2, got {n_side}")

    n = n_side
    idx = np.arange(n)
    frac = idx / (n - 1)
    xs, ys = np.meshgrid(frac, frac, indexing="xy")
    coords = np.column_stack([xs.ravel(), ys.ravel()])

    ii, jj = np.meshgrid(idx, idx, indexing="xy")
    on_edge = (ii == 0) | (ii == n - 1) | (jj == 0) | (jj == n - 1)
    boundary_mask = on_edge.ravel()

    # Two CCW triangles per grid square, diagonal from lower-left to
    # upper-right: (n00, n10, n11) and (n00, n11, n01).
    triangles = []
    for j in range(n - 1):
        for i in range(n - 1):
            n00 = j * n + i
            n10 = j * n + i + 1
            n01 = (j + 1) * n + i
            n11 = (j + 1) * n + i + 1
            triangles.append((n00, n10, n11))
            triangles.append((n00, n11, n01))
    tri = np.asarray(triangles, dtype=np.int32)

    return Mesh(n, coords, tri, boundary_mask)


def interior_nodes(mesh: Mesh) -> np.ndarray:
    """Ascending ids of nodes not on the boundary (the system's DOFs)."""
    return np.flatnonzero(~mesh.boundary_mask).astype(np.int32)


def signed_area(p0, p1, p2) -> float:
    """Signed area of the triangle (positive for CCW orientation)."""
    return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1])
                  - (p2[0] - p0[0]) * (p1[1] - p0[1]))


def element_areas(mesh: Mesh) -> np.ndarray:
    p = mesh.coords[mesh.triangles]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def export_mesh_csv(mesh: Mesh, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``nodes.csv`` (id, x, y, boundary) and ``elements.csv`` (id, n0, n1, n2)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes_path = out / "nodes.csv"
    elems_path = out / "elements.csv"
    with open(nodes_path, "w") as fh:
        fh.write("id,x,y,boundary\n")
        for i in range(mesh.n_nodes):
            fh.write(f"{i},{float(mesh.coords[i, 0])!r},{float(mesh.coords[i, 1])!r},"
                     f"{int(mesh.boundary_mask[i])}\n")
    with open(elems_path, "w") as fh:
        fh.write("id,n0,n1,n2\n")
        for e in range(mesh.n_elements):
            t = mesh.triangles[e]
            fh.write(f"{e},{t[0]},{t[1]},{t[2]}\n")
    return nodes_path, elems_path

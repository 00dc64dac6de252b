"""P1 finite-element assembly for the Poisson problem with zero Dirichlet data.

The weak form of ``laplace(u) = f`` gives ``K u = -F`` with the symmetric
positive definite stiffness ``K`` (gradient inner products) and the load
``F_i = integral of f * phi_i``. Boundary rows/columns are deleted outright,
so the reduced system ``A x = b`` keeps ``A`` SPD and ``b = -F`` restricted
to interior nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .mesh import Mesh, interior_nodes, signed_area

DEGENERATE_AREA = 1e-14


class SingularElementError(ValueError):
    """Raised when an element's area is too small to invert its geometry."""


class EmptySystemError(ValueError):
    """Raised when elimination of boundary nodes leaves no unknowns."""


@dataclass(frozen=True)
class CsrMatrix:
    """Minimal compressed-sparse-row matrix (float64 values, sorted columns)."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "CsrMatrix":
        """Compress coordinate triplets, summing duplicates and dropping
        entries that cancel to exactly zero."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            keep = np.empty(len(rows), dtype=bool)
            keep[0] = True
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(keep) - 1
            summed = np.zeros(group[-1] + 1, dtype=np.float64)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[keep], cols[keep], summed
            nonzero = vals != 0.0
            rows, cols, vals = rows[nonzero], cols[nonzero], vals[nonzero]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        offsets = np.cumsum(offsets)
        return cls(n_rows, n_cols, offsets, cols.astype(np.int32), vals)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"expected vector of length {self.n_cols}, got {x.shape}")
        prod = self.values * x[self.col_indices]
        out = np.zeros(self.n_rows)
        seg = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        np.add.at(out, seg, prod)
        return out

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            dense[i, self.col_indices[lo:hi]] = self.values[lo:hi]
        return dense

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def padded_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """ELL-style fixed-width (values, columns) arrays for the step kernels.

        Rows are padded with zero values at column 0; a padded slot therefore
        contributes exactly 0.0 to a matvec, keeping the fixed-length
        accumulation order identical in the numpy and compiled backends.
        """
        counts = np.diff(self.row_offsets)
        width = max(1, int(counts.max()) if len(counts) else 1)
        vals = np.zeros((self.n_rows, width))
        cols = np.zeros((self.n_rows, width), dtype=np.int32)
        for i in range(self.n_rows):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            vals[i, : hi - lo] = self.values[lo:hi]
            cols[i, : hi - lo] = self.col_indices[lo:hi]
        return vals, cols

    def inf_norm(self) -> float:
        """Maximum absolute row sum."""
        counts = np.diff(self.row_offsets)
        seg = np.repeat(np.arange(self.n_rows), counts)
        sums = np.zeros(self.n_rows)
        np.add.at(sums, seg, np.abs(self.values))
        return float(sums.max()) if self.n_rows else 0.0


@dataclass(frozen=True)
class FemSystem:
    """Reduced SPD system over interior nodes plus the DOF-to-node map."""

    A: CsrMatrix
    b: np.ndarray
    dof_to_node: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.A.n_rows


def evaluate_rhs(x: float, y: float) -> float:
    """Oscillatory benchmark right-hand side sin(3*pi*(x-y)) * sin(2*pi*(x+y)).

    Chosen so the solution carries positive and negative values of widely
    varying magnitude across the mesh; antisymmetric under (x, y) -> (y, x).
    """
    return math.sin(3.0 * math.pi * (x - y)) * math.sin(2.0 * math.pi * (x + y))


def zero_rhs(x: float, y: float) -> float:
    return 0.0


RHS_FIELDS: dict[str, Callable[[float, float], float]] = {
    "paper": evaluate_rhs,
    "zero": zero_rhs,
}


def element_stiffness(p0, p1, p2) -> np.ndarray:
    """3x3 stiffness of a linear triangle: K[i, j] = integral grad(phi_i) . grad(phi_j).

    Gradients of the hat functions are constant, so the integral is
    area * (b_i b_j + c_i c_j) with edge-vector coefficients b, c.
    """
    area = abs(signed_area(p0, p1, p2))
    if area <= DEGENERATE_AREA:
        raise SingularElementError(f"degenerate triangle, area {area:g}")
    b = np.array([p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]])
    c = np.array([p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]])
    return (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)


def element_load(p0, p1, p2, f: Callable[[float, float], float]) -> np.ndarray:
    """3-vector of integrals f * phi_i via the mid-edge quadrature rule.

    The rule (weights area/3 at edge midpoints) integrates quadratics
    exactly; each hat function equals 1/2 on its two adjacent midpoints.
    """
    area = abs(signed_area(p0, p1, p2))
    if area <= DEGENERATE_AREA:
        raise SingularElementError(f"degenerate triangle, area {area:g}")
    m01 = (0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1]))
    m12 = (0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1]))
    m20 = (0.5 * (p2[0] + p0[0]), 0.5 * (p2[1] + p0[1]))
    f01, f12, f20 = f(*m01), f(*m12), f(*m20)
    w = area / 3.0
    return w * 0.5 * np.array([f01 + f20, f01 + f12, f12 + f20])


def assemble(mesh: Mesh, f: Callable[[float, float], float]) -> FemSystem:
    """Assemble the interior-node system A x = b for the given source field.

    Raises ``EmptySystemError`` when the mesh has no interior nodes.
    """
    interior = interior_nodes(mesh)
    if len(interior) == 0:
        raise EmptySystemError("mesh has no interior nodes")
    n_dofs = len(interior)
    dof_of_node = np.full(mesh.n_nodes, -1, dtype=np.int64)
    dof_of_node[interior] = np.arange(n_dofs)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    load = np.zeros(n_dofs)
    for e in range(mesh.n_elements):
        tri = mesh.triangles[e]
        pts = mesh.coords[tri]
        ke = element_stiffness(pts[0], pts[1], pts[2])
        fe = element_load(pts[0], pts[1], pts[2], f)
        dofs = dof_of_node[tri]
        for a in range(3):
            if dofs[a] < 0:
                continue
            load[dofs[a]] += fe[a]
            for bidx in range(3):
                if dofs[bidx] < 0:
                    continue
                rows.append(dofs[a])
                cols.append(dofs[bidx])
                vals.append(ke[a, bidx])

    A = CsrMatrix.from_coo(n_dofs, n_dofs, rows, cols, vals)
    return FemSystem(A=A, b=-load, dof_to_node=interior.astype(np.int64))


def assemble_full_stiffness(mesh: Mesh) -> CsrMatrix:
    """Stiffness over all nodes, before boundary elimination (for diagnostics)."""
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for e in range(mesh.n_elements):
        tri = mesh.triangles[e]
        pts = mesh.coords[tri]
        ke = element_stiffness(pts[0], pts[1], pts[2])
        for a in range(3):
            for bidx in range(3):
                rows.append(int(tri[a]))
                cols.append(int(tri[bidx]))
                vals.append(ke[a, bidx])
    return CsrMatrix.from_coo(mesh.n_nodes, mesh.n_nodes, rows, cols, vals)


def export_system(system: FemSystem, out_dir: str | Path) -> tuple[Path, Path]:
    """Write A in Matrix Market coordinate format and b as one value per line."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a_path = out / "system_A.mtx"
    b_path = out / "system_b.txt"
    A = system.A
    with open(a_path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        entries = []
        for i in range(A.n_rows):
            cols_i, vals_i = A.row(i)
            for j, v in zip(cols_i, vals_i):
                if j <= i:
                    entries.append((i + 1, j + 1, v))
        fh.write(f"{A.n_rows} {A.n_cols} {len(entries)}\n")
        for i, j, v in entries:
            fh.write(f"{i} {j} {float(v)!r}\n")
    with open(b_path, "w") as fh:
        for v in system.b:
            fh.write(f"{float(v)!r}\n")
    return a_path, b_path

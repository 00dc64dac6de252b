import numpy as np
import pytest

from spikefem.mesh import (build_unit_square_mesh, element_areas,
                           export_mesh_csv, interior_nodes, signed_area)


def test_smallest_grid():
    mesh = build_unit_square_mesh(2)
    assert mesh.n_nodes == 4
    assert mesh.n_elements == 2
    assert len(interior_nodes(mesh)) == 0


def test_n3_counts_and_center():
    mesh = build_unit_square_mesh(3)
    assert mesh.n_nodes == 9
    assert mesh.n_elements == 8
    inner = interior_nodes(mesh)
    assert len(inner) == 1
    node = mesh.nodes[inner[0]]
    assert (node.x, node.y) == (0.5, 0.5)
    assert not node.on_boundary


def test_n17_counts_by_enumeration():
    mesh = build_unit_square_mesh(17)
    assert mesh.n_nodes == 17 ** 2 == 289
    assert mesh.n_elements == 2 * 16 ** 2 == 512
    inner = interior_nodes(mesh)
    assert len(inner) == 15 ** 2 == 225
    # enumeration agrees with the boundary flags
    by_flag = [n.id for n in mesh.nodes if not n.on_boundary]
    assert list(inner) == by_flag


def test_rejects_degenerate_grid():
    with pytest.raises(ValueError):
        build_unit_square_mesh(1)


@pytest.mark.parametrize("n_side", [2, 3, 4, 5, 9, 17])
def test_area_orientation_boundary(n_side):
    mesh = build_unit_square_mesh(n_side)
    areas = element_areas(mesh)
    assert np.all(areas > 0)
    assert abs(areas.sum() - 1.0) <= 1e-12
    assert int(mesh.boundary_mask.sum()) == 4 * (n_side - 1)
    # boundary flag matches coordinates exactly
    for node in mesh.nodes:
        expected = node.x in (0.0, 1.0) or node.y in (0.0, 1.0)
        assert node.on_boundary == expected


@pytest.mark.parametrize("n_side", [3, 6, 9])
def test_interior_edges_shared_by_two_elements(n_side):
    mesh = build_unit_square_mesh(n_side)
    edge_count: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edge = tuple(sorted((int(tri[a]), int(tri[b]))))
            edge_count[edge] = edge_count.get(edge, 0) + 1
    for (i, j), count in edge_count.items():
        both_boundary = mesh.boundary_mask[i] and mesh.boundary_mask[j]
        if count == 1:
            # single-element edges must lie along the square's boundary
            assert both_boundary
            assert (mesh.coords[i, 0] == mesh.coords[j, 0]
                    or mesh.coords[i, 1] == mesh.coords[j, 1])
        else:
            assert count == 2


def test_deterministic_construction():
    a = build_unit_square_mesh(7)
    b = build_unit_square_mesh(7)
    assert np.array_equal(a.coords, b.coords)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.boundary_mask, b.boundary_mask)


def test_signed_area_ccw():
    assert signed_area((0, 0), (1, 0), (0, 1)) == pytest.approx(0.5)
    assert signed_area((0, 0), (0, 1), (1, 0)) == pytest.approx(-0.5)


def test_csv_export_roundtrip(tmp_path):
    mesh = build_unit_square_mesh(4)
    nodes_path, elems_path = export_mesh_csv(mesh, tmp_path)
    node_lines = nodes_path.read_text().splitlines()
    elem_lines = elems_path.read_text().splitlines()
    assert node_lines[0] == "id,x,y,boundary"
    assert elem_lines[0] == "id,n0,n1,n2"
    assert len(node_lines) == mesh.n_nodes + 1
    assert len(elem_lines) == mesh.n_elements + 1
    nid, x, y, flag = node_lines[1].split(",")
    assert (int(nid), float(x), float(y), int(flag)) == (0, 0.0, 0.0, 1)

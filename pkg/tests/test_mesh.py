import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdgfsi.benchmarks import example1_mesh, example2_mesh
from hdgfsi.mesh import (
    INTERFACE,
    Mesh,
    MeshError,
    MeshFormatError,
    check_labels,
    classify_facets,
    generate_structured,
    load_mesh,
    save_mesh,
)


def sides(tol=1e-12):
    return {
        "left": lambda x, y: np.abs(x) < tol,
        "right": lambda x, y: np.abs(x - 1) < tol,
        "bottom": lambda x, y: np.abs(y) < tol,
        "top": lambda x, y: np.abs(y - 1) < tol,
    }


def test_single_cell():
    m = generate_structured((0, 1, 0, 1), 1, 1)
    assert (m.n_elements, m.n_facets, m.interior_facets.size) == (2, 5, 1)


def test_example1_counts():
    m = generate_structured((0, 1, -1, 0.5), 8, 12, split_y=0.0)
    assert m.n_elements == 192
    assert m.labels[INTERFACE].size == 8
    assert m.interface_facets.size == 8


def test_example1_tags_follow_centroid_sign():
    m = example1_mesh(1 / 8)
    assert np.array_equal(m.solid, m.centroids[:, 1] > 0)
    assert m.subdomain_area(True) == pytest.approx(0.5, rel=1e-12)
    assert m.subdomain_area(False) == pytest.approx(1.0, rel=1e-12)


def test_split_off_grid_rejected():
    with pytest.raises(MeshError, match="split_y"):
        generate_structured((0, 1, 0, 1), 2, 3, split_y=0.5)


@pytest.mark.parametrize("nx,ny", [(0, 1), (1, 0)])
def test_bad_counts(nx, ny):
    with pytest.raises(MeshError):
        generate_structured((0, 1, 0, 1), nx, ny)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_structured_invariants(nx, ny, w, hgt):
    m = generate_structured((0, w, 0, hgt), nx, ny)
    # area, Euler relation and facet sharing
    assert m.areas.sum() == pytest.approx(w * hgt, rel=1e-12)
    assert m.n_vertices - m.n_facets + m.n_elements == 1
    assert np.all(m.areas > 0)
    assert np.all((m.facet_elems[:, 1] >= 0) == np.isin(np.arange(m.n_facets), m.interior_facets))
    counts = np.bincount(m.elem_facets.ravel(), minlength=m.n_facets)
    assert set(counts[m.interior_facets]) <= {2} and set(counts[m.boundary_facets]) <= {1}
    if w / nx <= 3 * hgt / ny and hgt / ny <= 3 * w / nx:
        assert m.gamma <= 4


def test_normals_are_opposite_across_interior_facets():
    m = example1_mesh(1 / 4)
    n = m.element_normals()
    for f in m.interior_facets:
        (e0, e1), (l0, l1) = m.facet_elems[f], m.facet_local[f]
        assert np.array_equal(n[e0, l0], -n[e1, l1])


def test_generated_meshes_quasi_uniform():
    for h in (1 / 4, 1 / 8, 1 / 16):
        assert example1_mesh(h).gamma <= 4
    assert example2_mesh(0.1).gamma <= 4


def test_classify_unit_square():
    m = classify_facets(generate_structured((0, 1, 0, 1), 3, 3), sides())
    sets = [set(m.labels[k].tolist()) for k in ("left", "right", "bottom", "top")]
    assert all(len(s) == 3 for s in sets)
    assert len(set().union(*sets)) == 12
    check_labels(m)


def test_example2_labels():
    m = example2_mesh(0.1)
    names = set(m.labels)
    assert names == {"gamma_f_in", "gamma_f_out", "gamma_f_bot", "gamma_s_in", "gamma_s_out", "gamma_s_top", INTERFACE}
    check_labels(m)


def test_unlabelled_facet_reported_by_midpoint():
    preds = sides()
    preds["top"] = lambda x, y: (np.abs(y - 1) < 1e-12) & (x < 0.5)
    with pytest.raises(MeshError, match=r"\(0\.75, 1\)"):
        classify_facets(generate_structured((0, 1, 0, 1), 2, 2), preds)


def test_doubly_labelled_facet_rejected():
    preds = sides()
    preds["also_left"] = lambda x, y: np.abs(x) < 1e-12
    with pytest.raises(MeshError, match=r"doubly covered facet at midpoint \(0, 0.25\)"):
        classify_facets(generate_structured((0, 1, 0, 1), 2, 2), preds)


def test_round_trip(tmp_path):
    m = example2_mesh(0.1)
    p = tmp_path / "m.txt"
    save_mesh(m, p)
    m2 = load_mesh(p)
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.solid, m2.solid)
    assert set(m.labels) == set(m2.labels)
    for k in m.labels:
        assert np.array_equal(np.sort(m.labels[k]), np.sort(m2.labels[k]))


def test_round_trip_irrational_coordinates(tmp_path, rng):
    v = np.array([[0, 0], [1, 0], [0, 1], [1, 1]]) + 1e-3 * rng.standard_normal((4, 2)) / 3
    m = Mesh(v, np.array([[0, 1, 3], [0, 3, 2]]), np.array([False, True]))
    save_mesh(m, tmp_path / "m.txt")
    assert np.array_equal(load_mesh(tmp_path / "m.txt").vertices, m.vertices)


def test_vertex_index_out_of_range(tmp_path):
    lines = ["hdgfsi-mesh v1", "10 1"] + [f"{i} 0" for i in range(9)] + ["0 1", "0 1 999 f"]
    p = tmp_path / "bad.txt"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshFormatError, match="vertex index out of range, line 13"):
        load_mesh(p)


def test_bad_header_and_area(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("not a mesh\n")
    with pytest.raises(MeshFormatError, match="line 1"):
        load_mesh(p)
    p.write_text("hdgfsi-mesh v1\n3 1\n0 0\n1 0\n0 1\n0 2 1 f\n")
    with pytest.raises(MeshFormatError, match="non-positive area, line 6"):
        load_mesh(p)


def test_hand_written_two_triangle_file(tmp_path):
    p = tmp_path / "two.txt"
    p.write_text("hdgfsi-mesh v1\n4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2 f\n0 2 3 s\n")
    m = load_mesh(p)
    assert m.interior_facets.size == 1
    f = m.interior_facets[0]
    assert tuple(m.facets[f]) == (0, 2)
    assert sorted(m.facet_elems[f]) == [0, 1]
    assert m.labels[INTERFACE].tolist() == [f]

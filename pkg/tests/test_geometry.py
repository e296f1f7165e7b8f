import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kreslingcap.errors import ParameterError, TopologyError
from kreslingcap.geometry import (EdgeClass, OrigamiParams, add_lids, assemble, base_hexagon, boundary_loops,
                                  build_unit, export_mesh, point_set_distance, read_mesh, rotate_lift, seed_points,
                                  weld, Panels)

from conftest import default_mesh


def test_hexagon_unit_radius():
    pts = base_hexagon(OrigamiParams(hex_radius=1.0, footprint=2.0))
    assert np.allclose(pts[0], [1.0, 0.0])
    ang = np.degrees(np.arctan2(pts[:, 1], pts[:, 0])) % 360
    assert np.allclose(np.diff(ang), 60.0)


def test_hexagon_radius_22_8():
    pts = base_hexagon(OrigamiParams(hex_radius=22.8))
    assert np.allclose(np.linalg.norm(pts, axis=1), 22.8, atol=1e-12)


def test_triangle():
    pts = base_hexagon(OrigamiParams(n=3, hex_radius=1.0, footprint=2.0))
    ang = np.degrees(np.arctan2(pts[:, 1], pts[:, 0])) % 360
    assert np.allclose(ang, [0.0, 120.0, 240.0])


def test_rotate_lift_identity():
    p = np.array([[1.5, -2.0], [0.3, 4.0]])
    out = rotate_lift(p, 0.0, 0.0)
    assert np.allclose(out[:, :2], p) and np.allclose(out[:, 2], 0.0)


def test_rotate_lift_75_degrees():
    r = 21.0
    out = rotate_lift([[r, 0.0]], 75.0, 6.0)[0]
    # cos/sin of 75 deg from the half-angle identities
    c75 = (np.sqrt(6) - np.sqrt(2)) / 4
    s75 = (np.sqrt(6) + np.sqrt(2)) / 4
    assert np.allclose(out, [r * c75, r * s75, 6.0], atol=1e-12)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-720, 720), st.floats(-10, 10))
def test_rotate_lift_preserves_radius(x, y, beta, h):
    out = rotate_lift([[x, y]], beta, h)[0]
    assert abs(np.hypot(out[0], out[1]) - np.hypot(x, y)) <= 1e-12 * max(1.0, np.hypot(x, y))
    assert out[2] == pytest.approx(h)


@pytest.mark.parametrize("kw", [
    dict(beta=0.0), dict(beta=180.0), dict(h=0.0), dict(wall_t=0.0), dict(stories=0), dict(n=2),
    dict(seed_fracs=(0.7, 0.3)), dict(seed_fracs=(0.0, 0.5)), dict(seed_fracs=(0.5, 0.5)),
    dict(hex_radius=23.0), dict(panel_subdiv=0),
])
def test_invalid_params(kw):
    with pytest.raises(ParameterError):
        OrigamiParams(**kw).validate()


def test_unit_panels_share_diagonal():
    p = OrigamiParams()
    u = build_unit(p)
    f1, f2 = u.tris
    shared = [v for v in f1 if any(np.allclose(v, w) for w in f2)]
    assert len(shared) == 2
    s = seed_points(p)
    assert np.allclose(f1[0], s[0]) and np.allclose(f1[1], s[1])


def test_default_envelope_and_closure():
    m = default_mesh()
    assert np.allclose(m.extents(), [45.6, 45.6, 60.0], atol=0.1)
    assert m.bounding_box()[0][2] == pytest.approx(0.0, abs=1e-9)
    assert m.is_watertight()
    assert m.faces.min() >= 0 and m.faces.max() < len(m.vertices)
    assert m.face_areas().min() > 1e-6


def test_default_orientation_outward():
    m = default_mesh()
    directed = set()
    for f in m.faces:
        for i in range(3):
            e = (int(f[i]), int(f[(i + 1) % 3]))
            assert e not in directed
            directed.add(e)
    t = m.vertices[m.faces]
    volume = np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0
    assert volume > 0


def test_edge_classes_before_and_after_lids():
    bare = assemble(OrigamiParams(), lids=False)
    counts = bare.edge_face_counts()
    cls = bare.edge_class
    assert np.all(counts[(cls == EdgeClass.FOLD.value) | (cls == EdgeClass.FACET.value)] == 2)
    assert np.all(counts[cls == EdgeClass.BOUNDARY.value] == 1)
    assert len(boundary_loops(bare)) == 2
    lidded = default_mesh()
    counts = lidded.edge_face_counts()
    assert np.all(counts == 2)
    assert (lidded.edge_class == EdgeClass.BOUNDARY.value).sum() == (cls == EdgeClass.BOUNDARY.value).sum()
    assert set(np.unique(lidded.edge_class)) == {"FOLD", "FACET", "BOUNDARY", "LID"}


def test_lid_metadata():
    m = default_mesh()
    vent = m.metadata["vent"]
    assert vent["radius"] > 0 and vent["center"][2] == pytest.approx(0.0)
    lid = m.metadata["lid_nodes"]
    assert np.allclose(m.vertices[lid["bottom"], 2].max(), 6.0)
    assert np.allclose(m.vertices[lid["top"], 2].min(), 54.0)


def test_add_lids_needs_two_rims():
    single = weld(Panels.from_triangles([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]]))
    with pytest.raises(TopologyError):
        add_lids(single, OrigamiParams())


def test_thin_lids_cap_the_rims():
    m = assemble(OrigamiParams(lid_t=0.0, stories=1))
    assert m.is_watertight()
    assert m.extents()[2] == pytest.approx(12.0)


def test_plain_stack_same_height():
    a = assemble(OrigamiParams(stories=2), mirrored=True)
    b = assemble(OrigamiParams(stories=2), mirrored=False)
    assert b.is_watertight()
    assert a.extents()[2] == pytest.approx(b.extents()[2])


@pytest.mark.parametrize("fmt", ["stl", "obj"])
def test_export_roundtrip(fmt):
    m = assemble(OrigamiParams(stories=1, panel_subdiv=1))
    verts, faces, normals = read_mesh(export_mesh(m, fmt), fmt)
    tri = verts[faces]
    assert tri.shape == (len(m.faces), 3, 3)
    assert np.abs(tri - m.vertices[m.faces]).max() < 1e-6
    if fmt == "stl":
        assert np.allclose(normals, m.face_normals(), atol=1e-6)


def test_export_rejects_unknown_format():
    with pytest.raises(ParameterError):
        export_mesh(default_mesh(), "ply")


def _band_vertices(m):
    band = np.unique(m.faces[m.face_layer >= 0])
    return m.vertices[band]


def _rot(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


params_strategy = st.builds(
    OrigamiParams,
    n=st.integers(3, 8),
    hex_radius=st.floats(8.0, 22.8),
    beta=st.floats(15.0, 165.0),
    h=st.floats(2.0, 12.0),
    stories=st.integers(1, 3),
    lid_t=st.sampled_from([0.0, 2.0, 6.0]),
    seed_fracs=st.tuples(st.floats(0.05, 0.45), st.floats(0.55, 0.95)),
    panel_subdiv=st.integers(1, 2),
)


@settings(max_examples=50)
@given(params_strategy)
def test_symmetry_and_closure_random(p):
    m = assemble(p)
    assert m.is_watertight()
    tol = 1e-9 * p.hex_radius
    band = _band_vertices(m)
    assert point_set_distance(band, band @ _rot(360.0 / p.n).T) < tol
    for k in range(p.stories):
        z0 = p.lid_t + 2 * p.h * k
        sel = band[(band[:, 2] >= z0 - tol) & (band[:, 2] <= z0 + 2 * p.h + tol)]
        ref = sel.copy()
        ref[:, 2] = 2 * (z0 + p.h) - ref[:, 2]
        assert point_set_distance(sel, ref) < tol
    assert m.extents()[2] == pytest.approx(p.height, abs=1e-9)

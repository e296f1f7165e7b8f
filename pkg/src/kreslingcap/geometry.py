"""Parametric inverted-Kresling fold geometry.

The construction follows the usual CAD recipe for the pattern:

1. regular ``n``-gon, two seed points on its first side,
2. seeds rotated about the axis by ``beta`` and lifted by ``h``,
3. the two panels F1 and F2 spanned between seeds and their images,
4. reflection of the layer across ``z = h`` (the inverted pair),
5. circular array around the axis, linear array along it,
6. square top and bottom lids.

Geometry is a zero-thickness midsurface.  Lengths are in mm, angles in
degrees at the public surface.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, ParameterError, TopologyError


class EdgeClass(str, Enum):
    FOLD = "FOLD"
    FACET = "FACET"
    BOUNDARY = "BOUNDARY"
    LID = "LID"


# provisional edge labels carried by loose panels, resolved when welding
RING, GENERATOR, DIAGONAL, FACET_DIAGONAL, LID_EDGE = range(5)


@dataclass(frozen=True)
class OrigamiParams:
    """Design parameters of the folded structure.

    Defaults reproduce a 45.6 x 45.6 x 60.0 mm envelope with four
    mirrored stories of pitch ``2 h`` and 6 mm lids.  ``panel_subdiv``
    splits every panel into ``k**2`` triangles joined by facet creases so
    panels can bend as well as fold.
    """

    n: int = 6
    footprint: float = 45.6
    hex_radius: float = 21.0
    beta: float = 75.0
    h: float = 6.0
    stories: int = 4
    wall_t: float = 0.60
    lid_t: float = 6.0
    seed_fracs: tuple = (0.3, 0.7)
    lid_segments: int = 3
    vent_radius: float = 3.0
    panel_subdiv: int = 2

    def __post_init__(self):
        object.__setattr__(self, "seed_fracs", tuple(float(s) for s in self.seed_fracs))

    def validate(self) -> "OrigamiParams":
        if int(self.n) != self.n or self.n < 3:
            raise ParameterError(f"polygon order must be an integer >= 3, got {self.n}")
        if not 0.0 < self.beta < 180.0:
            raise ParameterError(f"beta must lie in (0, 180) degrees, got {self.beta}")
        if not self.h > 0.0:
            raise ParameterError(f"h must be positive, got {self.h}")
        if not self.wall_t > 0.0:
            raise ParameterError(f"wall thickness must be positive, got {self.wall_t}")
        if int(self.stories) != self.stories or self.stories < 1:
            raise ParameterError(f"stories must be an integer >= 1, got {self.stories}")
        if not self.lid_t >= 0.0:
            raise ParameterError(f"lid thickness must be non-negative, got {self.lid_t}")
        if not self.hex_radius > 0.0:
            raise ParameterError(f"hex_radius must be positive, got {self.hex_radius}")
        if 2.0 * self.hex_radius > self.footprint + 1e-12:
            raise ParameterError("hexagon does not fit the lid footprint")
        if len(self.seed_fracs) != 2:
            raise ParameterError("seed_fracs needs exactly two entries")
        s0, s1 = self.seed_fracs
        if not (0.0 < s0 < 1.0 and 0.0 < s1 < 1.0):
            raise ParameterError(f"seed_fracs must lie in (0, 1), got {self.seed_fracs}")
        if not s0 < s1:
            raise ParameterError(f"seed_fracs must be strictly increasing, got {self.seed_fracs}")
        if self.lid_segments < 1:
            raise ParameterError("lid_segments must be >= 1")
        if int(self.panel_subdiv) != self.panel_subdiv or self.panel_subdiv < 1:
            raise ParameterError("panel_subdiv must be an integer >= 1")
        return self

    @property
    def height(self) -> float:
        return 2.0 * self.h * self.stories + 2.0 * self.lid_t


@dataclass(frozen=True)
class Panels:
    """Loose triangles with per-edge labels, before vertex welding.

    ``edge_labels[k, i]`` labels the edge from corner ``i`` to corner
    ``i + 1`` of triangle ``k``.
    """

    tris: np.ndarray
    edge_labels: np.ndarray
    kind: np.ndarray
    layer: np.ndarray
    unit: np.ndarray

    @classmethod
    def from_triangles(cls, tris, kind="F", labels=RING, layer=0, unit=0):
        tris = np.asarray(tris, dtype=float).reshape(-1, 3, 3)
        k = len(tris)
        return cls(
            tris=tris,
            edge_labels=np.broadcast_to(np.asarray(labels), (k, 3)).astype(int).copy(),
            kind=np.broadcast_to(np.asarray(kind), (k,)).astype("U8").copy(),
            layer=np.broadcast_to(np.asarray(layer), (k,)).astype(int).copy(),
            unit=np.broadcast_to(np.asarray(unit), (k,)).astype(int).copy(),
        )

    def __len__(self):
        return len(self.tris)

    def with_tris(self, tris, **kw):
        return replace(self, tris=np.asarray(tris, dtype=float), **kw)

    @staticmethod
    def concat(parts):
        parts = list(parts)
        return Panels(
            tris=np.concatenate([p.tris for p in parts]),
            edge_labels=np.concatenate([p.edge_labels for p in parts]),
            kind=np.concatenate([p.kind for p in parts]),
            layer=np.concatenate([p.layer for p in parts]),
            unit=np.concatenate([p.unit for p in parts]),
        )


@dataclass(frozen=True)
class FoldMesh:
    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    edge_class: np.ndarray
    face_kind: np.ndarray
    face_layer: np.ndarray
    face_unit: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("vertices", "faces", "edges", "edge_class", "face_kind", "face_layer", "face_unit"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def bounding_box(self):
        if len(self.vertices) == 0:
            return np.zeros(3), np.zeros(3)
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extents(self):
        lo, hi = self.bounding_box()
        return hi - lo

    def edge_face_counts(self):
        """Number of faces incident to each entry of ``edges``."""
        counts = _edge_incidence(self.faces)
        return np.array([counts.get((int(a), int(b)), 0) for a, b in self.edges])

    def is_watertight(self):
        return len(self.faces) > 0 and bool(np.all(self.edge_face_counts() == 2))

    def face_areas(self):
        t = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def face_normals(self):
        t = self.vertices[self.faces]
        nrm = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return nrm / np.linalg.norm(nrm, axis=1, keepdims=True)


def _edge_incidence(faces):
    counts = {}
    for f in np.asarray(faces):
        for i in range(3):
            a, b = int(f[i]), int(f[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def _rot_z(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# construction steps
# ---------------------------------------------------------------------------

def base_hexagon(params: OrigamiParams) -> np.ndarray:
    """Vertices of the regular base polygon, CCW, first vertex on +x."""
    params.validate()
    ang = 2.0 * np.pi * np.arange(params.n) / params.n
    return params.hex_radius * np.column_stack([np.cos(ang), np.sin(ang)])


def rotate_lift(points, beta, h) -> np.ndarray:
    """Rotate points by ``beta`` degrees about the z axis and raise them by ``h``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    out = pts @ _rot_z(beta).T
    out[:, 2] += h
    return out


def seed_points(params: OrigamiParams) -> np.ndarray:
    """The two seed points on the first polygon side, as 3D points at z = 0."""
    hexagon = base_hexagon(params)
    a, b = hexagon[0], hexagon[1]
    seeds = np.array([a + s * (b - a) for s in params.seed_fracs])
    return np.column_stack([seeds, np.zeros(2)])


def _check_triangles(tris, what):
    t = np.asarray(tris)
    area2 = np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
    scale = max(np.ptp(t.reshape(-1, 3), axis=0).max(), 1e-300)
    if np.any(area2 <= 1e-12 * scale**2):
        raise GeometryError(f"degenerate triangle in {what}")


def build_unit(params: OrigamiParams) -> Panels:
    """Panels F1 and F2 between the seed points and their rotated, lifted images.

    With seeds ``p1, p2`` and images ``q1, q2``: ``F1 = (p1, p2, q1)`` and
    ``F2 = (p2, q2, q1)``; they share the diagonal ``p2 - q1``.
    """
    params.validate()
    p1, p2 = seed_points(params)
    if np.linalg.norm(p2 - p1) <= 1e-12 * params.hex_radius:
        raise GeometryError("seed points coincide")
    q1, q2 = rotate_lift(np.array([p1, p2]), params.beta, params.h)
    tris = np.array([[p1, p2, q1], [p2, q2, q1]])
    _check_triangles(tris, "unit")
    labels = np.array([[RING, DIAGONAL, GENERATOR], [GENERATOR, RING, DIAGONAL]])
    return Panels(tris, labels, np.array(["F1", "F2"]), np.zeros(2, int), np.zeros(2, int))


def bridge_unit(params: OrigamiParams) -> Panels:
    """Corner panels closing the gap between neighbouring units.

    They span the second seed of one side and the first seed of the next
    side, triangulated the same way as F1/F2.  Their diagonal is a facet
    crease (a bending line inside a single corner panel).
    """
    params.validate()
    p1, p2 = seed_points(params)
    nxt = p1 @ _rot_z(360.0 / params.n).T
    q2, qn = rotate_lift(np.array([p2, nxt]), params.beta, params.h)
    tris = np.array([[p2, nxt, q2], [nxt, qn, q2]])
    _check_triangles(tris, "bridge")
    labels = np.array([[RING, FACET_DIAGONAL, GENERATOR], [GENERATOR, RING, FACET_DIAGONAL]])
    return Panels(tris, labels, np.array(["B1", "B2"]), np.zeros(2, int), np.zeros(2, int))


def reflect(panels: Panels, h: float) -> Panels:
    """Reflection across the plane ``z = h``; winding is reversed to keep orientation."""
    tris = panels.tris.copy()
    tris[..., 2] = 2.0 * h - tris[..., 2]
    tris = tris[:, ::-1, :]
    # reversing corners (0,1,2)->(2,1,0) maps edge i to edge (1 - i) mod 3
    labels = panels.edge_labels[:, [1, 0, 2]]
    return replace(panels, tris=tris, edge_labels=labels)


def mirror_unit(panels: Panels, h: float) -> Panels:
    """Original panels plus their reflection across ``z = h``.

    The reflected copies are tagged one layer above their source.
    """
    mirrored = reflect(panels, h)
    mirrored = replace(mirrored, layer=panels.layer + 1)
    return Panels.concat([panels, mirrored])


def circular_array(panels: Panels, n: int) -> Panels:
    """``n`` copies rotated about the z axis in steps of ``360/n`` degrees."""
    if n < 3:
        raise ParameterError("circular array needs n >= 3")
    parts = []
    for k in range(n):
        rot = _rot_z(360.0 * k / n)
        parts.append(replace(panels, tris=panels.tris @ rot.T, unit=panels.unit + k))
    return Panels.concat(parts)


def linear_array(panels: Panels, stories: int, pitch: float, twist: float = 0.0) -> Panels:
    """Stack ``stories`` copies along z at ``pitch``.

    ``twist`` rotates each copy by a further ``twist`` degrees; it is zero for
    the mirrored stack and used only to build plain (non-inverted) stacks.
    """
    if stories < 1:
        raise ParameterError("stories must be >= 1")
    nlayers = int(panels.layer.max()) + 1 if len(panels) else 1
    parts = []
    for k in range(stories):
        tris = panels.tris @ _rot_z(twist * k).T
        tris = tris + np.array([0.0, 0.0, pitch * k])
        parts.append(replace(panels, tris=tris, layer=panels.layer + k * nlayers))
    return Panels.concat(parts)


# ---------------------------------------------------------------------------
# welding
# ---------------------------------------------------------------------------

def weld(panels: Panels, tol: float | None = None, metadata=None) -> FoldMesh:
    """Merge coincident corners into a shared-vertex mesh and classify edges."""
    if len(panels) == 0:
        return FoldMesh(np.zeros((0, 3)), np.zeros((0, 3), int), np.zeros((0, 2), int),
                        np.zeros(0, "U8"), np.zeros(0, "U8"), np.zeros(0, int), np.zeros(0, int),
                        dict(metadata or {}))
    pts = panels.tris.reshape(-1, 3)
    if tol is None:
        tol = 1e-7 * max(np.abs(pts).max(), 1.0)
    tree = cKDTree(pts)
    rep = np.arange(len(pts))
    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = rep[i], rep[j]
        while rep[ri] != ri:
            ri = rep[ri]
        while rep[rj] != rj:
            rj = rep[rj]
        if ri != rj:
            rep[max(ri, rj)] = min(ri, rj)
    for i in range(len(rep)):
        r = rep[i]
        while rep[r] != r:
            r = rep[r]
        rep[i] = r
    uniq, inverse = np.unique(rep, return_inverse=True)
    vertices = pts[uniq]
    faces = inverse.reshape(-1, 3)
    if np.any((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])):
        raise GeometryError("welding collapsed a triangle")
    return _classified_mesh(vertices, faces, panels.edge_labels, panels.kind, panels.layer,
                            panels.unit, dict(metadata or {}))


def _classified_mesh(vertices, faces, edge_labels, kind, layer, unit, metadata):
    label_of = {}
    count = {}
    for f, labs in zip(faces, edge_labels):
        for i in range(3):
            a, b = int(f[i]), int(f[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            count[key] = count.get(key, 0) + 1
            lab = int(labs[i])
            # the rim keeps its ring label even after a lid attaches to it
            if key not in label_of or label_of[key] == LID_EDGE:
                label_of[key] = lab
    keys = sorted(label_of)
    classes = []
    for key in keys:
        lab = label_of[key]
        if lab == LID_EDGE:
            classes.append(EdgeClass.LID.value)
        elif lab == FACET_DIAGONAL:
            classes.append(EdgeClass.FACET.value)
        elif lab == RING and (count[key] == 1 or metadata.get("rim_edges") and key in metadata["rim_edges"]):
            classes.append(EdgeClass.BOUNDARY.value)
        else:
            classes.append(EdgeClass.FOLD.value)
    edges = np.array(keys, dtype=int).reshape(-1, 2)
    return FoldMesh(np.asarray(vertices, float), np.asarray(faces, int), edges,
                    np.array(classes, dtype="U8"), np.asarray(kind, "U8"), np.asarray(layer, int),
                    np.asarray(unit, int), metadata)


def boundary_loops(mesh: FoldMesh):
    """Ordered vertex loops formed by edges with a single incident face."""
    counts = _edge_incidence(mesh.faces)
    nbr = {}
    for (a, b), c in counts.items():
        if c == 1:
            nbr.setdefault(a, []).append(b)
            nbr.setdefault(b, []).append(a)
    if any(len(v) != 2 for v in nbr.values()):
        raise TopologyError("open boundary is not a set of simple loops")
    loops, seen = [], set()
    for start in sorted(nbr):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            a, b = nbr[cur]
            nxt = a if a != prev else b
            if nxt == start:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        loops.append(np.array(loop))
    return loops


# ---------------------------------------------------------------------------
# lids
# ---------------------------------------------------------------------------

def _ccw(points2d, loop):
    ang = np.arctan2(points2d[loop, 1], points2d[loop, 0])
    order = np.argsort(ang)
    return loop[order]


def _square_loop(side, segments):
    half = side / 2.0
    corners = np.array([[half, -half], [half, half], [-half, half], [-half, -half]])
    pts = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        for s in range(segments):
            pts.append(a + (b - a) * s / segments)
    pts = np.array(pts)
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    return pts[np.argsort(ang)]


def _stitch(inner_ang, outer_ang):
    """Triangulate the ring between two angularly sorted closed loops.

    Returns triangles as (("i" | "o", index), ...) tuples.  Both loops must
    wind counterclockwise around the origin.
    """
    m, q = len(inner_ang), len(outer_ang)
    start = int(np.argmin(np.abs(np.angle(np.exp(1j * (outer_ang - inner_ang[0]))))))
    base = inner_ang[0]

    def unwrap(a):
        return (a - base) % (2 * np.pi)

    ia = np.append(unwrap(inner_ang), 2 * np.pi)
    oa = [unwrap(outer_ang[(start + k) % q]) for k in range(q + 1)]
    # the nearest outer point may sit just behind the inner start
    if oa[0] > np.pi:
        oa[0] -= 2 * np.pi
    # keep outer angles increasing from the starting corner
    for k in range(1, q + 1):
        while oa[k] < oa[k - 1] - 1e-12:
            oa[k] += 2 * np.pi
    tris = []
    i = o = 0
    while i < m or o < q:
        adv_inner = o >= q or (i < m and ia[i + 1] <= oa[o + 1])
        if adv_inner:
            tris.append((("i", i % m), ("i", (i + 1) % m), ("o", (start + o) % q)))
            i += 1
        else:
            tris.append((("i", i % m), ("o", (start + o + 1) % q), ("o", (start + o) % q)))
            o += 1
    return tris


def add_lids(mesh: FoldMesh, params: OrigamiParams) -> FoldMesh:
    """Close both open rims with square lids of side ``footprint``.

    With ``lid_t > 0`` each lid is a closed slab: an annulus joining the rim
    to the square, four side walls and a full square face.  With
    ``lid_t == 0`` the rim polygon is capped by a fan from a vertex on the axis.
    The bottom lid carries a vent annotation in ``metadata["vent"]``; the
    hole itself is not cut.
    """
    params.validate()
    loops = boundary_loops(mesh)
    if len(loops) != 2:
        raise TopologyError(f"expected two open rims, found {len(loops)}")
    z_of = [float(mesh.vertices[lp, 2].mean()) for lp in loops]
    for lp in loops:
        if np.ptp(mesh.vertices[lp, 2]) > 1e-9 * max(params.h, 1.0):
            raise TopologyError("rim is not planar")
    bottom, top = (loops[0], loops[1]) if z_of[0] < z_of[1] else (loops[1], loops[0])
    verts = [mesh.vertices]
    nv = len(mesh.vertices)
    new_faces, new_kind = [], []

    def add_vertex(p):
        nonlocal nv
        verts.append(np.asarray(p, float).reshape(1, 3))
        nv += 1
        return nv - 1

    def add_face(tri, kind, desired):
        p = np.vstack(verts)[list(tri)]
        nrm = np.cross(p[1] - p[0], p[2] - p[0])
        if np.dot(nrm, desired(p.mean(axis=0))) < 0:
            tri = (tri[0], tri[2], tri[1])
        new_faces.append(tri)
        new_kind.append(kind)

    lid_nodes = {}
    vent = None
    for which, rim, sign in (("bottom", bottom, -1.0), ("top", top, 1.0)):
        rim = _ccw(mesh.vertices[:, :2], rim)
        z0 = float(mesh.vertices[rim, 2].mean())
        kind = "LID_BOT" if which == "bottom" else "LID_TOP"
        added = []
        if params.lid_t == 0.0:
            # fan from the axis; the rim is star-shaped about it and may hold collinear runs
            up = np.array([0.0, 0.0, sign])
            centre = add_vertex([0.0, 0.0, z0])
            added.append(centre)
            for k in range(len(rim)):
                add_face((centre, rim[k], rim[(k + 1) % len(rim)]), kind, lambda c, up=up: up)
        else:
            sq = _square_loop(params.footprint, params.lid_segments)
            inner_idx = [add_vertex([x, y, z0]) for x, y in sq]
            outer_idx = [add_vertex([x, y, z0 + sign * params.lid_t]) for x, y in sq]
            added += inner_idx + outer_idx
            face_dir = np.array([0.0, 0.0, -sign])
            rim_ang = np.arctan2(mesh.vertices[rim, 1], mesh.vertices[rim, 0])
            sq_ang = np.arctan2(sq[:, 1], sq[:, 0])
            for tri in _stitch(rim_ang, sq_ang):
                ids = tuple(rim[j] if s == "i" else inner_idx[j] for s, j in tri)
                add_face(ids, kind, lambda c, d=face_dir: d)
            q = len(sq)
            for k in range(q):
                a, b = inner_idx[k], inner_idx[(k + 1) % q]
                c, d = outer_idx[k], outer_idx[(k + 1) % q]

                def radial(cen):
                    return np.array([cen[0], cen[1], 0.0])

                add_face((a, b, d), kind, radial)
                add_face((a, d, c), kind, radial)
            centre = add_vertex([0.0, 0.0, z0 + sign * params.lid_t])
            added.append(centre)
            cap_dir = np.array([0.0, 0.0, sign])
            for k in range(q):
                add_face((centre, outer_idx[k], outer_idx[(k + 1) % q]), kind, lambda c, d=cap_dir: d)
            if which == "bottom":
                vent = {"center": [0.0, 0.0, z0 + sign * params.lid_t], "radius": params.vent_radius,
                        "vertex": centre}
        lid_nodes[which] = np.concatenate([rim, np.array(added, dtype=int)]).astype(int)
        if which == "bottom" and vent is None:
            vent = {"center": [0.0, 0.0, z0], "radius": params.vent_radius, "vertex": None}

    vertices = np.vstack(verts)
    faces = np.vstack([mesh.faces, np.array(new_faces, dtype=int)])
    # edge labels for the combined mesh: band labels are recovered from the old classes
    old = {(int(a), int(b)): c for (a, b), c in zip(mesh.edges, mesh.edge_class)}
    rim_edges = set()
    for rim in (bottom, top):
        ring = set(int(v) for v in rim)
        for key, c in old.items():
            if key[0] in ring and key[1] in ring and c == EdgeClass.BOUNDARY.value:
                rim_edges.add(key)
    labels = []
    for f in faces:
        labs = []
        for i in range(3):
            a, b = int(f[i]), int(f[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            c = old.get(key)
            if c is None:
                labs.append(LID_EDGE)
            elif c == EdgeClass.FACET.value:
                labs.append(FACET_DIAGONAL)
            elif c == EdgeClass.BOUNDARY.value:
                labs.append(RING)
            else:
                labs.append(DIAGONAL)
        labels.append(labs)
    n_new = len(new_faces)
    metadata = dict(mesh.metadata)
    metadata.update({"vent": vent, "lid_nodes": lid_nodes, "rim_edges": rim_edges,
                     "rims": {"bottom": _ccw(mesh.vertices[:, :2], bottom),
                              "top": _ccw(mesh.vertices[:, :2], top)}})
    out = _classified_mesh(
        vertices, faces, np.array(labels),
        np.concatenate([mesh.face_kind, np.array(new_kind, "U8")]),
        np.concatenate([mesh.face_layer, -np.ones(n_new, int)]),
        np.concatenate([mesh.face_unit, -np.ones(n_new, int)]),
        metadata,
    )
    _check_triangles(out.vertices[out.faces], "lid")
    return out


def assemble(params: OrigamiParams, lids: bool = True, mirrored: bool = True) -> FoldMesh:
    """Full construction pipeline.

    ``mirrored=False`` builds a plain Kresling stack with the same number of
    layers (each layer twisted further by ``beta``) for comparison runs.
    """
    params.validate()
    unit = Panels.concat([build_unit(params), bridge_unit(params)])
    if mirrored:
        pair = mirror_unit(unit, params.h)
        band = circular_array(pair, params.n)
        stack = linear_array(band, params.stories, 2.0 * params.h)
    else:
        band = circular_array(unit, params.n)
        stack = linear_array(band, 2 * params.stories, params.h, twist=params.beta)
    stack = subdivide(stack, params.panel_subdiv)
    meta = {"params": params, "mirrored": mirrored}
    mesh = weld(stack, metadata=meta)
    if lids:
        mesh = add_lids(mesh, params)
    if params.lid_t > 0.0 and lids:
        # shift so that the bottom of the structure sits at z = 0
        mesh = translate(mesh, [0.0, 0.0, params.lid_t])
    return mesh


def translate(mesh: FoldMesh, offset) -> FoldMesh:
    meta = dict(mesh.metadata)
    off = np.asarray(offset, float)
    if meta.get("vent"):
        vent = dict(meta["vent"])
        vent["center"] = list(np.asarray(vent["center"]) + off)
        meta["vent"] = vent
    return replace(mesh, vertices=mesh.vertices + off, metadata=meta)


def rotate_mesh(mesh: FoldMesh, deg: float) -> FoldMesh:
    return replace(mesh, vertices=mesh.vertices @ _rot_z(deg).T)


def point_set_distance(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(initial=0.0), db.max(initial=0.0)))


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def _g(x):
    return "%.9g" % x


def export_mesh(mesh: FoldMesh, fmt: str = "stl", name: str = "kresling") -> bytes:
    """ASCII STL or OBJ bytes with ``%.9g`` float formatting."""
    fmt = fmt.lower()
    buf = io.StringIO()
    if fmt == "stl":
        buf.write(f"solid {name}\n")
        if len(mesh.faces):
            normals = mesh.face_normals()
            for f, nrm in zip(mesh.faces, normals):
                buf.write(f"  facet normal {_g(nrm[0])} {_g(nrm[1])} {_g(nrm[2])}\n    outer loop\n")
                for v in mesh.vertices[f]:
                    buf.write(f"      vertex {_g(v[0])} {_g(v[1])} {_g(v[2])}\n")
                buf.write("    endloop\n  endfacet\n")
        buf.write(f"endsolid {name}\n")
    elif fmt == "obj":
        buf.write(f"o {name}\n")
        for v in mesh.vertices:
            buf.write(f"v {_g(v[0])} {_g(v[1])} {_g(v[2])}\n")
        for f in mesh.faces:
            buf.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    else:
        raise ParameterError(f"unsupported mesh format {fmt!r}")
    return buf.getvalue().encode("ascii")


def read_mesh(data: bytes, fmt: str = "stl"):
    """Parse ASCII STL/OBJ back into (vertices, faces, normals-or-None)."""
    text = data.decode("ascii")
    fmt = fmt.lower()
    if fmt == "stl":
        tris, normals, cur = [], [], []
        for line in text.splitlines():
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "facet":
                normals.append([float(t) for t in tok[2:5]])
            elif tok[0] == "vertex":
                cur.append([float(t) for t in tok[1:4]])
                if len(cur) == 3:
                    tris.append(cur)
                    cur = []
        tris = np.array(tris, float).reshape(-1, 3, 3)
        return tris.reshape(-1, 3), np.arange(3 * len(tris)).reshape(-1, 3), np.array(normals).reshape(-1, 3)
    if fmt == "obj":
        verts, faces = [], []
        for line in text.splitlines():
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                faces.append([int(t.split("/")[0]) - 1 for t in tok[1:4]])
        return np.array(verts, float).reshape(-1, 3), np.array(faces, int).reshape(-1, 3), None
    raise ParameterError(f"unsupported mesh format {fmt!r}")


def subdivide(panels: Panels, k: int) -> Panels:
    """Split every triangle into ``k**2`` congruent sub-triangles.

    Sub-edges on a panel boundary inherit the panel edge label; edges interior
    to a panel become facet creases.
    """
    if k <= 1:
        return panels
    tris, labels, keep = [], [], []
    for t, lab in zip(panels.tris, panels.edge_labels):
        def P(i, j):
            # barycentric grid point: i steps from corner 0 toward 1, j toward 2
            return t[0] + (t[1] - t[0]) * i / k + (t[2] - t[0]) * j / k

        def lbl(a, b):
            (i1, j1), (i2, j2) = a, b
            if j1 == 0 and j2 == 0:
                return lab[0]
            if i1 + j1 == k and i2 + j2 == k:
                return lab[1]
            if i1 == 0 and i2 == 0:
                return lab[2]
            return FACET_DIAGONAL

        for i in range(k):
            for j in range(k - i):
                up = [(i, j), (i + 1, j), (i, j + 1)]
                tris.append([P(*v) for v in up])
                labels.append([lbl(up[0], up[1]), lbl(up[1], up[2]), lbl(up[2], up[0])])
                if i + j < k - 1:
                    dn = [(i + 1, j), (i + 1, j + 1), (i, j + 1)]
                    tris.append([P(*v) for v in dn])
                    labels.append([lbl(dn[0], dn[1]), lbl(dn[1], dn[2]), lbl(dn[2], dn[0])])
        keep.append(k * k)
    rep = np.repeat(np.arange(len(panels)), keep)
    return Panels(np.array(tris), np.array(labels, int), panels.kind[rep], panels.layer[rep], panels.unit[rep])

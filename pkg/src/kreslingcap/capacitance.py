"""Electrode placement and parallel-plate capacitance of deformed panels.

Each electrode pair is two triangle patches on the mesh.  Its capacitance
is ``eps0 * eps_r * overlap / gap`` with the gap taken as the area-weighted
mean distance from one patch to the best-fit plane of the other and the
overlap as the common area after projecting one patch onto that plane.
Both quantities are symmetrised over the two patches.  Fringing is ignored.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import GeometryError, InterpenetrationError, ParameterError

EPS0_PF_PER_MM = 8.8541878128e-3  # vacuum permittivity in pF/mm

PLACEMENTS = {"F1F2": ("F1", "F2"), "B1B2": ("B1", "B2")}


@dataclass(frozen=True)
class ElectrodeSpec:
    """Which panel pairs carry plates.

    ``layers="lower"`` uses the first layer of every story, the half whose
    plates approach each other under positive twist.  ``symmetric`` repeats
    the pair in every unit around the axis; otherwise only ``unit`` is used.
    ``n_pairs`` truncates the candidate list (story-major order).
    """

    placement: str = "F1F2"
    layers: str = "lower"
    unit: int = 0
    symmetric: bool = False
    n_pairs: int | None = None
    eps_r: float = 1.0

    def validate(self):
        if self.placement not in PLACEMENTS:
            raise ParameterError(f"unknown electrode placement {self.placement!r}")
        if self.layers not in ("lower", "upper", "both"):
            raise ParameterError(f"layers must be lower, upper or both, got {self.layers!r}")
        if self.n_pairs is not None and self.n_pairs < 1:
            raise ParameterError("n_pairs must be >= 1")
        if not self.eps_r >= 1.0:
            raise ParameterError("relative permittivity must be >= 1")
        return self


@dataclass(frozen=True)
class ElectrodePair:
    face_patch_a: np.ndarray  # face indices into the mesh
    face_patch_b: np.ndarray
    tris_a: np.ndarray  # (k, 3) vertex indices of those faces
    tris_b: np.ndarray
    area: float
    eps_r: float = 1.0
    placement: str = "F1F2"
    layer: int = 0
    unit: int = 0
    side: tuple = (1.0, 1.0)  # sign of the undeformed gap seen from a and from b

    def __post_init__(self):
        if len(set(np.asarray(self.face_patch_a).tolist()) & set(np.asarray(self.face_patch_b).tolist())):
            raise GeometryError("electrode patches overlap")
        if not self.area > 0:
            raise GeometryError("electrode area must be positive")


@dataclass(frozen=True)
class CapacitanceReading:
    c: float  # pF
    gap_eff: float  # mm
    overlap: float  # mm^2


def _patch_plane(X, tris):
    t = X[tris]
    nrm = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
    area = 0.5 * np.linalg.norm(nrm, axis=1)
    if area.sum() <= 0:
        raise GeometryError("electrode patch has zero area")
    n = nrm.sum(axis=0)
    n /= np.linalg.norm(n)
    cen = t.mean(axis=1)
    c = (cen * area[:, None]).sum(axis=0) / area.sum()
    return c, n, area, cen


def _in_plane_basis(n):
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, ref)
    u /= np.linalg.norm(u)
    return u, np.cross(n, u)


def _projected(t, c, u, v):
    polys = [Polygon([((p - c) @ u, (p - c) @ v) for p in tri]) for tri in t]
    return shapely.union_all([p for p in polys if p.area > 0])


def _signed_gap(X, tris_a, tris_b):
    ca, na, _, _ = _patch_plane(X, tris_a)
    _, _, ab, cb = _patch_plane(X, tris_b)
    return float(((cb - ca) @ na * ab).sum() / ab.sum())


def _overlap(X, tris_a, tris_b):
    ca, na, _, _ = _patch_plane(X, tris_a)
    u, v = _in_plane_basis(na)
    pa = _projected(X[tris_a], ca, u, v)
    pb = _projected(X[tris_b], ca, u, v)
    return float(pa.intersection(pb).area)


def make_pair(X, faces, patch_a, patch_b, eps_r=1.0, placement="custom", layer=0, unit=0) -> ElectrodePair:
    """Pair from face index sets; the reference side is read off ``X``."""
    faces = np.asarray(faces, int)
    pa, pb = np.asarray(patch_a, int), np.asarray(patch_b, int)
    ta, tb = faces[pa], faces[pb]
    sa, sb = _signed_gap(X, ta, tb), _signed_gap(X, tb, ta)
    if sa == 0 or sb == 0:
        raise InterpenetrationError("electrode patches are coplanar in the reference state")
    area = float(0.5 * (_patch_plane(X, ta)[2].sum() + _patch_plane(X, tb)[2].sum()))
    return ElectrodePair(pa, pb, ta, tb, area, float(eps_r), placement, int(layer), int(unit),
                         (float(np.sign(sa)), float(np.sign(sb))))


def electrode_placement(mesh, spec: ElectrodeSpec | None = None) -> list:
    """Deterministic electrode pairs on opposing slanted panels, one per story by default."""
    spec = (spec or ElectrodeSpec()).validate()
    ka, kb = PLACEMENTS[spec.placement]
    layers = np.unique(mesh.face_layer[mesh.face_layer >= 0])
    if spec.layers == "lower":
        layers = layers[layers % 2 == 0]
    elif spec.layers == "upper":
        layers = layers[layers % 2 == 1]
    units = np.unique(mesh.face_unit[mesh.face_unit >= 0]) if spec.symmetric else np.array([spec.unit])
    pairs = []
    for layer in layers:
        for unit in units:
            sel = (mesh.face_layer == layer) & (mesh.face_unit == unit)
            a = np.flatnonzero(sel & (mesh.face_kind == ka))
            b = np.flatnonzero(sel & (mesh.face_kind == kb))
            if len(a) == 0 or len(b) == 0:
                raise GeometryError(f"no {spec.placement} panels in layer {layer}, unit {unit}")
            pairs.append(make_pair(mesh.vertices, mesh.faces, a, b, spec.eps_r, spec.placement, layer, unit))
    if not pairs:
        raise GeometryError("electrode spec selects no panels")
    if spec.n_pairs is not None:
        if spec.n_pairs > len(pairs):
            raise GeometryError(f"requested {spec.n_pairs} pairs, only {len(pairs)} available")
        pairs = pairs[: spec.n_pairs]
    return pairs


def pair_capacitance(pair: ElectrodePair, positions, area_scale: float = 1.0) -> CapacitanceReading:
    """Capacitance (pF) of one pair at the given node positions.

    ``area_scale`` multiplies the overlap; it is the single geometric fit
    factor and must be passed explicitly.
    """
    X = np.asarray(positions, float)
    ga = pair.side[0] * _signed_gap(X, pair.tris_a, pair.tris_b)
    gb = pair.side[1] * _signed_gap(X, pair.tris_b, pair.tris_a)
    if ga <= 0 or gb <= 0:
        raise InterpenetrationError(f"electrode patches crossed (gap {min(ga, gb):.3g} mm)")
    gap = 0.5 * (ga + gb)
    overlap = 0.5 * (_overlap(X, pair.tris_a, pair.tris_b) + _overlap(X, pair.tris_b, pair.tris_a))
    c = EPS0_PF_PER_MM * pair.eps_r * area_scale * overlap / gap
    return CapacitanceReading(float(c), float(gap), float(overlap))


@dataclass
class CapacitanceCurve:
    theta: np.ndarray
    delta: float
    total: np.ndarray
    readings: list  # readings[i][j]: grid point i, pair j
    area_scale: float = 1.0
    valid: list = field(default_factory=list)

    CSV_HEADER = ("pair", "theta_deg", "delta_mm", "C_pF", "gap_eff_mm", "overlap_mm2")

    def rows(self):
        npairs = len(self.readings[0]) if self.readings else 0
        for j in range(npairs):
            for i, th in enumerate(self.theta):
                r = self.readings[i][j]
                yield (j, th, self.delta, r.c, r.gap_eff, r.overlap)
        for i, th in enumerate(self.theta):
            gap = np.mean([r.gap_eff for r in self.readings[i]])
            ov = np.sum([r.overlap for r in self.readings[i]]) * self.area_scale
            yield ("total", th, self.delta, self.total[i], gap, ov)

    def modulation(self):
        return float((self.total.max() - self.total.min()) / self.total.min())


def capacitance_from_states(states, pairs, theta, delta, area_scale=1.0) -> CapacitanceCurve:
    readings = [[pair_capacitance(p, s.positions, area_scale) for p in pairs] for s in states]
    total = np.array([sum(r.c for r in row) for row in readings])
    return CapacitanceCurve(np.asarray(theta, float), float(delta), total, readings, float(area_scale),
                            [getattr(s, "valid", "ok") for s in states])


def capacitance_vs_twist(model, pairs, delta, theta_grid=None, *, area_scale=1.0, curve=None,
                         **solver_kw) -> CapacitanceCurve:
    """Total capacitance of parallel-wired pairs along a twist sweep.

    Pass ``curve`` (a torque curve) to reuse its equilibrium states;
    otherwise the sweep is solved on ``theta_grid``.
    """
    from .structure import torque_rotation_curve

    if curve is None:
        grid = np.asarray(theta_grid if theta_grid is not None else np.linspace(0, 30, 31), float)
        if len(grid) < 2 or grid[0] != 0:
            raise ParameterError("theta grid must start at 0 and have >= 2 points")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("theta grid must be strictly increasing")
        curve = torque_rotation_curve(model, delta, float(grid[-1]), len(grid), **solver_kw)
        if not np.allclose(curve.theta, grid):
            raise ParameterError("theta grid must be uniform")
    return capacitance_from_states(curve.states, pairs, curve.theta, curve.delta, area_scale)


def sensitivity(curve) -> float:
    """Secant slope (C(theta_max) - C(0)) / theta_max in pF per degree.

    Accepts a :class:`CapacitanceCurve` or a ``(theta, c)`` tuple.
    """
    if isinstance(curve, CapacitanceCurve):
        theta, c = curve.theta, curve.total
    else:
        theta, c = (np.asarray(a, float) for a in curve)
    if len(theta) < 2 or len(theta) != len(c):
        raise ParameterError("sensitivity needs a curve with at least two points")
    span = theta[-1] - theta[0]
    if span == 0:
        raise ParameterError("degenerate curve: zero twist span")
    return float((c[-1] - c[0]) / span)


def fit_area_scale(c_raw_at_zero: float, target: float = 0.1) -> float:
    """Area factor that maps an unscaled rest capacitance onto ``target`` pF."""
    if not c_raw_at_zero > 0:
        raise ParameterError("unscaled capacitance must be positive")
    return float(target / c_raw_at_zero)


def curve_csv(curve: CapacitanceCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(curve.CSV_HEADER)
    for row in curve.rows():
        w.writerow([row[0]] + ["%.10g" % x for x in row[1:]])
    return buf.getvalue()

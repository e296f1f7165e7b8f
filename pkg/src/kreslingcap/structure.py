"""Bar-and-hinge reduced-order mechanics of the folded shell.

Every mesh edge becomes an axial spring (bar) and every interior edge a
rotational spring (hinge) acting on the dihedral angle between its two
faces.  Equilibria are found by minimising the total elastic energy with a
damped Newton method while the bottom lid is clamped and the top lid is
driven as a rigid body (twist about the axis plus axial offset).

Units: mm, N, N*mm, rad internally; twist is given in degrees.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import GeometryError, ParameterError, SolverError, TopologyError
from .geometry import EdgeClass, FoldMesh

log = logging.getLogger(__name__)

LOCKED_REGIME_DELTA = -10.0  # mm; at or below this, self-contact governs the real part


@dataclass(frozen=True)
class MaterialParams:
    """Neo-Hookean silicone constants (MPa, 1/MPa, kg/m^3)."""

    c10: float = 0.34
    d1: float = 0.0
    density: float = 1240.0
    nu: float = 0.49

    def validate(self):
        if not self.c10 > 0:
            raise ParameterError("c10 must be positive")
        if not self.d1 >= 0:
            raise ParameterError("d1 must be non-negative")
        if not 0.0 <= self.nu < 0.5:
            raise ParameterError("nu must lie in [0, 0.5)")
        return self

    @property
    def mu(self) -> float:
        return 2.0 * self.c10

    @property
    def E(self) -> float:
        # incompressible limit
        return 3.0 * self.mu


@dataclass(frozen=True)
class LoadCase:
    theta: float = 0.0
    delta: float = 0.0
    steps: int = 1

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ParameterError("steps must be an integer >= 1")


@dataclass
class BarHingeModel:
    nodes: np.ndarray
    bars: np.ndarray
    bar_length: np.ndarray
    bar_k: np.ndarray
    hinges: np.ndarray  # (H, 4): edge a-b, wing c on face (a, b, c), wing d on face (b, a, d)
    hinge_rest: np.ndarray
    hinge_k: np.ndarray
    hinge_class: np.ndarray
    fixed: np.ndarray
    driven: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hinge_edge: np.ndarray | None = None

    def __post_init__(self):
        self.axis = np.asarray(self.axis, float) / np.linalg.norm(self.axis)
        self.origin = np.asarray(self.origin, float)
        mask = np.ones(len(self.nodes), bool)
        mask[self.fixed] = False
        mask[self.driven] = False
        self.free = np.flatnonzero(mask)
        lengths = np.linalg.norm(self.nodes[self.bars[:, 1]] - self.nodes[self.bars[:, 0]], axis=1)
        self.length_scale = float(np.mean(lengths)) if len(lengths) else 1.0
        self.energy_scale = float(np.mean(self.bar_k)) * self.length_scale**2 if len(self.bar_k) else 1.0

    @property
    def n_nodes(self):
        return len(self.nodes)

    def gradient_tolerance(self, rel=1e-8):
        return rel * self.energy_scale / self.length_scale


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def from_mesh(mesh: FoldMesh, mat: MaterialParams, wall_t: float, fold_coeff: float = 1.0,
              facet_ratio: float = 10.0, require_watertight: bool = True,
              fixed=None, driven=None) -> BarHingeModel:
    """Derive bars and hinges from a lidded mesh.

    Bar stiffness ``E * A_eff / L`` with ``A_eff = wall_t * w``, where the
    tributary width ``w`` is one third of the adjacent face areas divided by
    the edge length.  Fold hinges get ``fold_coeff * E * wall_t**3 * L / 12``
    (``fold_coeff`` in 1/mm), facet hinges ``facet_ratio`` times that.
    Clamped and driven node groups default to the bottom and top lids
    recorded in the mesh metadata.
    """
    mat.validate()
    if not wall_t > 0:
        raise ParameterError("wall thickness must be positive")
    if facet_ratio < 1.0:
        raise ParameterError("facet hinges must be at least as stiff as folds")
    if fold_coeff < 0.0:
        raise ParameterError("fold_coeff must be non-negative")
    if require_watertight and not mesh.is_watertight():
        raise TopologyError("structural model needs a watertight mesh")

    X = np.asarray(mesh.vertices, float)
    faces = np.asarray(mesh.faces, int)
    areas = mesh.face_areas()
    edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(mesh.edges)}
    trib = np.zeros(len(mesh.edges))
    incident = [[] for _ in range(len(mesh.edges))]
    for fi, f in enumerate(faces):
        for i in range(3):
            a, b = int(f[i]), int(f[(i + 1) % 3])
            e = edge_index[(a, b) if a < b else (b, a)]
            trib[e] += areas[fi] / 3.0
            incident[e].append((fi, a, b, int(f[(i + 2) % 3])))

    bars = np.asarray(mesh.edges, int)
    L = np.linalg.norm(X[bars[:, 1]] - X[bars[:, 0]], axis=1)
    if np.any(L <= 0):
        raise GeometryError("zero-length edge")
    bar_k = mat.E * wall_t * trib / L**2

    k_fold_per_len = fold_coeff * mat.E * wall_t**3 / 12.0
    hinges, hk, hcls, hedge = [], [], [], []
    for e, inc in enumerate(incident):
        if len(inc) != 2:
            continue
        (_, a, b, c), (_, a2, b2, d) = inc
        if (a2, b2) != (b, a):
            raise TopologyError("inconsistent face orientation across an edge")
        cls = mesh.edge_class[e]
        if cls in (EdgeClass.FACET.value, EdgeClass.LID.value):
            k = facet_ratio * k_fold_per_len * L[e]
            hcls.append(EdgeClass.FACET.value)
        else:
            k = k_fold_per_len * L[e]
            hcls.append(EdgeClass.FOLD.value)
        hinges.append((a, b, c, d))
        hk.append(k)
        hedge.append(e)
    hinges = np.array(hinges, int).reshape(-1, 4)
    rest = dihedral_angles(X, hinges)

    if fixed is None or driven is None:
        lid = mesh.metadata.get("lid_nodes")
        if not lid:
            raise TopologyError("mesh carries no lid node groups")
        fixed = lid["bottom"] if fixed is None else fixed
        driven = lid["top"] if driven is None else driven
    return BarHingeModel(
        nodes=X.copy(), bars=bars, bar_length=L, bar_k=bar_k,
        hinges=hinges, hinge_rest=rest, hinge_k=np.array(hk), hinge_class=np.array(hcls),
        fixed=np.asarray(fixed, int), driven=np.asarray(driven, int),
        hinge_edge=np.array(hedge, int),
    )


# ---------------------------------------------------------------------------
# kinematics of a hinge
# ---------------------------------------------------------------------------

def _dihedral_local(P):
    """Dihedral angles and their gradients for stacked stencils.

    ``P`` has shape (H, 4, 3) ordered (a, b, c, d).  Returns angles in
    [0, 2*pi) with the flat state at pi, and gradients of shape (H, 4, 3).
    """
    a, b, c, d = P[:, 0], P[:, 1], P[:, 2], P[:, 3]
    r_ij = c - a
    r_kj = b - a
    r_kl = b - d
    m = np.cross(r_ij, r_kj)
    n = np.cross(r_kj, r_kl)
    m2 = np.einsum("ij,ij->i", m, m)
    n2 = np.einsum("ij,ij->i", n, n)
    kj2 = np.einsum("ij,ij->i", r_kj, r_kj)
    kj = np.sqrt(kj2)
    if np.any(kj == 0) or np.any(m2 == 0) or np.any(n2 == 0):
        raise GeometryError("degenerate hinge stencil")
    e = r_kj / kj[:, None]
    sin_part = np.einsum("ij,ij->i", np.cross(m, n), e)
    cos_part = np.einsum("ij,ij->i", m, n)
    theta = np.mod(np.arctan2(sin_part, cos_part), 2.0 * np.pi)

    gi = (kj / m2)[:, None] * m
    gl = -(kj / n2)[:, None] * n
    s_ij = np.einsum("ij,ij->i", r_ij, r_kj) / kj2
    s_kl = np.einsum("ij,ij->i", r_kl, r_kj) / kj2
    gj = (s_ij - 1.0)[:, None] * gi - s_kl[:, None] * gl
    gk = (s_kl - 1.0)[:, None] * gl - s_ij[:, None] * gi
    grad = np.stack([gj, gk, gi, gl], axis=1)
    return theta, grad


def dihedral_angle(p_a, p_b, p_c, p_d) -> float:
    """Dihedral angle (rad) about edge a-b between faces (a, b, c) and (b, a, d).

    Values lie in [0, 2*pi); a flat pair gives pi.  Swapping the wings maps
    ``phi`` to ``2*pi - phi``.
    """
    P = np.array([p_a, p_b, p_c, p_d], float)[None]
    if np.linalg.norm(P[0, 1] - P[0, 0]) == 0:
        raise GeometryError("zero-length hinge edge")
    return float(_dihedral_local(P)[0][0])


def dihedral_angles(X, hinges):
    if len(hinges) == 0:
        return np.zeros(0)
    return _dihedral_local(X[hinges])[0]


def _dihedral_hessian_local(P, grad):
    """Per-stencil Hessian of the angle by central differences of its gradient."""
    H = len(P)
    scale = np.linalg.norm(P[:, 1] - P[:, 0], axis=1)
    eps = 1e-6 * scale
    hess = np.empty((H, 12, 12))
    flat = P.reshape(H, 12)
    for j in range(12):
        dp = flat.copy()
        dm = flat.copy()
        dp[:, j] += eps
        dm[:, j] -= eps
        gp = _dihedral_local(dp.reshape(H, 4, 3))[1].reshape(H, 12)
        gm = _dihedral_local(dm.reshape(H, 4, 3))[1].reshape(H, 12)
        hess[:, :, j] = (gp - gm) / (2.0 * eps)[:, None]
    return 0.5 * (hess + hess.transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def _check_positions(model, X):
    X = np.asarray(X, float)
    if X.shape != model.nodes.shape:
        raise ParameterError(f"positions shape {X.shape} does not match {model.nodes.shape}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("positions contain NaN or inf")
    return X


def _hinge_delta(model, theta):
    # wrap into (-pi, pi] so a rest angle near 0/2pi is handled
    return np.mod(theta - model.hinge_rest + np.pi, 2.0 * np.pi) - np.pi


def total_energy(model: BarHingeModel, X) -> float:
    """Stored elastic energy (N*mm)."""
    X = _check_positions(model, X)
    d = X[model.bars[:, 1]] - X[model.bars[:, 0]]
    L = np.linalg.norm(d, axis=1)
    e_bar = 0.5 * np.sum(model.bar_k * (L - model.bar_length) ** 2)
    if len(model.hinges):
        th = dihedral_angles(X, model.hinges)
        e_hinge = 0.5 * np.sum(model.hinge_k * _hinge_delta(model, th) ** 2)
    else:
        e_hinge = 0.0
    return float(e_bar + e_hinge)


def energy_gradient(model: BarHingeModel, X) -> np.ndarray:
    """Exact gradient of :func:`total_energy`, shape (n_nodes, 3)."""
    X = _check_positions(model, X)
    g = np.zeros_like(X)
    d = X[model.bars[:, 1]] - X[model.bars[:, 0]]
    L = np.linalg.norm(d, axis=1)
    f = (model.bar_k * (L - model.bar_length) / L)[:, None] * d
    np.add.at(g, model.bars[:, 1], f)
    np.add.at(g, model.bars[:, 0], -f)
    if len(model.hinges):
        th, dth = _dihedral_local(X[model.hinges])
        m = model.hinge_k * _hinge_delta(model, th)
        np.add.at(g, model.hinges, m[:, None, None] * dth)
    return g


def energy_hessian(model: BarHingeModel, X) -> sp.csr_matrix:
    """Sparse Hessian (3N x 3N); bars analytic, hinge curvature term by local differences."""
    X = _check_positions(model, X)
    n3 = 3 * len(X)
    rows, cols, vals = [], [], []

    d = X[model.bars[:, 1]] - X[model.bars[:, 0]]
    L = np.linalg.norm(d, axis=1)
    u = d / L[:, None]
    uu = u[:, :, None] * u[:, None, :]
    kb = model.bar_k[:, None, None]
    K = kb * (uu + (1.0 - model.bar_length / L)[:, None, None] * (np.eye(3) - uu))
    idx = np.concatenate([3 * model.bars[:, [0]] + np.arange(3), 3 * model.bars[:, [1]] + np.arange(3)], axis=1)
    Kb = np.zeros((len(L), 6, 6))
    Kb[:, :3, :3] = K
    Kb[:, 3:, 3:] = K
    Kb[:, :3, 3:] = -K
    Kb[:, 3:, :3] = -K
    rows.append(np.repeat(idx, 6, axis=1).ravel())
    cols.append(np.tile(idx, (1, 6)).ravel())
    vals.append(Kb.ravel())

    if len(model.hinges):
        P = X[model.hinges]
        th, dth = _dihedral_local(P)
        hth = _dihedral_hessian_local(P, dth)
        G = dth.reshape(-1, 12)
        m = _hinge_delta(model, th)
        Kh = model.hinge_k[:, None, None] * (G[:, :, None] * G[:, None, :] + m[:, None, None] * hth)
        hidx = (3 * model.hinges[:, :, None] + np.arange(3)).reshape(-1, 12)
        rows.append(np.repeat(hidx, 12, axis=1).ravel())
        cols.append(np.tile(hidx, (1, 12)).ravel())
        vals.append(Kh.ravel())
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n3, n3)).tocsr()


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

def _rodrigues(axis, angle):
    k = axis / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def driven_positions(model, theta_deg, delta):
    R = _rodrigues(model.axis, np.radians(theta_deg))
    X0 = model.nodes[model.driven] - model.origin
    return X0 @ R.T + model.origin + delta * model.axis


def _axial_fraction(model):
    s = (model.nodes - model.origin) @ model.axis
    s0 = s[model.fixed].max() if len(model.fixed) else s.min()
    s1 = s[model.driven].min() if len(model.driven) else s.max()
    return np.clip((s - s0) / max(s1 - s0, 1e-300), 0.0, 1.0)


def _predict(model, X, dtheta_deg, ddelta):
    """Move free nodes by a rigid motion interpolated along the axis."""
    w = _axial_fraction(model)[model.free]
    out = X.copy()
    rel = X[model.free] - model.origin
    k = model.axis
    ang = np.radians(dtheta_deg) * w
    c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
    kx = np.cross(k, rel)
    kd = (rel @ k)[:, None] * k
    rot = rel * c + kx * s + kd * (1 - c)
    out[model.free] = rot + model.origin + (ddelta * w)[:, None] * k
    return out


@dataclass
class EquilibriumResult:
    positions: np.ndarray
    torque: float
    axial_force: float
    energy: float
    residual: float
    theta: float
    delta: float
    iterations: int = 0
    history: list = field(default_factory=list)  # (energy at init, energy at solution) per step
    valid: str = "ok"


def reactions(model: BarHingeModel, X):
    """(torque about the axis in N*mm, axial force in N) on the driven lid."""
    g = energy_gradient(model, X)
    gd = g[model.driven]
    rel = X[model.driven] - model.origin
    torque = float(np.sum(np.cross(model.axis, rel) * gd))
    force = float(np.sum(gd @ model.axis))
    return torque, force


def validity_flag(delta):
    return "outside_model" if delta <= LOCKED_REGIME_DELTA else "ok"


class _Reduced:
    """Generalised coordinates: free node positions and optionally the axial offset."""

    def __init__(self, model, theta, delta, axial_free):
        self.model = model
        self.theta = theta
        self.delta = delta
        self.axial_free = axial_free
        nf = 3 * len(model.free)
        self.nq = nf + (1 if axial_free else 0)
        n3 = 3 * model.n_nodes
        fdofs = (3 * model.free[:, None] + np.arange(3)).ravel()
        rows = list(fdofs)
        cols = list(range(nf))
        vals = [1.0] * nf
        if axial_free:
            ddofs = (3 * model.driven[:, None] + np.arange(3)).ravel()
            rows += list(ddofs)
            cols += [nf] * len(ddofs)
            vals += list(np.tile(model.axis, len(model.driven)))
        self.T = sp.csr_matrix((vals, (rows, cols)), shape=(n3, self.nq))
        self.fdofs = fdofs

    def positions(self, q, base):
        X = base.copy()
        m = self.model
        nf = 3 * len(m.free)
        X[m.free] = q[:nf].reshape(-1, 3)
        delta = q[nf] if self.axial_free else self.delta
        X[m.driven] = driven_positions(m, self.theta, delta)
        return X

    def pack(self, X, delta):
        q = X[self.model.free].ravel()
        if self.axial_free:
            q = np.append(q, delta)
        return q

    def delta_of(self, q):
        return q[-1] if self.axial_free else self.delta

    def energy(self, q, base):
        return total_energy(self.model, self.positions(q, base))

    def gradient(self, q, base):
        g = energy_gradient(self.model, self.positions(q, base)).ravel()
        return self.T.T @ g

    def hessian(self, q, base):
        H = energy_hessian(self.model, self.positions(q, base))
        return (self.T.T @ H @ self.T).toarray()


def _newton(red, q, base, tol, max_iter):
    E = red.energy(q, base)
    g = red.gradient(q, base)
    gn = float(np.linalg.norm(g))
    it = 0
    while gn > tol:
        if it >= max_iter:
            raise SolverError("Newton iteration did not converge", gn, it)
        it += 1
        H = red.hessian(q, base)
        p = None
        shift = 0.0
        diag = max(float(np.abs(np.diag(H)).max()), 1e-300)
        for _ in range(30):
            try:
                cf = scipy.linalg.cho_factor(H + shift * np.eye(len(H)), check_finite=False)
                p = -scipy.linalg.cho_solve(cf, g, check_finite=False)
                break
            except np.linalg.LinAlgError:
                shift = max(4.0 * shift, 1e-8 * diag)
        slope = float(g @ p) if p is not None else 0.0
        if p is None or not slope < 0:
            # steepest descent fallback
            p = -g / diag
            slope = float(g @ p)
        alpha = 1.0
        accepted = False
        noise = 1e-12 * max(abs(E), 1e-300)
        for _ in range(60):
            q_new = q + alpha * p
            E_new = red.energy(q_new, base)
            if E_new <= E + 1e-4 * alpha * slope or (E_new <= E + noise and alpha == 1.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            g_new = red.gradient(q + p, base)
            if np.linalg.norm(g_new) < gn and red.energy(q + p, base) <= E + noise:
                q_new, E_new = q + p, red.energy(q + p, base)
            else:
                raise SolverError("line search failed", gn, it)
        q, E = q_new, E_new
        g = red.gradient(q, base)
        gn = float(np.linalg.norm(g))
    return q, E, gn, it


def solve_equilibrium(model: BarHingeModel, load: LoadCase, start: EquilibriumResult | None = None,
                      tol: float | None = None, max_iter: int = 500,
                      axial_free: bool = False) -> EquilibriumResult:
    """Quasi-static equilibrium under a prescribed lid twist and offset.

    The load is applied in ``load.steps`` equal increments starting from
    ``start`` (or the rest state); each increment is warm-started from the
    previous solution with a rigid-motion predictor.  With ``axial_free``
    the lid offset becomes an unknown (zero axial force) and
    ``load.delta`` is only its initial guess.
    """
    if tol is None:
        tol = model.gradient_tolerance()
    if start is None:
        X = model.nodes.copy()
        th0, de0 = 0.0, 0.0
    else:
        X = np.array(start.positions, float)
        th0, de0 = start.theta, start.delta
    if not np.all(np.isfinite(X)):
        raise ParameterError("start positions contain NaN")
    history = []
    total_it = 0
    gn = 0.0
    delta_cur = de0
    for s in range(1, load.steps + 1):
        th = th0 + (load.theta - th0) * s / load.steps
        de = de0 + (load.delta - de0) * s / load.steps if not axial_free else delta_cur
        th_prev = th0 + (load.theta - th0) * (s - 1) / load.steps
        de_prev = de0 + (load.delta - de0) * (s - 1) / load.steps if not axial_free else delta_cur
        X = _predict(model, X, th - th_prev, de - de_prev)
        red = _Reduced(model, th, de, axial_free)
        q = red.pack(X, de)
        E_init = red.energy(q, X)
        q, E, gn, it = _newton(red, q, X, tol, max_iter)
        total_it += it
        X = red.positions(q, X)
        delta_cur = red.delta_of(q)
        history.append((E_init, E))
    torque, force = reactions(model, X)
    return EquilibriumResult(
        positions=X, torque=torque, axial_force=force, energy=float(total_energy(model, X)),
        residual=gn, theta=float(load.theta), delta=float(delta_cur), iterations=total_it,
        history=history, valid=validity_flag(float(delta_cur)),
    )


def reaction_fd(model, state: EquilibriumResult, h_deg=0.01, tol=None):
    """Torque as the central difference of the minimised energy in twist (N*mm/rad)."""
    kw = dict(tol=tol)
    plus = solve_equilibrium(model, LoadCase(state.theta + h_deg, state.delta), start=state, **kw)
    minus = solve_equilibrium(model, LoadCase(state.theta - h_deg, state.delta), start=state, **kw)
    return (plus.energy - minus.energy) / (2.0 * np.radians(h_deg))


def force_fd(model, state: EquilibriumResult, h=1e-3, tol=None):
    plus = solve_equilibrium(model, LoadCase(state.theta, state.delta + h), start=state, tol=tol)
    minus = solve_equilibrium(model, LoadCase(state.theta, state.delta - h), start=state, tol=tol)
    return (plus.energy - minus.energy) / (2.0 * h)


@dataclass
class TorqueCurve:
    theta: np.ndarray
    delta: float
    torque: np.ndarray
    force: np.ndarray
    energy: np.ndarray
    residual: np.ndarray
    valid: list
    states: list

    CSV_HEADER = ("theta_deg", "delta_mm", "torque_Nmm", "force_N", "energy_Nmm", "residual", "valid_flag")

    def rows(self):
        for i in range(len(self.theta)):
            yield (self.theta[i], self.delta, self.torque[i], self.force[i], self.energy[i],
                   self.residual[i], self.valid[i])


def preload(model, delta, max_step=1.0, tol=None):
    """Equilibrium at zero twist and axial offset ``delta`` (mm)."""
    steps = max(1, int(np.ceil(abs(delta) / max_step)))
    return solve_equilibrium(model, LoadCase(0.0, delta, steps), tol=tol)


def torque_rotation_curve(model: BarHingeModel, delta: float, theta_max: float = 30.0,
                          n_points: int = 31, max_step_deg: float = 2.5, tol=None,
                          start: EquilibriumResult | None = None) -> TorqueCurve:
    """Sweep the twist from 0 to ``theta_max`` at fixed axial offset.

    Increments between grid points are subdivided to at most
    ``max_step_deg`` so coarse and fine grids follow the same path.
    """
    if n_points < 2:
        raise ParameterError("n_points must be >= 2")
    grid = np.linspace(0.0, theta_max, n_points)
    state = start if start is not None else preload(model, delta, tol=tol)
    states = []
    prev = 0.0
    for th in grid:
        steps = max(1, int(np.ceil(abs(th - prev) / max_step_deg)))
        if th != state.theta:
            state = solve_equilibrium(model, LoadCase(th, delta, steps), start=state, tol=tol)
        states.append(state)
        prev = th
    return TorqueCurve(
        theta=grid, delta=float(delta),
        torque=np.array([s.torque for s in states]), force=np.array([s.axial_force for s in states]),
        energy=np.array([s.energy for s in states]), residual=np.array([s.residual for s in states]),
        valid=[validity_flag(delta)] * len(states), states=states,
    )

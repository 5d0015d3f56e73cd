"""Whole-body dynamics terms: mass matrix, Coriolis/centrifugal and gravity
vectors, frame Jacobians with drift, centroidal momentum of link subsets.

Everything is assembled from per-link spatial Jacobians expressed at the
world origin (angular, linear ordering), which vectorizes well:

    M = sum_l A_l^T I_l A_l
    b = sum_l A_l^T (I_l Adot_l qd + v_l x* I_l v_l)
    g = -sum_l A_l^T f_grav,l

where A_l stacks the motion-subspace columns of the joints supporting link
l.  A straightforward recursive implementation serves as the test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import Kinematics, RobotModel, RobotState, forward_kinematics
from .spatial import cross3, skew


class DynamicsError(RuntimeError):
    pass


def _skew_stack(v):
    """(N,3) -> (N,3,3) stack of cross-product matrices."""
    n = v.shape[0]
    s = np.zeros((n, 3, 3))
    s[:, 0, 1] = -v[:, 2]
    s[:, 0, 2] = v[:, 1]
    s[:, 1, 0] = v[:, 2]
    s[:, 1, 2] = -v[:, 0]
    s[:, 2, 0] = -v[:, 1]
    s[:, 2, 1] = v[:, 0]
    return s


def _crm_stack(v):
    """(N,6) motion vectors -> (N,6,6) motion cross-product operators."""
    n = v.shape[0]
    m = np.zeros((n, 6, 6))
    sw = _skew_stack(v[:, 0:3])
    m[:, 0:3, 0:3] = sw
    m[:, 3:6, 3:6] = sw
    m[:, 3:6, 0:3] = _skew_stack(v[:, 3:6])
    return m


def _crf_apply(v, f):
    """v x* f for stacked motion (N,6) and force (N,6) vectors."""
    w, u = v[:, 0:3], v[:, 3:6]
    m, fo = f[:, 0:3], f[:, 3:6]
    return np.concatenate(
        [np.cross(w, m) + np.cross(u, fo), np.cross(w, fo)], axis=1
    )


# per-model structural cache: ancestor masks and 6x6 body inertias
_STRUCT_CACHE: dict[int, tuple] = {}


def _structure(model: RobotModel):
    key = id(model)
    cached = _STRUCT_CACHE.get(key)
    if cached is not None:
        return cached
    nl = len(model.joints)
    nv = model.nv
    mask = np.zeros((nl, nv), dtype=bool)
    base = 6 if model.floating else 0
    for l in range(nl):
        i = l
        while i > 0:
            mask[l, base + i - 1] = True
            i = model.joints[i].parent
        if model.floating:
            mask[l, 0:6] = True
    ibody = np.stack([ine.matrix() for ine in model.link_inertias])
    prismatic = np.array(
        [j.kind == "prismatic" for j in model.joints], dtype=bool
    )
    masses = np.array([ine.mass for ine in model.link_inertias])
    coms = np.stack([ine.com for ine in model.link_inertias])
    cached = (mask, ibody, prismatic, masses, coms)
    _STRUCT_CACHE[key] = cached
    if len(_STRUCT_CACHE) > 64:
        _STRUCT_CACHE.pop(next(iter(_STRUCT_CACHE)))
    return cached


@dataclass
class FrameJacobian:
    """Point-referenced frame Jacobian: rows are (angular velocity, linear
    velocity of the frame point), columns over the generalized velocity."""

    J: np.ndarray
    jdot_qd: np.ndarray
    link: int
    point: np.ndarray  # world position of the reference point
    expressed_in: str = "world"


class Workspace:
    """Per-tick dynamics quantities of one (model, state) pair.

    Exposes M, bias (Coriolis/centrifugal), grav, per-link spatial data, and
    a reusable Cholesky factorization of M.
    """

    def __init__(self, model: RobotModel, state: RobotState, gravity=None):
        self.model = model
        self.state = state
        self.kin: Kinematics = forward_kinematics(model, state)
        mask, ibody, prismatic, masses, coms = _structure(model)
        kin = self.kin
        nl = len(model.joints)
        nv = model.nv
        gravity = model.gravity if gravity is None else np.asarray(gravity, float)
        self.gravity = gravity

        # world-origin spatial inertias: I_O = Xf I_body Xf^T
        xf = np.zeros((nl, 6, 6))
        xf[:, 0:3, 0:3] = kin.rot
        xf[:, 3:6, 3:6] = kin.rot
        xf[:, 0:3, 3:6] = _skew_stack(kin.pos) @ kin.rot
        self.inertia_origin = xf @ ibody @ xf.transpose(0, 2, 1)

        # motion subspace columns at world origin
        s_all = np.zeros((6, nv))
        base = 0
        if model.floating:
            rot0, p0 = kin.rot[0], kin.pos[0]
            s_all[0:3, 0:3] = rot0
            s_all[3:6, 0:3] = skew(p0) @ rot0
            s_all[3:6, 3:6] = rot0
            base = 6
        ax = kin.axis_world[1:]
        anch = kin.anchor[1:]
        rev = ~prismatic[1:]
        s_all[0:3, base:][:, rev] = ax[rev].T
        s_all[3:6, base:][:, rev] = np.cross(anch[rev], ax[rev]).T
        s_all[3:6, base:][:, ~rev] = ax[~rev].T
        self.S = s_all
        self.mask = mask

        # link spatial Jacobians (world-origin coordinates)
        self.A = s_all[None, :, :] * mask[:, None, :]

        qd = state.qd
        self.V = self.A @ qd  # (nl, 6) link spatial velocities

        # column rates: each joint's subspace column is fixed in its child
        # link, so sdot_j = v_child x s_j; base columns are fixed in the base
        sdot = np.zeros((6, nv))
        if model.floating:
            from .spatial import crm

            sdot[:, 0:6] = crm(self.V[0]) @ s_all[:, 0:6]
        child_v = self.V[1:]  # link i is the child of joint i
        cr = _crm_stack(child_v)
        sdot[:, base:] = np.einsum("lij,jl->il", cr, s_all[:, base:])
        self.Sdot = sdot
        self.Adot = sdot[None, :, :] * mask[:, None, :]
        self.bias_acc = self.Adot @ qd  # (nl, 6) with qdd = 0

        # generalized terms
        ih = np.einsum("lij,lj->li", self.inertia_origin, self.V)
        self.link_momentum = ih
        f_bias = (
            np.einsum("lij,lj->li", self.inertia_origin, self.bias_acc)
            + _crf_apply(self.V, ih)
        )
        a_flat = self.A.reshape(nl * 6, nv)
        ia_flat = (self.inertia_origin @ self.A).reshape(nl * 6, nv)
        self.M = a_flat.T @ ia_flat
        self.M = 0.5 * (self.M + self.M.T)
        self.bias = a_flat.T @ f_bias.ravel()

        com_w = kin.pos + np.einsum("lij,lj->li", kin.rot, coms)
        self.link_com = com_w
        self.link_mass = masses
        mg = masses[:, None] * gravity
        f_grav = np.concatenate([np.cross(com_w, mg), mg], axis=1)
        self.grav = -(a_flat.T @ f_grav.ravel())

        self._chol = None

    # -- mass matrix solves ------------------------------------------------

    def solve_mass_matrix(self, rhs):
        """M^{-1} rhs with a cached SPD factorization (reused per tick)."""
        if self._chol is None:
            try:
                self._chol = cho_factor(self.M, lower=True, check_finite=False)
            except np.linalg.LinAlgError as e:
                raise DynamicsError(f"mass matrix is not SPD: {e}") from None
        return cho_solve(self._chol, rhs, check_finite=False)

    # -- frame Jacobians ---------------------------------------------------

    def frame_jacobian(self, link, offset=None, expressed_in="world") -> FrameJacobian:
        """Jacobian of the point `offset` (link frame) on link `link`."""
        if isinstance(link, str):
            link = self.model.link_index(link)
        kin = self.kin
        p = kin.pos[link]
        if offset is not None:
            p = p + kin.rot[link] @ np.asarray(offset, dtype=float)
        a = self.A[link]
        j = np.empty((6, self.model.nv))
        j[0:3] = a[0:3]
        j[3:6] = a[3:6] - skew(p) @ a[0:3]
        alpha = self.bias_acc[link, 0:3]
        a_o = self.bias_acc[link, 3:6]
        w = kin.w[link]
        v_point = j[3:6] @ self.state.qd
        jd = np.concatenate([alpha, a_o + cross3(alpha, p) + cross3(w, v_point)])
        if expressed_in == "base":
            rot0 = self.kin.rot[0]
            wb = self.kin.w[0]
            xdot = j @ self.state.qd
            j = np.vstack([rot0.T @ j[0:3], rot0.T @ j[3:6]])
            jd = np.concatenate(
                [
                    rot0.T @ (jd[0:3] - cross3(wb, xdot[0:3])),
                    rot0.T @ (jd[3:6] - cross3(wb, xdot[3:6])),
                ]
            )
        elif expressed_in != "world":
            raise ValueError(f"unknown frame {expressed_in!r}")
        return FrameJacobian(J=j, jdot_qd=jd, link=link, point=p,
                             expressed_in=expressed_in)

    def com_jacobian(self):
        """3 x nv Jacobian of the whole-robot COM plus its drift term."""
        mtot = self.link_mass.sum()
        jl = (self.A[:, 3:6, :] - _skew_stack(self.link_com) @ self.A[:, 0:3, :])
        j = np.einsum("l,lab->ab", self.link_mass / mtot, jl)
        # drift: mass-weighted classical accelerations of the link COMs
        alpha = self.bias_acc[:, 0:3]
        a_o = self.bias_acc[:, 3:6]
        v_pt = np.einsum("lab,b->la", jl, self.state.qd)
        acc = a_o + np.cross(alpha, self.link_com) + np.cross(self.kin.w, v_pt)
        jdot_qd = np.einsum("l,la->a", self.link_mass / mtot, acc)
        return j, jdot_qd, self.link_mass @ self.link_com / mtot

    # -- centroidal quantities --------------------------------------------

    def centroidal(self, links=None, expressed_in="world"):
        """Centroidal momentum matrix, composite inertia, momentum and COM of
        a link subset (default: all links), referenced at the subset COM."""
        if links is None:
            links = range(len(self.model.joints))
        links = [self.model.link_index(l) if isinstance(l, str) else l for l in links]
        links = list(links)
        if not links:
            raise DynamicsError("empty link subset")
        mass = self.link_mass[links].sum()
        if mass <= 0.0:
            raise DynamicsError("subset has zero mass")
        com = self.link_mass[links] @ self.link_com[links] / mass
        i_o = self.inertia_origin[links].sum(axis=0)
        mg_o = np.einsum("lij,ljb->ib", self.inertia_origin[links], self.A[links])
        # shift reference point from the origin to the subset COM
        t = np.eye(6)
        t[0:3, 3:6] = -skew(com)
        mg = t @ mg_o
        i_g = t @ i_o @ t.T
        h = mg @ self.state.qd
        if expressed_in == "base":
            rot0 = self.kin.rot[0]
            r = np.zeros((6, 6))
            r[0:3, 0:3] = rot0.T
            r[3:6, 3:6] = rot0.T
            mg = r @ mg
            i_g = r @ i_g @ r.T
            h = r @ h
            com = rot0.T @ (com - self.kin.pos[0])
        return CentroidalQuantities(M_G=mg, I_G=0.5 * (i_g + i_g.T), h_G=h, com=com,
                                    mass=mass)

    def centroidal_bias(self, links=None):
        """d/dt of the subset average spatial velocity at qdd = 0, referenced
        at the (moving) subset COM, world axes."""
        if links is None:
            links = range(len(self.model.joints))
        links = [self.model.link_index(l) if isinstance(l, str) else l for l in links]
        links = list(links)
        i_l = self.inertia_origin[links]
        v_l = self.V[links]
        h_l = self.link_momentum[links]
        i_o = i_l.sum(axis=0)
        h_o = h_l.sum(axis=0)
        v_g = np.linalg.solve(i_o, h_o)
        hdot_o = (
            np.einsum("lij,lj->li", i_l, self.bias_acc[links]) + _crf_apply(v_l, h_l)
        ).sum(axis=0)
        cr = _crm_stack(v_l)
        idot_o = (-cr.transpose(0, 2, 1) @ i_l - i_l @ cr).sum(axis=0)
        vdot_o = np.linalg.solve(i_o, hdot_o - idot_o @ v_g)
        mass = self.link_mass[links].sum()
        com = self.link_mass[links] @ self.link_com[links] / mass
        cdot = h_o[3:6] / mass
        w_g = v_g[0:3]
        vdot_c = np.concatenate(
            [
                vdot_o[0:3],
                vdot_o[3:6] + np.cross(vdot_o[0:3], com) + np.cross(w_g, cdot),
            ]
        )
        return vdot_c


@dataclass
class CentroidalQuantities:
    M_G: np.ndarray  # 6 x nv momentum matrix (reference at subset COM)
    I_G: np.ndarray  # 6 x 6 composite spatial inertia at subset COM
    h_G: np.ndarray  # 6-vector momentum
    com: np.ndarray
    mass: float


# -- spec-level convenience wrappers ----------------------------------------


def mass_matrix(model, state):
    return Workspace(model, state).M


def nonlinear_effects(model, state):
    ws = Workspace(model, state)
    return ws.bias, ws.grav


def frame_jacobian(model, state, link, offset=None, expressed_in="world"):
    return Workspace(model, state).frame_jacobian(link, offset, expressed_in)


def centroidal_quantities(model, state, links=None, expressed_in="world"):
    return Workspace(model, state).centroidal(links, expressed_in)

"""Chain partitioning and the reduced-dimension dynamics construction.

The kinematic chain splits into the 6-DOF virtual chain, the constrained
chain (joints on root-to-constrained-link paths) and the unconstrained
chain.  The unconstrained chain collapses to its 6-DOF centroidal space,
giving reduced coordinates qd_r = [qd_vc; qd_cc; v_G_uc(base frame)] and
the projected dynamics
    M_r = (J_r M^-1 J_r^T)^-1,   b_r = M_r (J_r M^-1 b - Jdot_r qd),
    g_r = M_r J_r M^-1 g,        Jbar_r^T = M_r J_r M^-1,
with N_r^T = I - J_r^T Jbar_r^T the associated null-space projector.

The unconstrained chain additionally gets an independent fixed-base model
(rooted at its attachment, gravity rotated into the base frame) for the
second-stage problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsError, Workspace
from .spatial import cross3
from .model import (
    FIXED,
    JointSpec,
    ModelError,
    RobotModel,
    RobotState,
)
from .spatial import PluckerTransform, compose

I_G_CONDITION_LIMIT = 1e12

# CP-condition threshold on the infinity norm of J_task N_r with
# row-normalized task rows.
CP_TOL = 1e-6


@dataclass(frozen=True)
class ChainPartition:
    """Index bookkeeping for the virtual / constrained / unconstrained split.

    Joint and dof indices are in model order; dof index d corresponds to
    generalized-velocity column 6 + d.
    """

    constrained_links: tuple
    cc_joints: tuple  # joint indices (>= 1)
    uc_joints: tuple
    cc_links: tuple  # link indices (== joint indices here)
    uc_links: tuple

    @property
    def n_cc(self):
        return len(self.cc_joints)

    @property
    def n_uc(self):
        return len(self.uc_joints)

    @property
    def n_r(self):
        return self.n_cc + 6

    def cc_cols(self):
        """Generalized-velocity columns of the constrained-chain joints."""
        return np.array([5 + j for j in self.cc_joints], dtype=int)

    def uc_cols(self):
        return np.array([5 + j for j in self.uc_joints], dtype=int)


def partition_chains(model: RobotModel, constrained_links) -> ChainPartition:
    if not constrained_links:
        raise ModelError("constrained link set must not be empty")
    cc = set()
    for name in constrained_links:
        li = model.link_index(name) if isinstance(name, str) else name
        if li == 0:
            raise ModelError("the root link cannot be a constrained link")
        i = li
        while i > 0:
            cc.add(i)
            i = model.joints[i].parent
    all_joints = range(1, len(model.joints))
    cc_joints = tuple(sorted(cc))
    uc_joints = tuple(j for j in all_joints if j not in cc)
    if not uc_joints:
        raise ModelError("unconstrained chain is empty; reduction is ill-posed")
    return ChainPartition(
        constrained_links=tuple(constrained_links),
        cc_joints=cc_joints,
        uc_joints=uc_joints,
        cc_links=cc_joints,
        uc_links=uc_joints,
    )


# ---------------------------------------------------------------------------
# unconstrained chain as an independent fixed-base model


class _SubmodelCache:
    def __init__(self):
        self.model = None
        self.static = False


_submodel_caches: dict[tuple, _SubmodelCache] = {}


def uc_submodel(model: RobotModel, state: RobotState, partition: ChainPartition):
    """Fixed-base model of the unconstrained chain, rooted at the robot base.

    Joint origins of sub-roots attached to constrained-chain links are
    composed with the current pose of that link in the base frame, so the
    sub-model is rebuilt per tick in that case and cached otherwise.
    """
    key = (id(model), partition.uc_joints)
    cache = _submodel_caches.setdefault(key, _SubmodelCache())
    if len(_submodel_caches) > 64:
        _submodel_caches.pop(next(iter(_submodel_caches)))

    uc = partition.uc_joints
    sub_index = {0: 0}  # model link index -> sub link index (0 = anchor)
    needs_pose = any(
        model.joints[j].parent not in uc and model.joints[j].parent != 0 for j in uc
    )

    if cache.model is None or needs_pose:
        from .model import forward_kinematics
        from .spatial import SpatialInertia

        kin = forward_kinematics(model, state) if needs_pose else None
        base_inv = None
        if needs_pose:
            base_inv = PluckerTransform(kin.rot[0], kin.pos[0]).inverse()
        link_names = ["uc_anchor"]
        inertias = [SpatialInertia(0.0)]
        joints = [JointSpec("uc_anchor_joint", FIXED, -1)]
        for j in uc:
            spec = model.joints[j]
            parent = spec.parent
            if parent in sub_index:
                sub_parent = sub_index[parent]
                origin = spec.origin
            elif parent == 0:
                sub_parent = 0
                origin = spec.origin
            else:
                # attachment hangs off a constrained-chain link: fold its
                # current base-frame pose into the joint origin
                sub_parent = 0
                parent_pose = compose(
                    base_inv, PluckerTransform(kin.rot[parent], kin.pos[parent])
                )
                origin = compose(parent_pose, spec.origin)
            sub_index[j] = len(link_names)
            link_names.append(model.link_names[j])
            inertias.append(model.link_inertias[j])
            joints.append(
                JointSpec(spec.name, spec.kind, sub_parent, spec.axis, origin)
            )
        sub = RobotModel(
            name=f"{model.name}_uc",
            link_names=tuple(link_names),
            link_inertias=tuple(inertias),
            joints=tuple(joints),
            gravity=model.gravity,
        )
        if not needs_pose:
            cache.model = sub
    else:
        sub = cache.model

    cols = partition.uc_cols()
    sub_state = RobotState(q=state.q[7:][cols - 6].copy(), qd=state.qd[cols].copy())
    return sub, sub_state


@dataclass
class UnconstrainedChainDynamics:
    """Independent dynamics of the unconstrained chain (base frame)."""

    M_uc: np.ndarray
    b_uc: np.ndarray
    g_uc: np.ndarray
    J_G_uc: np.ndarray  # 6 x n_uc centroidal inertial Jacobian
    jGdot_qd: np.ndarray  # 6-vector drift of the centroidal coupling
    I_G_uc: np.ndarray
    com: np.ndarray  # uc COM in the base frame
    workspace: Workspace = field(repr=False, default=None)


def unconstrained_dynamics(
    model: RobotModel, state: RobotState, partition: ChainPartition
) -> UnconstrainedChainDynamics:
    """Eq.-of-motion terms of the unconstrained chain as an independent
    fixed-base model, with gravity rotated into the (current) base frame."""
    sub, sub_state = uc_submodel(model, state, partition)
    rot0 = state.base_rotation()
    ws = Workspace(sub, sub_state, gravity=rot0.T @ model.gravity)
    links = range(1, len(sub.joints))
    cq = ws.centroidal(links=links)
    cond = np.linalg.cond(cq.I_G)
    if cond > I_G_CONDITION_LIMIT:
        raise DynamicsError(
            f"unconstrained-chain inertia is near-singular (cond={cond:.3e}); "
            "check the partition for a degenerate subset"
        )
    j_g = np.linalg.solve(cq.I_G, cq.M_G)
    return UnconstrainedChainDynamics(
        M_uc=ws.M,
        b_uc=ws.bias,
        g_uc=ws.grav,
        J_G_uc=j_g,
        jGdot_qd=ws.centroidal_bias(links=links),
        I_G_uc=cq.I_G,
        com=cq.com,
        workspace=ws,
    )


def centroidal_jacobian_uc(model, state, partition):
    """(J_G_uc, jGdot_qd, I_G_uc) of the unconstrained chain, base frame."""
    uc = unconstrained_dynamics(model, state, partition)
    return uc.J_G_uc, uc.jGdot_qd, uc.I_G_uc


# ---------------------------------------------------------------------------
# reduced whole-body dynamics


@dataclass
class ReducedModel:
    partition: ChainPartition
    J_r: np.ndarray  # (n_r+6) x (n+6)
    jrdot_qd: np.ndarray
    M_r: np.ndarray
    b_r: np.ndarray
    g_r: np.ndarray
    Jbar_r_T: np.ndarray  # (n_r+6) x (n+6), dynamically consistent inverse^T
    N_r_T: np.ndarray  # (n+6) x (n+6) null-space projector
    Jc_r: np.ndarray  # c x (n_r+6) reduced contact Jacobian
    ucdyn: UnconstrainedChainDynamics

    @property
    def dim(self):
        return self.J_r.shape[0]

    def cc_rows(self):
        """Rows of the reduced dynamics belonging to constrained-chain
        actuators (reduced coordinate order [vc, cc, centroidal])."""
        return slice(6, 6 + self.partition.n_cc)

    def centroidal_rows(self):
        return slice(6 + self.partition.n_cc, self.dim)


def build_reduction(
    model: RobotModel,
    state: RobotState,
    partition: ChainPartition,
    ws: Workspace,
    Jc: np.ndarray,
    debug_check: bool = False,
) -> ReducedModel:
    """Assemble the reduced-dimension dynamics for the current state.

    `Jc` is the stacked contact Jacobian (c x (n+6)); it must have zero
    columns on the unconstrained chain, which makes the selection-based
    reduced contact Jacobian exact.  With debug_check=True the selection
    shortcut is verified against the dynamically-consistent projection.
    """
    nv = model.nv
    n_cc = partition.n_cc
    dim = n_cc + 12
    ucdyn = unconstrained_dynamics(model, state, partition)

    j_r = np.zeros((dim, nv))
    j_r[0:6, 0:6] = np.eye(6)
    cc_cols = partition.cc_cols()
    j_r[np.arange(6, 6 + n_cc), cc_cols] = 1.0
    j_r[6 + n_cc :, partition.uc_cols()] = ucdyn.J_G_uc

    jrdot_qd = np.zeros(dim)
    jrdot_qd[6 + n_cc :] = ucdyn.jGdot_qd

    minv_jrt = ws.solve_mass_matrix(j_r.T)
    lam_inv = j_r @ minv_jrt
    lam_inv = 0.5 * (lam_inv + lam_inv.T)
    cond = np.linalg.cond(lam_inv)
    if not np.isfinite(cond) or cond > 1e12:
        raise DynamicsError(
            f"reduced inertia is singular (cond={cond:.3e}): the configuration "
            "is at a reduction singularity (e.g. fully stretched limbs)"
        )
    m_r = np.linalg.inv(lam_inv)
    m_r = 0.5 * (m_r + m_r.T)
    jbar_r_t = m_r @ minv_jrt.T
    b_r = m_r @ (j_r @ ws.solve_mass_matrix(ws.bias)) - m_r @ jrdot_qd
    g_r = m_r @ (j_r @ ws.solve_mass_matrix(ws.grav))
    n_r_t = np.eye(nv) - j_r.T @ jbar_r_t

    # selection shortcut: the contact Jacobian has no unconstrained-chain
    # columns, so its reduced projection keeps the vc/cc columns verbatim
    jc_r = np.zeros((Jc.shape[0], dim))
    jc_r[:, 0:6] = Jc[:, 0:6]
    jc_r[:, 6 : 6 + n_cc] = Jc[:, cc_cols]
    if debug_check:
        jc_r_proj = (jbar_r_t @ Jc.T).T
        err = np.abs(jc_r_proj - jc_r).max()
        scale = max(np.abs(Jc).max(), 1.0)
        if err > 1e-8 * scale:
            raise DynamicsError(
                f"reduced contact Jacobian shortcut mismatch: {err:.3e}"
            )

    return ReducedModel(
        partition=partition,
        J_r=j_r,
        jrdot_qd=jrdot_qd,
        M_r=m_r,
        b_r=b_r,
        g_r=g_r,
        Jbar_r_T=jbar_r_t,
        N_r_T=n_r_t,
        Jc_r=jc_r,
        ucdyn=ucdyn,
    )


def reduce_task(j_task: np.ndarray, reduced: ReducedModel):
    """Project a task Jacobian into reduced coordinates.

    Returns (J_task Jbar_r, cp_residual).  The caller may use the reduced
    constraint only when cp_residual <= CP_TOL (consistent-projection
    condition); non-CP tasks belong in the unconstrained-chain stage.
    """
    j_task = np.atleast_2d(j_task)
    norms = np.linalg.norm(j_task, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    cp_residual = float(np.abs((j_task / norms) @ reduced.N_r_T.T).max())
    return j_task @ reduced.Jbar_r_T.T, cp_residual


def base_frame_task_reference(
    ws: Workspace,
    link,
    offset,
    ref_acc_world: np.ndarray,
    qdd_vc: np.ndarray,
    fj=None,
):
    """Transport a world-frame task reference acceleration (angular, linear)
    into a base-relative reference, given the solved base acceleration.

    Subtracts the base's rigid-body contribution (angular/centripetal/
    Coriolis transport terms) and rotates into base axes.
    """
    kin = ws.kin
    rot0, p0 = kin.rot[0], kin.pos[0]
    wb, vb = kin.w[0], kin.v[0]
    # base classical accelerations from the base-frame coordinate solution
    alpha_b = rot0 @ qdd_vc[0:3]
    acc_b = rot0 @ qdd_vc[3:6] + cross3(wb, vb)

    if fj is None:
        fj = ws.frame_jacobian(link, offset)
    r = fj.point - p0
    xdot = fj.J @ ws.state.qd
    w_f, v_f = xdot[0:3], xdot[3:6]
    v_rel = v_f - vb - cross3(wb, r)

    ang = rot0.T @ (ref_acc_world[0:3] - alpha_b - cross3(wb, w_f - wb))
    lin = rot0.T @ (
        ref_acc_world[3:6]
        - acc_b
        - cross3(alpha_b, r)
        - cross3(wb, cross3(wb, r))
        - 2.0 * cross3(wb, v_rel)
    )
    return np.concatenate([ang, lin])

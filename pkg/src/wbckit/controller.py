"""Instantaneous whole-body control pipelines.

Two torque controllers over the same task language:
  * conventional: one lexicographic QP over x = [qdd; F_c] with the
    floating-base dynamics, contacts, and all tasks stacked by priority;
  * reduced: a first stage over x1 = [qdd_r; F_c] in the reduced coordinates
    (virtual chain + constrained chain + unconstrained-chain centroidal
    coordinates), then a second stage over x2 = qdd_uc resolving the
    unconstrained chain against the centroidal coupling, with torque
    assembly from both stages.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Workspace
from .lqp import LqpLevel, LqpSolution, solve_lqp_sequential, solve_lqp_weighted
from .model import RobotModel, RobotState
from .reduction import (
    CP_TOL,
    ChainPartition,
    ReducedModel,
    base_frame_task_reference,
    build_reduction,
    partition_chains,
    reduce_task,
)
from .spatial import rotation_log, skew


class ControllerError(RuntimeError):
    def __init__(self, phase, message):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase


# ---------------------------------------------------------------------------
# specs


@dataclass
class ContactSpec:
    """Planar rectangular contact patch on a link (6 constrained DOF)."""

    link: str
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    half_x: float = 0.1
    half_y: float = 0.05
    mu: float = 0.7
    torsion: float | None = None  # torsional friction bound scale; default derived

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float)
        if self.mu <= 0 or self.half_x <= 0 or self.half_y <= 0:
            raise ValueError("contact patch dims and friction must be positive")
        if self.torsion is None:
            self.torsion = self.mu * 0.5 * (self.half_x + self.half_y)


COM_POSITION = "com-position"
BASE_ORIENTATION = "base-orientation"
FRAME_POSE = "frame-pose"
CENTROIDAL_UC = "centroidal-uc"


@dataclass
class Trajectory:
    """Scalar offset profile applied along one axis of a captured reference."""

    kind: str = "constant"  # constant | sinusoid | step
    amp: float = 0.0
    freq: float = 0.0  # Hz
    axis: int = 0
    value: float = 0.0
    time: float = 0.0

    def offset(self, t):
        """(position, velocity, acceleration) offsets along `axis` at time t."""
        if self.kind == "constant":
            return 0.0, 0.0, 0.0
        if self.kind == "sinusoid":
            w = 2.0 * np.pi * self.freq
            s, c = np.sin(w * t), np.cos(w * t)
            return self.amp * s, self.amp * w * c, -self.amp * w * w * s
        if self.kind == "step":
            return (self.value if t >= self.time else 0.0), 0.0, 0.0
        raise ValueError(f"unknown trajectory kind {self.kind!r}")


@dataclass
class TaskSpec:
    kind: str
    priority: int = 1
    kp: float = 400.0
    kd: float = 40.0
    link: str | None = None
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    trajectory: Trajectory = field(default_factory=Trajectory)
    name: str = ""
    # captured at controller start:
    ref_pos: np.ndarray | None = None
    ref_rot: np.ndarray | None = None

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float)
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be nonnegative")
        if self.priority < 1:
            raise ValueError("priority must be >= 1")
        if not self.name:
            self.name = self.kind if self.link is None else f"{self.kind}:{self.link}"


@dataclass
class JointLimits:
    tau_min: np.ndarray
    tau_max: np.ndarray
    qdd_min: np.ndarray
    qdd_max: np.ndarray

    def __post_init__(self):
        for lo, hi in ((self.tau_min, self.tau_max), (self.qdd_min, self.qdd_max)):
            if (np.asarray(lo) >= np.asarray(hi)).any():
                raise ValueError("limit min must be < max elementwise")

    @staticmethod
    def default(n, tau=300.0, qdd=250.0):
        return JointLimits(
            tau_min=np.full(n, -tau),
            tau_max=np.full(n, tau),
            qdd_min=np.full(n, -qdd),
            qdd_max=np.full(n, qdd),
        )


@dataclass
class TorqueCommand:
    tau: np.ndarray  # model joint order
    contact_forces: np.ndarray  # stacked 6c (moment, force) per contact, world
    qdd: np.ndarray | None  # full-model acceleration when available
    slacks: list
    timings_us: dict
    solution1: LqpSolution | None = None
    solution2: LqpSolution | None = None
    coupling_residual: float = 0.0


# ---------------------------------------------------------------------------
# contact wrench cone


def wrench_cone_rows(c: ContactSpec, rot=None) -> np.ndarray:
    """10x6 matrix C with C F <= 0 for an admissible contact wrench F =
    (moment, force) about the patch center: 4 friction-pyramid rows, 4
    center-of-pressure rows, 1 unilateral row, 1 torsional row.  `rot`
    rotates world wrench coordinates into the patch frame (z = normal)."""
    C = np.zeros((10, 6))
    mu, dx, dy = c.mu, c.half_x, c.half_y
    # friction pyramid |f_x|, |f_y| <= mu f_z
    C[0, 3 + 0], C[0, 3 + 2] = 1.0, -mu
    C[1, 3 + 0], C[1, 3 + 2] = -1.0, -mu
    C[2, 3 + 1], C[2, 3 + 2] = 1.0, -mu
    C[3, 3 + 1], C[3, 3 + 2] = -1.0, -mu
    # CoP inside the patch: |m_y| <= dx f_z, |m_x| <= dy f_z
    C[4, 1], C[4, 3 + 2] = 1.0, -dx
    C[5, 1], C[5, 3 + 2] = -1.0, -dx
    C[6, 0], C[6, 3 + 2] = 1.0, -dy
    C[7, 0], C[7, 3 + 2] = -1.0, -dy
    # unilateral normal force
    C[8, 3 + 2] = -1.0
    # torsional friction (one-sided)
    C[9, 2], C[9, 3 + 2] = 1.0, -c.torsion
    if rot is not None:
        R6 = np.zeros((6, 6))
        R6[0:3, 0:3] = rot.T
        R6[3:6, 3:6] = rot.T
        C = C @ R6
    return C


# ---------------------------------------------------------------------------
# task references


def capture_task_references(tasks, ws: Workspace):
    """Record current task positions/orientations as the trajectory origin."""
    for t in tasks:
        if t.kind == COM_POSITION:
            _, _, com = ws.com_jacobian()
            t.ref_pos = com.copy()
        elif t.kind == BASE_ORIENTATION:
            t.ref_rot = ws.kin.rot[0].copy()
        elif t.kind == FRAME_POSE:
            li = ws.model.link_index(t.link)
            t.ref_pos = ws.kin.pos[li] + ws.kin.rot[li] @ t.offset
            t.ref_rot = ws.kin.rot[li].copy()


def reference_acceleration(task: TaskSpec, ws: Workspace, t: float, fj=None):
    """(J, jdot_qd, xdd_ref) of a task at time t: PD on trajectory error.

    Orientation errors use the rotation log map in world coordinates.
    """
    if task.kind == COM_POSITION:
        j, jdot_qd, com = ws.com_jacobian()
        dp, dv, da = task.trajectory.offset(t)
        e = np.zeros(3)
        p_ref = task.ref_pos.copy()
        p_ref[task.trajectory.axis] += dp
        v_ref = np.zeros(3)
        v_ref[task.trajectory.axis] = dv
        a_ref = np.zeros(3)
        a_ref[task.trajectory.axis] = da
        v = j @ ws.state.qd
        xdd = a_ref + task.kd * (v_ref - v) + task.kp * (p_ref - com)
        return j, jdot_qd, xdd
    if task.kind == BASE_ORIENTATION:
        fj = ws.frame_jacobian(0)
        j, jdot_qd = fj.J[0:3], fj.jdot_qd[0:3]
        w = j @ ws.state.qd
        err = rotation_log(task.ref_rot @ ws.kin.rot[0].T)
        xdd = task.kd * (-w) + task.kp * err
        return j, jdot_qd, xdd
    if task.kind == FRAME_POSE:
        if fj is None:
            fj = ws.frame_jacobian(task.link, task.offset)
        dp, dv, da = task.trajectory.offset(t)
        p_ref = task.ref_pos.copy()
        p_ref[task.trajectory.axis] += dp
        v_ref = np.zeros(3)
        v_ref[task.trajectory.axis] = dv
        a_ref = np.zeros(3)
        a_ref[task.trajectory.axis] = da
        xd = fj.J @ ws.state.qd
        li = ws.model.link_index(task.link)
        err_rot = rotation_log(task.ref_rot @ ws.kin.rot[li].T)
        xdd = np.concatenate(
            [
                task.kd * (-xd[0:3]) + task.kp * err_rot,
                a_ref + task.kd * (v_ref - xd[3:6]) + task.kp * (p_ref - fj.point),
            ]
        )
        return fj.J, fj.jdot_qd, xdd
    raise ControllerError("task", f"unknown task kind {task.kind!r}")


# ---------------------------------------------------------------------------
# contact stacks


def contact_stack(ws: Workspace, contacts):
    """Stacked contact Jacobian, drift and cone rows at the patch centers."""
    js, jds, cones = [], [], []
    for c in contacts:
        fj = ws.frame_jacobian(c.link, c.offset)
        js.append(fj.J)
        jds.append(fj.jdot_qd)
        cones.append(wrench_cone_rows(c, rot=ws.kin.rot[ws.model.link_index(c.link)]))
    if not contacts:
        nv = ws.model.nv
        return np.zeros((0, nv)), np.zeros(0), np.zeros((0, 0))
    from scipy.linalg import block_diag

    return np.vstack(js), np.concatenate(jds), block_diag(*cones)


# ---------------------------------------------------------------------------
# conventional pipeline (single lexicographic problem)

VC_QDD_BOUND = 500.0  # box on virtual/centroidal coordinates (no actuator)


def build_conventional_problem(ws: Workspace, tasks, contacts, limits, t):
    """Levels over x = [qdd (nv); F_c (6c)]:
    1. floating-base dynamics rows (6 eq) + torque limits (2n ineq)
    2. contact stationarity (6c eq) + wrench cones (10c ineq) + qdd limits
    3. COM position + base orientation tasks (priority 1)
    4. frame-pose tasks (priority 2)
    """
    nv = ws.model.nv
    n = ws.model.n
    c = len(contacts)
    dim = nv + 6 * c
    jc, jcdot_qd, cones = contact_stack(ws, contacts)

    # dynamics rows: M qdd + b + g = S' tau + Jc' F; top 6 unactuated
    # (F is the wrench the environment applies to the robot)
    bg = ws.bias + ws.grav
    dyn = np.zeros((nv, dim))
    dyn[:, :nv] = ws.M
    if c:
        dyn[:, nv:] = -jc.T
    lv1 = LqpLevel(
        B=dyn[0:6],
        b=bg[0:6],
        A=np.vstack([dyn[6:], -dyn[6:]]),
        a=np.concatenate([bg[6:] - limits.tau_max, -bg[6:] + limits.tau_min]),
        name="dynamics",
    )

    rows_a, rows_b = [], []
    if c:
        contact_rows = np.zeros((6 * c, dim))
        contact_rows[:, :nv] = jc
        cone_rows = np.zeros((10 * c, dim))
        cone_rows[:, nv:] = cones
        rows_a.append(cone_rows)
        rows_b.append(np.zeros(10 * c))
    qdd_rows = np.zeros((n, dim))
    qdd_rows[:, 6:nv] = np.eye(n)
    rows_a += [qdd_rows, -qdd_rows]
    rows_b += [-limits.qdd_max, limits.qdd_min]
    lv2 = LqpLevel(
        B=contact_rows if c else None,
        b=jcdot_qd if c else None,
        A=np.vstack(rows_a),
        a=np.concatenate(rows_b),
        name="contact",
    )

    def task_level(prio, name):
        js, xs = [], []
        for task in tasks:
            if task.priority != prio or task.kind == CENTROIDAL_UC:
                continue
            j, jdot_qd, xdd = reference_acceleration(task, ws, t)
            r = np.zeros((j.shape[0], dim))
            r[:, :nv] = j
            js.append(r)
            xs.append(jdot_qd - xdd)
        if not js:
            return None
        return LqpLevel(B=np.vstack(js), b=np.concatenate(xs), name=name)

    levels = [lv1, lv2]
    for prio, name in ((1, "posture"), (2, "end-effectors")):
        lv = task_level(prio, name)
        if lv is not None:
            levels.append(lv)
    # acceleration energy qdd' M qdd as its own level strictly below every
    # task (Cholesky square root, so it is an exact least-squares residual),
    # then minimum-norm force selection strictly below that: neither cost can
    # trade against tracking or against the other
    en = np.zeros((nv, dim))
    en[:, :nv] = np.linalg.cholesky(ws.M).T
    levels.append(LqpLevel(B=en, b=np.zeros(nv), name="energy"))
    h_a = None
    if c:
        levels.append(LqpLevel(name="force-reg"))
        h_a = np.zeros((dim, dim))
        h_a[nv:, nv:] = np.eye(6 * c)
    return levels, dim, h_a


def extract_torque_conventional(ws, contacts, solution, jc) -> np.ndarray:
    nv = ws.model.nv
    qdd = solution.x[:nv]
    fc = solution.x[nv:]
    tau = ws.M[6:] @ qdd + ws.bias[6:] + ws.grav[6:]
    if len(contacts):
        tau = tau - jc.T[6:] @ fc
    return tau


# ---------------------------------------------------------------------------
# reduced (two-stage) pipeline


def build_lqp1(reduced: ReducedModel, ws: Workspace, tasks, contacts, limits, t,
               jc, jcdot_qd, cones, extra_levels=None):
    """Levels over x1 = [qdd_r (n_r+6); F_c (6c)]:
    1. reduced dynamics top-6 rows (6 eq) + constrained-chain torque limits
    2. reduced contact (6c eq) + cones (10c ineq) + qdd_r boxes
    3. COM + base-orientation tasks (must satisfy the consistent-projection
       condition; anything else is rejected by name)
    """
    part = reduced.partition
    n_cc = part.n_cc
    nr6 = reduced.dim
    c = len(contacts)
    dim = nr6 + 6 * c

    bg = reduced.b_r + reduced.g_r
    dyn = np.zeros((nr6, dim))
    dyn[:, :nr6] = reduced.M_r
    if c:
        dyn[:, nr6:] = -reduced.Jc_r.T
    cc = reduced.cc_rows()
    cc_dofs = part.cc_cols() - 6
    lv1 = LqpLevel(
        B=dyn[0:6],
        b=bg[0:6],
        A=np.vstack([dyn[cc], -dyn[cc]]),
        a=np.concatenate(
            [bg[cc] - limits.tau_max[cc_dofs], -bg[cc] + limits.tau_min[cc_dofs]]
        ),
        name="reduced-dynamics",
    )

    rows_a, rows_b = [], []
    if c:
        jc_r_drift = jcdot_qd - reduced.Jc_r @ reduced.jrdot_qd
        contact_rows = np.zeros((6 * c, dim))
        contact_rows[:, :nr6] = reduced.Jc_r
        cone_rows = np.zeros((10 * c, dim))
        cone_rows[:, nr6:] = cones
        rows_a.append(cone_rows)
        rows_b.append(np.zeros(10 * c))
    box = np.zeros((nr6, dim))
    box[:, :nr6] = np.eye(nr6)
    hi = np.full(nr6, VC_QDD_BOUND)
    lo = np.full(nr6, -VC_QDD_BOUND)
    hi[cc] = limits.qdd_max[cc_dofs]
    lo[cc] = limits.qdd_min[cc_dofs]
    rows_a += [box, -box]
    rows_b += [-hi, lo]
    lv2 = LqpLevel(
        B=contact_rows if c else None,
        b=jc_r_drift if c else None,
        A=np.vstack(rows_a),
        a=np.concatenate(rows_b),
        name="reduced-contact",
    )

    js, xs = [], []
    for task in tasks:
        if task.kind not in (COM_POSITION, BASE_ORIENTATION):
            continue
        j, jdot_qd, xdd = reference_acceleration(task, ws, t)
        j_red, cp = reduce_task(j, reduced)
        if cp > CP_TOL:
            raise ControllerError(
                "lqp1",
                f"task {task.name!r} violates the consistent-projection "
                f"condition (residual {cp:.3e}); route it to the second stage",
            )
        r = np.zeros((j.shape[0], dim))
        r[:, :nr6] = j_red
        js.append(r)
        xs.append(jdot_qd - j_red @ reduced.jrdot_qd - xdd)
    levels = [lv1, lv2]
    if js:
        levels.append(LqpLevel(B=np.vstack(js), b=np.concatenate(xs), name="posture"))
    if extra_levels:
        levels.extend(extra_levels)
    en = np.zeros((nr6, dim))
    en[:, :nr6] = np.linalg.cholesky(reduced.M_r).T
    levels.append(LqpLevel(B=en, b=np.zeros(nr6), name="energy"))
    h_a = None
    if c:
        levels.append(LqpLevel(name="force-reg"))
        h_a = np.zeros((dim, dim))
        h_a[nr6:, nr6:] = np.eye(6 * c)
    return levels, dim, h_a


def build_lqp2(reduced: ReducedModel, ws: Workspace, lqp1_solution, tasks,
               limits, t):
    """Levels over x2 = qdd_uc (n_uc):
    1. centroidal coupling equality (6 eq) + unconstrained-chain torque limits
    2. end-effector tasks transported into the base frame + qdd_uc boxes
    """
    uc = reduced.ucdyn
    part = reduced.partition
    n_uc = part.n_uc
    uc_dofs = part.uc_cols() - 6
    xdd_g = lqp1_solution.x[reduced.centroidal_rows()]

    bg = uc.b_uc + uc.g_uc
    lv1 = LqpLevel(
        B=uc.J_G_uc,
        b=uc.jGdot_qd - xdd_g,
        A=np.vstack([uc.M_uc, -uc.M_uc]),
        a=np.concatenate(
            [bg - limits.tau_max[uc_dofs], -bg + limits.tau_min[uc_dofs]]
        ),
        name="coupling",
    )

    qdd_vc = lqp1_solution.x[0:6]
    js, xs = [], []
    for task in tasks:
        if task.kind != FRAME_POSE:
            continue
        fjw = ws.frame_jacobian(task.link, task.offset)
        _, _, xdd_world = reference_acceleration(task, ws, t, fj=fjw)
        xdd_base = base_frame_task_reference(ws, task.link, task.offset,
                                             xdd_world, qdd_vc, fj=fjw)
        fj = uc.workspace.frame_jacobian(
            uc.workspace.model.link_index(task.link), task.offset
        )
        js.append(fj.J)
        xs.append(fj.jdot_qd - xdd_base)
    rows_a = [np.eye(n_uc), -np.eye(n_uc)]
    rows_b = [-limits.qdd_max[uc_dofs], limits.qdd_min[uc_dofs]]
    lv2 = LqpLevel(
        B=np.vstack(js) if js else None,
        b=np.concatenate(xs) if js else None,
        A=np.vstack(rows_a),
        a=np.concatenate(rows_b),
        name="uc-tasks",
    )
    return [lv1, lv2, LqpLevel(name="energy")], n_uc, uc.M_uc


def assemble_torque(reduced: ReducedModel, sol1, sol2, c) -> tuple:
    """(tau in model joint order, stacked contact forces, coupling residual)."""
    part = reduced.partition
    nr6 = reduced.dim
    qdd_r = sol1.x[:nr6]
    fc = sol1.x[nr6:]
    qdd_uc = sol2.x
    gamma = reduced.M_r @ qdd_r + reduced.b_r + reduced.g_r
    if c:
        gamma = gamma - reduced.Jc_r.T @ fc
    tau_cc = gamma[reduced.cc_rows()]
    uc = reduced.ucdyn
    tau_uc = uc.M_uc @ qdd_uc + uc.b_uc + uc.g_uc
    n = part.n_cc + part.n_uc
    tau = np.zeros(n)
    tau[part.cc_cols() - 6] = tau_cc
    tau[part.uc_cols() - 6] = tau_uc
    coupling = uc.J_G_uc @ qdd_uc + uc.jGdot_qd - qdd_r[reduced.centroidal_rows()]
    return tau, fc, float(np.abs(coupling).max())


def slack_feedback(reduced: ReducedModel, sol2, threshold=1e-6):
    """Extra LQP-1 level shifting the expected centroidal acceleration by the
    coupling violation the second stage actually achieved; None when the
    coupling held."""
    uc = reduced.ucdyn
    violation = uc.J_G_uc @ sol2.x + uc.jGdot_qd
    # compare against what stage 1 asked for: residual lives in eq_residuals
    r = sol2.eq_residuals[0]
    if np.abs(r).max() <= threshold:
        return None
    nr6 = reduced.dim
    sel = np.zeros((6, nr6))
    sel[:, reduced.centroidal_rows()] = np.eye(6)
    return LqpLevel(B=sel, b=-violation, name="coupling-feedback")


# ---------------------------------------------------------------------------
# full tick


CONVENTIONAL = "conventional"
REDUCED = "reduced"


@dataclass
class ControllerConfig:
    method: str = REDUCED
    lqp_method: str = "sequential"  # sequential | weighted
    slack_feedback: bool = False
    weight_ladder: float = 1e4


class WholeBodyController:
    """Stateful per-robot controller: owns the chain partition, task
    reference captures, and warm starts across ticks."""

    def __init__(self, model: RobotModel, tasks, contacts, limits=None,
                 config: ControllerConfig | None = None):
        self.model = model
        self.tasks = list(tasks)
        self.contacts = list(contacts)
        self.limits = limits or JointLimits.default(model.n)
        self.config = config or ControllerConfig()
        self.partition: ChainPartition | None = None
        if self.contacts:
            self.partition = partition_chains(model, [c.link for c in self.contacts])
        self._warm1 = None
        self._warm2 = None
        self._captured = False

    def set_contacts(self, contacts):
        """Contact-mode switch: re-partition and drop warm starts."""
        self.contacts = list(contacts)
        self.partition = (
            partition_chains(self.model, [c.link for c in self.contacts])
            if self.contacts
            else None
        )
        self._warm1 = self._warm2 = None

    def _solve(self, levels, dim, h_a, warm):
        if self.config.lqp_method == "weighted":
            return solve_lqp_weighted(
                levels, dim, H_a=h_a, weight_ladder=self.config.weight_ladder,
                warm=warm,
            )
        return solve_lqp_sequential(levels, dim, H_a=h_a, warm=warm)

    def tick(self, state: RobotState, t: float = 0.0) -> TorqueCommand:
        timings = {}
        t0 = time.perf_counter()
        ws = Workspace(self.model, state)
        if not self._captured:
            capture_task_references(self.tasks, ws)
            self._captured = True
        jc, jcdot_qd, cones = contact_stack(ws, self.contacts)
        if self.config.method == REDUCED:
            if self.partition is None:
                raise ControllerError("reduction", "reduced method requires contacts")
            reduced = build_reduction(self.model, state, self.partition, ws, jc)
        timings["dyn_us"] = (time.perf_counter() - t0) * 1e6

        if self.config.method == CONVENTIONAL:
            t1 = time.perf_counter()
            levels, dim, h_a = build_conventional_problem(
                ws, self.tasks, self.contacts, self.limits, t
            )
            sol = self._solve(levels, dim, h_a, self._warm1)
            self._warm1 = sol.warm
            tau = extract_torque_conventional(ws, self.contacts, sol, jc)
            timings["lqp1_us"] = (time.perf_counter() - t1) * 1e6
            timings["lqp2_us"] = 0.0
            timings["total_us"] = timings["dyn_us"] + timings["lqp1_us"]
            nv = self.model.nv
            return TorqueCommand(
                tau=tau,
                contact_forces=sol.x[nv:],
                qdd=sol.x[:nv],
                slacks=sol.slacks,
                timings_us=timings,
                solution1=sol,
            )

        if self.config.method != REDUCED:
            raise ControllerError("tick", f"unknown method {self.config.method!r}")

        t1 = time.perf_counter()
        levels1, dim1, ha1 = build_lqp1(
            reduced, ws, self.tasks, self.contacts, self.limits, t,
            jc, jcdot_qd, cones,
        )
        sol1 = self._solve(levels1, dim1, ha1, self._warm1)
        timings["lqp1_us"] = (time.perf_counter() - t1) * 1e6

        t2 = time.perf_counter()
        levels2, dim2, ha2 = build_lqp2(
            reduced, ws, sol1, self.tasks, self.limits, t
        )
        sol2 = self._solve(levels2, dim2, ha2, self._warm2)
        timings["lqp2_us"] = (time.perf_counter() - t2) * 1e6

        if self.config.slack_feedback:
            extra = slack_feedback(reduced, sol2)
            if extra is not None:
                t1b = time.perf_counter()
                levels1, dim1, ha1 = build_lqp1(
                    reduced, ws, self.tasks, self.contacts, self.limits, t,
                    jc, jcdot_qd, cones, extra_levels=[extra],
                )
                sol1 = self._solve(levels1, dim1, ha1, None)
                timings["lqp1_us"] += (time.perf_counter() - t1b) * 1e6
        self._warm1 = sol1.warm
        self._warm2 = sol2.warm

        tau, fc, coupling = assemble_torque(reduced, sol1, sol2, len(self.contacts))
        timings["total_us"] = (
            timings["dyn_us"] + timings["lqp1_us"] + timings["lqp2_us"]
        )
        # full-model acceleration diagnostic from both stages
        qdd = np.zeros(self.model.nv)
        qdd[0:6] = sol1.x[0:6]
        qdd[self.partition.cc_cols()] = sol1.x[reduced.cc_rows()]
        qdd[self.partition.uc_cols()] = sol2.x
        return TorqueCommand(
            tau=tau,
            contact_forces=fc,
            qdd=qdd,
            slacks=sol1.slacks + sol2.slacks,
            timings_us=timings,
            solution1=sol1,
            solution2=sol2,
            coupling_residual=coupling,
        )


def tick(method, model, state, tasks, contacts, limits=None, t=0.0,
         config=None) -> TorqueCommand:
    """One-shot controller tick (no warm-start persistence)."""
    cfg = config or ControllerConfig()
    cfg.method = method
    ctl = WholeBodyController(model, tasks, contacts, limits, cfg)
    return ctl.tick(state, t)


# ---------------------------------------------------------------------------
# scenario files


@dataclass
class Scenario:
    model: RobotModel
    tasks: list
    contacts: list
    limits: JointLimits
    config: ControllerConfig
    dt: float = 1e-3
    duration: float = 5.0
    name: str = "scenario"
    initial_state: RobotState | None = None  # default: standing pose


def load_scenario(text: str, model: RobotModel | None = None) -> Scenario:
    """Parse a scenario JSON document (schema in the README)."""
    doc = json.loads(text)
    if model is None:
        from .model import generate_humanoid, parse_model, sweep_params

        if "model_path" in doc:
            with open(doc["model_path"]) as fh:
                model = parse_model(fh.read())
        elif "model_dof" in doc:
            model = generate_humanoid(sweep_params(int(doc["model_dof"])))
        else:
            raise ControllerError("scenario", "need model_path or model_dof")

    contacts = [
        ContactSpec(
            link=c["link"],
            offset=np.array(c.get("offset", [0.0, 0.0, 0.0])),
            half_x=c.get("half_x", 0.1),
            half_y=c.get("half_y", 0.05),
            mu=c.get("mu", 0.7),
        )
        for c in doc.get("contacts", [])
    ]
    tasks = []
    for e in doc.get("tasks", []):
        tr = e.get("trajectory", {})
        tasks.append(
            TaskSpec(
                kind=e["kind"],
                priority=e.get("priority", 1),
                kp=e.get("kp", 400.0 if e["kind"] != FRAME_POSE else 100.0),
                kd=e.get("kd", 40.0 if e["kind"] != FRAME_POSE else 20.0),
                link=e.get("link"),
                offset=np.array(e.get("offset", [0.0, 0.0, 0.0])),
                trajectory=Trajectory(
                    kind=tr.get("type", "constant"),
                    amp=tr.get("amp", 0.0),
                    freq=tr.get("freq", 0.0),
                    axis={"x": 0, "y": 1, "z": 2}.get(tr.get("axis", 0), tr.get("axis", 0)),
                    value=tr.get("value", 0.0),
                    time=tr.get("time", 0.0),
                ),
                name=e.get("name", ""),
            )
        )
    lim = doc.get("limits", {})
    limits = JointLimits.default(
        model.n, tau=lim.get("tau", 300.0), qdd=lim.get("qdd", 250.0)
    )
    config = ControllerConfig(
        method=doc.get("method", REDUCED),
        lqp_method=doc.get("lqp_method", "sequential"),
        slack_feedback=bool(doc.get("slack_feedback", False)),
    )
    return Scenario(
        model=model,
        tasks=tasks,
        contacts=contacts,
        limits=limits,
        config=config,
        dt=float(doc.get("dt", 1e-3)),
        duration=float(doc.get("duration", 5.0)),
        name=doc.get("name", "scenario"),
    )


def default_scenario(n=33, method=REDUCED, com_amp=0.0, com_freq=0.5,
                     duration=5.0, dt=1e-3, ee_tasks=True) -> Scenario:
    """Double-support stance scenario on the generated humanoid."""
    from .model import foot_sole_offset, generate_humanoid, sweep_params

    model = generate_humanoid(sweep_params(n))
    off = foot_sole_offset(model)
    contacts = [ContactSpec(link=l, offset=off, half_x=0.11, half_y=0.055)
                for l in ("l_foot", "r_foot")]
    tasks = [
        TaskSpec(kind=COM_POSITION, priority=1,
                 trajectory=Trajectory(kind="sinusoid", amp=com_amp,
                                       freq=com_freq, axis=0)
                 if com_amp else Trajectory()),
        TaskSpec(kind=BASE_ORIENTATION, priority=1),
    ]
    if ee_tasks:
        tasks += [
            TaskSpec(kind=FRAME_POSE, priority=2, link="l_hand", kp=100.0, kd=20.0),
            TaskSpec(kind=FRAME_POSE, priority=2, link="r_hand", kp=100.0, kd=20.0),
        ]
    return Scenario(
        model=model,
        tasks=tasks,
        contacts=contacts,
        limits=JointLimits.default(model.n),
        config=ControllerConfig(method=method),
        dt=dt,
        duration=duration,
        name=f"stance_n{n}",
    )

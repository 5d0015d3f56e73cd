"""Desk-scale forward-dynamics simulator with rigid contacts.

Contacts are bilateral 6-DOF welds solved together with the accelerations in
one KKT system, stabilized with acceleration-level position/velocity feedback
so the held frames do not drift.  Integration is semi-implicit Euler with a
quaternion exponential for the base orientation.  The simulator exists to
close the loop around the controllers, not to replace a physics engine:
no impacts, no sliding, no collision detection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import Workspace
from .model import RobotModel, RobotState, integrate_state
from .spatial import rotation_log


class SimError(RuntimeError):
    pass


@dataclass
class SimConfig:
    dt: float = 1e-3
    duration: float = 1.0
    baumgarte_stiffness: float = 100.0
    baumgarte_damping: float = 20.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must cover at least one step")


@dataclass
class ContactAnchor:
    """World pose a welded contact frame is held at."""

    link: int
    offset: np.ndarray
    pos: np.ndarray
    rot: np.ndarray


def make_anchors(ws: Workspace, contacts) -> list:
    """Capture the current world pose of every contact frame as its anchor."""
    anchors = []
    for c in contacts:
        li = ws.model.link_index(c.link)
        rot = ws.kin.rot[li]
        anchors.append(
            ContactAnchor(
                link=li,
                offset=np.asarray(c.offset, dtype=float),
                pos=ws.kin.pos[li] + rot @ np.asarray(c.offset, dtype=float),
                rot=rot.copy(),
            )
        )
    return anchors


def step(
    model: RobotModel,
    state: RobotState,
    tau: np.ndarray,
    anchors,
    config: SimConfig,
    ws: Workspace | None = None,
):
    """One forward-dynamics step under joint torques and welded contacts.

    Solves [M, Jc'; Jc, 0] [qdd; -F] = [S' tau - b - g; -Jcdot qd - stab]
    and returns (next_state, qdd, contact_forces, workspace).
    """
    if ws is None:
        ws = Workspace(model, state)
    nv = model.nv
    c = len(anchors)
    rhs_top = -ws.bias - ws.grav
    rhs_top[6:] += tau

    if c:
        js, stab = [], []
        kp = config.baumgarte_stiffness
        kd = config.baumgarte_damping
        for a in anchors:
            fj = ws.frame_jacobian(a.link, a.offset)
            js.append(fj.J)
            err = np.concatenate(
                [rotation_log(ws.kin.rot[a.link] @ a.rot.T), fj.point - a.pos]
            )
            vel = fj.J @ state.qd
            stab.append(-fj.jdot_qd - kp * err - kd * vel)
        jc = np.vstack(js)
        kkt = np.zeros((nv + 6 * c, nv + 6 * c))
        kkt[:nv, :nv] = ws.M
        kkt[:nv, nv:] = jc.T
        kkt[nv:, :nv] = jc
        rhs = np.concatenate([rhs_top, np.concatenate(stab)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError as e:
            raise SimError(f"contact KKT system is singular: {e}") from None
        qdd = sol[:nv]
        forces = -sol[nv:]
    else:
        qdd = ws.solve_mass_matrix(rhs_top)
        forces = np.zeros(0)

    # velocity first (semi-implicit), positions advanced with the average of
    # old and new velocity: the plain update drifts energy secularly at
    # 0.5*m*g^2*dt^2 per step under gravity, the trapezoidal one does not
    qd_new = state.qd + qdd * config.dt
    mid = integrate_state(
        model, RobotState(q=state.q, qd=0.5 * (state.qd + qd_new)), config.dt
    )
    return RobotState(q=mid.q, qd=qd_new), qdd, forces, ws


def total_energy(ws: Workspace) -> float:
    """Kinetic plus gravitational potential energy of the current state."""
    kin = 0.5 * ws.state.qd @ ws.M @ ws.state.qd
    pot = -float(ws.link_mass @ (ws.link_com @ ws.gravity))
    return kin + pot


# ---------------------------------------------------------------------------
# trajectory logging


@dataclass
class TrajectoryLog:
    """Uniformly sampled run record: one row per tick."""

    columns: list
    rows: np.ndarray  # (n_ticks, n_columns)
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise ValueError("row width does not match column names")

    def column(self, name):
        return self.rows[:, self.columns.index(name)]

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            np.savetxt(f, self.rows, delimiter=",", fmt="%.17g")

    def to_binary(self, path):
        """Compact dump: magic, column count, row count (little-endian u32),
        newline-joined column names (u32 length prefix), then row-major
        little-endian 64-bit floats."""
        header = "\n".join(self.columns).encode("utf-8")
        with open(path, "wb") as f:
            f.write(b"WBCLOG\x00\x00")
            f.write(struct.pack("<II", len(self.columns), self.rows.shape[0]))
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            f.write(self.rows.astype("<f8").tobytes())

    @staticmethod
    def from_binary(path):
        with open(path, "rb") as f:
            if f.read(8) != b"WBCLOG\x00\x00":
                raise ValueError("not a trajectory log dump")
            ncol, nrow = struct.unpack("<II", f.read(8))
            (hlen,) = struct.unpack("<I", f.read(4))
            columns = f.read(hlen).decode("utf-8").split("\n")
            data = np.frombuffer(f.read(nrow * ncol * 8), dtype="<f8")
        return TrajectoryLog(
            columns=columns, rows=data.reshape(nrow, ncol).copy(), dt=0.0
        )


def _task_markers(ctl, ws, t):
    """Current position and reference of each position-tracked task."""
    from .controller import COM_POSITION, FRAME_POSE

    out = []
    for task in ctl.tasks:
        if task.kind == COM_POSITION:
            _, _, com = ws.com_jacobian()
            pos = com
        elif task.kind == FRAME_POSE:
            li = ws.model.link_index(task.link)
            pos = ws.kin.pos[li] + ws.kin.rot[li] @ task.offset
        else:
            continue
        ref = task.ref_pos.copy()
        dp, _, _ = task.trajectory.offset(t)
        ref[task.trajectory.axis] += dp
        out.append((task.name, pos, ref))
    return out


def run_scenario(scenario, method=None, log_every=1, log_enabled=True):
    """Closed-loop run: controller tick then simulator step, logged per tick.

    `method` overrides the scenario's controller method.  Returns a
    TrajectoryLog whose columns are: t, q[...], qd[...], tau[...],
    fc[...], per-task tracking (pos/ref per axis), err_<task>, and the
    tick phase timings in microseconds.
    """
    from .controller import WholeBodyController
    from .model import standing_state

    model = scenario.model
    state = scenario.initial_state or standing_state(model)
    cfg = replace(scenario.config, method=method) if method else scenario.config
    ctl = WholeBodyController(
        model, scenario.tasks, scenario.contacts, scenario.limits, cfg
    )
    sim_cfg = SimConfig(dt=scenario.dt, duration=scenario.duration)
    n_steps = int(round(scenario.duration / scenario.dt))

    ws = Workspace(model, state)
    anchors = make_anchors(ws, scenario.contacts)

    columns = None
    rows = []
    t = 0.0
    for k in range(n_steps):
        try:
            cmd = ctl.tick(state, t)
        except Exception as e:
            raise SimError(f"controller failed at tick {k} (t={t:.4f} s): {e}")
        state, qdd, forces, _ = step(model, state, cmd.tau, anchors, sim_cfg, ws=ws)
        if log_enabled and k % log_every == 0:
            markers = _task_markers(ctl, ws, t)
            if columns is None:
                columns = (
                    ["t"]
                    + [f"q{i}" for i in range(len(state.q))]
                    + [f"qd{i}" for i in range(len(state.qd))]
                    + [f"tau{i}" for i in range(len(cmd.tau))]
                    + [f"fc{i}" for i in range(len(cmd.contact_forces))]
                    + [
                        f"{name}_{kind}{ax}"
                        for name, _, _ in markers
                        for kind in ("pos", "ref")
                        for ax in "xyz"
                    ]
                    + [f"err_{name}" for name, _, _ in markers]
                    + ["dyn_us", "lqp1_us", "lqp2_us", "total_us"]
                )
            row = np.concatenate(
                [
                    [t],
                    state.q,
                    state.qd,
                    cmd.tau,
                    cmd.contact_forces,
                    np.concatenate(
                        [np.concatenate([pos, ref]) for _, pos, ref in markers]
                    )
                    if markers
                    else np.zeros(0),
                    [np.linalg.norm(pos - ref) for _, pos, ref in markers],
                    [
                        cmd.timings_us["dyn_us"],
                        cmd.timings_us["lqp1_us"],
                        cmd.timings_us["lqp2_us"],
                        cmd.timings_us["total_us"],
                    ],
                ]
            )
            rows.append(row)
        ws = Workspace(model, state)
        t += scenario.dt

    if not rows:
        columns = ["t"]
        rows = [np.zeros(1)]
    return TrajectoryLog(
        columns=columns,
        rows=np.vstack(rows),
        dt=scenario.dt * log_every,
        meta={"method": cfg.method, "name": scenario.name, "steps": n_steps},
    )


def tracking_summary(log: TrajectoryLog) -> dict:
    """Max and RMS tracking error per task plus mean phase timings."""
    out = {"tasks": {}, "timing_us": {}}
    for name in log.columns:
        if name.startswith("err_"):
            e = log.column(name)
            out["tasks"][name[4:]] = {
                "max_err": float(np.abs(e).max()),
                "rms_err": float(np.sqrt(np.mean(e**2))),
            }
    for name in ("dyn_us", "lqp1_us", "lqp2_us", "total_us"):
        if name in log.columns:
            out["timing_us"][name] = float(log.column(name).mean())
    return out

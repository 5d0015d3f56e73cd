"""Kinematic-tree models: JSON model files, parametric humanoid generation,
forward kinematics and joint-state containers.

Conventions:
  * link i is the child of joint i; joint 0 is the root joint.
  * generalized velocity is [base angular, base linear, joint rates] with the
    base twist expressed in the base frame (floating models).
  * base orientation is stored as a unit quaternion (w, x, y, z).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .spatial import (
    PluckerTransform,
    SpatialInertia,
    compose,
    rotation_from_axis_angle,
    skew,
)


class ModelError(ValueError):
    """Raised for malformed model files or inconsistent tree structure."""


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)

def quat_to_rot(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_exp(rotvec):
    """Unit quaternion of a rotation vector (exponential map)."""
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        return np.array([1.0, *(0.5 * np.asarray(rotvec))]) / np.sqrt(
            1.0 + 0.25 * angle * angle
        )
    axis = np.asarray(rotvec) / angle
    return np.array([np.cos(angle / 2.0), *(np.sin(angle / 2.0) * axis)])


def rpy_to_rot(rpy):
    """Fixed-axis roll-pitch-yaw: R = Rz(y) Ry(p) Rx(r)."""
    r, p, y = rpy
    return (
        rotation_from_axis_angle([0, 0, 1], y)
        @ rotation_from_axis_angle([0, 1, 0], p)
        @ rotation_from_axis_angle([1, 0, 0], r)
    )


def rot_to_rpy(rot):
    p = -np.arcsin(np.clip(rot[2, 0], -1.0, 1.0))
    if abs(abs(rot[2, 0]) - 1.0) < 1e-9:
        return np.array([0.0, p, np.arctan2(-rot[0, 1], rot[1, 1])])
    return np.array(
        [np.arctan2(rot[2, 1], rot[2, 2]), p, np.arctan2(rot[1, 0], rot[0, 0])]
    )


# ---------------------------------------------------------------------------

FLOATING = "floating"
REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"  # root-only, used for internal fixed-base sub-models


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    parent: int  # parent link index; -1 for the root joint (world)
    axis: np.ndarray | None = None
    origin: PluckerTransform = field(default_factory=PluckerTransform.identity)


@dataclass(frozen=True)
class RobotModel:
    """Immutable kinematic tree. links[i] is (name, SpatialInertia); joint i
    connects links[joints[i].parent] to links[i]."""

    name: str
    link_names: tuple
    link_inertias: tuple
    joints: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        if len(self.link_names) != len(self.joints):
            raise ModelError("need exactly one joint per link")
        if not self.joints:
            raise ModelError("empty model")
        root = self.joints[0]
        if root.parent != -1 or root.kind not in (FLOATING, FIXED):
            raise ModelError("root joint must be floating (or fixed) with parent -1")
        for i, j in enumerate(self.joints[1:], start=1):
            if j.kind not in (REVOLUTE, PRISMATIC):
                raise ModelError(f"joint {j.name!r}: only the root may be {j.kind}")
            if not 0 <= j.parent < i:
                raise ModelError(f"joint {j.name!r}: parent must precede it in the tree")
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError(f"joint {j.name!r}: axis must be unit-norm")

    @property
    def floating(self):
        return self.joints[0].kind == FLOATING

    @property
    def n(self):
        """Actuated DOF count."""
        return len(self.joints) - 1

    @property
    def nv(self):
        """Generalized velocity dimension."""
        return self.n + (6 if self.floating else 0)

    @property
    def nq(self):
        return self.n + (7 if self.floating else 0)

    def link_index(self, name):
        try:
            return self.link_names.index(name)
        except ValueError:
            raise ModelError(f"unknown link {name!r}") from None

    def joint_dof(self, joint_index):
        """Column of joint `joint_index` (>= 1) in the generalized velocity."""
        return joint_index - 1 + (6 if self.floating else 0)

    def total_mass(self):
        return sum(i.mass for i in self.link_inertias)

    def neutral_state(self):
        q = np.zeros(self.nq)
        if self.floating:
            q[3] = 1.0
        return RobotState(q=q, qd=np.zeros(self.nv))

    def random_state(self, rng, joint_scale=0.4, vel_scale=0.5):
        q = np.zeros(self.nq)
        qd = vel_scale * rng.standard_normal(self.nv)
        if self.floating:
            q[0:3] = 0.2 * rng.standard_normal(3)
            quat = rng.standard_normal(4)
            q[3:7] = quat / np.linalg.norm(quat)
            q[7:] = joint_scale * rng.standard_normal(self.n)
        else:
            q[:] = joint_scale * rng.standard_normal(self.n)
        return RobotState(q=q, qd=qd)


@dataclass
class RobotState:
    """q: [base pos (3), base quat wxyz (4), joint positions (n)];
    qd: [base twist in base frame (angular, linear), joint rates (n)]."""

    q: np.ndarray
    qd: np.ndarray

    def check(self, model: RobotModel):
        if self.q.shape != (model.nq,) or self.qd.shape != (model.nv,):
            raise ModelError(
                f"state dims {self.q.shape}/{self.qd.shape} do not match model "
                f"({model.nq},)/({model.nv},)"
            )
        if model.floating and abs(np.linalg.norm(self.q[3:7]) - 1.0) > 1e-9:
            raise ModelError("base quaternion is not unit-norm")

    def base_position(self):
        return self.q[0:3]

    def base_rotation(self):
        return quat_to_rot(self.q[3:7])

    def joint_positions(self, model):
        return self.q[7:] if model.floating else self.q

    def copy(self):
        return RobotState(q=self.q.copy(), qd=self.qd.copy())


def integrate_state(model: RobotModel, s: RobotState, dt: float) -> RobotState:
    """Advance positions by qd*dt; base orientation via the quaternion
    exponential so the state stays on the group."""
    q = s.q.copy()
    if model.floating:
        rot = s.base_rotation()
        q[0:3] += rot @ s.qd[3:6] * dt
        quat = quat_mul(s.q[3:7], quat_exp(s.qd[0:3] * dt))
        q[3:7] = quat / np.linalg.norm(quat)
        q[7:] += s.qd[6:] * dt
    else:
        q += s.qd * dt
    return RobotState(q=q, qd=s.qd.copy())


# ---------------------------------------------------------------------------
# forward kinematics


@dataclass
class Kinematics:
    """World pose and classical twist of every link, plus world joint axes.

    v[i] is the linear velocity of link i's frame origin; w[i] its angular
    velocity.  axis_world[i]/anchor[i] describe joint i's axis in world
    (undefined for the root joint).
    """

    rot: np.ndarray  # (nl, 3, 3)
    pos: np.ndarray  # (nl, 3)
    w: np.ndarray  # (nl, 3)
    v: np.ndarray  # (nl, 3)
    axis_world: np.ndarray  # (nl, 3)
    anchor: np.ndarray  # (nl, 3)

    def link_transform(self, i):
        return PluckerTransform(self.rot[i], self.pos[i])


# Per-model joint tables (parents, axes, axis skews for the Rodrigues
# formula, origin transforms) cached so the per-tick loop stays cheap.
_FK_CACHE: dict = {}


def _fk_tables(model: RobotModel):
    key = id(model)
    tab = _FK_CACHE.get(key)
    if tab is not None:
        return tab
    nl = len(model.joints)
    parents = np.zeros(nl, dtype=np.intp)
    revolute = np.zeros(nl, dtype=bool)
    axes = np.zeros((nl, 3))
    ksk = np.zeros((nl, 3, 3))
    ksk2 = np.zeros((nl, 3, 3))
    orot = np.zeros((nl, 3, 3))
    otr = np.zeros((nl, 3))
    orot_id = np.zeros(nl, dtype=bool)
    for i in range(1, nl):
        j = model.joints[i]
        parents[i] = j.parent
        revolute[i] = j.kind == REVOLUTE
        axes[i] = j.axis
        k = skew(j.axis)
        ksk[i] = k
        ksk2[i] = k @ k
        orot[i] = j.origin.rotation
        otr[i] = j.origin.translation
        orot_id[i] = np.array_equal(j.origin.rotation, np.eye(3))
    tab = (parents, revolute, axes, ksk, ksk2, orot, otr, orot_id)
    if len(_FK_CACHE) > 64:
        _FK_CACHE.clear()
    _FK_CACHE[key] = tab
    return tab


def _cross3(a, b):
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def forward_kinematics(model: RobotModel, s: RobotState) -> Kinematics:
    s.check(model)
    nl = len(model.joints)
    rot = np.zeros((nl, 3, 3))
    pos = np.zeros((nl, 3))
    w = np.zeros((nl, 3))
    v = np.zeros((nl, 3))
    axis_world = np.zeros((nl, 3))
    anchor = np.zeros((nl, 3))

    qj = s.joint_positions(model)
    root = model.joints[0]
    if model.floating:
        rot[0] = s.base_rotation()
        pos[0] = s.base_position()
        w[0] = rot[0] @ s.qd[0:3]
        v[0] = rot[0] @ s.qd[3:6]
        qdj = s.qd[6:]
    else:
        rot[0] = root.origin.rotation
        pos[0] = root.origin.translation
        qdj = s.qd

    parents, revolute, axes, ksk, ksk2, orot, otr, orot_id = _fk_tables(model)
    sin_q = np.sin(qj)
    cos_q = np.cos(qj)
    eye3 = np.eye(3)
    for i in range(1, nl):
        pl = parents[i]
        rp = rot[pl]
        r_pre = rp if orot_id[i] else rp @ orot[i]
        p_joint = pos[pl] + rp @ otr[i]
        if revolute[i]:
            rot[i] = r_pre @ (
                eye3 + sin_q[i - 1] * ksk[i] + (1.0 - cos_q[i - 1]) * ksk2[i]
            )
            pos[i] = p_joint
            a = rot[i] @ axes[i]
            w[i] = w[pl] + a * qdj[i - 1]
            v[i] = v[pl] + _cross3(w[pl], pos[i] - pos[pl])
        else:  # prismatic
            rot[i] = r_pre
            a = rot[i] @ axes[i]
            pos[i] = p_joint + a * qj[i - 1]
            w[i] = w[pl]
            v[i] = v[pl] + _cross3(w[pl], pos[i] - pos[pl]) + a * qdj[i - 1]
        axis_world[i] = a
        anchor[i] = pos[i]
    return Kinematics(rot, pos, w, v, axis_world, anchor)


# ---------------------------------------------------------------------------
# model file (JSON) parsing and printing


def _inertia_from_entry(entry, where):
    try:
        mass = float(entry["mass"])
        com = np.array(entry["com"], dtype=float)
        ixx, iyy, izz, ixy, ixz, iyz = (float(x) for x in entry["inertia"])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"{where}: bad inertia entry ({e})") from None
    inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    return SpatialInertia(mass, com, inertia)


def parse_model(text: str) -> RobotModel:
    """Parse a JSON model file (schema in the README) into a RobotModel."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"model file is not valid JSON: line {e.lineno}: {e.msg}")

    for key in ("links", "joints"):
        if key not in doc or not isinstance(doc[key], list):
            raise ModelError(f"model file missing {key!r} list")
    gravity = np.array(doc.get("gravity", [0.0, 0.0, -9.81]), dtype=float)
    if gravity.shape != (3,):
        raise ModelError("gravity must be a 3-vector")

    link_entries = {}
    for e in doc["links"]:
        name = e.get("name")
        if not name:
            raise ModelError("link without a name")
        if name in link_entries:
            raise ModelError(f"duplicate link name {name!r}")
        link_entries[name] = e

    joint_names = set()
    by_child = {}
    root_entry = None
    for e in doc["joints"]:
        name = e.get("name")
        if not name:
            raise ModelError("joint without a name")
        if name in joint_names:
            raise ModelError(f"duplicate joint name {name!r}")
        joint_names.add(name)
        child = e.get("child")
        if child not in link_entries:
            raise ModelError(f"joint {name!r}: unknown child link {child!r}")
        if child in by_child:
            raise ModelError(f"link {child!r} has two parent joints (loop)")
        by_child[child] = e
        if e.get("type") == FLOATING:
            if root_entry is not None:
                raise ModelError("more than one floating joint")
            root_entry = e
    if root_entry is None:
        raise ModelError("no floating root joint")

    link_names = []
    link_inertias = []
    joints = []
    index_of = {}

    def add_link(child_name, entry, parent_index):
        kind = entry.get("type")
        if kind not in (FLOATING, REVOLUTE, PRISMATIC):
            raise ModelError(f"joint {entry['name']!r}: unknown type {kind!r}")
        o = entry.get("origin", {})
        origin = PluckerTransform(
            rpy_to_rot(o.get("rpy", [0.0, 0.0, 0.0])),
            np.array(o.get("xyz", [0.0, 0.0, 0.0]), dtype=float),
        )
        axis = None
        if kind != FLOATING:
            axis = np.array(entry.get("axis", [0.0, 0.0, 1.0]), dtype=float)
            norm = np.linalg.norm(axis)
            if abs(norm - 1.0) > 1e-9:
                raise ModelError(f"joint {entry['name']!r}: axis is not unit-norm")
            axis = axis / norm
        index_of[child_name] = len(link_names)
        link_names.append(child_name)
        link_inertias.append(_inertia_from_entry(link_entries[child_name], child_name))
        joints.append(JointSpec(entry["name"], kind, parent_index, axis, origin))

    root_link = root_entry["child"]
    add_link(root_link, root_entry, -1)
    # Attach remaining links in file order, deferring until the parent exists.
    pending = [e for e in doc["joints"] if e is not root_entry]
    while pending:
        progressed = False
        remaining = []
        for e in pending:
            parent = e.get("parent")
            if parent in index_of:
                add_link(e["child"], e, index_of[parent])
                progressed = True
            elif parent in link_entries:
                remaining.append(e)
            else:
                raise ModelError(f"joint {e['name']!r}: unknown parent link {parent!r}")
        if not progressed:
            names = ", ".join(e["name"] for e in remaining)
            raise ModelError(f"joints unreachable from the root: {names}")
        pending = remaining

    orphans = set(link_entries) - set(link_names)
    if orphans:
        raise ModelError(f"links without a joint: {sorted(orphans)}")
    return RobotModel(
        name=doc.get("name", "robot"),
        link_names=tuple(link_names),
        link_inertias=tuple(link_inertias),
        joints=tuple(joints),
        gravity=gravity,
    )


def model_to_json(model: RobotModel) -> str:
    links = []
    for name, ine in zip(model.link_names, model.link_inertias):
        i = ine.inertia
        links.append(
            {
                "name": name,
                "mass": ine.mass,
                "com": list(ine.com),
                "inertia": [i[0, 0], i[1, 1], i[2, 2], i[0, 1], i[0, 2], i[1, 2]],
            }
        )
    joints = []
    for li, j in enumerate(model.joints):
        entry = {
            "name": j.name,
            "type": j.kind,
            "parent": "world" if j.parent < 0 else model.link_names[j.parent],
            "child": model.link_names[li],
            "origin": {
                "xyz": list(j.origin.translation),
                "rpy": list(rot_to_rpy(j.origin.rotation)),
            },
        }
        if j.axis is not None:
            entry["axis"] = list(j.axis)
        joints.append(entry)
    return json.dumps(
        {
            "name": model.name,
            "gravity": list(model.gravity),
            "links": links,
            "joints": joints,
        },
        indent=2,
    )


# ---------------------------------------------------------------------------
# parametric humanoid generation


@dataclass(frozen=True)
class HumanoidParams:
    arm_dof: int = 8  # per side, 2..10
    leg_dof: int = 6  # per side, fixed
    waist_dof: int = 3  # 0..3
    head_dof: int = 2  # 0..2
    extra_torso: int = 0  # additional torso pitch joints, 0..8
    total_mass: float = 100.0  # kg
    height: float = 1.8  # m

    def __post_init__(self):
        if not 2 <= self.arm_dof <= 10:
            raise ModelError("arm_dof must be in [2, 10]")
        if self.leg_dof != 6:
            raise ModelError("leg_dof is fixed at 6")
        if not 0 <= self.waist_dof <= 3:
            raise ModelError("waist_dof must be in [0, 3]")
        if not 0 <= self.head_dof <= 2:
            raise ModelError("head_dof must be in [0, 2]")
        if not 0 <= self.extra_torso <= 8:
            raise ModelError("extra_torso must be in [0, 8]")

    @property
    def n(self):
        return (
            2 * self.leg_dof
            + 2 * self.arm_dof
            + self.waist_dof
            + self.head_dof
            + self.extra_torso
        )


# Parameter assignment reaching every actuated-DOF count in the sweep range.
# Legs stay at 12 DOF throughout so only the unconstrained chain grows.
DOF_SWEEP_TABLE = {
    20: (4, 0, 0, 0), 21: (4, 1, 0, 0), 22: (5, 0, 0, 0), 23: (5, 1, 0, 0),
    24: (6, 0, 0, 0), 25: (6, 1, 0, 0), 26: (7, 0, 0, 0), 27: (7, 1, 0, 0),
    28: (8, 0, 0, 0), 29: (8, 1, 0, 0), 30: (8, 2, 0, 0), 31: (8, 3, 0, 0),
    32: (8, 3, 1, 0), 33: (8, 3, 2, 0), 34: (8, 3, 2, 1), 35: (8, 3, 2, 2),
    36: (8, 3, 2, 3), 37: (8, 3, 2, 4), 38: (8, 3, 2, 5), 39: (8, 3, 2, 6),
    40: (8, 3, 2, 7), 41: (8, 3, 2, 8), 42: (9, 3, 2, 7), 43: (9, 3, 2, 8),
    44: (10, 3, 2, 7), 45: (10, 3, 2, 8),
}


def sweep_params(n: int, total_mass=100.0, height=1.8) -> HumanoidParams:
    if n not in DOF_SWEEP_TABLE:
        raise ModelError(f"sweep supports n in [20, 45], got {n}")
    a, w, h, e = DOF_SWEEP_TABLE[n]
    return HumanoidParams(
        arm_dof=a, waist_dof=w, head_dof=h, extra_torso=e,
        total_mass=total_mass, height=height,
    )


def _box_inertia(mass, lx, ly, lz):
    return (
        np.diag(
            [
                mass / 12.0 * (ly * ly + lz * lz),
                mass / 12.0 * (lx * lx + lz * lz),
                mass / 12.0 * (lx * lx + ly * ly),
            ]
        )
    )


_AXES = {"x": np.array([1.0, 0, 0]), "y": np.array([0, 1.0, 0]), "z": np.array([0, 0, 1.0])}

# Arm joint axes in proximal-to-distal order; truncated to arm_dof.
_ARM_AXES = "yxzyzyxzyx"


def generate_humanoid(p: HumanoidParams) -> RobotModel:
    """Deterministic parametric humanoid.  Left/right limbs carry identical
    inertias; masses are scaled so the model total equals p.total_mass.

    The torso mass rides on the last waist/extra-torso link (or the pelvis
    when there is none); arms and head attach to that link.
    """
    H = p.height
    thigh_l, shank_l = 0.25 * H, 0.25 * H
    foot_h = 0.05 * H
    hip_half = 0.06 * H
    seg = 0.05 * H  # generic small-link size

    link_names = []
    raw = []  # (mass fraction, com, box dims)
    joints = []
    index_of = {}

    def add(name, kind, parent_name, axis, xyz, frac, com, dims):
        parent = -1 if parent_name is None else index_of[parent_name]
        origin = PluckerTransform(np.eye(3), np.array(xyz, dtype=float))
        ax = None if kind == FLOATING else _AXES[axis]
        index_of[name] = len(link_names)
        link_names.append(name)
        raw.append([frac, np.array(com, dtype=float), dims])
        joints.append(JointSpec(f"{name}_joint", kind, parent, ax, origin))

    add("pelvis", FLOATING, None, None, [0, 0, 0], 0.12,
        [0, 0, 0.02 * H], (0.15 * H, 0.12 * H, 0.08 * H))

    # legs: hip yaw/roll/pitch, knee pitch, ankle pitch/roll; foot is the
    # terminal (contact) link
    for side, sgn in (("l", 1.0), ("r", -1.0)):
        leg = [
            (f"{side}_hip1", "z", [0.0, sgn * hip_half, -0.02 * H], 0.01,
             [0, 0, 0], (seg, seg, seg)),
            (f"{side}_hip2", "x", [0, 0, 0], 0.01, [0, 0, 0], (seg, seg, seg)),
            (f"{side}_thigh", "y", [0, 0, 0], 0.10,
             [0, 0, -thigh_l / 2], (0.06 * H, 0.06 * H, thigh_l)),
            (f"{side}_shank", "y", [0, 0, -thigh_l], 0.05,
             [0, 0, -shank_l / 2], (0.05 * H, 0.05 * H, shank_l)),
            (f"{side}_ankle", "y", [0, 0, -shank_l], 0.008,
             [0, 0, 0], (seg, seg, seg)),
            (f"{side}_foot", "x", [0, 0, 0], 0.015,
             [0.02 * H, 0, -foot_h / 2], (0.12 * H, 0.06 * H, foot_h)),
        ]
        parent = "pelvis"
        for lname, axis, xyz, frac, com, dims in leg:
            add(lname, REVOLUTE, parent, axis, xyz, frac, com, dims)
            parent = lname

    # waist chain, then extra torso pitch joints; the final link carries the
    # torso mass
    torso = "pelvis"
    waist_axes = "zyx"
    for k in range(p.waist_dof):
        lname = f"waist{k + 1}"
        xyz = [0, 0, 0.05 * H] if k == 0 else [0, 0, 0]
        add(lname, REVOLUTE, torso, waist_axes[k], xyz,
            0.015, [0, 0, 0.01 * H], (0.1 * H, 0.1 * H, 0.05 * H))
        torso = lname
    for k in range(p.extra_torso):
        lname = f"torso_extra{k + 1}"
        add(lname, REVOLUTE, torso, "y", [0, 0, 0.03 * H],
            0.015, [0, 0, 0.01 * H], (0.1 * H, 0.1 * H, 0.04 * H))
        torso = lname

    # fold the torso proper into the final torso-chain link
    shoulder_z = 0.2 * H
    ti = index_of[torso]
    raw[ti][0] += 0.24
    raw[ti][1] = raw[ti][1] + np.array([0, 0, 0.08 * H])
    raw[ti][2] = (0.15 * H, 0.12 * H, 0.22 * H)

    # arms; terminal link is the hand
    up_l, fo_l = 0.15 * H, 0.12 * H
    for side, sgn in (("l", 1.0), ("r", -1.0)):
        parent = torso
        for k in range(p.arm_dof):
            last = k == p.arm_dof - 1
            lname = f"{side}_hand" if last else f"{side}_arm{k + 1}"
            if k == 0:
                xyz = [0.0, sgn * 0.12 * H, shoulder_z]
            elif k == 3:
                xyz = [0, 0, -up_l]
            elif last and p.arm_dof > 4:
                xyz = [0, 0, -fo_l]
            else:
                xyz = [0, 0, -0.01 * H]
            frac = 0.024 if k < 4 else 0.012
            com = [0, 0, -0.05 * H] if k in (2, 3) else [0, 0, -0.02 * H]
            add(lname, REVOLUTE, parent, _ARM_AXES[k], xyz,
                frac, com, (0.04 * H, 0.04 * H, 0.12 * H))
            parent = lname

    # head
    head_axes = "zy"
    parent = torso
    for k in range(p.head_dof):
        lname = f"head{k + 1}"
        add(lname, REVOLUTE, parent, head_axes[k],
            [0, 0, shoulder_z + 0.06 * H] if k == 0 else [0, 0, 0],
            0.02 if k == p.head_dof - 1 else 0.008,
            [0, 0, 0.03 * H], (0.07 * H, 0.07 * H, 0.08 * H))
        parent = lname

    total_frac = sum(r[0] for r in raw)
    scale = p.total_mass / total_frac
    inertias = []
    for frac, com, dims in raw:
        mass = frac * scale
        i_com = _box_inertia(mass, *dims)
        inertias.append(SpatialInertia.from_com_inertia(mass, com, i_com))

    model = RobotModel(
        name=f"humanoid_n{p.n}",
        link_names=tuple(link_names),
        link_inertias=tuple(inertias),
        joints=tuple(joints),
    )
    assert model.n == p.n
    return model


def standing_state(model: RobotModel, knee_bend=0.3) -> RobotState:
    """Natural standing pose: bent knees, slightly flexed arms and torso
    (keeping the upper body away from its stretched-out singularity), base
    height set so the foot soles rest on the ground plane (z = 0)."""
    s = model.neutral_state()
    by_name = {j.name: i for i, j in enumerate(model.joints)}

    def set_q(jname, val):
        if jname in by_name:
            s.q[7 + by_name[jname] - 1] = val

    for side, sgn in (("l", 1.0), ("r", -1.0)):
        set_q(f"{side}_thigh_joint", -knee_bend / 2)
        set_q(f"{side}_shank_joint", knee_bend)
        set_q(f"{side}_ankle_joint", -knee_bend / 2)
        # shoulder pitch / roll, elbow flex
        set_q(f"{side}_arm1_joint", 0.3)
        set_q(f"{side}_arm2_joint", sgn * 0.15)
        set_q(f"{side}_arm4_joint", -0.6)
        for k in range(5, 11):
            set_q(f"{side}_arm{k}_joint", 0.1)
        set_q(f"{side}_hand_joint", 0.1)
    set_q("waist2_joint", 0.1)
    set_q("head2_joint", 0.1)
    for k in range(1, 9):
        set_q(f"torso_extra{k}_joint", 0.05)
    kin = forward_kinematics(model, s)
    foot = model.link_index("l_foot")
    foot_height = -2.0 * model.link_inertias[foot].com[2]  # generator geometry
    sole_z = kin.pos[foot][2] - foot_height
    s.q[2] -= sole_z
    return s


def foot_sole_offset(model: RobotModel) -> np.ndarray:
    """Offset of the sole center below the foot frame (generator geometry)."""
    foot = model.link_index("l_foot")
    return np.array([0.0, 0.0, 2.0 * model.link_inertias[foot].com[2]])

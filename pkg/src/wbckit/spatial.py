"""6-D spatial algebra: motion/force vectors, Plucker transforms, spatial inertia.

All 6-vectors are ordered (angular, linear).  A spatial motion vector holds
(angular velocity, linear velocity of the body-fixed point at the reference
origin); a spatial force holds (moment about the reference origin, force).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Index slices for the fixed (angular, linear) component ordering.
ANGULAR = slice(0, 3)
LINEAR = slice(3, 6)


def cross3(a, b):
    """Cross product of two 3-vectors, avoiding np.cross's axis machinery."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def skew(v):
    """3x3 cross-product matrix: skew(v) @ u == np.cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(axis, angle):
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=float)
    k = skew(a)
    s, c = np.sin(angle), np.cos(angle)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rotation_log(rot):
    """Axis-angle vector of a rotation matrix (inverse of Rodrigues)."""
    c = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(c)
    if angle < 1e-12:
        return 0.5 * np.array(
            [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
        )
    if np.pi - angle < 1e-6:
        # Near pi the off-diagonal formula degenerates; use the symmetric part.
        w = np.sqrt(np.maximum(np.diag(rot) - c, 0.0) / (1.0 - c))
        w[1] = np.copysign(w[1], rot[0, 1] + rot[1, 0] if w[0] > 0 else rot[2, 1] - rot[1, 2])
        w[2] = np.copysign(w[2], rot[0, 2] + rot[2, 0] if w[0] > 0 else rot[1, 0] - rot[0, 1])
        if w[0] == 0.0 and w[1] == 0.0 and w[2] == 0.0:
            w = np.array([1.0, 0.0, 0.0])
        w = w / np.linalg.norm(w)
        return angle * w
    axis = np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    ) / (2.0 * np.sin(angle))
    return angle * axis


@dataclass(frozen=True)
class SpatialMotion:
    """Twist: (angular, linear), angular first everywhere."""

    angular: np.ndarray
    linear: np.ndarray

    def as_vector(self):
        return np.concatenate([self.angular, self.linear])

    @staticmethod
    def from_vector(v):
        v = np.asarray(v, dtype=float)
        return SpatialMotion(v[ANGULAR].copy(), v[LINEAR].copy())


@dataclass(frozen=True)
class SpatialForce:
    """Wrench: (moment, force); dual pairing with SpatialMotion gives power."""

    moment: np.ndarray
    force: np.ndarray

    def as_vector(self):
        return np.concatenate([self.moment, self.force])

    @staticmethod
    def from_vector(v):
        v = np.asarray(v, dtype=float)
        return SpatialForce(v[ANGULAR].copy(), v[LINEAR].copy())

    def dot(self, motion: SpatialMotion) -> float:
        return float(self.moment @ motion.angular + self.force @ motion.linear)


@dataclass(frozen=True)
class PluckerTransform:
    """Pose of a frame F in frame G: x_G = rotation @ x_F + translation.

    Applied to spatial quantities it re-expresses F-coordinates in
    G-coordinates (reference origin moves from F's origin to G's origin).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if np.linalg.norm(r.T @ r - np.eye(3)) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation is not proper (det != +1)")

    @staticmethod
    def identity():
        return PluckerTransform(np.eye(3), np.zeros(3))

    def inverse(self):
        return PluckerTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def motion_matrix(self):
        """6x6 matrix acting on (angular, linear) motion coordinates."""
        x = np.zeros((6, 6))
        x[ANGULAR, ANGULAR] = self.rotation
        x[LINEAR, LINEAR] = self.rotation
        x[LINEAR, ANGULAR] = skew(self.translation) @ self.rotation
        return x

    def force_matrix(self):
        """6x6 matrix acting on (moment, force) coordinates (dual of motion)."""
        x = np.zeros((6, 6))
        x[ANGULAR, ANGULAR] = self.rotation
        x[LINEAR, LINEAR] = self.rotation
        x[ANGULAR, LINEAR] = skew(self.translation) @ self.rotation
        return x

    def apply_point(self, p):
        return self.rotation @ np.asarray(p, dtype=float) + self.translation


def compose(a: PluckerTransform, b: PluckerTransform) -> PluckerTransform:
    """Transform equivalent to applying b, then a."""
    return PluckerTransform(
        a.rotation @ b.rotation, a.rotation @ b.translation + a.translation
    )


def transform_motion(x: PluckerTransform, v: SpatialMotion) -> SpatialMotion:
    w = x.rotation @ v.angular
    return SpatialMotion(w, x.rotation @ v.linear + np.cross(x.translation, w))


def transform_force(x: PluckerTransform, f: SpatialForce) -> SpatialForce:
    fl = x.rotation @ f.force
    return SpatialForce(x.rotation @ f.moment + np.cross(x.translation, fl), fl)


def crm(v) -> np.ndarray:
    """6x6 motion cross-product operator of a motion 6-vector."""
    v = np.asarray(v, dtype=float)
    m = np.zeros((6, 6))
    m[ANGULAR, ANGULAR] = skew(v[ANGULAR])
    m[LINEAR, ANGULAR] = skew(v[LINEAR])
    m[LINEAR, LINEAR] = skew(v[ANGULAR])
    return m


def crf(v) -> np.ndarray:
    """6x6 force cross-product operator: crf(v) = -crm(v).T."""
    return -crm(v).T


def spatial_cross_motion(v: SpatialMotion, u: SpatialMotion) -> SpatialMotion:
    return SpatialMotion(
        np.cross(v.angular, u.angular),
        np.cross(v.angular, u.linear) + np.cross(v.linear, u.angular),
    )


def spatial_cross_force(v: SpatialMotion, f: SpatialForce) -> SpatialForce:
    return SpatialForce(
        np.cross(v.angular, f.moment) + np.cross(v.linear, f.force),
        np.cross(v.angular, f.force),
    )


@dataclass(frozen=True)
class SpatialInertia:
    """Rigid-body inertia: mass, COM offset, rotational inertia about the
    frame origin (all in the body frame)."""

    mass: float
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        if self.mass < 0.0:
            raise ValueError("mass must be nonnegative")
        if np.linalg.norm(self.inertia - np.asarray(self.inertia).T) > 1e-9 * max(
            1.0, np.linalg.norm(self.inertia)
        ):
            raise ValueError("rotational inertia must be symmetric")

    def matrix(self):
        """6x6 inertia acting on (angular, linear) motion; symmetric PSD."""
        mc = self.mass * skew(self.com)
        i6 = np.zeros((6, 6))
        i6[ANGULAR, ANGULAR] = self.inertia
        i6[ANGULAR, LINEAR] = mc
        i6[LINEAR, ANGULAR] = mc.T
        i6[LINEAR, LINEAR] = self.mass * np.eye(3)
        return i6

    @staticmethod
    def from_com_inertia(mass, com, inertia_about_com):
        """Build from inertia expressed about the COM (parallel-axis shift)."""
        c = skew(np.asarray(com, dtype=float))
        return SpatialInertia(
            mass, np.asarray(com, dtype=float), np.asarray(inertia_about_com) - mass * (c @ c)
        )


def inertia_apply(inertia: SpatialInertia, v: SpatialMotion) -> SpatialForce:
    """Momentum (or net inertial force) from a motion vector: h = I v."""
    mom = inertia.inertia @ v.angular + inertia.mass * np.cross(inertia.com, v.linear)
    lin = inertia.mass * (v.linear - np.cross(inertia.com, v.angular))
    return SpatialForce(mom, lin)


def transform_inertia_matrix(x: PluckerTransform, i6: np.ndarray) -> np.ndarray:
    """Re-express a 6x6 spatial inertia under a Plucker transform."""
    xf = x.force_matrix()
    return xf @ i6 @ xf.T


def translate_inertia_matrix(i6: np.ndarray, r) -> np.ndarray:
    """Move the reference origin of a 6x6 inertia to origin + r (same axes)."""
    x = PluckerTransform(np.eye(3), -np.asarray(r, dtype=float))
    return transform_inertia_matrix(x, i6)

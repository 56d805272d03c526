"""Exact 3-D unit-vector arithmetic and the bisector-symmetric axis rotation.

All trigonometry is double precision; dot products are clamped into [-1, 1]
before arccos so that rounding never escapes the arccos domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Unit-norm tolerance enforced by every constructor and operation.
NORM_TOL = 1e-12

#: Slack allowed on angle-domain checks before raising.
ANGLE_DOMAIN_TOL = 1e-9

# Within this distance of 0 or pi the rotation amount is below double
# precision and the rotation plane is ill conditioned, so the input pair is
# returned unchanged (the continuous limit of the map).
_DEGENERATE_SNAP = 1e-9


@dataclass(frozen=True)
class UnitVector:
    """Point on the unit 2-sphere; components must already be normalized."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > NORM_TOL:
            raise ValueError(f"not a unit vector: norm {n!r}")

    @staticmethod
    def normalized(x: float, y: float, z: float) -> "UnitVector":
        """Normalize an arbitrary nonzero vector onto the sphere."""
        n = math.sqrt(x * x + y * y + z * z)
        if n < NORM_TOL:
            raise ValueError("cannot normalize a (near-)zero vector")
        return UnitVector(x / n, y / n, z / n)

    @staticmethod
    def from_polar_xz(angle: float) -> "UnitVector":
        """Direction in the xz-plane at `angle` radians from +z (toward +x)."""
        return UnitVector(math.sin(angle), 0.0, math.cos(angle))

    @staticmethod
    def from_array(arr: np.ndarray, normalize: bool = False) -> "UnitVector":
        x, y, z = (float(arr[0]), float(arr[1]), float(arr[2]))
        if normalize:
            return UnitVector.normalized(x, y, z)
        return UnitVector(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def dot(self, other: "UnitVector") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def negated(self) -> "UnitVector":
        return UnitVector(-self.x, -self.y, -self.z)


def clamp_unit(value: float) -> float:
    """Clamp into [-1, 1]; absorbs rounding before arccos."""
    return max(-1.0, min(1.0, value))


def angle_between(u: UnitVector, v: UnitVector) -> float:
    """Angle in [0, pi] between two unit vectors; symmetric in its arguments."""
    return math.acos(clamp_unit(u.dot(v)))


def effective_angle(omega: float) -> float:
    """Map a pair angle to the angle between the rotated measurement axes.

    Returns pi * sin^2(omega / 2).  Monotone increasing on [0, pi], with
    fixed points exactly at 0, pi/2 and pi; below the input for
    omega < pi/2 and above it for omega > pi/2.

    Raises ValueError if omega lies outside [0, pi] beyond 1e-9.
    """
    if omega < -ANGLE_DOMAIN_TOL or omega > math.pi + ANGLE_DOMAIN_TOL:
        raise ValueError(f"pair angle {omega!r} outside [0, pi]")
    omega = min(max(omega, 0.0), math.pi)
    s = math.sin(0.5 * omega)
    return math.pi * s * s


def bisector(a: UnitVector, b: UnitVector) -> UnitVector:
    """Normalized sum direction of two unit vectors (undefined for a = -b)."""
    return UnitVector.normalized(a.x + b.x, a.y + b.y, a.z + b.z)


def rotate_towards(frm: UnitVector, towards: UnitVector, angle: float) -> UnitVector:
    """Unit vector at `angle` from `frm`, in span(frm, towards), on `towards` side.

    Raises ValueError when the two inputs are (anti)parallel, since the
    rotation plane is then undefined.
    """
    c = frm.dot(towards)
    ux = towards.x - c * frm.x
    uy = towards.y - c * frm.y
    uz = towards.z - c * frm.z
    n = math.sqrt(ux * ux + uy * uy + uz * uz)
    if n < NORM_TOL:
        raise ValueError("rotation plane undefined for (anti)parallel inputs")
    ca, sa = math.cos(angle), math.sin(angle)
    return UnitVector.normalized(
        ca * frm.x + sa * ux / n,
        ca * frm.y + sa * uy / n,
        ca * frm.z + sa * uz / n,
    )


def rotate_pair(a: UnitVector, b: UnitVector) -> tuple[UnitVector, UnitVector]:
    """Rotate a settings pair symmetrically about its bisector.

    The outputs lie in span(a, b), make equal angles with the bisector of
    (a, b), and are separated by effective_angle(angle_between(a, b)).  Each
    output is the corresponding input rotated by |effective - original| / 2,
    outward from the bisector when the pair angle exceeds pi/2 and inward
    when it is below pi/2.  The first output stays on a's side of the
    bisector.

    Degenerate pairs: for parallel inputs both rotations vanish; for
    antiparallel inputs the effective angle equals pi and the rotation
    amount is zero, so (a, b) is returned unchanged with no plane needed.
    """
    omega = angle_between(a, b)
    if omega <= _DEGENERATE_SNAP or omega >= math.pi - _DEGENERATE_SNAP:
        return a, b
    half_target = 0.5 * effective_angle(omega)
    mid = bisector(a, b)
    return rotate_towards(mid, a, half_target), rotate_towards(mid, b, half_target)

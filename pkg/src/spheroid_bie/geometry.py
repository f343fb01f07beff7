"""Spheroid shapes, poses, spheroidal coordinate maps and distances.

Body-frame coordinates of a spheroid with focal scale ``a``::

    prolate:  x = a sqrt(u^2 - 1) sqrt(1 - v^2) (cos phi, sin phi),  z = a u v
    oblate:   x = a sqrt(u^2 + 1) sqrt(1 - v^2) (cos phi, sin phi),  z = a u v

The surface of a particle is ``u = u0``.  World coordinates are obtained by
rotating with the particle quaternion and translating by its center.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .errors import ConfigError, FocalDegeneracy, NoConvergence

__all__ = [
    "Kind",
    "SpheroidShape",
    "SpheroidalPoint",
    "MetricCoeffs",
    "quaternion_to_matrix",
    "to_cartesian",
    "to_spheroidal",
    "surface_normal",
    "metric",
    "surface_area",
    "pair_distance",
    "circumsphere_gap",
    "point_distance",
    "parse_suspension",
    "load_suspension",
    "format_suspension",
]


class Kind(str, enum.Enum):
    PROLATE = "prolate"
    OBLATE = "oblate"


def quaternion_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = (float(c) for c in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class SpheroidShape:
    """One rigid spheroidal particle.

    Parameters
    ----------
    kind : Kind
        Prolate (elongated along the body z axis) or oblate (flattened).
    u0 : float
        Radial coordinate of the surface; > 1 for prolates, > 0 for oblates.
    a : float
        Focal length scale.
    center : 3-sequence
        Particle center in world coordinates.
    orientation : 4-sequence
        Unit quaternion (w, x, y, z) rotating body into world frame.
    """

    kind: Kind
    u0: float
    a: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)
    _rot: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "u0", float(self.u0))
        object.__setattr__(self, "a", float(self.a))
        center = tuple(float(c) for c in self.center)
        quat = tuple(float(c) for c in self.orientation)
        if len(center) != 3 or len(quat) != 4:
            raise ValueError("center needs 3 entries and orientation 4")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "orientation", quat)
        if self.kind is Kind.PROLATE and not self.u0 > 1.0:
            raise ValueError(f"prolate spheroid needs u0 > 1, got {self.u0}")
        if self.kind is Kind.OBLATE and not self.u0 > 0.0:
            raise ValueError(f"oblate spheroid needs u0 > 0, got {self.u0}")
        if not self.a > 0.0:
            raise ValueError(f"focal scale a must be positive, got {self.a}")
        if abs(math.sqrt(sum(c * c for c in quat)) - 1.0) > 1e-12:
            raise ValueError("orientation quaternion must have unit norm")
        object.__setattr__(self, "_rot", quaternion_to_matrix(quat))

    @classmethod
    def from_axes(cls, A: float, C: float, center=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0)):
        """Spheroid with equatorial semi-axis ``A`` and polar semi-axis ``C``."""
        if C > A:
            a = math.sqrt(C * C - A * A)
            return cls(Kind.PROLATE, C / a, a, center, orientation)
        if C < A:
            a = math.sqrt(A * A - C * C)
            return cls(Kind.OBLATE, C / a, a, center, orientation)
        raise ValueError("A == C is a sphere; use a near-sphere spheroid instead")

    @classmethod
    def from_aspect_ratio(cls, kind, R: float, major: float = 1.0, center=(0.0, 0.0, 0.0),
                          orientation=(1.0, 0.0, 0.0, 0.0)):
        """Spheroid of aspect ratio ``R`` > 1 with major semi-axis ``major``."""
        kind = Kind(kind)
        minor = major / R
        if kind is Kind.PROLATE:
            return cls.from_axes(minor, major, center, orientation)
        return cls.from_axes(major, minor, center, orientation)

    # derived quantities -------------------------------------------------
    @property
    def sign(self) -> int:
        """-1 for prolate, +1 for oblate; the sign in u^2 -/+ 1 and u^2 -/+ v^2."""
        return -1 if self.kind is Kind.PROLATE else 1

    @property
    def A(self) -> float:
        return self.a * math.sqrt(self.u0 ** 2 + self.sign)

    @property
    def C(self) -> float:
        return self.a * self.u0

    @property
    def aspect_ratio(self) -> float:
        if self.kind is Kind.PROLATE:
            return self.u0 / math.sqrt(self.u0 ** 2 - 1.0)
        return math.sqrt(self.u0 ** 2 + 1.0) / self.u0

    @property
    def slenderness(self) -> float:
        return 1.0 / self.aspect_ratio

    @property
    def circumradius(self) -> float:
        return max(self.A, self.C)

    @property
    def diam(self) -> float:
        return 2.0 * self.circumradius

    @property
    def rotation(self) -> np.ndarray:
        return self._rot

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center)

    def moved(self, center=None, orientation=None) -> "SpheroidShape":
        return SpheroidShape(self.kind, self.u0, self.a,
                             self.center if center is None else center,
                             self.orientation if orientation is None else orientation)

    # vectorized maps ----------------------------------------------------
    def body_points(self, u, v, phi) -> np.ndarray:
        u, v, phi = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (u, v, phi)))
        rho = self.a * np.sqrt(np.maximum(u * u + self.sign, 0.0)) * np.sqrt(np.maximum(1.0 - v * v, 0.0))
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), self.a * u * v], axis=-1)

    def to_world(self, xb) -> np.ndarray:
        return np.asarray(xb) @ self._rot.T + self.center_array

    def to_body(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center_array) @ self._rot

    def points(self, u, v, phi) -> np.ndarray:
        return self.to_world(self.body_points(u, v, phi))

    def body_normals(self, v, phi, u=None) -> np.ndarray:
        """Outward unit normals (e_u direction) in the body frame."""
        u = self.u0 if u is None else u
        v, phi = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(phi, dtype=float))
        s = np.sqrt(np.maximum(1.0 - v * v, 0.0))
        r = math.sqrt(u * u + self.sign)
        n = np.stack([u * s * np.cos(phi), u * s * np.sin(phi), v * r], axis=-1)
        return n / np.sqrt(u * u + self.sign * v * v)[..., None]

    def normals(self, v, phi) -> np.ndarray:
        return self.body_normals(v, phi) @ self._rot.T

    def dS_weight(self, v, u=None) -> np.ndarray:
        """Surface element factor: dS = dS_weight dv dphi."""
        u = self.u0 if u is None else u
        v = np.asarray(v, dtype=float)
        return self.a ** 2 * np.sqrt(u * u + self.sign * v * v) * math.sqrt(u * u + self.sign)

    def modified_weight(self, v) -> np.ndarray:
        """sqrt(u0^2 -/+ v^2), the factor relating density to modified-basis samples."""
        v = np.asarray(v, dtype=float)
        return np.sqrt(self.u0 ** 2 + self.sign * v * v)

    def implicit(self, x) -> np.ndarray:
        """(rho/A)^2 + (z/C)^2 - 1 at world points; negative inside."""
        xb = self.to_body(x)
        return (xb[..., 0] ** 2 + xb[..., 1] ** 2) / self.A ** 2 + xb[..., 2] ** 2 / self.C ** 2 - 1.0

    def spheroidal_coords(self, x, focal_tol: float = 1e-14, allow_focal: bool = False):
        """Vectorized inverse map; returns arrays (u, v, phi).

        With ``allow_focal`` points on the focal set get their limiting
        coordinates (the azimuth is then arbitrary), which suffices for
        evaluating interior expansions.

        Raises
        ------
        FocalDegeneracy
            If a point sits on the focal segment or focal ring.
        """
        xb = self.to_body(x)
        rho2 = (xb[..., 0] ** 2 + xb[..., 1] ** 2) / self.a ** 2
        z = xb[..., 2] / self.a
        z2 = z * z
        az = np.abs(z)
        if self.kind is Kind.PROLATE:
            bad = (rho2 <= focal_tol ** 2) & (az < 1.0 - focal_tol)
            s = 1.0 + rho2 + z2
            disc = np.sqrt(((1.0 - az) ** 2 + rho2) * ((1.0 + az) ** 2 + rho2))
            U = 0.5 * (s + disc)
            V = np.minimum(z2 / U, 1.0)
        else:
            bad = (np.abs(np.sqrt(rho2) - 1.0) <= focal_tol) & (az <= focal_tol)
            t = rho2 + z2 - 1.0
            root = np.sqrt(t * t + 4.0 * z2)
            with np.errstate(divide="ignore", invalid="ignore"):
                U = np.where(t >= 0.0, 0.5 * (t + root), 2.0 * z2 / (root - t))
            U = np.where(np.isfinite(U), U, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                V = np.where(U > 0.5, z2 / U, 1.0 - rho2 / (U + 1.0))
            V = np.clip(V, 0.0, 1.0)
        if not allow_focal and np.any(bad):
            raise FocalDegeneracy(f"{int(np.count_nonzero(bad))} point(s) on the focal set of {self.kind.value} spheroid")
        u = np.sqrt(U)
        v = np.where(z < 0.0, -1.0, 1.0) * np.sqrt(V)
        phi = np.mod(np.arctan2(xb[..., 1], xb[..., 0]), 2.0 * np.pi)
        return u, v, phi

    def local_frame(self, u, v, phi) -> np.ndarray:
        """Unit vectors (e_u, e_v, e_phi) in world frame, shape (..., 3, 3).

        Regular at the poles |v| = 1, where e_v and e_phi follow the meridian
        of the given azimuth.
        """
        u, v, phi = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (u, v, phi)))
        s = np.sqrt(np.maximum(1.0 - v * v, 0.0))
        r = np.sqrt(u * u + self.sign)
        h = np.sqrt(u * u + self.sign * v * v)
        c, sn = np.cos(phi), np.sin(phi)
        e_u = np.stack([u * s * c, u * s * sn, v * r], axis=-1) / h[..., None]
        e_v = np.stack([-r * v * c, -r * v * sn, u * s], axis=-1) / h[..., None]
        e_phi = np.stack([-sn, c, np.zeros_like(c)], axis=-1)
        frame = np.stack([e_u, e_v, e_phi], axis=-2)
        return frame @ self._rot.T


class SpheroidalPoint(NamedTuple):
    u: float
    v: float
    phi: float


class MetricCoeffs(NamedTuple):
    h_u: float
    h_v: float
    h_phi: float
    dS_weight: float


def to_cartesian(shape: SpheroidShape, p: SpheroidalPoint) -> np.ndarray:
    return shape.points(p.u, p.v, p.phi)


def to_spheroidal(shape: SpheroidShape, x) -> SpheroidalPoint:
    u, v, phi = shape.spheroidal_coords(np.asarray(x, dtype=float))
    return SpheroidalPoint(float(u), float(v), float(phi))


def surface_normal(shape: SpheroidShape, p: SpheroidalPoint) -> np.ndarray:
    return shape.body_normals(p.v, p.phi, u=p.u) @ shape.rotation.T


def metric(shape: SpheroidShape, p: SpheroidalPoint) -> MetricCoeffs:
    a, u, v, sg = shape.a, p.u, p.v, shape.sign
    q = math.sqrt(u * u + sg * v * v)
    r = math.sqrt(u * u + sg)
    s = math.sqrt(1.0 - v * v)
    h_v = a * q / s if s > 0 else math.inf
    return MetricCoeffs(h_u=a * q / r, h_v=h_v, h_phi=a * r * s, dS_weight=a * a * q * r)


def surface_area(shape: SpheroidShape) -> float:
    """Closed-form area of the spheroid surface."""
    A, C = shape.A, shape.C
    if shape.kind is Kind.PROLATE:
        e = math.sqrt(1.0 - (A / C) ** 2)
        ratio = math.asin(e) / e if e > 1e-8 else 1.0 + e * e / 6.0
        return 2.0 * math.pi * A * A * (1.0 + (C / A) * ratio)
    e = math.sqrt(1.0 - (C / A) ** 2)
    ratio = math.atanh(e) / e if e > 1e-8 else 1.0 + e * e / 3.0
    return 2.0 * math.pi * A * A * (1.0 + (C / A) ** 2 * ratio)


# ----------------------------------------------------------------------
# distances

def _ellipse_distance(e0, e1, y0, y1):
    """Distance from points (y0, y1) >= 0 to the ellipse with semi-axes e0 >= e1.

    Vectorized robust bisection on the Lagrange parameter.
    """
    y0, y1 = np.broadcast_arrays(np.asarray(y0, dtype=float), np.asarray(y1, dtype=float))
    x0 = np.empty_like(y0)
    x1 = np.empty_like(y0)
    gen = (y0 > 0) & (y1 > 0)
    if np.any(gen):
        a0, a1 = y0[gen], y1[gen]
        lo = -e1 * e1 + e1 * a1
        hi = -e1 * e1 + np.sqrt((e0 * a0) ** 2 + (e1 * a1) ** 2)
        for _ in range(120):
            t = 0.5 * (lo + hi)
            g = (e0 * a0 / (t + e0 * e0)) ** 2 + (e1 * a1 / (t + e1 * e1)) ** 2 - 1.0
            pos = g > 0
            lo = np.where(pos, t, lo)
            hi = np.where(pos, hi, t)
        t = 0.5 * (lo + hi)
        x0[gen] = e0 * e0 * a0 / (t + e0 * e0)
        x1[gen] = e1 * e1 * a1 / (t + e1 * e1)
    on_minor = (y0 <= 0) & (y1 > 0)
    x0[on_minor] = 0.0
    x1[on_minor] = e1
    on_major = y1 <= 0
    if np.any(on_major):
        a0 = y0[on_major]
        denom = e0 * e0 - e1 * e1
        inner = a0 * e0 < denom
        xx = np.where(inner, e0 * e0 * a0 / np.where(denom > 0, denom, 1.0), e0)
        xx = np.minimum(xx, e0)
        x0[on_major] = xx
        x1[on_major] = np.where(inner, e1 * np.sqrt(np.maximum(1.0 - (xx / e0) ** 2, 0.0)), 0.0)
    return np.hypot(x0 - y0, x1 - y1)


def point_distance(shape: SpheroidShape, x) -> np.ndarray:
    """Signed distance from world points to the surface (negative inside)."""
    xb = shape.to_body(x)
    rho = np.hypot(xb[..., 0], xb[..., 1])
    z = np.abs(xb[..., 2])
    A, C = shape.A, shape.C
    if A >= C:
        d = _ellipse_distance(A, C, rho, z)
    else:
        d = _ellipse_distance(C, A, z, rho)
    inside = (rho / A) ** 2 + (z / C) ** 2 < 1.0
    return np.where(inside, -d, d)


def circumsphere_gap(s1: SpheroidShape, s2: SpheroidShape) -> float:
    """Lower bound on the surface gap from bounding spheres."""
    return float(np.linalg.norm(s1.center_array - s2.center_array)) - s1.circumradius - s2.circumradius


def _angles_points(shape, th, ph):
    st, ct = np.sin(th), np.cos(th)
    xb = np.stack([shape.A * st * np.cos(ph), shape.A * st * np.sin(ph), shape.C * ct], axis=-1)
    return shape.to_world(xb)


def _angles_jac(shape, th, ph):
    st, ct = math.sin(th), math.cos(th)
    d_th = np.array([shape.A * ct * math.cos(ph), shape.A * ct * math.sin(ph), -shape.C * st])
    d_ph = np.array([-shape.A * st * math.sin(ph), shape.A * st * math.cos(ph), 0.0])
    return shape.rotation @ d_th, shape.rotation @ d_ph


def pair_distance(s1: SpheroidShape, s2: SpheroidShape, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Surface-to-surface distance between two spheroids.

    A coarse sampling of both surfaces seeds a quasi-Newton minimization of
    the squared distance between surface parametrizations.  A non-positive
    return value means the particles touch or overlap (it is minus an
    estimate of the penetration depth).

    Raises
    ------
    NoConvergence
        If the refinement does not reach ``tol * diam`` within ``max_iter``.
    """
    scale = max(s1.diam, s2.diam)
    nt, nph = 24, 48
    th = (np.arange(nt) + 0.5) * math.pi / nt
    ph = np.arange(nph) * 2 * math.pi / nph
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    X1 = _angles_points(s1, TH, PH).reshape(-1, 3)
    X2 = _angles_points(s2, TH, PH).reshape(-1, 3)
    # overlap screen: sample points of one body inside the other
    inside12 = s2.implicit(X1) < 0
    inside21 = s1.implicit(X2) < 0
    if np.any(inside12) or np.any(inside21):
        depth = 0.0
        if np.any(inside12):
            depth = max(depth, float(np.max(-point_distance(s2, X1[inside12]))))
        if np.any(inside21):
            depth = max(depth, float(np.max(-point_distance(s1, X2[inside21]))))
        return -depth
    d2 = np.sum(X1 ** 2, 1)[:, None] + np.sum(X2 ** 2, 1)[None, :] - 2 * X1 @ X2.T
    i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
    x0 = np.array([TH.ravel()[i], PH.ravel()[i], TH.ravel()[j], PH.ravel()[j]])

    def fun(z):
        r = _angles_points(s1, z[0], z[1]) - _angles_points(s2, z[2], z[3])
        t1, p1 = _angles_jac(s1, z[0], z[1])
        t2, p2 = _angles_jac(s2, z[2], z[3])
        g = np.array([r @ t1, r @ p1, -(r @ t2), -(r @ p2)])
        return 0.5 * float(r @ r) / scale ** 2, g / scale ** 2

    res = optimize.minimize(fun, x0, jac=True, method="BFGS",
                            options={"gtol": 1e-13, "maxiter": max_iter})
    z = res.x
    r = _angles_points(s1, z[0], z[1]) - _angles_points(s2, z[2], z[3])
    d = float(np.linalg.norm(r))
    # optimality: the gap vector is normal to both surfaces
    t1, p1 = _angles_jac(s1, z[0], z[1])
    t2, p2 = _angles_jac(s2, z[2], z[3])
    tang = max(abs(r @ t1) / max(np.linalg.norm(t1), 1e-300), abs(r @ t2) / max(np.linalg.norm(t2), 1e-300),
               abs(r @ p1) / max(np.linalg.norm(p1), 1e-300), abs(r @ p2) / max(np.linalg.norm(p2), 1e-300))
    # first-order tangential residual translates into a second-order distance error
    if not res.success and tang > math.sqrt(tol) * scale:
        raise NoConvergence(f"pair distance refinement stalled after {res.nit} iterations: {res.message}")
    if s2.implicit(_angles_points(s1, z[0], z[1])[None, :])[0] <= 0:
        return 0.0
    return d


# ----------------------------------------------------------------------
# suspension files

def parse_suspension(text: str, source: str = "<string>") -> list[SpheroidShape]:
    """Parse a suspension description.

    One particle per line::

        kind  u0  a  cx cy cz  [qw qx qy qz]

    ``#`` starts a comment.  The quaternion defaults to the identity.
    """
    shapes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        where = f"{source}:{lineno}"
        if len(fields) not in (6, 10):
            raise ConfigError(f"{where}: expected 6 or 10 fields (kind u0 a cx cy cz [qw qx qy qz]), got {len(fields)}")
        try:
            kind = Kind(fields[0].lower())
        except ValueError:
            raise ConfigError(f"{where}: unknown kind {fields[0]!r}, use 'prolate' or 'oblate'") from None
        try:
            nums = [float(t) for t in fields[1:]]
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        quat = nums[5:9] if len(nums) == 9 else [1.0, 0.0, 0.0, 0.0]
        norm = math.sqrt(sum(q * q for q in quat))
        if norm == 0.0:
            raise ConfigError(f"{where}: zero quaternion")
        quat = [q / norm for q in quat]
        try:
            shapes.append(SpheroidShape(kind, nums[0], nums[1], tuple(nums[2:5]), tuple(quat)))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not shapes:
        raise ConfigError(f"{source}: no particles defined")
    return shapes


def load_suspension(path) -> list[SpheroidShape]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read suspension file {path}: {exc}") from None
    return parse_suspension(text, str(path))


def format_suspension(shapes: Sequence[SpheroidShape]) -> str:
    lines = ["# kind u0 a cx cy cz qw qx qy qz"]
    for s in shapes:
        nums = [s.u0, s.a, *s.center, *s.orientation]
        lines.append(s.kind.value + " " + " ".join(repr(float(x)) for x in nums))
    return "\n".join(lines) + "\n"

"""Coordinate systems for the planar problems: Cartesian, polar, Delaunay and Hill.

Positions are in units where the Sun-Jupiter distance is 1 and the primaries
rotate with unit angular velocity. Momenta are canonical, i.e. mass times
inertial velocity; conversions between rotating-frame velocities and
momenta live in :mod:`rp4bp.dynamics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import jacobi_constant
from .errors import DomainError, SolverFailure

KEPLER_MAX_ITER = 50
KEPLER_TOL = 1e-15


def wrap_angle(a):
    """Reduce an angle (or array of angles) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class RotatingState:
    """Planar state (x, y, vx, vy) in the uniformly rotating frame."""

    x: float
    y: float
    vx: float
    vy: float

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y, self.vx, self.vy], dtype=dtype or float)

    @classmethod
    def of(cls, s) -> "RotatingState":
        x, y, vx, vy = (float(c) for c in np.asarray(s, dtype=float).ravel()[:4])
        return cls(x, y, vx, vy)

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.vx, self.vy)):
            raise DomainError("rotating state must be finite")


@dataclass(frozen=True)
class DelaunayElements:
    """Delaunay action-angle elements of a Kepler arc.

    ``L`` and ``G`` are actions (for m = k = 1, ``L**2`` is the semimajor
    axis and ``G`` the angular momentum); ``ell`` is the mean anomaly and
    ``g`` the argument of the perihelion, both stored in (-pi, pi].
    """

    L: float
    ell: float
    G: float
    g: float

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError(f"L must be positive, got {self.L}")
        if abs(self.G) > self.L * (1.0 + 1e-12):
            raise DomainError(f"|G| must not exceed L (G={self.G}, L={self.L})")
        object.__setattr__(self, "ell", wrap_angle(self.ell))
        object.__setattr__(self, "g", wrap_angle(self.g))

    @property
    def eccentricity(self) -> float:
        return math.sqrt(max(0.0, 1.0 - (self.G / self.L) ** 2))

    def semimajor(self, m: float = 1.0, k: float = 1.0) -> float:
        return self.L**2 / (m * k)


@dataclass(frozen=True)
class PolarState:
    """Symplectic polar coordinates (r, theta, R, Theta)."""

    r: float
    theta: float
    R: float
    Theta: float

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError("polar radius must be positive")


@dataclass(frozen=True)
class HillState:
    """State rescaled into the Hill neighbourhood of the small primary."""

    X: float
    Y: float
    VX: float
    VY: float
    JH: float

    def __array__(self, dtype=None, copy=None):
        return np.array([self.X, self.Y, self.VX, self.VY], dtype=dtype or float)


# --- Kepler equation ---------------------------------------------------------

def _kepler_bisect(ell: float, e: float) -> float:
    lo, hi = ell - e - 1e-12, ell + e + 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - e * math.sin(mid) - ell > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 4e-16 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def solve_kepler(ell: float, e: float) -> float:
    """Eccentric anomaly u with ``u - e*sin(u) = ell``.

    Newton iteration seeded at ``ell + e*sin(ell)`` on the reduced mean
    anomaly, falling back to bisection when Newton does not settle in
    ``KEPLER_MAX_ITER`` steps. The winding of ``ell`` is preserved so the
    result is continuous in ``ell``.
    """
    if not (0.0 <= e < 1.0):
        raise DomainError(f"eccentricity must lie in [0, 1), got {e}")
    if not math.isfinite(ell):
        raise DomainError("mean anomaly must be finite")
    turns = round(ell / (2.0 * math.pi))
    m = ell - 2.0 * math.pi * turns
    u = m + e * math.sin(m)
    for _ in range(KEPLER_MAX_ITER):
        f = u - e * math.sin(u) - m
        du = f / (1.0 - e * math.cos(u))
        u -= du
        if abs(du) <= KEPLER_TOL * max(1.0, abs(u)):
            break
    else:
        u = _kepler_bisect(m, e)
        if abs(u - e * math.sin(u) - m) > 1e-13:
            raise SolverFailure(f"Kepler equation did not converge (ell={ell}, e={e})")
    return u + 2.0 * math.pi * turns


# --- Delaunay <-> Cartesian ---------------------------------------------------

def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def delaunay_to_cartesian(el: DelaunayElements, m: float = 1.0, k: float = 1.0):
    """Position and momentum of the Kepler point with elements ``el``.

    The Hamiltonian is ``|P|^2/(2m) - k/|Q|``. Returns ``(q, p)`` as length-2
    arrays, with the perifocal formulas rotated by the perihelion argument.
    """
    L, G = el.L, el.G
    e = el.eccentricity
    u = solve_kepler(el.ell, e)
    cu, su = math.cos(u), math.sin(u)
    mk = m * k
    denom = 1.0 - e * cu
    q = np.array([(L * L / mk) * (cu - e), (L * G / mk) * su])
    p = np.array([-(mk / L) * su / denom, (mk / (L * L)) * G * cu / denom])
    R = _rot(el.g)
    return R @ q, R @ p


def cartesian_to_delaunay(q, p, m: float = 1.0, k: float = 1.0) -> DelaunayElements:
    """Delaunay elements of an elliptic Kepler state.

    For circular orbits the perihelion is undefined; then ``g = 0`` and the
    mean anomaly is the angle reproducing the position.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    r = math.hypot(q[0], q[1])
    if r == 0.0:
        raise DomainError("position at the attracting centre")
    energy = (p @ p) / (2.0 * m) - k / r
    if not energy < 0.0:
        raise DomainError(f"non-elliptic Kepler state (energy {energy:.3e} >= 0)")
    a = -k / (2.0 * energy)
    L = math.sqrt(m * k * a)
    G = float(q[0] * p[1] - q[1] * p[0])
    # eccentricity vector, velocity = p/m, gravitational parameter k/m
    kappa = k / m
    v = p / m
    h = G / m
    evec = np.array([v[1] * h, -v[0] * h]) / kappa - q / r
    e = math.hypot(evec[0], evec[1])
    if e < 1e-14:
        e, g = 0.0, 0.0
    else:
        g = math.atan2(evec[1], evec[0])
    qp = _rot(-g) @ q
    b = L * G / (m * k)
    cos_u = qp[0] / a + e
    sin_u = qp[1] / b
    u = math.atan2(sin_u, cos_u)
    ell = u - e * math.sin(u)
    G = math.copysign(min(abs(G), L), G)
    return DelaunayElements(L=L, ell=ell, G=G, g=g)


# --- Polar -------------------------------------------------------------------

def cartesian_to_polar(q, p) -> PolarState:
    """Symplectic polar coordinates of (q, p), p the canonical momentum."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    r = math.hypot(q[0], q[1])
    if r == 0.0:
        raise DomainError("polar coordinates undefined at the origin")
    theta = math.atan2(q[1], q[0])
    R = (q[0] * p[0] + q[1] * p[1]) / r
    Theta = q[0] * p[1] - q[1] * p[0]
    return PolarState(r, theta, R, Theta)


def polar_to_cartesian(ps: PolarState):
    c, s = math.cos(ps.theta), math.sin(ps.theta)
    q = np.array([ps.r * c, ps.r * s])
    p = np.array([ps.R * c - ps.Theta / ps.r * s, ps.R * s + ps.Theta / ps.r * c])
    return q, p


def cartesian_polar(q, p=None, m: float = 1.0, direction: str = "forward"):
    """Forward: (q, p) -> PolarState. Inverse: PolarState (passed as ``q``) -> (q, p).

    The momenta are canonical, so the mass only enters through p and is not
    needed by the transform itself; it is accepted for a uniform interface.
    """
    if m <= 0:
        raise DomainError("mass must be positive")
    if direction == "forward":
        return cartesian_to_polar(q, p)
    if direction == "inverse":
        return polar_to_cartesian(q)
    raise DomainError(f"direction must be 'forward' or 'inverse', got {direction!r}")


# --- Hill rescaling ----------------------------------------------------------

def hill_rescale(s, mu: float, jacobi: float | None = None) -> HillState:
    """Zoom into the mu**(1/3) neighbourhood of the small primary.

    ``X = (x - 1 + mu) / mu**(1/3)`` and likewise for the other components,
    time is not rescaled. ``jacobi`` defaults to the Jacobi constant of
    ``s``; the returned ``JH`` is ``mu**(-2/3) * (J - 3*(1 - mu))``.
    """
    if not mu > 0:
        raise DomainError(f"mass ratio must be positive, got {mu}")
    x, y, vx, vy = np.asarray(s, dtype=float)[:4]
    if jacobi is None:
        jacobi = jacobi_constant(s, mu)
    c = mu ** (1.0 / 3.0)
    JH = (jacobi - 3.0 * (1.0 - mu)) / (c * c)
    return HillState((x - 1.0 + mu) / c, y / c, vx / c, vy / c, JH)


def hill_unscale(hs: HillState, mu: float) -> RotatingState:
    if not mu > 0:
        raise DomainError(f"mass ratio must be positive, got {mu}")
    c = mu ** (1.0 / 3.0)
    return RotatingState(hs.X * c + 1.0 - mu, hs.Y * c, hs.VX * c, hs.VY * c)


def hill_jacobi(X, Y, VX, VY) -> float:
    """Leading-order Jacobi constant of the Hill problem."""
    return -(VX * VX + VY * VY) + 2.0 / math.hypot(X, Y) + 3.0 * X * X

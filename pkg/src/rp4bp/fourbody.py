"""Asteroid Hamiltonian perturbed by a resonant planet, frozen averages and energy growth.

States in this module are canonical, ``(x, y, px, py)``, in the frame whose
x-axis passes through Sun and Jupiter. With ``p = v + (-y, x)`` they match
the rotating-frame velocities used elsewhere in the package.

Background motion (leading order): the Sun and Jupiter sit at their circular
positions shifted by ``-delta*q_P`` so that the barycentre stays at the
origin; the frame rotates with angular velocity ``1 + thetadot`` where
``thetadot = delta*(c - G_P)/alpha`` and ``G_P`` is the planet's angular
momentum; the planet follows the stored resonant orbit rotated by ``-theta``.

The quasi-periodic phase is ``nu = (nu1, nu2)``: ``nu1 = 2*pi*t/T_P`` is the
planet phase and ``nu2 = theta(t)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from . import dynamics as dyn
from .coords import DelaunayElements, RotatingState, cartesian_to_delaunay, delaunay_to_cartesian
from .equilibria import find_collinear_points
from .errors import DomainError, SingularityError
from .lyapunov import Cylinder, LyapunovOrbit
from .manifolds import HeteroclinicConnection, fiber_seed, integrate_fiber, interior_side
from .planet import PlanetOrbit

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
GUARD = 1e-6
_K = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class FrozenPhase:
    nu1: float
    nu2: float

    def __post_init__(self):
        object.__setattr__(self, "nu1", float(np.mod(self.nu1, TWO_PI)))
        object.__setattr__(self, "nu2", float(np.mod(self.nu2, TWO_PI)))


@dataclass(frozen=True)
class FourBodyParams:
    """Mass ratio, planet mass ``delta`` and the resonant planet orbit.

    ``planet_mass_power`` selects ``delta/r_AP`` (1) or ``delta**2/r_AP`` (2)
    in the planet term. ``c`` is the angular-momentum offset.
    """

    mu: float
    delta: float
    planet: PlanetOrbit
    c: float = 0.0
    c_delta: float = 1.0
    planet_mass_power: int = 1
    theta_samples: int = 4096

    def __post_init__(self):
        if not (0.0 < self.mu <= 0.5):
            raise DomainError("mass ratio must lie in (0, 1/2]")
        if abs(self.planet.mu - self.mu) > 1e-15:
            raise DomainError("planet orbit was computed for a different mass ratio")
        if self.delta < 0 or self.delta > self.c_delta * self.epsilon**3 * (1 + 1e-12):
            raise DomainError(f"delta must satisfy 0 <= delta <= c_delta*eps^3 "
                              f"= {self.c_delta * self.epsilon**3:.3e}")
        if self.planet_mass_power not in (1, 2):
            raise DomainError("planet_mass_power must be 1 or 2")

    @property
    def epsilon(self) -> float:
        return self.planet.epsilon

    @property
    def alpha(self) -> float:
        return self.mu * (1.0 - self.mu)

    @property
    def planet_coupling(self) -> float:
        return self.delta ** self.planet_mass_power

    @property
    def period(self) -> float:
        return self.planet.period

    # --- theta model ---------------------------------------------------------

    @cached_property
    def _G(self):
        n = self.theta_samples
        t = np.linspace(0.0, self.period, n + 1)
        S = self.planet.dense(t)
        G = planet_angular_momentum(S)
        G[-1] = G[0]
        spl = CubicSpline(t, G, bc_type="periodic")
        mean = float(spl.integrate(0.0, self.period)) / self.period
        return spl, spl.antiderivative(), mean

    def theta_dot(self, t):
        """delta*(c - G_P(t))/alpha."""
        G = planet_angular_momentum(self.planet.state(t))
        return self.delta * (self.c - G) / self.alpha

    def theta(self, t):
        """Integral of thetadot from 0 to t."""
        t = np.asarray(t, dtype=float)
        _, anti, mean = self._G
        T = self.period
        n = np.floor(t / T)
        intG = n * mean * T + anti(t - n * T)
        return self.delta / self.alpha * (self.c * t - intG)

    def nu(self, t) -> tuple:
        """Unwrapped (nu1, nu2) at time t."""
        return TWO_PI * np.asarray(t) / self.period, self.theta(t)

    def time_of(self, nu1):
        return np.asarray(nu1) * self.period / TWO_PI

    @property
    def nu2_frequency(self) -> float:
        """Mean d(nu2)/d(nu1)."""
        _, _, mean = self._G
        return self.delta * (self.c - mean) / self.alpha * self.period / TWO_PI


def planet_angular_momentum(S) -> np.ndarray:
    """q x p of rotating-frame states (x, y, vx, vy)."""
    S = np.asarray(S)
    x, y, vx, vy = S[..., 0], S[..., 1], S[..., 2], S[..., 3]
    return x * (vy + x) - y * (vx - y)


@dataclass(frozen=True)
class Background:
    """Positions of the bodies and frame rate at a set of phases (leading axis)."""

    qP: np.ndarray
    dqP1: np.ndarray
    dqP2: np.ndarray
    thetadot: np.ndarray
    dthetadot1: np.ndarray
    qS: np.ndarray
    qJ: np.ndarray


def background(nu1, nu2, p: FourBodyParams) -> Background:
    """Bodies at phases (nu1, nu2); derivatives are with respect to nu1 and nu2."""
    nu1 = np.atleast_1d(np.asarray(nu1, dtype=float))
    nu2 = np.broadcast_to(np.atleast_1d(np.asarray(nu2, dtype=float)), nu1.shape)
    T = p.period
    t1 = np.mod(nu1 * T / TWO_PI, T)
    S = np.atleast_2d(p.planet.dense(t1))
    if S.shape[0] != nu1.size:
        S = S.reshape(nu1.size, 4)
    qR, vR = S[:, :2], S[:, 2:]
    c, s = np.cos(nu2), np.sin(nu2)
    # R(-nu2) applied row-wise
    rot = lambda v: np.stack([c * v[:, 0] + s * v[:, 1], -s * v[:, 0] + c * v[:, 1]], axis=1)
    qP = rot(qR)
    dqP1 = rot(vR) * (T / TWO_PI)
    dqP2 = -(qP @ _K.T)
    G = planet_angular_momentum(S)
    acc = np.array([dyn.vector_field(si, p.mu)[2:] for si in S])
    x, y, vx, vy = S.T
    Gdot = vx * (vy + x) + x * (acc[:, 1] + vx) - vy * (vx - y) - y * (acc[:, 0] - vy)
    thetadot = p.delta * (p.c - G) / p.alpha
    dthetadot1 = -p.delta / p.alpha * Gdot * (T / TWO_PI)
    shift = -p.delta * qP
    qS = shift + np.array([-p.mu, 0.0])
    qJ = shift + np.array([1.0 - p.mu, 0.0])
    return Background(qP, dqP1, dqP2, thetadot, dthetadot1, qS, qJ)


# --- the perturbation -------------------------------------------------------

def _as_canonical(a) -> np.ndarray:
    if isinstance(a, DelaunayElements):
        q, pm = delaunay_to_cartesian(a)
        return np.concatenate([q, pm])
    if isinstance(a, RotatingState):
        return dyn.to_momenta(np.asarray(a))
    return np.asarray(a, dtype=float)


def _inv_diff(d, shift):
    """1/|d| - 1/|d + shift| without cancellation (broadcast over leading axes)."""
    a2 = np.sum(d * d, axis=-1)
    b2 = a2 + 2.0 * np.sum(d * shift, axis=-1) + np.sum(shift * shift, axis=-1)
    a, b = np.sqrt(a2), np.sqrt(b2)
    return (b2 - a2) / (a * b * (a + b)), b


def _f_terms(Z, bg: Background, p: FourBodyParams, derivative: bool):
    """f and its nu-partials; Z has shape (N, 4), background has M phases -> (M, N)."""
    mu = p.mu
    q = Z[None, :, :2]
    pm = Z[None, :, 2:]
    qxp = (q[..., 0] * pm[..., 1] - q[..., 1] * pm[..., 0])
    dS0 = q - np.array([-mu, 0.0])
    dJ0 = q - np.array([1.0 - mu, 0.0])
    shift = (p.delta * bg.qP)[:, None, :]
    sun, rAS = _inv_diff(dS0, shift)
    jup, rAJ = _inv_diff(dJ0, shift)
    dP = q - bg.qP[:, None, :]
    rAP = np.sqrt(np.sum(dP * dP, axis=-1))
    if (np.min(rAS) < GUARD or np.min(rAJ) < GUARD or np.min(rAP) < GUARD):
        raise SingularityError("asteroid collides with a body")
    f = (-bg.thetadot[:, None] * qxp + (1.0 - mu) * sun + mu * jup
         - p.planet_coupling / rAP)
    if not derivative:
        return f, None, None
    dS = dS0 + shift
    dJ = dJ0 + shift
    out = []
    for dqP, dth in ((bg.dqP1, bg.dthetadot1), (bg.dqP2, np.zeros_like(bg.thetadot))):
        g = dqP[:, None, :]
        df = (-dth[:, None] * qxp
              + (1.0 - mu) * p.delta * np.sum(dS * g, axis=-1) / rAS**3
              + mu * p.delta * np.sum(dJ * g, axis=-1) / rAJ**3
              - p.planet_coupling * np.sum(dP * g, axis=-1) / rAP**3)
        out.append(df)
    return f, out[0], out[1]


def perturbation_f(a, nu: FrozenPhase, p: FourBodyParams, derivative: bool = False):
    """f = -thetadot q x p + (1-mu)(1/r1 - 1/r_AS) + mu(1/r2 - 1/r_AJ) - delta/r_AP.

    ``a`` is a canonical state array, a :class:`RotatingState` (velocities)
    or :class:`DelaunayElements`. With ``derivative`` the partials in nu1 and
    nu2 are returned as well.
    """
    Z = np.atleast_2d(_as_canonical(a))
    bg = background(nu.nu1, nu.nu2, p)
    f, d1, d2 = _f_terms(Z, bg, p, derivative)
    scalar = np.ndim(_as_canonical(a)) == 1
    pick = (lambda v: float(v[0, 0])) if scalar else (lambda v: v[0])
    if not derivative:
        return pick(f)
    return pick(f), pick(d1), pick(d2)


def rpc3bp_hamiltonian(Z, mu: float):
    """|p|^2/2 - q x p - (1-mu)/r1 - mu/r2 for canonical states."""
    Z = np.asarray(Z, dtype=float)
    x, y, px, py = Z[..., 0], Z[..., 1], Z[..., 2], Z[..., 3]
    r1 = np.hypot(x + mu, y)
    r2 = np.hypot(x - 1 + mu, y)
    return 0.5 * (px * px + py * py) - (x * py - y * px) - (1 - mu) / r1 - mu / r2


def asteroid_energy(a, nu: FrozenPhase, p: FourBodyParams, form: str = "cartesian") -> float:
    """H_A,rot at frozen phase nu, in Cartesian or Delaunay form."""
    Z = _as_canonical(a)
    mu = p.mu
    f = perturbation_f(Z, nu, p)
    if form == "cartesian":
        return float(rpc3bp_hamiltonian(Z, mu)) + f
    if form == "delaunay":
        el = a if isinstance(a, DelaunayElements) else cartesian_to_delaunay(Z[:2], Z[2:])
        x, y = Z[0], Z[1]
        dH = 1.0 / math.hypot(x, y) - (1 - mu) / math.hypot(x + mu, y) - mu / math.hypot(x - 1 + mu, y)
        return -0.5 / el.L**2 - el.G + dH + f
    raise DomainError(f"unknown energy form {form!r}")


def energy_level(Z, t: float, p: FourBodyParams) -> float:
    """H_A,rot - mu(1-mu)/2 at time t; equals the RPC3BP energy h when f = 0."""
    nu1, nu2 = p.nu(t)
    return asteroid_energy(Z, FrozenPhase(nu1, nu2), p) - 0.5 * p.alpha


# --- equations of motion ----------------------------------------------------

def _rhs(Z, bg_qS, bg_qJ, qP, omega, p):
    x, y, px, py = Z
    mu = p.mu
    dS = (x - bg_qS[0], y - bg_qS[1])
    dJ = (x - bg_qJ[0], y - bg_qJ[1])
    dP = (x - qP[0], y - qP[1])
    rS = math.hypot(*dS)
    rJ = math.hypot(*dJ)
    rP = math.hypot(*dP)
    if rS < GUARD or rJ < GUARD or rP < GUARD:
        raise SingularityError("asteroid collides with a body")
    kS, kJ, kP = (1 - mu) / rS**3, mu / rJ**3, p.planet_coupling / rP**3
    Vx = kS * dS[0] + kJ * dJ[0] + kP * dP[0]
    Vy = kS * dS[1] + kJ * dJ[1] + kP * dP[1]
    return [px + omega * y, py - omega * x, omega * py - Vx, -omega * px - Vy]


def frozen_rhs(nu: FrozenPhase, p: FourBodyParams):
    bg = background(nu.nu1, nu.nu2, p)
    qS, qJ, qP, om = bg.qS[0], bg.qJ[0], bg.qP[0], 1.0 + float(bg.thetadot[0])
    return lambda t, Z: _rhs(Z, qS, qJ, qP, om, p)


def full_rhs(p: FourBodyParams):
    def fun(t, Z):
        nu1, nu2 = p.nu(t)
        bg = background(nu1, nu2, p)
        return _rhs(Z, bg.qS[0], bg.qJ[0], bg.qP[0], 1.0 + float(bg.thetadot[0]), p)

    return fun


def integrate_frozen(Z0, nu: FrozenPhase, p: FourBodyParams, t_end: float,
                     cfg: dyn.IntegratorConfig = dyn.IntegratorConfig(), t_eval=None,
                     events=None):
    """Frozen-phase flow; ``events`` are passed to solve_ivp (a terminal hit ends early)."""
    res = solve_ivp(frozen_rhs(nu, p), (0.0, t_end), np.asarray(Z0, float), method=dyn.METHOD,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, t_eval=t_eval, events=events)
    if res.status < 0:
        raise SingularityError(res.message)
    return res.t, res.y.T


def integrate_full(Z0, t_span, p: FourBodyParams,
                   cfg: dyn.IntegratorConfig = dyn.IntegratorConfig(), t_eval=None,
                   dense: bool = False):
    res = solve_ivp(full_rhs(p), t_span, np.asarray(Z0, float), method=dyn.METHOD,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, t_eval=t_eval, dense_output=dense)
    if res.status < 0:
        raise SingularityError(res.message)
    return res


# --- frozen averages --------------------------------------------------------

@dataclass(frozen=True)
class FrozenAverage:
    """Orbit averages of f and of its nu-partials at each requested phase."""

    fbar: np.ndarray
    d_nu1: np.ndarray
    d_nu2: np.ndarray
    along: np.ndarray  # derivative along the phase flow, per unit nu1


def _nodes(orbit, n: int) -> np.ndarray:
    if isinstance(orbit, LyapunovOrbit):
        return dyn.to_momenta(orbit.sample(n)[1])
    return np.asarray(orbit, dtype=float)


def frozen_average(orbit, nu1, nu2, p: FourBodyParams, n_nodes: int = 128) -> FrozenAverage:
    """Average of f over one period of ``orbit`` with the phase held fixed.

    ``orbit`` is a :class:`LyapunovOrbit` or an array of canonical states at
    equally spaced times over one period (periodic trapezoid rule).
    ``along`` combines the partials with d(nu2)/d(nu1) = thetadot*T_P/(2 pi).
    """
    Z = _nodes(orbit, n_nodes)
    bg = background(nu1, nu2, p)
    f, d1, d2 = _f_terms(Z, bg, p, True)
    fbar, g1, g2 = f.mean(axis=1), d1.mean(axis=1), d2.mean(axis=1)
    rate2 = bg.thetadot * p.period / TWO_PI
    return FrozenAverage(fbar, g1, g2, g1 + rate2 * g2)


# --- nondegeneracy -----------------------------------------------------------

@dataclass(frozen=True)
class NondegeneracyReport:
    h: float
    nu1: np.ndarray
    nu2: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    variation: float
    floor: float
    degenerate: bool
    u: np.ndarray
    bracket_sun: np.ndarray
    bracket_jupiter: np.ndarray
    u_mean_position: np.ndarray
    omega1: float
    omega2: float
    theta_coefficient: float
    leading: np.ndarray
    leading_residual: float
    explained: float
    c_difference: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.f1 - self.f2

    @property
    def u_ratio(self) -> float:
        """u_x / (-(c1 - c2))_x; close to 1 for small mu and small orbits."""
        return float(self.u[0] / -self.c_difference[0])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# h = {float(self.h)!r}\n# variation = {float(self.variation)!r}\n")
            fh.write(f"# u = {float(self.u[0])!r} {float(self.u[1])!r}\n")
            fh.write(f"# omega1 = {float(self.omega1)!r}\n# omega2 = {float(self.omega2)!r}\n")
            fh.write("nu1,nu2,f1,f2,diff,leading\n")
            for row in zip(self.nu1, self.nu2, self.f1, self.f2, self.difference, self.leading):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def default_nu_grid(p: FourBodyParams, n: int = 512):
    """Phases met along the actual motion over one planet period."""
    nu1 = TWO_PI * np.arange(n) / n
    t = p.time_of(nu1)
    return nu1, p.theta(t)


def leading_vector(orbit1, orbit2, mu: float, n_nodes: int = 128):
    """(u, B_S, B_J): bracket differences of the two orbits and u = (1-mu) B_S + mu B_J.

    B_X is the difference between the orbit averages of (q - q_X)/|q - q_X|^3
    for X the Sun or Jupiter at their circular positions.
    """
    Z1, Z2 = _nodes(orbit1, n_nodes), _nodes(orbit2, n_nodes)

    def avg_vec(Z, centre):
        d = Z[:, :2] - centre
        return np.mean(d / np.linalg.norm(d, axis=1)[:, None] ** 3, axis=0)

    sun, jup = np.array([-mu, 0.0]), np.array([1.0 - mu, 0.0])
    BS = avg_vec(Z1, sun) - avg_vec(Z2, sun)
    BJ = avg_vec(Z1, jup) - avg_vec(Z2, jup)
    return (1 - mu) * BS + mu * BJ, BS, BJ


def _orbit_at(c, h: float | None) -> LyapunovOrbit:
    if isinstance(c, Cylinder):
        if h is None:
            raise DomainError("an energy is required to pick an orbit from a cylinder")
        if not c.contains(h):
            raise DomainError(f"energy {h} outside the {c.point} family range {c.h_range}")
        return c.orbit_at(h)
    if h is not None and abs(c.energy - h) > 1e-8:
        raise DomainError(f"orbit energy {c.energy} differs from requested {h}")
    return c


def nondegeneracy_diagnostic(cyl1, cyl2, h: float | None, p: FourBodyParams, nu_grid=None,
                             n_nodes: int = 128) -> NondegeneracyReport:
    """Variation of fbar1 - fbar2 over nu and its leading-term reconstruction.

    The leading term is delta <u, q_P(nu)> with u = (1-mu) B_S + mu B_J, where
    B_S, B_J come from :func:`leading_vector`. ``cyl1``/``cyl2`` are cylinders
    (the orbits at ``h`` are polished from them) or orbits on one level. Both the
    difference and the leading term carry a nu-independent offset (chiefly
    the thetadot term), so the comparison is made after removing means.
    """
    orbit1, orbit2 = _orbit_at(cyl1, h), _orbit_at(cyl2, h)
    if abs(orbit1.energy - orbit2.energy) > 1e-8:
        raise DomainError("orbits must lie on the same energy level")
    mu = p.mu
    nu1, nu2 = default_nu_grid(p) if nu_grid is None else (np.asarray(nu_grid[0]),
                                                          np.asarray(nu_grid[1]))
    Z1, Z2 = _nodes(orbit1, n_nodes), _nodes(orbit2, n_nodes)
    a1 = frozen_average(Z1, nu1, nu2, p)
    a2 = frozen_average(Z2, nu1, nu2, p)
    # quadrature floor: same averages with doubled nodes
    b1 = frozen_average(_nodes(orbit1, 2 * n_nodes), nu1, nu2, p)
    b2 = frozen_average(_nodes(orbit2, 2 * n_nodes), nu1, nu2, p)
    diff = a1.fbar - a2.fbar
    floor = float(np.max(np.abs((b1.fbar - b2.fbar) - diff))
                  + 64 * np.finfo(float).eps * np.max(np.abs(a1.fbar) + np.abs(a2.fbar)))
    variation = float(np.ptp(diff))

    u, BS, BJ = leading_vector(Z1, Z2, mu)
    u_pos = Z1[:, :2].mean(axis=0) - Z2[:, :2].mean(axis=0)

    l1, l2 = find_collinear_points(mu)
    c1 = np.array([1.0 - mu - l1.x, 0.0])
    c2 = np.array([1.0 - mu - l2.x, 0.0])

    def omega(Z, lx):
        V = dyn.to_velocities(Z)
        return float(np.mean((V[:, 0] - lx) * V[:, 3] - V[:, 1] * V[:, 2]))

    qxp = lambda Z: float(np.mean(Z[:, 0] * Z[:, 3] - Z[:, 1] * Z[:, 2]))
    bg = background(nu1, nu2, p)
    leading = p.delta * (bg.qP @ u)
    dc = diff - diff.mean()
    lc = leading - leading.mean()
    scale = float(np.max(np.abs(lc))) or 1.0
    resid = float(np.max(np.abs(dc - lc))) / scale
    denom = float(np.sum(dc * dc))
    explained = 1.0 - float(np.sum((dc - lc) ** 2)) / denom if denom > 0 else 0.0
    degenerate = variation <= 10.0 * floor
    if degenerate:
        log.warning("fbar1 - fbar2 is numerically constant at h=%.12g", orbit1.energy)
    return NondegeneracyReport(orbit1.energy, nu1, nu2, a1.fbar, a2.fbar, variation, floor,
                               degenerate, u, BS, BJ, u_pos, omega(Z1, l1.x), omega(Z2, l2.x),
                               qxp(Z1) - qxp(Z2), leading, resid, explained, c1 - c2)


# --- averaged energy growth --------------------------------------------------

@dataclass(frozen=True)
class GtlSolution:
    nu: np.ndarray
    h: np.ndarray
    active: np.ndarray
    switches: np.ndarray
    period: float
    diagnostic: str = ""
    sol: object | None = field(default=None, repr=False)

    @property
    def t(self) -> np.ndarray:
        return self.nu * self.period / TWO_PI

    def time_to_gain(self, dh: float) -> float:
        """First time at which h - h(0) reaches dh (nan if never)."""
        gain = self.h - self.h[0]
        idx = np.flatnonzero(gain >= dh)
        if idx.size == 0:
            return math.nan
        k = int(idx[0])
        if k == 0:
            return float(self.t[0])
        # linear interpolation between output samples
        g0, g1 = gain[k - 1], gain[k]
        s = (dh - g0) / (g1 - g0)
        return float(self.t[k - 1] + s * (self.t[k] - self.t[k - 1]))

    def slope(self, t_max: float | None = None) -> float:
        t, h = self.t, self.h
        if t_max is not None:
            keep = t <= t_max
            t, h = t[keep], h[keep]
        return float(np.polyfit(t, h, 1)[0])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("nu,h,active\n")
            for row in zip(self.nu, self.h, self.active):
                fh.write(f"{float(row[0])!r},{float(row[1])!r},{int(row[2])}\n")


class _VField:
    """v_i(h, nu1) from node tables interpolated along the two families."""

    def __init__(self, cyl1: Cylinder, cyl2: Cylinder, p: FourBodyParams, n_nodes: int):
        self.p = p
        self.cyls = (cyl1, cyl2)
        self.n = n_nodes
        self.lo = max(cyl1.h_range[0], cyl2.h_range[0])
        self.hi = min(cyl1.h_range[1], cyl2.h_range[1])

    def nodes(self, i: int, h: float) -> np.ndarray:
        S, _ = self.cyls[i].nodes_at(h, self.n)
        return dyn.to_momenta(S)

    def averages(self, h: float, nu1):
        nu1 = np.atleast_1d(nu1)
        nu2 = self.p.theta(self.p.time_of(nu1))
        return [frozen_average(self.nodes(i, h), nu1, nu2, self.p) for i in (0, 1)]

    def v(self, h: float, nu1):
        a1, a2 = self.averages(h, nu1)
        return a1.along, a2.along


def gtl_energy_ode(cyl1: Cylinder, cyl2: Cylinder, p: FourBodyParams, h0: float,
                   sigma: float = 0.0, beta0: float = 1.0, h_max: float | None = None,
                   nu_budget: float = 200.0, n_nodes: int = 64, rtol: float = 1e-9,
                   atol: float = 1e-14) -> GtlSolution:
    """Integrate dh/dnu = max(v1, v2) - sigma*beta0 along nu1, nu2 = theta(t(nu1)).

    v_i is the nu-derivative of the frozen orbit average along the phase flow.
    Integration stops at ``h_max`` (default: top of the common family range),
    below the families' common range, or when ``nu_budget`` is used up.
    Switches of the maximizing orbit are located as events.
    """
    vf = _VField(cyl1, cyl2, p, n_nodes)
    h_max = vf.hi if h_max is None else h_max
    if not (vf.lo <= h0 <= vf.hi):
        raise DomainError(f"h0={h0} outside the common family range [{vf.lo}, {vf.hi}]")
    # stall check over one sweep of nu1 at h0
    sweep = np.linspace(0.0, TWO_PI, 257)[:-1]
    s1, s2 = vf.v(h0, sweep)
    if np.all(np.maximum(s1, s2) <= sigma * beta0):
        return GtlSolution(np.array([0.0]), np.array([h0]), np.array([0]), np.array([]),
                           p.period, "stall: max(v1, v2) <= sigma*beta everywhere")

    def rhs(nu, y):
        h = min(max(y[0], vf.lo), vf.hi)
        v1, v2 = vf.v(h, nu)
        return [max(v1[0], v2[0]) - sigma * beta0]

    def switch(nu, y):
        h = min(max(y[0], vf.lo), vf.hi)
        v1, v2 = vf.v(h, nu)
        return v1[0] - v2[0]

    def top(nu, y):
        return y[0] - h_max

    def bottom(nu, y):
        return y[0] - vf.lo

    top.terminal = True
    bottom.terminal = True
    bottom.direction = -1
    # resolve the fast oscillation of q_P (one turn per 2 pi in time)
    max_step = TWO_PI / p.period * TWO_PI / 16.0 if p.delta > 0 else np.inf
    res = solve_ivp(rhs, (0.0, nu_budget), [h0], method="RK45", rtol=rtol, atol=atol,
                    max_step=max_step, events=[switch, top, bottom], dense_output=True)
    nu = res.t
    h = res.y[0]
    act = []
    for nui, hi in zip(nu, h):
        a, b = vf.v(min(max(hi, vf.lo), vf.hi), nui)
        act.append(1 if a[0] >= b[0] else 2)
    diag = ""
    if res.t_events[1].size:
        diag = "reached h_max"
    elif res.t_events[2].size:
        diag = "left the family range from below"
    elif res.status == 0:
        diag = "nu budget exhausted"
    return GtlSolution(nu, h, np.array(act), res.t_events[0], p.period, diag, res.sol)


def gtl_gain_identity(sol: GtlSolution, vf_or_cyls, p: FourBodyParams, n: int = 20001,
                      n_nodes: int = 64):
    """Quadrature of the gain identity along a computed h(nu).

    Returns (gain, half_sum, half_abs) with gain = h(end) - h(0),
    half_sum = (1/2) int (v1 + v2) dnu and half_abs = (1/2) int |v1 - v2| dnu.
    Since max(a, b) = (a + b)/2 + |a - b|/2, gain = half_sum + half_abs
    - sigma*beta0*(nu span).
    """
    vf = vf_or_cyls if isinstance(vf_or_cyls, _VField) else _VField(*vf_or_cyls, p, n_nodes)
    nu = np.linspace(sol.nu[0], sol.nu[-1], n)
    h = sol.sol(nu)[0]
    v1 = np.empty(n)
    v2 = np.empty(n)
    for k, (a, b) in enumerate(zip(nu, h)):
        x, y = vf.v(min(max(b, vf.lo), vf.hi), a)
        v1[k], v2[k] = x[0], y[0]
    half_sum = 0.5 * trapezoid(v1 + v2, nu)
    half_abs = 0.5 * trapezoid(np.abs(v1 - v2), nu)
    return float(sol.h[-1] - sol.h[0]), float(half_sum), float(half_abs)


# --- direct simulation ------------------------------------------------------

@dataclass(frozen=True)
class EnergyTrace:
    t: np.ndarray
    h: np.ndarray
    segment: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    events: tuple = ()
    diagnostic: str = ""
    max_tube_distance: float = 0.0

    def __post_init__(self):
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise DomainError("trace times must be strictly increasing")
        if not np.all(np.isfinite(self.h)):
            raise DomainError("trace energies must be finite")

    def slope(self) -> float:
        if len(self.t) < 2:
            return 0.0
        return float(np.polyfit(self.t, self.h, 1)[0])

    @property
    def gain(self) -> float:
        return float(self.h[-1] - self.h[0])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            if self.diagnostic:
                fh.write(f"# diagnostic = {self.diagnostic}\n")
            fh.write("t,h,segment,nu1,nu2\n")
            for row in zip(self.t, self.h, self.segment, self.nu1, self.nu2):
                fh.write(f"{float(row[0])!r},{float(row[1])!r},{int(row[2])},"
                         f"{float(row[3])!r},{float(row[4])!r}\n")


@dataclass(frozen=True)
class TransferLeg:
    """A heteroclinic connection with the flight times of its two halves."""

    energy: float
    connection: HeteroclinicConnection
    d0: float
    t_unstable: float
    t_stable: float

    @property
    def duration(self) -> float:
        return abs(self.t_unstable) + abs(self.t_stable)


def connection_table(searches) -> dict:
    """Direction key -> list of :class:`TransferLeg` from connection searches."""
    out: dict = {}
    for search in searches:
        for key, conns in search.connections.items():
            cu, cs = search.cuts[key]
            bu, bs = cu.branch, cs.branch
            for c in conns:
                if not c.converged:
                    continue
                fu = integrate_fiber(bu.orbit, "unstable", bu.side, bu.d0, c.phase_source,
                                     bu.section, bu.t_max, bu.cfg)
                fs = integrate_fiber(bs.orbit, "stable", bs.side, bs.d0, c.phase_target,
                                     bs.section, bs.t_max, bs.cfg)
                if fu.status != "section" or fs.status != "section":
                    continue
                out.setdefault(key, []).append(TransferLeg(search.energy, c, bu.d0, fu.t_end,
                                                           fs.t_end))
    return out


@dataclass(frozen=True)
class JumpPolicy:
    """Follow-and-jump controls for :func:`simulate_diffusion`.

    A jump to the other orbit is taken once its v exceeds the followed one's
    by ``hysteresis`` (relative) continuously for ``dwell`` time units
    (``None`` means one planet period). The state is re-projected onto the
    followed orbit every ``steer_fraction`` of its period; a pre-projection
    distance above ``tube_radius`` ends the run.
    """

    hysteresis: float = 0.1
    dwell: float | None = None
    steer_fraction: float = 0.25
    tube_radius: float = 1e-3
    start: int | None = None


def _project(Z, cyl: Cylinder, p: FourBodyParams, n: int = 256):
    """Nearest point of the family member at the state's RPC3BP energy.

    Returns the projected canonical state (same RPC3BP energy) and the
    phase-space distance (rotating velocities) before projection.
    """
    mu = p.mu
    V = dyn.to_velocities(Z)
    h = float(dyn.energy(V, mu))
    orb = cyl.orbit_at(h)
    t, S = orb.sample(n)
    k = int(np.argmin(np.linalg.norm(S - V, axis=1)))
    # local refinement of the phase on the dense orbit
    dt = orb.period / n
    r = minimize_scalar(lambda s: float(np.linalg.norm(orb.dense.sol(np.mod(s, orb.period))[:4] - V)),
                        bounds=(t[k] - dt, t[k] + dt), method="bounded",
                        options={"xatol": 1e-12 * orb.period})
    tp = float(np.mod(r.x, orb.period))
    P = orb.dense.sol(tp)[:4].copy()
    dist = float(np.linalg.norm(P - V))
    # restore the exact energy by rescaling the speed
    v2 = 2.0 * float(dyn.effective_potential(P[:2], mu)) + 2.0 * h
    speed = math.hypot(P[2], P[3])
    if v2 > 0 and speed > 0:
        P[2:] *= math.sqrt(v2) / speed
    return dyn.to_momenta(P), dist, orb, tp


def simulate_diffusion(p: FourBodyParams, cyl1: Cylinder, cyl2: Cylinder, h0: float,
                       t_budget: float, policy: JumpPolicy = JumpPolicy(), connections=None,
                       h_max: float | None = None, n_nodes: int = 64,
                       cfg: dyn.IntegratorConfig = dyn.IntegratorConfig(1e-11, 1e-12)
                       ) -> EnergyTrace:
    """Integrate the full time-dependent asteroid motion with follow-and-jump steering.

    The asteroid starts on the family member at energy ``h0`` with the larger
    v. Each follow segment integrates the full system over ``steer_fraction``
    of the orbit period and then re-projects onto the followed family at the
    state's RPC3BP energy; the projection distance is the tube diagnostic.
    ``connections`` is the output of :func:`connection_table`, used to steer
    jumps. The recorded energy is re-read from H_A,rot after
    every segment.
    """
    cyls = (cyl1, cyl2)
    names = ("L1", "L2")
    vf = _VField(cyl1, cyl2, p, n_nodes)
    h_max = vf.hi if h_max is None else h_max
    dwell = p.period if policy.dwell is None else policy.dwell
    nu1_0, _ = p.nu(0.0)
    v1, v2 = vf.v(h0, nu1_0)
    cur = policy.start if policy.start is not None else (0 if v1[0] >= v2[0] else 1)
    orb = cyls[cur].orbit_at(h0)
    Z = dyn.to_momenta(orb.initial_state)
    t = 0.0
    T_rec, H_rec, SEG, N1, N2 = [], [], [], [], []
    events = [("follow", names[cur], 0.0)]
    seg_id = 0
    diag = ""
    max_dist = 0.0
    better_since = None

    def record(tt, ZZ):
        nu1, nu2 = p.nu(tt)
        T_rec.append(tt)
        H_rec.append(energy_level(ZZ, tt, p))
        SEG.append(seg_id)
        N1.append(float(np.mod(nu1, TWO_PI)))
        N2.append(float(np.mod(nu2, TWO_PI)))

    record(t, Z)
    while t < t_budget:
        dt = policy.steer_fraction * orb.period
        try:
            res = integrate_full(Z, (t, t + dt), p, cfg)
        except SingularityError as exc:
            diag = f"collision: {exc}"
            break
        t = float(res.t[-1])
        Z = res.y[:, -1]
        try:
            Zp, dist, orb, _ = _project(Z, cyls[cur], p)
        except Exception as exc:  # energy left the family or correction failed
            diag = f"projection failed at t={t:.6g}: {exc}"
            break
        max_dist = max(max_dist, dist)
        if dist > policy.tube_radius:
            diag = f"shadowing lost at t={t:.6g}: tube distance {dist:.3e} > {policy.tube_radius:.1e}"
            record(t, Z)
            break
        Z = Zp
        record(t, Z)
        h_now = H_rec[-1]
        if h_now >= h_max:
            diag = "reached h_max"
            break
        # jump decision
        nu1, _ = p.nu(t)
        hq = min(max(h_now, vf.lo), vf.hi)
        a, b = vf.v(hq, nu1)
        vv = (a[0], b[0])
        other = 1 - cur
        if vv[other] > vv[cur] + policy.hysteresis * abs(vv[cur]):
            better_since = t if better_since is None else better_since
        else:
            better_since = None
        if better_since is not None and t - better_since >= dwell and connections:
            key = f"{names[cur]}->{names[other]}"
            cands = connections.get(key, [])
            if not cands:
                continue
            leg = min(cands, key=lambda c: abs(c.energy - h_now))
            src = cyls[cur].orbit_at(float(dyn.energy(dyn.to_velocities(Z), p.mu)))
            seed = fiber_seed(src, "unstable", interior_side(src, "unstable"), leg.d0,
                              leg.connection.phase_source)
            Z = dyn.to_momenta(seed)
            events.append(("jump", key, t))
            seg_id += 1
            try:
                res = integrate_full(Z, (t, t + leg.duration), p, cfg)
            except SingularityError as exc:
                diag = f"collision during jump: {exc}"
                break
            t = float(res.t[-1])
            Z = res.y[:, -1]
            cur = other
            try:
                Zp, dist, orb, _ = _project(Z, cyls[cur], p)
            except Exception as exc:
                diag = f"arrival projection failed at t={t:.6g}: {exc}"
                break
            if dist > policy.tube_radius:
                diag = f"shadowing lost on arrival at t={t:.6g}: distance {dist:.3e}"
                record(t, Z)
                break
            Z = Zp
            record(t, Z)
            events.append(("follow", names[cur], t))
            better_since = None
    return EnergyTrace(np.array(T_rec), np.array(H_rec), np.array(SEG), np.array(N1),
                       np.array(N2), tuple(events), diag, max_dist)

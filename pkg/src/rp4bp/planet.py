"""Resonant symmetric periodic orbit of the planet in the rotating three-body frame.

The planet is a test particle of the circular restricted problem, far from
both primaries. Its orbit is a perturbed Kepler ellipse about the origin
(m = k = 1), started at the x-axis with (ell, g) = (pi, -pi) and required to
cross the x-axis perpendicularly again after half a period.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import dynamics as dyn
from .coords import DelaunayElements, cartesian_to_delaunay, delaunay_to_cartesian
from .errors import CorrectionFailure, DomainError

log = logging.getLogger(__name__)

PLANET_CFG = dyn.IntegratorConfig(1e-13, 1e-12)
SHOOT_TOL = 1e-11


@dataclass(frozen=True)
class ResonanceSpec:
    """m:k resonance between the planet's mean motion and the frame rotation."""

    m: int = 63
    k: int = 1
    e_target: float = 0.3

    def __post_init__(self):
        if self.m <= 0 or self.k <= 0:
            raise DomainError("m and k must be positive integers")
        if math.gcd(self.m, self.k) != 1:
            raise DomainError(f"m={self.m} and k={self.k} must be coprime")
        if not (0.0 < self.e_target < 0.5):
            raise DomainError("target eccentricity must lie in (0, 1/2)")

    @property
    def epsilon(self) -> float:
        return self.k / self.m


@dataclass(frozen=True)
class PlanetGuess:
    elements: DelaunayElements
    period: float


def kepler_resonant_guess(spec: ResonanceSpec) -> PlanetGuess:
    """Unperturbed resonant ellipse: L = eps^(-1/3), T = 2 pi m, apoapsis on +x."""
    L = spec.epsilon ** (-1.0 / 3.0)
    G = L * math.sqrt(1.0 - spec.e_target**2)
    return PlanetGuess(DelaunayElements(L, math.pi, G, -math.pi), 2.0 * math.pi * spec.m)


def kepler_flow(el: DelaunayElements, t: float) -> tuple[float, float]:
    """Unwrapped (ell, g) after time t of the two-Kepler flow in the rotating frame."""
    return el.ell + t / el.L**3, el.g - t


def rotating_state(el: DelaunayElements) -> np.ndarray:
    """Rotating-frame state (x, y, vx, vy) of the Kepler point with elements el."""
    q, p = delaunay_to_cartesian(el)
    return np.array([q[0], q[1], p[0] + q[1], p[1] - q[0]])


def delaunay_of_state(s) -> DelaunayElements:
    """Osculating elements about the origin (m = k = 1) of a rotating-frame state."""
    pm = dyn.to_momenta(s)
    return cartesian_to_delaunay(pm[:2], pm[2:])


def _start(L: float, G: float) -> np.ndarray:
    return rotating_state(DelaunayElements(L, math.pi, min(G, L), -math.pi))


@dataclass(frozen=True)
class PlanetOrbit:
    spec: ResonanceSpec
    mu: float
    elements: DelaunayElements
    period: float
    initial_state: np.ndarray
    half_residual: float
    e_used: float
    cfg: dyn.IntegratorConfig = field(default=PLANET_CFG, repr=False)

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    @property
    def period_gap(self) -> float:
        """T_mu - 2 pi m."""
        return self.period - 2.0 * math.pi * self.spec.m

    @cached_property
    def dense(self) -> dyn.Trajectory:
        return dyn.integrate(self.initial_state, (0.0, self.period), self.mu, self.cfg)

    def state(self, t):
        """Rotating-frame state at time t, extended periodically."""
        return self.dense(np.mod(t, self.period))

    def position(self, t):
        s = self.state(t)
        return s[..., :2]

    def phase_state(self, nu1):
        """State at planet phase nu1 (2 pi per period)."""
        return self.state(np.asarray(nu1) * self.period / (2.0 * math.pi))

    @cached_property
    def periodicity_error(self) -> float:
        d = self.dense.final - self.initial_state
        return float(np.linalg.norm(d[:2]) + np.linalg.norm(d[2:]))

    def samples(self, n: int = 2048):
        t = np.linspace(0.0, self.period, n + 1)
        return t, self.dense(t)

    @cached_property
    def min_radius(self) -> float:
        _, S = self.samples(4096)
        return float(np.min(np.hypot(S[:, 0], S[:, 1])))

    def delaunay_drift(self, n: int = 2048) -> tuple[float, float]:
        """(max |L(t) - L(0)|, max |G(t) - G(0)|) over one period."""
        _, S = self.samples(n)
        els = [delaunay_of_state(s) for s in S]
        L = np.array([e.L for e in els])
        G = np.array([e.G for e in els])
        return float(np.max(np.abs(L - L[0]))), float(np.max(np.abs(G - G[0])))

    def max_perturbation_gradient(self, n: int = 2048) -> float:
        """max |d(Delta H)/dq| with Delta H = 1/r - (1-mu)/r1 - mu/r2 along the orbit."""
        _, S = self.samples(n)
        return float(np.max(np.linalg.norm(perturbation_gradient(S[:, :2], self.mu), axis=1)))

    def angular_momentum(self, t):
        """G_P(t) = q x p with p the canonical momentum."""
        s = np.atleast_2d(self.state(t))
        x, y, vx, vy = s.T
        G = x * (vy + x) - y * (vx - y)
        return G if np.ndim(t) else float(G[0])


def perturbation_gradient(q, mu: float) -> np.ndarray:
    """Gradient of 1/r - (1-mu)/r1 - mu/r2 with respect to the position."""
    q = np.atleast_2d(q)
    x, y = q[:, 0], q[:, 1]
    r3 = np.hypot(x, y) ** 3
    d1 = np.stack([x + mu, y], axis=1)
    d2 = np.stack([x - 1.0 + mu, y], axis=1)
    r13 = np.linalg.norm(d1, axis=1) ** 3
    r23 = np.linalg.norm(d2, axis=1) ** 3
    return (-q / r3[:, None] + (1 - mu) * d1 / r13[:, None] + mu * d2 / r23[:, None])


def _shoot(L, G, tau, mu, cfg):
    s0 = _start(L, G)
    tr = dyn.integrate(s0, (0.0, tau), mu, cfg, with_stm=True, dense=False)
    return s0, tr.final, tr.final_stm


def correct_planet_orbit(guess: PlanetGuess, mu: float, spec: ResonanceSpec | None = None,
                         tol: float = SHOOT_TOL, max_iter: int = 30, retries: int = 3,
                         cfg: dyn.IntegratorConfig = PLANET_CFG) -> PlanetOrbit:
    """Shoot on (L0, T/2) with G0, ell0 = pi, g0 = -pi held fixed.

    The conditions are y = vx = 0 at the half period. If Newton fails the
    target eccentricity is raised by 0.01 and the shooting restarted.
    """
    if not (0.0 < mu <= 0.5):
        raise DomainError(f"mass ratio must lie in (0, 1/2], got {mu}")
    spec = spec or ResonanceSpec(int(round(guess.period / (2 * math.pi))), 1,
                                 guess.elements.eccentricity)
    last = None
    for attempt in range(retries + 1):
        try:
            return _correct(guess, mu, spec, tol, max_iter, cfg)
        except CorrectionFailure as exc:
            last = exc
            e_new = guess.elements.eccentricity + 0.01
            log.warning("planet shooting failed at e=%.4f (%s); retrying with e=%.4f",
                        guess.elements.eccentricity, exc, e_new)
            L = guess.elements.L
            guess = PlanetGuess(DelaunayElements(L, math.pi, L * math.sqrt(1 - e_new**2), -math.pi),
                                guess.period)
    raise CorrectionFailure(f"planet orbit correction failed after {retries} retries",
                            last.residual if last else math.nan)


def _correct(guess, mu, spec, tol, max_iter, cfg) -> PlanetOrbit:
    L, G = guess.elements.L, guess.elements.G
    tau = 0.5 * guess.period
    res = math.inf
    for _ in range(max_iter):
        s0, s, phi = _shoot(L, G, tau, mu, cfg)
        F = np.array([s[1], s[2]])
        res = float(np.max(np.abs(F)))
        if res < tol:
            break
        hL = 1e-7 * L
        ds0 = (_start(L + hL, G) - _start(L - hL, G)) / (2 * hL)
        dsL = phi @ ds0
        f = dyn.vector_field(s, mu)
        D = np.array([[dsL[1], f[1]], [dsL[2], f[2]]])
        dL, dtau = np.linalg.solve(D, -F)
        # keep the step within the basin around the resonant guess
        scale = min(1.0, 0.05 * L / max(abs(dL), 1e-300), 2.0 / max(abs(dtau), 1e-300))
        L += scale * dL
        tau += scale * dtau
        if not (L > G and tau > 0 and math.isfinite(res)):
            raise CorrectionFailure("shooting left the elliptic domain", res)
    else:
        if res > 10 * tol:
            raise CorrectionFailure(f"shooting did not converge (residual {res:.3e})", res)
    el = DelaunayElements(L, math.pi, G, -math.pi)
    return PlanetOrbit(spec, mu, el, 2.0 * tau, _start(L, G), res, el.eccentricity, cfg)


def planet_orbit(mu: float, spec: ResonanceSpec = ResonanceSpec()) -> PlanetOrbit:
    return correct_planet_orbit(kepler_resonant_guess(spec), mu, spec)


# --- averaged perihelion drift -----------------------------------------------

def _secular_kernel(u, e):
    return (e - np.cos(u)) * (1.0 - e * np.cos(u)) ** -4


def secular_g_integral(e: float, L: float, G: float, n: int = 64) -> float:
    """(3/2) L^-3 (de/dG) * integral over u in [0, 2 pi] of (e - cos u)(1 - e cos u)^-4.

    de/dG = -G/(L^2 e). The periodic trapezoid rule is doubled until two
    successive values agree to 1e-14 relative. For small e the value tends
    to 3 pi G / L^5.
    """
    if not (0.0 < e < 1.0):
        raise DomainError("eccentricity must lie in (0, 1); de/dG is singular at e = 0")
    prev = None
    while True:
        u = 2.0 * math.pi * np.arange(n) / n
        val = 2.0 * math.pi * float(np.mean(_secular_kernel(u, e)))
        if prev is not None and abs(val - prev) <= 1e-14 * max(abs(val), 1e-300):
            break
        if n > 2**20:
            break
        prev, n = val, 2 * n
    de_dG = -G / (L * L * e)
    return 1.5 * L**-3 * de_dG * val


# --- persistence -------------------------------------------------------------

def write_planet(path, orb: PlanetOrbit, n: int = 512, header: dict | None = None) -> None:
    meta = {"mu": repr(float(orb.mu)), "m": orb.spec.m, "k": orb.spec.k,
            "e_target": repr(float(orb.spec.e_target)), "L0": repr(float(orb.elements.L)),
            "G0": repr(float(orb.elements.G)), "T_mu": repr(float(orb.period))}
    meta.update(header or {})
    t, S = orb.samples(n)
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"# {k} = {v}\n")
        fh.write("t,x,y,vx,vy\n")
        for ti, si in zip(t, S):
            fh.write(",".join(repr(float(v)) for v in (ti, *si)) + "\n")


def read_planet(path) -> PlanetOrbit:
    """Rebuild the orbit from the stored (L0, G0, T_mu) header with one polish."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
    spec = ResonanceSpec(int(meta["m"]), int(meta["k"]), float(meta["e_target"]))
    L0, G0 = float(meta["L0"]), float(meta["G0"])
    guess = PlanetGuess(DelaunayElements(L0, math.pi, G0, -math.pi), float(meta["T_mu"]))
    return correct_planet_orbit(guess, float(meta["mu"]), spec, retries=0)

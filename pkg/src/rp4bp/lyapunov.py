"""Planar Lyapunov orbits about L1/L2, their continuation and Floquet data."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import dynamics as dyn
from .equilibria import LagrangePoint, Linearization, lagrange_point, linearize
from .errors import CorrectionFailure, DomainError, SingularityError

log = logging.getLogger(__name__)

CORRECTION_TOL = 1e-12
MAX_NEWTON = 25


@dataclass(frozen=True)
class LyapunovOrbit:
    """A symmetric periodic orbit started on the x-axis with vx = 0."""

    point: str
    mu: float
    initial_state: np.ndarray
    period: float
    jacobi: float
    monodromy: np.ndarray
    floquet_lambda: float
    amplitude: float
    return_error: float
    half_residual: float = 0.0
    cfg: dyn.IntegratorConfig = field(default=dyn.TIGHT, repr=False)

    @property
    def energy(self) -> float:
        return -0.5 * self.jacobi

    @property
    def splitting_rate(self) -> float:
        """Hyperbolic exponent log(Lambda)/T of the splitting."""
        return math.log(self.floquet_lambda) / self.period

    @property
    def x0(self) -> float:
        return float(self.initial_state[0])

    @property
    def vy0(self) -> float:
        return float(self.initial_state[3])

    @cached_property
    def eigen(self) -> dict:
        """Unstable/stable eigenvectors of the monodromy (unit norm)."""
        w, V = np.linalg.eig(self.monodromy)
        iu = int(np.argmax(np.abs(w)))
        is_ = int(np.argmin(np.abs(w)))
        vu = np.real(V[:, iu])
        vs = np.real(V[:, is_])
        return {"values": w, "unstable": vu / np.linalg.norm(vu),
                "stable": vs / np.linalg.norm(vs)}

    @cached_property
    def dense(self) -> dyn.Trajectory:
        """One full period with the state-transition matrix, dense output."""
        return dyn.integrate(self.initial_state, (0.0, self.period), self.mu, self.cfg,
                             with_stm=True, dense=True)

    def sample(self, n: int, with_stm: bool = False):
        """States (and STMs) at n equally spaced phases t_j = j T / n."""
        t = np.arange(n) * self.period / n
        Y = self.dense.sol(t).T
        states = Y[:, :4]
        if not with_stm:
            return t, states
        return t, states, Y[:, 4:].reshape(n, 4, 4)

    def splitting_constants(self, n: int = 64) -> tuple[float, float]:
        """(k, lam) with |DPhi_t v_u| <= k e^{lam t}, |DPhi_t v_s| <= k e^{-lam t}.

        Sampled over one period on unit Floquet vectors; ``lam`` is
        :attr:`splitting_rate`.
        """
        lam = self.splitting_rate
        t, _, phis = self.sample(n + 1, with_stm=True)
        t = np.append(t[1:], self.period)
        phis = np.concatenate([phis[1:], self.monodromy[None]])
        gu = np.linalg.norm(phis @ self.eigen["unstable"], axis=1) * np.exp(-lam * t)
        gs = np.linalg.norm(phis @ self.eigen["stable"], axis=1) * np.exp(lam * t)
        return float(max(gu.max(), gs.max(), 1.0)), lam


@dataclass(frozen=True)
class OrbitSeed:
    state: np.ndarray
    period: float


def seed_orbit(lin: Linearization, lp: LagrangePoint, amplitude: float) -> OrbitSeed:
    """Point of the linear centre ellipse on the x-axis with vx = 0.

    ``amplitude`` is the signed x-offset from the Lagrangian point; the
    period guess is 2 pi / kappa.
    """
    w = lin.w1 / lin.w1[0]
    direction = np.real(w)
    direction[1] = direction[2] = 0.0
    state = lp.state + amplitude * direction
    return OrbitSeed(state, 2.0 * math.pi / lin.kappa)


def _half_period_residual(x0, vy0, tau, mu, cfg):
    tr = dyn.integrate([x0, 0.0, 0.0, vy0], (0.0, tau), mu, cfg, with_stm=True, dense=False)
    s, phi = tr.final, tr.final_stm
    f = dyn.vector_field(s, mu)
    return s, phi, f


def _finish(point, mu, x0, vy0, tau, half_res, cfg) -> LyapunovOrbit:
    s0 = np.array([x0, 0.0, 0.0, vy0])
    T = 2.0 * tau
    tr = dyn.integrate(s0, (0.0, T), mu, cfg, with_stm=True, dense=False)
    M = tr.final_stm
    ret = float(np.max(np.abs(tr.final - s0)))
    w = np.linalg.eigvals(M)
    lam = float(np.max(np.abs(w)))
    s_half = dyn.integrate(s0, (0.0, tau), mu, cfg, dense=False).final
    amp = 0.5 * abs(s_half[0] - x0)
    return LyapunovOrbit(point, mu, s0, T, dyn.jacobi_constant(s0, mu), M, lam, amp, ret,
                         half_res, cfg)


def correct_orbit(seed: OrbitSeed, p, point: str = "", fix: str = "x0",
                  target_jacobi: float | None = None, tol: float = CORRECTION_TOL,
                  max_iter: int = MAX_NEWTON, cfg: dyn.IntegratorConfig = dyn.TIGHT
                  ) -> LyapunovOrbit:
    """Symmetric single-shooting differential correction.

    The orbit starts at (x0, 0, 0, vy0) and must cross y = 0 perpendicularly
    at the half period tau. ``fix`` selects the held quantity:

    * ``"x0"``: solve for (vy0, tau);
    * ``"vy0"``: solve for (x0, tau);
    * ``"jacobi"``: solve for (x0, vy0, tau) on the level ``target_jacobi``.
    """
    mu = dyn._mu(p)
    if fix == "jacobi" and target_jacobi is None:
        raise DomainError("target_jacobi is required when fixing the energy")
    x0, vy0 = float(seed.state[0]), float(seed.state[3])
    tau = 0.5 * seed.period
    res = math.inf
    for it in range(max_iter):
        s, phi, f = _half_period_residual(x0, vy0, tau, mu, cfg)
        F = [s[1], s[2]]
        if fix == "x0":
            D = np.array([[phi[1, 3], f[1]], [phi[2, 3], f[2]]])
        elif fix == "vy0":
            D = np.array([[phi[1, 0], f[1]], [phi[2, 0], f[2]]])
        elif fix == "jacobi":
            s0 = np.array([x0, 0.0, 0.0, vy0])
            gJ = dyn.jacobi_gradient(s0, mu)
            F.append(dyn.jacobi_constant(s0, mu) - target_jacobi)
            D = np.array([[phi[1, 0], phi[1, 3], f[1]],
                          [phi[2, 0], phi[2, 3], f[2]],
                          [gJ[0], gJ[3], 0.0]])
        else:
            raise DomainError(f"unknown correction mode {fix!r}")
        F = np.array(F)
        res = float(np.max(np.abs(F)))
        if res < tol:
            break
        try:
            dx = np.linalg.solve(D, -F)
        except np.linalg.LinAlgError as exc:
            raise CorrectionFailure("singular correction matrix", res) from exc
        # damp overly long steps
        scale = min(1.0, 0.1 * max(1.0, abs(tau)) / max(abs(dx[-1]), 1e-300))
        dx = dx * scale
        if fix == "x0":
            vy0 += dx[0]
        elif fix == "vy0":
            x0 += dx[0]
        else:
            x0 += dx[0]
            vy0 += dx[1]
        tau += dx[-1]
        if not (tau > 0 and math.isfinite(res)):
            raise CorrectionFailure("half period became non-positive", res)
    else:
        if res > 100 * tol:
            raise CorrectionFailure(f"correction did not converge (residual {res:.3e})", res)
    return _finish(point, mu, x0, vy0, tau, res, cfg)


def lyapunov_orbit(p, which: str, amplitude: float | None = None) -> LyapunovOrbit:
    """Small-amplitude orbit about L1/L2 straight from the linearization."""
    mu = dyn._mu(p)
    lp = lagrange_point(mu, which)
    lin = linearize(lp)
    if amplitude is None:
        amplitude = default_start_amplitude(lp)
    return correct_orbit(seed_orbit(lin, lp, amplitude), mu, which)


def default_start_amplitude(lp: LagrangePoint) -> float:
    """1e-3 of the L_i-Jupiter distance, on the side away from Jupiter."""
    sign = -1.0 if lp.which == "L1" else 1.0
    return sign * 1e-3 * lp.jupiter_distance


# --- families ----------------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Family of Lyapunov orbits ordered by energy."""

    point: str
    mu: float
    orbits: tuple[LyapunovOrbit, ...]
    diagnostic: str = ""

    def __post_init__(self):
        h = self.energies
        if len(h) > 1 and not np.all(np.diff(h) > 0):
            raise DomainError("family energies must be strictly increasing")

    @property
    def energies(self) -> np.ndarray:
        return np.array([o.energy for o in self.orbits])

    @property
    def h_range(self) -> tuple[float, float]:
        h = self.energies
        return float(h[0]), float(h[-1])

    def __len__(self):
        return len(self.orbits)

    def contains(self, h: float) -> bool:
        lo, hi = self.h_range
        return lo <= h <= hi

    @cached_property
    def _interp(self):
        h = self.energies
        data = np.array([[o.x0, o.vy0, o.period] for o in self.orbits])
        return PchipInterpolator(h, data, axis=0, extrapolate=True)

    def interpolate(self, h: float) -> OrbitSeed:
        x0, vy0, T = self._interp(h)
        return OrbitSeed(np.array([x0, 0.0, 0.0, vy0]), float(T))

    def orbit_at(self, h: float, tol: float = CORRECTION_TOL) -> LyapunovOrbit:
        """Interpolate in energy, then polish at fixed Jacobi constant -2h."""
        lo, hi = self.h_range
        span = hi - lo
        if not (lo - 0.05 * span <= h <= hi + 0.05 * span):
            raise DomainError(f"energy {h} outside family range [{lo}, {hi}]")
        seed = self.interpolate(h)
        return correct_orbit(seed, self.mu, self.point, fix="jacobi", target_jacobi=-2.0 * h,
                             tol=tol, cfg=self.orbits[0].cfg)

    @cached_property
    def _node_cache(self) -> dict:
        return {}

    def nodes(self, n: int):
        """Phase-aligned samples of every member: array (len, n, 4) and periods."""
        if n not in self._node_cache:
            S = np.array([_plain_samples(o, n) for o in self.orbits])
            T = np.array([o.period for o in self.orbits])
            self._node_cache[n] = (S, T)
        return self._node_cache[n]

    def nodes_at(self, h: float, n: int):
        """Approximate orbit samples at energy h by cubic interpolation of nodes."""
        S, T = self.nodes(n)
        key = ("spline", n)
        if key not in self._node_cache:
            hh = self.energies
            self._node_cache[key] = (CubicSpline(hh, S, axis=0), CubicSpline(hh, T))
        fS, fT = self._node_cache[key]
        return fS(h), float(fT(h))

    def summary_rows(self):
        return [(o.energy, o.x0, o.vy0, o.period, o.floquet_lambda) for o in self.orbits]


FAMILY_COLUMNS = ("h", "x0", "vy0", "T", "Lambda")


def _plain_samples(o: LyapunovOrbit, n: int) -> np.ndarray:
    """Samples at t_j = j T / n without the variational equations."""
    t = np.arange(n) * o.period / n
    return dyn.integrate(o.initial_state, (0.0, o.period), o.mu, o.cfg, dense=False,
                         t_eval=t).states


def continue_family(start: LyapunovOrbit, h_range: tuple[float, float], p,
                    max_dh: float = 2e-4, initial_step: float | None = None,
                    max_step: float | None = None, min_step: float = 1e-10,
                    max_orbits: int = 2000) -> Cylinder:
    """Continue ``start`` in x-amplitude until the family covers ``h_range``.

    The continuation parameter is the crossing abscissa x0, moved away from
    the Lagrangian point with an adaptive step; each predicted orbit is
    corrected with x0 held fixed. Steps whose energy jump exceeds ``max_dh``
    are rejected and halved. A step underflow returns the partial family with
    a diagnostic instead of raising.
    """
    mu = dyn._mu(p)
    h_lo, h_hi = h_range
    lp = lagrange_point(mu, start.point)
    direction = math.copysign(1.0, start.x0 - lp.x)
    d = lp.jupiter_distance
    step = initial_step or max(abs(start.x0 - lp.x), 1e-4 * d)
    max_step = max_step or 0.02 * d
    orbits = [start]
    diagnostic = ""
    while orbits[-1].energy < h_hi and len(orbits) < max_orbits:
        last = orbits[-1]
        x_new = last.x0 + direction * step
        if len(orbits) >= 2:
            prev = orbits[-2]
            slope_v = (last.vy0 - prev.vy0) / (last.x0 - prev.x0)
            slope_T = (last.period - prev.period) / (last.x0 - prev.x0)
            vy_guess = last.vy0 + slope_v * (x_new - last.x0)
            T_guess = last.period + slope_T * (x_new - last.x0)
        else:
            vy_guess = last.vy0 * (x_new - lp.x) / (last.x0 - lp.x)
            T_guess = last.period
        seed = OrbitSeed(np.array([x_new, 0.0, 0.0, vy_guess]), T_guess)
        try:
            orb = correct_orbit(seed, mu, start.point, fix="x0", cfg=start.cfg)
            ok = orb.energy > last.energy and (orb.energy - last.energy) <= max_dh
        except (CorrectionFailure, SingularityError):
            ok = False
        if not ok:
            step *= 0.5
            if step < min_step:
                diagnostic = f"continuation stalled at h={last.energy:.12g} (step underflow)"
                log.warning(diagnostic)
                break
            continue
        orbits.append(orb)
        step = min(step * 1.5, max_step)
    # drop leading members below the requested window, keeping one for interpolation
    keep = [o for o in orbits if o.energy >= h_lo]
    first = len(orbits) - len(keep)
    if first > 0:
        keep = orbits[first - 1:]
    return Cylinder(start.point, mu, tuple(keep), diagnostic)


def build_family(p, which: str, h_max: float, max_dh: float = 2e-4) -> Cylinder:
    """Family about L1/L2 from its small-amplitude end up to energy ``h_max``."""
    start = lyapunov_orbit(p, which)
    return continue_family(start, (start.energy, h_max), p, max_dh=max_dh)


def default_energy_range(p, n_probe: int = 0) -> tuple[float, float]:
    """Window from just above the L2 critical energy to a moderate amplitude.

    The upper end is where the L1 orbit's x-excursion reaches half the
    L1-Jupiter distance, estimated from the linear centre ellipse.
    """
    mu = dyn._mu(p)
    l1 = lagrange_point(mu, "L1")
    l2 = lagrange_point(mu, "L2")
    h_lo = l2.critical_energy + 1e-3 * (l2.critical_energy - l1.critical_energy + 1e-6)
    lin = linearize(l1)
    A = 0.5 * l1.jupiter_distance
    seed = seed_orbit(lin, l1, A)
    h_hi = float(dyn.energy(seed.state, mu))
    return h_lo, h_hi


def write_family(path, cyl: Cylinder, header: dict | None = None) -> None:
    meta = {"mu": repr(float(cyl.mu)), "point": cyl.point,
            "rel_tol": repr(float(cyl.orbits[0].cfg.rel_tol)), "abs_tol": repr(float(cyl.orbits[0].cfg.abs_tol))}
    meta.update(header or {})
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"# {k} = {v}\n")
        fh.write(",".join(FAMILY_COLUMNS) + "\n")
        for row in cyl.summary_rows():
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_family_table(path):
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
            elif line and not line.startswith("h,"):
                rows.append([float(v) for v in line.split(",")])
    return meta, np.array(rows)


def read_family(path) -> Cylinder:
    """Reload a family; every member is re-polished from its stored row."""
    meta, rows = read_family_table(path)
    mu = float(meta["mu"])
    cfg = dyn.IntegratorConfig(float(meta.get("rel_tol", 1e-13)), float(meta.get("abs_tol", 1e-13)))
    orbits = []
    for h, x0, vy0, T, _ in rows:
        seed = OrbitSeed(np.array([x0, 0.0, 0.0, vy0]), T)
        orbits.append(correct_orbit(seed, mu, meta["point"], fix="x0", cfg=cfg))
    return Cylinder(meta["point"], mu, tuple(orbits))

"""Restricted planar circular three-body problem in the rotating frame.

The primaries of mass ``1 - mu`` and ``mu`` sit at ``(-mu, 0)`` and
``(1 - mu, 0)``. States carry rotating-frame velocities ``(x, y, vx, vy)``
and obey

    x'' - 2 y' = Omega_x,    y'' + 2 x' = Omega_y,

    Omega = (x^2 + y^2)/2 + (1 - mu)/r1 + mu/r2 + mu (1 - mu)/2.

Canonical momenta are ``px = vx - y`` and ``py = vy + x``; symplectic checks
convert to them explicitly (see :func:`to_momenta`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, SingularityError

#: Integration scheme: Dormand-Prince 8(5,3) with 7th-order dense output.
METHOD = "DOP853"
COLLISION_RADIUS = 1e-6

# velocity -> momentum map (x, y, vx, vy) -> (x, y, vx - y, vy + x)
_T = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, -1.0, 1.0, 0], [1.0, 0, 0, 1.0]])
_T_INV = np.linalg.inv(_T)
J4 = np.array([[0, 0, 1.0, 0], [0, 0, 0, 1.0], [-1.0, 0, 0, 0], [0, -1.0, 0, 0]])
REFLECTION = np.diag([1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class Rpc3bpParams:
    mu: float

    def __post_init__(self):
        if not (0.0 < self.mu <= 0.5):
            raise DomainError(f"mass ratio must lie in (0, 1/2], got {self.mu}")

    def __float__(self):
        return float(self.mu)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = math.inf

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("integration tolerances must be positive")


TIGHT = IntegratorConfig(1e-13, 1e-13)


def _mu(p) -> float:
    return float(getattr(p, "mu", p))


# --- potential ---------------------------------------------------------------

def _distances(x, y, mu):
    r1 = np.hypot(x + mu, y)
    r2 = np.hypot(x - 1.0 + mu, y)
    if np.any(r1 == 0.0) or np.any(r2 == 0.0):
        raise SingularityError("position coincides with a primary")
    return r1, r2


def effective_potential(pos, p, derivatives: bool = False):
    """Omega at ``pos``; with ``derivatives`` also its gradient and Hessian."""
    mu = _mu(p)
    x, y = float(pos[0]), float(pos[1])
    r1, r2 = _distances(x, y, mu)
    om = 0.5 * (x * x + y * y) + (1 - mu) / r1 + mu / r2 + 0.5 * mu * (1 - mu)
    if not derivatives:
        return om
    return om, potential_gradient(pos, mu), potential_hessian(pos, mu)


def potential_gradient(pos, p) -> np.ndarray:
    mu = _mu(p)
    x, y = float(pos[0]), float(pos[1])
    d1, d2 = x + mu, x - 1 + mu
    r1, r2 = _distances(x, y, mu)
    c1, c2 = (1 - mu) / r1**3, mu / r2**3
    return np.array([x - c1 * d1 - c2 * d2, y - (c1 + c2) * y])


def potential_hessian(pos, p) -> np.ndarray:
    mu = _mu(p)
    x, y = float(pos[0]), float(pos[1])
    d1, d2 = x + mu, x - 1 + mu
    r1, r2 = _distances(x, y, mu)
    c1, c2 = (1 - mu) / r1**3, mu / r2**3
    e1, e2 = 3 * (1 - mu) / r1**5, 3 * mu / r2**5
    oxx = 1 - c1 - c2 + e1 * d1 * d1 + e2 * d2 * d2
    oyy = 1 - c1 - c2 + (e1 + e2) * y * y
    oxy = (e1 * d1 + e2 * d2) * y
    return np.array([[oxx, oxy], [oxy, oyy]])


# --- vector field ------------------------------------------------------------

def _rhs(t, s, mu):
    x, y, vx, vy = s[0], s[1], s[2], s[3]
    d1, d2 = x + mu, x - 1.0 + mu
    r1sq, r2sq = d1 * d1 + y * y, d2 * d2 + y * y
    r1, r2 = math.sqrt(r1sq), math.sqrt(r2sq)
    if r1 < COLLISION_RADIUS or r2 < COLLISION_RADIUS:
        raise SingularityError(f"collision with a primary at t={t:.6g} (r1={r1:.3e}, r2={r2:.3e})")
    c1, c2 = (1.0 - mu) / (r1sq * r1), mu / (r2sq * r2)
    return np.array([vx, vy, x - c1 * d1 - c2 * d2 + 2.0 * vy, y - (c1 + c2) * y - 2.0 * vx])


def _rhs_stm(t, s, mu):
    x, y, vx, vy = s[0], s[1], s[2], s[3]
    d1, d2 = x + mu, x - 1.0 + mu
    r1sq, r2sq = d1 * d1 + y * y, d2 * d2 + y * y
    r1, r2 = math.sqrt(r1sq), math.sqrt(r2sq)
    if r1 < COLLISION_RADIUS or r2 < COLLISION_RADIUS:
        raise SingularityError(f"collision with a primary at t={t:.6g} (r1={r1:.3e}, r2={r2:.3e})")
    c1, c2 = (1.0 - mu) / (r1sq * r1), mu / (r2sq * r2)
    e1, e2 = 3.0 * (1.0 - mu) / (r1sq * r1sq * r1), 3.0 * mu / (r2sq * r2sq * r2)
    oxx = 1.0 - c1 - c2 + e1 * d1 * d1 + e2 * d2 * d2
    oyy = 1.0 - c1 - c2 + (e1 + e2) * y * y
    oxy = (e1 * d1 + e2 * d2) * y
    phi = s[4:].reshape(4, 4)
    out = np.empty(20)
    out[0], out[1] = vx, vy
    out[2] = x - c1 * d1 - c2 * d2 + 2.0 * vy
    out[3] = y - (c1 + c2) * y - 2.0 * vx
    dphi = out[4:].reshape(4, 4)
    dphi[0] = phi[2]
    dphi[1] = phi[3]
    dphi[2] = oxx * phi[0] + oxy * phi[1] + 2.0 * phi[3]
    dphi[3] = oxy * phi[0] + oyy * phi[1] - 2.0 * phi[2]
    return out


def vector_field(s, p) -> np.ndarray:
    """Time derivative of the rotating state ``s``."""
    return _rhs(0.0, np.asarray(s, dtype=float), _mu(p))


def jacobian(s, p) -> np.ndarray:
    """Analytic 4x4 Jacobian of :func:`vector_field` (the variational matrix)."""
    H = potential_hessian(s, p)
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    A[2:, :2] = H
    A[2, 3], A[3, 2] = 2.0, -2.0
    return A


def jacobi_constant(s, p):
    """J = 2 Omega - |v|^2. Accepts one state or an (n, 4) array of states."""
    mu = _mu(p)
    s = np.asarray(s, dtype=float)
    x, y, vx, vy = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    r1, r2 = _distances(x, y, mu)
    om = 0.5 * (x * x + y * y) + (1 - mu) / r1 + mu / r2 + 0.5 * mu * (1 - mu)
    J = 2.0 * om - (vx * vx + vy * vy)
    return float(J) if J.ndim == 0 else J


def jacobi_gradient(s, p) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    g = potential_gradient(s, p)
    return np.array([2 * g[0], 2 * g[1], -2 * s[2], -2 * s[3]])


def energy(s, p):
    """RPC3BP energy h = -J/2."""
    return -0.5 * jacobi_constant(s, p)


def to_momenta(s) -> np.ndarray:
    """Rotating velocities to canonical momenta; works on (..., 4) arrays."""
    s = np.asarray(s, dtype=float)
    return s @ _T.T


def to_velocities(sp) -> np.ndarray:
    sp = np.asarray(sp, dtype=float)
    return sp @ _T_INV.T


def stm_in_momenta(phi) -> np.ndarray:
    """State-transition matrix expressed in canonical (q, p) coordinates."""
    return _T @ phi @ _T_INV


def symplectic_defect(phi) -> float:
    """max |Phi^T J Phi - J| for a velocity-coordinate STM."""
    P = stm_in_momenta(phi)
    return float(np.max(np.abs(P.T @ J4 @ P - J4)))


def reflect(s) -> np.ndarray:
    """Reversing symmetry (x, y, vx, vy) -> (x, -y, -vx, vy), paired with t -> -t."""
    return np.asarray(s, dtype=float) @ REFLECTION


# --- integration -------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    """Scalar event function g(t, state) with crossing direction.

    ``terminal`` follows scipy: False, True, or the number of hits after
    which integration stops.
    """

    fn: Callable[[float, np.ndarray], float]
    direction: int = 0
    terminal: bool | int = False
    name: str = ""


def section(index: int, value: float, direction: int = 0, terminal: bool | int = False,
            name: str = "") -> Event:
    """Event for the coordinate section ``state[index] == value``."""

    def fn(t, s, _i=index, _v=value):
        return s[_i] - _v

    return Event(fn, direction, terminal, name or f"s[{index}]={value}")


@dataclass(frozen=True)
class EventHit:
    t: float
    state: np.ndarray
    stm: np.ndarray | None
    event: int
    name: str = ""


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    stm: np.ndarray | None
    mu: float
    events: tuple[EventHit, ...] = ()
    sol: object | None = field(default=None, repr=False)
    terminated: bool = False

    def __call__(self, t):
        if self.sol is None:
            raise ValueError("trajectory was integrated without dense output")
        y = self.sol(t)
        return y[:4] if np.ndim(t) == 0 else y[:4].T

    def stm_at(self, t) -> np.ndarray:
        if self.sol is None or self.stm is None:
            raise ValueError("no dense state-transition matrix available")
        return self.sol(t)[4:].reshape(4, 4)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_stm(self) -> np.ndarray | None:
        return None if self.stm is None else self.stm[-1]

    def hits(self, name_or_index) -> list[EventHit]:
        key = "event" if isinstance(name_or_index, int) else "name"
        return [h for h in self.events if getattr(h, key) == name_or_index]

    def jacobi(self) -> np.ndarray:
        return jacobi_constant(self.states, self.mu)

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.t, self.states, self.mu)


TRAJECTORY_COLUMNS = ("t", "x", "y", "vx", "vy", "J")


def write_trajectory_csv(path, t, states, mu) -> None:
    J = jacobi_constant(states, mu)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for ti, si, ji in zip(t, states, np.atleast_1d(J)):
            w.writerow([repr(float(v)) for v in (ti, *si, ji)])


def _polish(sol, fn, t, n_state):
    """Newton refinement of an event time on the dense output."""
    for _ in range(3):
        y = sol(t)
        g = fn(t, y[:n_state])
        if abs(g) < 1e-15:
            break
        h = 1e-7 * max(1.0, abs(t))
        dg = (fn(t + h, sol(t + h)[:n_state]) - fn(t - h, sol(t - h)[:n_state])) / (2 * h)
        if dg == 0.0:
            break
        t = t - g / dg
    return t, sol(t)


def integrate(s0, tspan, p, cfg: IntegratorConfig | None = None, with_stm: bool = False,
              events: Sequence[Event] = (), dense: bool = True, t_eval=None,
              stm0=None) -> Trajectory:
    """Integrate the rotating-frame equations from ``s0`` over ``tspan``.

    Backward integration is requested with ``tspan[1] < tspan[0]``. Event
    crossings are located on the dense interpolant and polished by Newton
    iteration; hits are returned in chronological order. A close approach
    (within ``COLLISION_RADIUS``) to a primary raises
    :class:`SingularityError`.
    """
    mu = _mu(p)
    cfg = cfg or IntegratorConfig()
    s0 = np.asarray(s0, dtype=float)[:4]
    if with_stm:
        phi0 = np.eye(4) if stm0 is None else np.asarray(stm0, dtype=float)
        y0 = np.concatenate([s0, phi0.ravel()])
        fun = _rhs_stm
    else:
        y0 = s0.copy()
        fun = _rhs
    t0, t1 = float(tspan[0]), float(tspan[1])
    if t1 == t0:
        stm = phi0[None] if with_stm else None
        return Trajectory(np.array([t0]), s0[None], stm, mu)

    ivp_events = []
    for ev in events:
        def g(t, y, *_args, _fn=ev.fn):
            return _fn(t, y[:4])
        g.direction = ev.direction
        g.terminal = ev.terminal
        ivp_events.append(g)

    need_dense = dense or bool(events)
    res = solve_ivp(fun, (t0, t1), y0, method=METHOD, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.max_step, args=(mu,), dense_output=need_dense,
                    events=ivp_events or None, t_eval=t_eval)
    if res.status < 0:
        raise SingularityError(f"integration failed: {res.message}")

    hits = []
    if events:
        for i, ev in enumerate(events):
            for te in res.t_events[i]:
                te, ye = _polish(res.sol, ev.fn, float(te), 4)
                hits.append(EventHit(te, ye[:4].copy(),
                                     ye[4:].reshape(4, 4).copy() if with_stm else None,
                                     i, ev.name))
        hits.sort(key=lambda h: h.t if t1 > t0 else -h.t)
    Y = res.y.T
    stm = Y[:, 4:].reshape(-1, 4, 4) if with_stm else None
    return Trajectory(res.t, Y[:, :4].copy(), stm, mu, tuple(hits),
                      res.sol if dense else None, res.status == 1)


def flow(s0, t, p, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Endpoint of the flow map phi_t(s0)."""
    return integrate(s0, (0.0, t), p, cfg, dense=False).final


def flow_with_stm(s0, t, p, cfg: IntegratorConfig | None = None):
    tr = integrate(s0, (0.0, t), p, cfg, with_stm=True, dense=False)
    return tr.final, tr.final_stm

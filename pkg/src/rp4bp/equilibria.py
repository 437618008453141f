"""Collinear Lagrangian points L1, L2 and their saddle x centre linearization."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .dynamics import effective_potential, jacobian, _mu
from .errors import DomainError, SolverFailure


@dataclass(frozen=True)
class LagrangePoint:
    which: str  # "L1" or "L2"
    x: float
    critical_jacobi: float
    mu: float

    @property
    def state(self) -> np.ndarray:
        return np.array([self.x, 0.0, 0.0, 0.0])

    @property
    def critical_energy(self) -> float:
        return -0.5 * self.critical_jacobi

    @property
    def jupiter_distance(self) -> float:
        return abs(self.x - (1.0 - self.mu))


@dataclass(frozen=True)
class Linearization:
    """Eigenstructure of the linearized flow at a collinear point.

    Eigenvalues are +lam, -lam (eigenvectors ``u1``, ``u2``) and +/- i kappa
    (``w1`` belongs to +i kappa). Vectors have unit Euclidean norm and their
    first nonzero component is real and positive.
    """

    lam: float
    kappa: float
    u1: np.ndarray
    u2: np.ndarray
    w1: np.ndarray
    A: np.ndarray

    def general_solution(self, alpha1: float, alpha2: float, beta: complex, t):
        """alpha1 u1 e^{lam t} + alpha2 u2 e^{-lam t} + 2 Re(beta e^{i kappa t} w1)."""
        return (alpha1 * self.u1 * math.exp(self.lam * t)
                + alpha2 * self.u2 * math.exp(-self.lam * t)
                + 2.0 * np.real(beta * np.exp(1j * self.kappa * t) * self.w1))

    def linear_flow(self, v0, t) -> np.ndarray:
        return expm(self.A * t) @ np.asarray(v0)


def collinear_residual(x: float, mu: float) -> float:
    """d/dx of x^2/2 + (1-mu)/|x+mu| + mu/|x-1+mu|."""
    d1, d2 = x + mu, x - 1.0 + mu
    return x - (1 - mu) * d1 / abs(d1) ** 3 - mu * d2 / abs(d2) ** 3


def _collinear_slope(x: float, mu: float) -> float:
    d1, d2 = abs(x + mu), abs(x - 1.0 + mu)
    return 1.0 + 2 * (1 - mu) / d1**3 + 2 * mu / d2**3


def _solve_collinear(mu: float, which: str) -> float:
    sign = -1.0 if which == "L1" else 1.0
    jup = 1.0 - mu
    # the mu^(1/3) asymptote, kept inside the admissible interval
    d0 = min((mu / 3.0) ** (1.0 / 3.0), 0.5)
    if which == "L1":
        lo, hi = -mu + 1e-9, jup - 1e-15 * max(1.0, jup)
    else:
        lo, hi = jup + 1e-15, 2.0
    x = jup + sign * d0
    for _ in range(60):
        f = collinear_residual(x, mu)
        dx = f / _collinear_slope(x, mu)
        xn = x - dx
        if not (lo < xn < hi):
            break
        x = xn
        if abs(dx) < 1e-16 * max(1.0, abs(x)):
            break
    if abs(collinear_residual(x, mu)) > 1e-13 or not (lo < x < hi):
        # guaranteed bracket: the residual changes sign across each interval
        if which == "L1":
            a, b = -mu + 1e-6 * min(1.0, mu ** (1 / 3)), jup - 1e-9 * mu ** (1 / 3)
        else:
            a, b = jup + 1e-9 * mu ** (1 / 3), 2.0
        x = brentq(collinear_residual, a, b, args=(mu,), xtol=1e-16, rtol=4.5e-16, maxiter=500)
    if abs(collinear_residual(x, mu)) > 1e-13:
        raise SolverFailure(f"{which} root-finding stalled for mu={mu}")
    return x


def find_collinear_points(p) -> tuple[LagrangePoint, LagrangePoint]:
    """L1 (between the primaries) and L2 (beyond Jupiter)."""
    mu = _mu(p)
    if not (0.0 < mu <= 0.5):
        raise DomainError(f"mass ratio must lie in (0, 1/2], got {mu}")
    out = []
    for which in ("L1", "L2"):
        x = _solve_collinear(mu, which)
        out.append(LagrangePoint(which, x, 2.0 * effective_potential((x, 0.0), mu), mu))
    return out[0], out[1]


def lagrange_point(p, which: str) -> LagrangePoint:
    l1, l2 = find_collinear_points(p)
    return {"L1": l1, "L2": l2}[which]


def _normalize(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    k = int(np.flatnonzero(np.abs(v) > 1e-14)[0])
    if np.iscomplexobj(v):
        v = v * (abs(v[k]) / v[k])
        v[k] = v[k].real
        return v
    return v if v[k] > 0 else -v


def linearize(lp: LagrangePoint) -> Linearization:
    """Eigenvalues and eigenvectors from the analytic Hessian of Omega.

    With a = Omega_xx > 0 and b = Omega_yy < 0 at a collinear point, the
    characteristic polynomial is s^4 + (4 - a - b) s^2 + a b = 0 and an
    eigenvector for s is (1, (s^2 - a)/(2 s), s, s (s^2 - a)/(2 s)).
    """
    A = jacobian(lp.state, lp.mu)
    a, b = A[2, 0], A[3, 1]
    if not (a > 0 and b < 0):
        raise SolverFailure("collinear point is not a saddle x centre")
    B = a + b - 4.0
    disc = math.sqrt(B * B - 4.0 * a * b)
    lam = math.sqrt(0.5 * (B + disc))
    kappa = math.sqrt(-0.5 * (B - disc))

    def vec(s):
        ratio = (s * s - a) / (2.0 * s)
        return np.array([1.0, ratio, s, s * ratio])

    u1 = _normalize(vec(lam))
    u2 = _normalize(vec(-lam))
    w1 = _normalize(vec(1j * kappa).astype(complex))
    return Linearization(lam, kappa, u1, u2, w1, A)

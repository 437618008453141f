"""Invariant manifolds of Lyapunov orbits, Poincare cuts and heteroclinic connections."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import dynamics as dyn
from .equilibria import lagrange_point
from .errors import DomainError, SingularityError
from .lyapunov import LyapunovOrbit

log = logging.getLogger(__name__)

TRANSVERSALITY_FLOOR = 1e-3
DEFAULT_T_MAX = 20.0
# fibers passing closer than this to a primary are flagged as collisions
CLOSE_APPROACH = 1e-4


@dataclass(frozen=True)
class Section:
    """Hyperplane ``state[index] == value`` crossed with a given velocity sign.

    ``velocity_sign`` is the required sign of d/dt state[index] at the
    crossing in forward time (0 accepts both). ``crossing`` selects which
    qualifying crossing (1 = first) ends a fiber.
    """

    value: float
    index: int = 0
    velocity_sign: int = 0
    name: str = "section"
    crossing: int = 1

    @classmethod
    def through_jupiter(cls, mu: float, velocity_sign: int) -> "Section":
        return cls(1.0 - mu, 0, velocity_sign, f"x=1-mu,sign={velocity_sign:+d}")

    def nth(self, crossing: int) -> "Section":
        if crossing < 1:
            raise DomainError("crossing index starts at 1")
        return replace(self, crossing=crossing)

    def residual(self, s) -> float:
        return float(np.asarray(s)[self.index] - self.value)

    def event(self, time_sign: int) -> dyn.Event:
        # in backward integration the solver sees the crossing reversed
        return dyn.section(self.index, self.value, self.velocity_sign * time_sign,
                           terminal=self.crossing, name=self.name)


@dataclass(frozen=True)
class Fiber:
    phase: float
    seed: np.ndarray
    end: np.ndarray | None
    t_end: float
    status: str  # "section", "t_max", "collision"
    jacobi_error: float


@dataclass(frozen=True)
class ManifoldBranch:
    """Stable or unstable branch sampled by fibers over the orbit phase."""

    orbit: LyapunovOrbit
    kind: str
    side: int
    d0: float
    section: Section | None
    t_max: float
    fibers: tuple[Fiber, ...]
    cfg: dyn.IntegratorConfig = field(default=dyn.TIGHT, repr=False)

    @property
    def time_sign(self) -> int:
        return 1 if self.kind == "unstable" else -1

    def fiber(self, phase: float) -> Fiber:
        return integrate_fiber(self.orbit, self.kind, self.side, self.d0, phase,
                               self.section, self.t_max, self.cfg)

    @property
    def max_jacobi_error(self) -> float:
        errs = [f.jacobi_error for f in self.fibers if f.status != "collision"]
        return max(errs) if errs else 0.0


def _check_kind(kind: str) -> None:
    if kind not in ("stable", "unstable"):
        raise DomainError(f"kind must be 'stable' or 'unstable', got {kind!r}")


def fiber_seed(orbit: LyapunovOrbit, kind: str, side: int, d0: float, phase: float):
    """Orbit point at ``phase`` displaced by ``side*d0`` along the transported eigenvector."""
    _check_kind(kind)
    t = float(np.mod(phase, orbit.period))
    y = orbit.dense.sol(t)
    s, phi = y[:4], y[4:].reshape(4, 4)
    v = phi @ orbit.eigen[kind]
    return s + side * d0 * v / np.linalg.norm(v)


def integrate_fiber(orbit: LyapunovOrbit, kind: str, side: int, d0: float, phase: float,
                    section: Section | None, t_max: float = DEFAULT_T_MAX,
                    cfg: dyn.IntegratorConfig = dyn.TIGHT) -> Fiber:
    """Integrate one fiber until it meets ``section`` or ``t_max`` elapses.

    Unstable fibers run forward, stable fibers backward in time. A collision
    with a primary marks the fiber instead of raising.
    """
    seed = fiber_seed(orbit, kind, side, d0, phase)
    ts = 1 if kind == "unstable" else -1
    events = [_close_approach_event(orbit.mu)]
    if section is not None:
        events.append(section.event(ts))
    try:
        tr = dyn.integrate(seed, (0.0, ts * t_max), orbit.mu, cfg, events=events, dense=False)
    except SingularityError:
        return Fiber(phase, seed, None, math.nan, "collision", math.nan)
    if tr.events and tr.events[0].event == 0:
        return Fiber(phase, seed, None, tr.events[0].t, "collision", math.nan)
    hits = [h for h in tr.events if h.event == 1]
    if section is not None and len(hits) >= section.crossing:
        hit = hits[section.crossing - 1]
        end, t_end, status = hit.state, hit.t, "section"
    else:
        end, t_end, status = tr.final, float(tr.t[-1]), "t_max"
    jerr = abs(float(dyn.jacobi_constant(end, orbit.mu)) - orbit.jacobi)
    return Fiber(phase, seed, end, t_end, status, jerr)


def _close_approach_event(mu: float) -> dyn.Event:
    def fn(t, s):
        return min(math.hypot(s[0] + mu, s[1]), math.hypot(s[0] - 1.0 + mu, s[1])) - CLOSE_APPROACH

    return dyn.Event(fn, -1, True, "close-approach")


def interior_side(orbit: LyapunovOrbit, kind: str) -> int:
    """Displacement sign whose fibers head toward Jupiter."""
    lp = lagrange_point(orbit.mu, orbit.point)
    toward = math.copysign(1.0, (1.0 - orbit.mu) - lp.x)
    v = fiber_seed(orbit, kind, 1, 1.0, 0.0) - orbit.initial_state
    return int(math.copysign(1.0, toward * v[0]))


def default_d0(orbit: LyapunovOrbit) -> float:
    """1e-6 times the distance from the orbit's Lagrangian point to Jupiter."""
    return 1e-6 * lagrange_point(orbit.mu, orbit.point).jupiter_distance


def globalize(orbit: LyapunovOrbit, kind: str, side: int, d0: float | None = None,
              section: Section | None = None, t_max: float = DEFAULT_T_MAX,
              n_phase: int = 128, refine_gap: float | None = 0.02, max_fibers: int | None = None,
              cfg: dyn.IntegratorConfig = dyn.TIGHT) -> ManifoldBranch:
    """Sample a manifold branch by fibers seeded on a uniform phase grid.

    With a section and ``refine_gap`` set, phases are bisected wherever two
    neighbouring section points are further apart than ``refine_gap`` times
    the extent of the cut, until ``max_fibers`` (default ``8*n_phase``).
    Gaps that survive refinement are treated as discontinuities of the cut.
    """
    _check_kind(kind)
    if side not in (1, -1):
        raise DomainError("side must be +1 or -1")
    d0 = default_d0(orbit) if d0 is None else d0
    if section is not None and section.index == 0:
        xs = orbit.sample(64)[1][:, 0]
        if xs.min() <= section.value <= xs.max():
            raise DomainError("the section must not intersect the periodic orbit itself")
    T = orbit.period
    fibers = {}
    for j in range(n_phase):
        ph = j * T / n_phase
        fibers[ph] = integrate_fiber(orbit, kind, side, d0, ph, section, t_max, cfg)
    if section is not None and refine_gap:
        max_fibers = max_fibers or 8 * n_phase
        plane = _plane(section)
        min_dphi = T / n_phase / 2**6
        for _ in range(12):
            phases = sorted(fibers)
            ok = [ph for ph in phases if fibers[ph].status == "section"]
            if len(ok) < 2:
                break
            P = np.array([fibers[ph].end[list(plane)] for ph in ok])
            extent = float(np.max(np.ptp(P, axis=0))) or 1.0
            new = []
            for a, b in zip(phases, phases[1:] + phases[:1]):
                fa, fb = fibers[a], fibers[b]
                if fa.status != "section" or fb.status != "section":
                    continue
                span = (b - a) % T
                gap = np.linalg.norm(fa.end[list(plane)] - fb.end[list(plane)])
                if gap > refine_gap * extent and span > min_dphi:
                    new.append((a + 0.5 * span) % T)
            if not new or len(fibers) + len(new) > max_fibers:
                break
            for ph in new:
                fibers[ph] = integrate_fiber(orbit, kind, side, d0, ph, section, t_max, cfg)
    ordered = tuple(fibers[ph] for ph in sorted(fibers))
    return ManifoldBranch(orbit, kind, side, d0, section, t_max, ordered, cfg)


def _plane(section: Section) -> tuple[int, int]:
    """The two coordinates left free on a section: position and its velocity."""
    other = 1 - section.index if section.index in (0, 1) else 0
    return (other, other + 2)


# --- section curves ----------------------------------------------------------

@dataclass(frozen=True)
class SectionCurve:
    """Ordered points of a cut, parameterized by a periodic parameter.

    ``points`` holds the full vectors returned by ``evaluate``; ``plane``
    selects the two coordinates drawn on the section (y and vy for x-sections).
    ``evaluate`` maps a parameter to a point and is used for refinement.
    """

    section: Section | None
    params: np.ndarray
    points: np.ndarray
    period: float
    plane: tuple[int, int] = (1, 3)
    jacobi: np.ndarray | None = None
    evaluate: Callable[[float], np.ndarray | None] | None = field(default=None, repr=False)
    branch: ManifoldBranch | None = field(default=None, repr=False)
    max_gap: float = math.inf

    def __len__(self):
        return len(self.params)

    @property
    def xy(self) -> np.ndarray:
        if len(self.points) == 0:
            return np.empty((0, 2))
        return self.points[:, list(self.plane)]

    def segments(self) -> list[tuple[int, int]]:
        """Index pairs of consecutive points joined by a curve segment."""
        n = len(self.params)
        if n < 2:
            return []
        out = []
        for i in range(n):
            j = (i + 1) % n
            if j == 0 and not self.closed:
                break
            if np.linalg.norm(self.xy[i] - self.xy[j]) <= self.max_gap:
                out.append((i, j))
        return out

    @property
    def closed(self) -> bool:
        return math.isfinite(self.period)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            if self.section is not None:
                fh.write(f"# section = {self.section.name}\n")
            if self.jacobi is not None and len(self.jacobi):
                fh.write(f"# J = {float(np.mean(self.jacobi))!r}\n")
            fh.write("phase,y,vy,J\n")
            J = self.jacobi if self.jacobi is not None else np.full(len(self), math.nan)
            for ph, (a, b), j in zip(self.params, self.xy, J):
                fh.write(",".join(repr(float(v)) for v in (ph, a, b, j)) + "\n")


def section_cut(branch: ManifoldBranch, gap_factor: float = 0.05) -> SectionCurve:
    """Section points of all fibers that reached the section, ordered by phase.

    Consecutive points further apart than ``gap_factor`` times the cut's
    extent are not joined (the cut is discontinuous there).
    """
    if branch.section is None:
        raise DomainError("branch was globalized without a section")
    plane = _plane(branch.section)
    ok = [f for f in branch.fibers if f.status == "section"]
    seen, fibers = set(), []
    for f in ok:
        key = round(f.phase / branch.orbit.period, 14)
        if key not in seen:
            seen.add(key)
            fibers.append(f)
    params = np.array([f.phase for f in fibers])
    pts = np.array([f.end for f in fibers]) if fibers else np.empty((0, 4))
    J = dyn.jacobi_constant(pts, branch.orbit.mu) if len(pts) else np.empty(0)
    extent = float(np.max(np.ptp(pts[:, list(plane)], axis=0))) if len(pts) > 1 else 0.0

    def evaluate(phase, _b=branch):
        f = _b.fiber(phase)
        return f.end if f.status == "section" else None

    if not fibers:
        log.info("no fiber of the %s branch reached %s", branch.kind, branch.section.name)
    return SectionCurve(branch.section, params, pts, branch.orbit.period, plane,
                        np.atleast_1d(J), evaluate, branch, gap_factor * extent or math.inf)


def curve_distance(a: SectionCurve, b: SectionCurve) -> float:
    """Largest distance from a point of ``a`` to the polyline ``b``."""
    if len(a) == 0 or len(b) == 0:
        return math.inf
    P = a.xy
    best = np.full(len(P), np.inf)
    for i, j in b.segments():
        p0, p1 = b.xy[i], b.xy[j]
        d = p1 - p0
        L2 = float(d @ d)
        t = np.clip(((P - p0) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(P))
        best = np.minimum(best, np.linalg.norm(P - (p0 + t[:, None] * d), axis=1))
    return float(best.max())


# --- intersections -----------------------------------------------------------

@dataclass(frozen=True)
class HeteroclinicConnection:
    """Intersection of an unstable cut (``source``) with a stable cut (``target``)."""

    source: str
    target: str
    point: np.ndarray
    phase_source: float
    phase_target: float
    angle: float
    residual: float
    energy: float
    converged: bool
    transversal: bool

    @property
    def direction(self) -> str:
        return f"{self.source}->{self.target}"


CONNECTION_COLUMNS = ("phase_source", "phase_target", "y", "vy", "J", "angle", "residual")


def write_connections(path, conns, mu: float, plane=(1, 3)) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CONNECTION_COLUMNS) + "\n")
        for c in conns:
            J = dyn.jacobi_constant(c.point, mu) if len(c.point) == 4 else -2.0 * c.energy
            row = (c.phase_source, c.phase_target, c.point[plane[0]], c.point[plane[1]], J,
                   c.angle, c.residual)
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _segment_crossings(A: np.ndarray, B: np.ndarray, segA, segB):
    """All (i, j, s, t) with A-segment i meeting B-segment j at fractions s, t."""
    if not segA or not segB:
        return []
    ia = np.array(segA)
    ib = np.array(segB)
    p = A[ia[:, 0]][:, None, :]
    r = (A[ia[:, 1]] - A[ia[:, 0]])[:, None, :]
    q = B[ib[:, 0]][None, :, :]
    s_ = (B[ib[:, 1]] - B[ib[:, 0]])[None, :, :]
    cross = lambda u, v: u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    den = cross(r, s_)
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        s = cross(qp, s_) / den
        t = cross(qp, r) / den
    hit = (den != 0) & (s >= 0) & (s < 1) & (t >= 0) & (t < 1)
    out = []
    for a, b in zip(*np.nonzero(hit)):
        out.append((int(a), int(b), float(s[a, b]), float(t[a, b])))
    return out


def _interp_param(c: SectionCurve, i: int, j: int, s: float) -> float:
    a, b = c.params[i], c.params[j]
    if j < i and c.closed:
        b = b + c.period
    return float(a + s * (b - a))


def _tangent(c: SectionCurve, phi: float, h: float):
    pp, pm = c.evaluate(phi + h), c.evaluate(phi - h)
    if pp is None or pm is None:
        return None
    return (np.asarray(pp)[list(c.plane)] - np.asarray(pm)[list(c.plane)]) / (2.0 * h)


def crossing_angle(ta, tb) -> float:
    """Angle in [0, pi/2] between two undirected tangent lines."""
    c = abs(float(np.dot(ta, tb))) / (np.linalg.norm(ta) * np.linalg.norm(tb))
    return math.acos(min(1.0, c))


def _refine(ca: SectionCurve, cb: SectionCurve, pa: float, pb: float, tol: float,
            max_iter: int = 20):
    """Newton in the two curve parameters until the points coincide."""
    ha = 1e-6 * (ca.period if ca.closed else 1.0)
    hb = 1e-6 * (cb.period if cb.closed else 1.0)
    plane_a, plane_b = list(ca.plane), list(cb.plane)
    res, Pa, Pb = math.inf, None, None
    for _ in range(max_iter):
        Pa, Pb = ca.evaluate(pa), cb.evaluate(pb)
        if Pa is None or Pb is None:
            return None
        Pa, Pb = np.asarray(Pa), np.asarray(Pb)
        F = Pa[plane_a] - Pb[plane_b]
        full = Pa - Pb if len(Pa) == len(Pb) else F
        res = float(np.max(np.abs(full)))
        if res < tol:
            break
        ta, tb = _tangent(ca, pa, ha), _tangent(cb, pb, hb)
        if ta is None or tb is None:
            return None
        D = np.column_stack([ta, -tb])
        try:
            step = np.linalg.solve(D, -F)
        except np.linalg.LinAlgError:
            return None
        # keep Newton local to the bracketing segments
        lim_a = 0.05 * (ca.period if ca.closed else 1.0)
        lim_b = 0.05 * (cb.period if cb.closed else 1.0)
        scale = min(1.0, lim_a / max(abs(step[0]), 1e-300), lim_b / max(abs(step[1]), 1e-300))
        pa += scale * step[0]
        pb += scale * step[1]
    ta, tb = _tangent(ca, pa, ha), _tangent(cb, pb, hb)
    angle = crossing_angle(ta, tb) if ta is not None and tb is not None else math.nan
    return pa, pb, 0.5 * (Pa + Pb), res, angle


def find_heteroclinics(cut_u: SectionCurve, cut_s: SectionCurve, refine: bool = True,
                       tol: float = 1e-10, angle_floor: float = TRANSVERSALITY_FLOOR,
                       source: str = "", target: str = "") -> list[HeteroclinicConnection]:
    """Intersections of two cuts, polished by Newton in the curve parameters.

    For manifold cuts, ``cut_u`` should come from an unstable branch and
    ``cut_s`` from a stable branch on the same section and energy level; the
    reported residual is the sup-norm mismatch of the two full states.
    Connections below ``angle_floor`` are kept with ``transversal=False``.
    """
    if cut_u.section is not None and cut_s.section is not None:
        if cut_u.section.nth(1) != cut_s.section.nth(1):
            raise DomainError("cuts lie on different sections")
    if cut_u.branch is not None:
        source = source or cut_u.branch.orbit.point
        target = target or (cut_s.branch.orbit.point if cut_s.branch is not None else "")
    energy = (cut_u.branch.orbit.energy if cut_u.branch is not None else math.nan)
    seg_u, seg_s = cut_u.segments(), cut_s.segments()
    crossings = _segment_crossings(cut_u.xy, cut_s.xy, seg_u, seg_s)
    found: list[HeteroclinicConnection] = []
    for i, j, s, t in crossings:
        ia, ja = seg_u[i]
        ib, jb = seg_s[j]
        pa = _interp_param(cut_u, ia, ja, s)
        pb = _interp_param(cut_s, ib, jb, t)
        res, angle, conv = math.nan, math.nan, False
        full = cut_u.points[ia] + s * (cut_u.points[ja] - cut_u.points[ia])
        if refine and cut_u.evaluate is not None and cut_s.evaluate is not None:
            out = _refine(cut_u, cut_s, pa, pb, tol)
            if out is not None:
                pa, pb, full, res, angle = out
                conv = res < tol * 100
        if not math.isfinite(angle):
            da = cut_u.xy[ja] - cut_u.xy[ia]
            db = cut_s.xy[jb] - cut_s.xy[ib]
            angle = crossing_angle(da, db)
        if cut_u.closed:
            pa = float(np.mod(pa, cut_u.period))
        if cut_s.closed:
            pb = float(np.mod(pb, cut_s.period))
        conn = HeteroclinicConnection(source, target, np.asarray(full, dtype=float), pa, pb,
                                      angle, res, energy, conv, angle > angle_floor)
        if not any(np.max(np.abs(c.point - conn.point)) < 1e-7 for c in found):
            found.append(conn)
    return found


# --- energy-level search -----------------------------------------------------

@dataclass(frozen=True)
class ConnectionSearch:
    """Both-direction search result at one energy level."""

    energy: float
    connections: dict
    cuts: dict

    def count(self, direction: str, transversal_only: bool = True) -> int:
        return sum(1 for c in self.connections.get(direction, ())
                   if c.converged and (c.transversal or not transversal_only))


def search_connections(orbit1: LyapunovOrbit, orbit2: LyapunovOrbit, n_phase: int = 128,
                       d0: float | None = None, t_max: float = DEFAULT_T_MAX,
                       tol: float = 1e-10, cfg: dyn.IntegratorConfig = dyn.TIGHT,
                       max_crossing: int = 1) -> ConnectionSearch:
    """Connections L2->L1 and L1->L2 through the Jupiter region at x = 1 - mu.

    For L2->L1 the unstable branch of the L2 orbit and the stable branch of
    the L1 orbit are cut where they cross with vx < 0; L1->L2 uses the
    opposite branches with vx > 0.

    With ``max_crossing > 1`` a direction without a transversal connection
    on the first cuts is retried on later crossings (pairs ordered by total
    winding), stopping at the first pair that yields one. ``connections``
    and ``cuts`` under the plain key then refer to that pair; the other
    pairs tried are kept in ``cuts`` under ``"L2->L1@a,b"``.
    """
    mu = orbit1.mu
    if abs(orbit1.energy - orbit2.energy) > 1e-9:
        raise DomainError("orbits must share one energy level")
    if max_crossing < 1:
        raise DomainError("max_crossing must be at least 1")
    pairs = sorted(((a, b) for a in range(1, max_crossing + 1)
                    for b in range(1, max_crossing + 1)), key=lambda ab: (sum(ab), ab))
    conns, cuts = {}, {}
    for src, dst, sign in ((orbit2, orbit1, -1), (orbit1, orbit2, 1)):
        sec = Section.through_jupiter(mu, sign)
        key = f"{src.point}->{dst.point}"
        cache = {}

        def cut(orbit, kind, n):
            if (kind, n) not in cache:
                b = globalize(orbit, kind, interior_side(orbit, kind), d0, sec.nth(n),
                              t_max * n, n_phase, cfg=cfg)
                cache[kind, n] = section_cut(b)
            return cache[kind, n]

        tried = []
        for a, b in pairs:
            cu, cs = cut(src, "unstable", a), cut(dst, "stable", b)
            found = find_heteroclinics(cu, cs, tol=tol)
            tried.append(((a, b), (cu, cs), found))
            if any(c.converged and c.transversal for c in found):
                break
        best = tried[-1] if any(c.converged and c.transversal for c in tried[-1][2]) else tried[0]
        for ab, pair, _ in tried:
            if ab != best[0]:
                cuts[f"{key}@{ab[0]},{ab[1]}"] = pair
        cuts[key], conns[key] = best[1], best[2]
    return ConnectionSearch(orbit1.energy, conns, cuts)


# --- Hill-limit criterion ----------------------------------------------------

def hill_jacobi_level(mu: float, jacobi: float) -> float:
    """Rescaled Jacobi constant mu^(-2/3) (J - 3 (1 - mu))."""
    if not mu > 0:
        raise DomainError("mass ratio must be positive")
    return (jacobi - 3.0 * (1.0 - mu)) / mu ** (2.0 / 3.0)


def hill_criterion(JH: float) -> tuple[bool, float]:
    """Whether (1/2)|J_H|^(-3/2) exceeds 1/18; returns (flag, margin).

    The boundary |J_H| = 9^(2/3) is reported as margin 0 and False.
    """
    if JH == 0 or not math.isfinite(JH):
        raise DomainError("J_H must be finite and nonzero")
    margin = 0.5 * abs(JH) ** -1.5 - 1.0 / 18.0
    if abs(margin) <= 8.0 * np.finfo(float).eps / 18.0:
        margin = 0.0
    return margin > 0.0, margin

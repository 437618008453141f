import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from rp4bp import dynamics as dyn
from rp4bp import manifolds as mf
from rp4bp.errors import DomainError

from conftest import H_REF, J_REF, MU_SJ


def circle(cx, cy, r):
    def evaluate(t):
        return np.array([cx + r * math.cos(t), cy + r * math.sin(t)])
    t = np.linspace(0, 2 * math.pi, 40, endpoint=False)
    pts = np.array([evaluate(v) for v in t])
    return mf.SectionCurve(None, t, pts, 2 * math.pi, (0, 1), evaluate=evaluate)


def line(slope, offset, n=21):
    def evaluate(t):
        return np.array([t, slope * t + offset])
    t = np.linspace(-1, 1, n)
    pts = np.array([evaluate(v) for v in t])
    return mf.SectionCurve(None, t, pts, math.inf, (0, 1), evaluate=evaluate)


def unstable_growth(orbit):
    """n(t) = |Phi(t) v_u|, continued over periods by the multiplier."""
    T, lam, vu = orbit.period, orbit.floquet_lambda, orbit.eigen["unstable"]

    def n(t):
        k = math.floor(t / T)
        phi = orbit.dense.sol(t - k * T)[4:].reshape(4, 4)
        return np.linalg.norm(phi @ vu) * lam**k
    return n


@pytest.fixture(scope="module")
def l2_orbit(orbits_ref):
    return orbits_ref[1]


class TestFibers:
    def test_seed_displacement(self, l2_orbit):
        o = l2_orbit
        d0 = mf.default_d0(o)
        for ph in np.linspace(0, o.period, 7)[:-1]:
            seed = mf.fiber_seed(o, "unstable", 1, d0, ph)
            base = o.dense.sol(ph)[:4]
            assert np.linalg.norm(seed - base) == pytest.approx(d0, rel=1e-12)

    def test_tube_exit_time(self, l2_orbit):
        # a linear fiber grows like g(t) exp(lambda t) with g bounded by the splitting constant k
        o = l2_orbit
        k, lam = o.splitting_constants()
        d0 = mf.default_d0(o)
        T = o.period
        exits = []
        for ph in np.linspace(0, T, 9)[:-1]:
            seed = mf.fiber_seed(o, "unstable", 1, d0, ph)
            ev = dyn.Event(lambda t, s: np.linalg.norm(s - o.dense.sol((ph + t) % T)[:4]) - 10 * d0,
                           1, True, "tube")
            tr = dyn.integrate(seed, (0.0, 10.0), o.mu, dyn.TIGHT, events=[ev], dense=False)
            exits.append(tr.events[0].t)
        pred = math.log(10) / lam
        assert np.all(np.abs(np.array(exits) - pred) <= 2 * math.log(k) / lam)
        assert np.mean(exits) == pytest.approx(pred, rel=0.05)

    def test_reversibility(self, l2_orbit):
        # the reflected stable fiber at phase phi is the unstable fiber at T - phi
        o = l2_orbit
        d0 = mf.default_d0(o)
        T = o.period
        for ph in (0.1 * T, 0.45 * T, 0.8 * T):
            ss = mf.fiber_seed(o, "stable", 1, d0, ph)
            side = min((1, -1), key=lambda sd: np.max(np.abs(
                dyn.reflect(ss) - mf.fiber_seed(o, "unstable", sd, d0, T - ph))))
            su = mf.fiber_seed(o, "unstable", side, d0, T - ph)
            a = dyn.flow(ss, -3.0, o.mu, dyn.TIGHT)
            b = dyn.flow(su, 3.0, o.mu, dyn.TIGHT)
            assert np.max(np.abs(dyn.reflect(a) - b)) < 1e-7

    def test_mirrored_cuts(self, l2_orbit):
        # section points come after a few e-foldings of stretching, hence the looser bound
        o = l2_orbit
        sec_s = mf.Section.through_jupiter(o.mu, 1)
        sec_u = mf.Section.through_jupiter(o.mu, -1)
        side_s = mf.interior_side(o, "stable")
        for ph in np.linspace(0, o.period, 5)[:-1]:
            fs = mf.integrate_fiber(o, "stable", side_s, mf.default_d0(o), ph, sec_s)
            fu = [mf.integrate_fiber(o, "unstable", sd, mf.default_d0(o), o.period - ph, sec_u)
                  for sd in (1, -1)]
            gap, match = min((np.max(np.abs(dyn.reflect(fs.end) - f.end)), i)
                             for i, f in enumerate(fu) if f.end is not None)
            assert gap < 1e-6
            assert fs.t_end == pytest.approx(-fu[match].t_end, abs=1e-6)

    def test_energy_along_branches(self, search_ref):
        for cu, cs in (search_ref.cuts["L2->L1"], search_ref.cuts["L1->L2"]):
            for c in (cu, cs):
                assert c.branch.max_jacobi_error < 1e-8
                assert np.max(np.abs(c.jacobi - c.branch.orbit.jacobi)) < 1e-8
                assert np.max(np.abs(c.points[:, 0] - (1 - MU_SJ))) < 1e-12

    def test_branch_directions(self, search_ref):
        cu, cs = search_ref.cuts["L2->L1"]
        assert cu.branch.time_sign == 1 and cs.branch.time_sign == -1
        assert all(f.t_end > 0 for f in cu.branch.fibers if f.status == "section")
        assert all(f.t_end < 0 for f in cs.branch.fibers if f.status == "section")
        assert np.all(cu.points[:, 2] < 0) and np.all(cs.points[:, 2] < 0)

    def test_collision_is_flagged(self):
        # a state next to Jupiter with inward velocity hits the close-approach event
        s = np.array([1 - MU_SJ + 2e-4, 0.0, -1.0, 0.0])
        tr = dyn.integrate(s, (0.0, 1.0), MU_SJ, dyn.TIGHT, events=[mf._close_approach_event(MU_SJ)])
        assert tr.terminated and tr.events[0].t > 0

    def test_rejects_section_through_orbit(self, l2_orbit):
        sec = mf.Section(l2_orbit.initial_state[0] - 1e-6, 0, 0)
        with pytest.raises(DomainError):
            mf.globalize(l2_orbit, "unstable", 1, section=sec, n_phase=4)
        with pytest.raises(DomainError):
            mf.globalize(l2_orbit, "sideways", 1, n_phase=4)
        with pytest.raises(DomainError):
            mf.globalize(l2_orbit, "stable", 0, n_phase=4)


class TestSeedingOrder:
    @staticmethod
    def _seed_energy_errors(o, factors):
        d0 = mf.default_d0(o)
        phis = np.linspace(0, o.period, 9)[:-1]
        return [max(abs(dyn.jacobi_constant(mf.fiber_seed(o, "unstable", 1, d0 * f, ph), o.mu) - o.jacobi)
                    for ph in phis) for f in factors]

    def test_seed_energy_error_is_quadratic(self, l2_orbit):
        # the eigenvector is tangent to the energy level, so the seed is off by O(d0^2)
        f = np.array([1024.0, 2048.0, 4096.0, 8192.0])
        errs = self._seed_energy_errors(l2_orbit, f)
        slope = np.polyfit(np.log(f), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.05)

    @pytest.mark.xfail(strict=True, reason="exact eigenvector seeding leaves an O(d0^2) error, "
                       "measured slope 2.0; see notes")
    def test_first_order_seeding_slope(self, l2_orbit):
        f = np.array([1024.0, 2048.0, 4096.0, 8192.0])
        errs = self._seed_energy_errors(l2_orbit, f)
        slope = np.polyfit(np.log(f), np.log(errs), 1)[0]
        assert 0.8 <= slope <= 1.2

    def test_halving_d0_keeps_the_cut(self, l2_orbit):
        # compare a 2 d0 section point with the nearest d0 section point, searching near
        # the phase that the linear flow predicts
        o = l2_orbit
        T = o.period
        n = unstable_growth(o)
        d0 = mf.default_d0(o)
        sec = mf.Section.through_jupiter(o.mu, -1)
        side = mf.interior_side(o, "unstable")
        dists = []
        for ph in np.linspace(0, T, 5)[:-1]:
            a = mf.integrate_fiber(o, "unstable", side, 2 * d0, ph, sec)
            if a.status != "section":
                continue
            psi = brentq(lambda s: n(s) - n(ph) / 2, ph - T, ph, xtol=1e-14)

            def gap(s, a=a):
                b = mf.integrate_fiber(o, "unstable", side, d0, s, sec)
                return np.linalg.norm(b.end[[1, 3]] - a.end[[1, 3]]) if b.status == "section" else 1.0
            w = 0.02 * T
            dists.append(minimize_scalar(gap, bounds=(psi - w, psi + w), method="bounded",
                                         options={"xatol": 1e-14}).fun)
        assert len(dists) >= 3
        assert max(dists) < 1e-7


class TestCuts:
    def test_empty_cut_is_not_an_error(self, l2_orbit):
        far = mf.Section(5.0, 0, 0, "x=5")
        br = mf.globalize(l2_orbit, "unstable", 1, section=far, t_max=0.5, n_phase=4)
        cut = mf.section_cut(br)
        assert len(cut) == 0 and cut.xy.shape == (0, 2) and cut.segments() == []
        with pytest.raises(DomainError):
            mf.section_cut(mf.globalize(l2_orbit, "unstable", 1, t_max=0.1, n_phase=2))

    def test_grid_refinement(self, orbits_ref, search_ref):
        # halving the phase grid leaves the refined connections where they were
        o1, o2 = orbits_ref
        sec = mf.Section.through_jupiter(MU_SJ, -1)
        cu = mf.section_cut(mf.globalize(o2, "unstable", mf.interior_side(o2, "unstable"),
                                         section=sec, n_phase=64))
        cs = mf.section_cut(mf.globalize(o1, "stable", mf.interior_side(o1, "stable"),
                                         section=sec, n_phase=64))
        coarse = [c.point for c in mf.find_heteroclinics(cu, cs) if c.converged and c.transversal]
        fine = [c.point for c in search_ref.connections["L2->L1"] if c.converged and c.transversal]
        assert coarse
        for p in coarse:
            assert min(np.max(np.abs(p - q)) for q in fine) < 1e-8

    def test_deduplicated_and_ordered(self, search_ref):
        cu, _ = search_ref.cuts["L2->L1"]
        assert np.all(np.diff(cu.params) > 0)
        assert np.all(cu.params < cu.period)

    def test_nth_crossing(self, l2_orbit):
        o = l2_orbit
        sec = mf.Section.through_jupiter(o.mu, -1)
        side = mf.interior_side(o, "unstable")
        ph = 0.25 * o.period
        f1 = mf.integrate_fiber(o, "unstable", side, mf.default_d0(o), ph, sec)
        f2 = mf.integrate_fiber(o, "unstable", side, mf.default_d0(o), ph, sec.nth(2), t_max=40.0)
        assert f1.status == "section"
        if f2.status == "section":
            assert f2.t_end > f1.t_end
            assert abs(f2.end[0] - (1 - o.mu)) < 1e-12 and f2.end[2] < 0
        with pytest.raises(DomainError):
            sec.nth(0)

    def test_csv(self, search_ref, tmp_path):
        cu, _ = search_ref.cuts["L2->L1"]
        path = tmp_path / "cut.csv"
        cu.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# section")
        assert lines[2] == "phase,y,vy,J"
        assert len(lines) == 3 + len(cu)


class TestSynthetic:
    def test_disjoint(self):
        assert mf.find_heteroclinics(circle(0, 0, 1), circle(0, 0, 3)) == []

    def test_known_crossings(self):
        # unit circles centred at 0 and 1 meet at (1/2, +-sqrt(3)/2)
        found = mf.find_heteroclinics(circle(0, 0, 1), circle(1, 0, 1), tol=1e-13)
        assert len(found) == 2
        exact = {(0.5, math.sqrt(3) / 2), (0.5, -math.sqrt(3) / 2)}
        for c in found:
            assert min(np.max(np.abs(c.point - e)) for e in exact) < 1e-10
            assert c.converged and c.transversal
            # circles of equal radius through each other's centres cross at 60 degrees
            assert c.angle == pytest.approx(math.pi / 3, abs=1e-6)

    def test_near_tangency_flagged(self):
        found = mf.find_heteroclinics(line(0.0, 0.0), line(1e-4, -0.3e-4))
        assert len(found) == 1
        c = found[0]
        assert not c.transversal and c.angle < mf.TRANSVERSALITY_FLOOR
        assert c.point[0] == pytest.approx(0.3, abs=1e-8)

    def test_different_sections_rejected(self):
        a, b = circle(0, 0, 1), circle(1, 0, 1)
        a = mf.SectionCurve(mf.Section(0.0), a.params, a.points, a.period, a.plane, evaluate=a.evaluate)
        b = mf.SectionCurve(mf.Section(1.0), b.params, b.points, b.period, b.plane, evaluate=b.evaluate)
        with pytest.raises(DomainError):
            mf.find_heteroclinics(a, b)


class TestConnections:
    def test_both_directions(self, search_ref):
        for key in ("L2->L1", "L1->L2"):
            good = [c for c in search_ref.connections[key] if c.converged and c.transversal]
            assert good, key
            for c in good:
                assert c.residual < 1e-8 and c.angle > 1e-3
                assert c.direction == key
                assert abs(dyn.jacobi_constant(c.point, MU_SJ) - J_REF) < 1e-8

    def test_reversal_symmetry_counts(self, search_ref):
        assert search_ref.count("L2->L1") == search_ref.count("L1->L2")

    def test_reversal_maps_connections(self, search_ref):
        a = [c.point for c in search_ref.connections["L2->L1"] if c.converged]
        b = [c.point for c in search_ref.connections["L1->L2"] if c.converged]
        for p in a:
            assert min(np.max(np.abs(dyn.reflect(p) - q)) for q in b) < 1e-6

    def test_connection_is_asymptotic(self, search_ref, orbits_ref):
        # following the connection forward brings it close to the target orbit
        c = next(c for c in search_ref.connections["L2->L1"] if c.converged and c.transversal)
        o1 = orbits_ref[0]
        tr = dyn.integrate(c.point, (0.0, 6.0), MU_SJ, dyn.TIGHT, t_eval=np.linspace(0, 6, 601))
        orbit_pts = o1.sample(400)[1][:, :4]
        d = [np.min(np.linalg.norm(orbit_pts - s, axis=1)) for s in tr.states]
        assert min(d) < 1e-3

    def test_csv(self, search_ref, tmp_path):
        path = tmp_path / "conn.csv"
        conns = search_ref.connections["L2->L1"]
        mf.write_connections(path, conns, MU_SJ)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(mf.CONNECTION_COLUMNS)
        assert len(lines) == 1 + len(conns)
        J = float(lines[1].split(",")[4])
        assert abs(J - J_REF) < 1e-8

    def test_mismatched_levels(self, orbits_ref, families):
        other = families[1].orbit_at(H_REF + 1e-4)
        with pytest.raises(DomainError):
            mf.search_connections(orbits_ref[0], other)
        with pytest.raises(DomainError):
            mf.search_connections(*orbits_ref, max_crossing=0)

    def test_connection_varies_continuously(self, families, search_ref):
        base = [c.point for c in search_ref.connections["L2->L1"] if c.converged and c.transversal]
        gaps = []
        for dh in (1e-5, 1e-6):
            o1, o2 = families[0].orbit_at(H_REF + dh), families[1].orbit_at(H_REF + dh)
            sec = mf.Section.through_jupiter(MU_SJ, -1)
            cu = mf.section_cut(mf.globalize(o2, "unstable", mf.interior_side(o2, "unstable"),
                                             section=sec, n_phase=64))
            cs = mf.section_cut(mf.globalize(o1, "stable", mf.interior_side(o1, "stable"),
                                             section=sec, n_phase=64))
            pts = [c.point for c in mf.find_heteroclinics(cu, cs) if c.converged]
            gaps.append(max(min(np.max(np.abs(p - q)) for q in pts) for p in base))
        # the connection moves linearly with the energy step
        assert gaps[1] < 0.2 * gaps[0]


class TestHillCriterion:
    def test_boundary(self):
        flag, margin = mf.hill_criterion(9 ** (2 / 3))
        assert flag is False and margin == 0.0
        assert mf.hill_criterion(-(9 ** (2 / 3)))[1] == 0.0

    def test_plug_in(self):
        flag, margin = mf.hill_criterion(-1.0)
        assert flag and margin == pytest.approx(0.5 - 1 / 18)
        assert not mf.hill_criterion(5.0)[0]

    def test_domain(self):
        with pytest.raises(DomainError):
            mf.hill_criterion(0.0)
        with pytest.raises(DomainError):
            mf.hill_criterion(math.inf)
        with pytest.raises(DomainError):
            mf.hill_jacobi_level(0.0, 3.0)

    def test_reference_level_cross_check(self, search_ref):
        JH = mf.hill_jacobi_level(MU_SJ, J_REF)
        assert JH == pytest.approx((J_REF - 3 * (1 - MU_SJ)) / MU_SJ ** (2 / 3), rel=1e-15)
        flag, _ = mf.hill_criterion(JH)
        found = search_ref.count("L2->L1") > 0 and search_ref.count("L1->L2") > 0
        assert flag == found

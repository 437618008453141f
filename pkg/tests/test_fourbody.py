import math

import numpy as np
import pytest

from rp4bp import coords as co
from rp4bp import dynamics as dyn
from rp4bp import fourbody as fb
from rp4bp import lyapunov as ly
from rp4bp import planet as pl
from rp4bp.errors import DomainError, SingularityError

from conftest import H_REF, MU_SJ

NU = fb.FrozenPhase(1.0, 0.3)


def neck_states(rng, n, mu=MU_SJ):
    """Canonical states near Jupiter, inside the L1/L2 neck region."""
    out = []
    while len(out) < n:
        x = rng.uniform(0.93, 1.07)
        y = rng.uniform(-0.05, 0.05)
        if math.hypot(x - 1 + mu, y) < 0.02:
            continue
        v = rng.uniform(-0.1, 0.1, 2)
        out.append(dyn.to_momenta(np.array([x, y, *v])))
    return out


@pytest.fixture(scope="module")
def zero(planets):
    return fb.FourBodyParams(MU_SJ, 0.0, planets[63])


@pytest.fixture(scope="module")
def gtl_runs(families, params, energy_range):
    c1, c2 = families
    h0 = energy_range[0] + 5e-4
    pair = fb.gtl_energy_ode(c1, c2, params, h0, nu_budget=10)
    same = fb.gtl_energy_ode(c1, c1, params, h0, nu_budget=10)
    return pair, same


class TestParams:
    def test_delta_constraint(self, planets):
        P = planets[63]
        eps = P.epsilon
        fb.FourBodyParams(MU_SJ, eps**3, P)
        with pytest.raises(DomainError):
            fb.FourBodyParams(MU_SJ, 2 * eps**3, P)
        fb.FourBodyParams(MU_SJ, 2 * eps**3, P, c_delta=2.0)
        with pytest.raises(DomainError):
            fb.FourBodyParams(MU_SJ, -1e-9, P)
        with pytest.raises(DomainError):
            fb.FourBodyParams(1e-4, eps**3, P)
        with pytest.raises(DomainError):
            fb.FourBodyParams(MU_SJ, eps**3, P, planet_mass_power=3)

    def test_phase_wrapped(self):
        nu = fb.FrozenPhase(7.0, -1.0)
        assert 0 <= nu.nu1 < 2 * math.pi and 0 <= nu.nu2 < 2 * math.pi
        assert nu.nu1 == pytest.approx(7.0 - 2 * math.pi)

    def test_theta_dot_linear_in_delta(self, params, planets):
        half = fb.FourBodyParams(MU_SJ, params.delta / 2, planets[63])
        t = np.linspace(0, params.period, 50)
        np.testing.assert_allclose(half.theta_dot(t), 0.5 * params.theta_dot(t), rtol=1e-14)
        # |thetadot| = O(delta): the constant is max G_P / alpha
        G = planets[63].angular_momentum(t)
        assert np.max(np.abs(params.theta_dot(t))) <= params.delta * np.max(np.abs(G)) / params.alpha * (1 + 1e-12)

    def test_theta_is_integral(self, params):
        t = np.array([3.0, 150.0, 1.3 * params.period])
        h = 1e-3
        fd = (params.theta(t + h) - params.theta(t - h)) / (2 * h)
        np.testing.assert_allclose(fd, params.theta_dot(t), rtol=1e-6)
        assert params.theta(0.0) == 0.0

    def test_nu2_frequency(self, params):
        T = params.period
        assert params.nu2_frequency == pytest.approx(params.theta(T) / (2 * math.pi), rel=1e-9)


class TestPerturbation:
    def test_zero_delta(self, zero, rng):
        for Z in neck_states(rng, 20):
            for nu1 in np.linspace(0, 2 * math.pi, 5):
                f, d1, d2 = fb.perturbation_f(Z, fb.FrozenPhase(nu1, 0.4), zero, derivative=True)
                assert f == 0.0 and d1 == 0.0 and d2 == 0.0

    def test_input_forms_agree(self, params):
        s = np.array([0.95, 0.02, 0.01, 0.03])
        Z = dyn.to_momenta(s)
        a = fb.perturbation_f(Z, NU, params)
        b = fb.perturbation_f(co.RotatingState(*s), NU, params)
        c = fb.perturbation_f(co.cartesian_to_delaunay(Z[:2], Z[2:]), NU, params)
        assert a == pytest.approx(b, abs=1e-15)
        assert a == pytest.approx(c, abs=1e-13)

    def test_halving_delta(self, params, planets, rng):
        half = fb.FourBodyParams(MU_SJ, params.delta / 2, planets[63])
        Z = np.array(neck_states(rng, 30))
        nus = [fb.FrozenPhase(a, b) for a, b in rng.uniform(0, 2 * math.pi, (8, 2))]
        full = max(np.max(np.abs(fb.perturbation_f(Z, nu, params))) for nu in nus)
        halved = max(np.max(np.abs(fb.perturbation_f(Z, nu, half))) for nu in nus)
        assert halved <= 0.5 * full * (1 + 1e-6)

    def test_planet_term_scaling(self, planets):
        # max over the orbit of 1/r_AP for an asteroid near Jupiter behaves like eps^(2/3)
        q = np.array([1 - MU_SJ - 0.07, 0.0])
        ms = sorted(planets)
        nu1 = np.linspace(0, 2 * math.pi, 2048, endpoint=False)
        vals = []
        for m in ms:
            p = fb.FourBodyParams(MU_SJ, 0.0, planets[m])
            qP = fb.background(nu1, 0.0, p).qP
            vals.append(np.max(1 / np.linalg.norm(qP - q, axis=1)))
        slope = np.polyfit(np.log([1 / m for m in ms]), np.log(vals), 1)[0]
        assert slope == pytest.approx(2 / 3, abs=0.2)

    def test_derivative_matches_differences(self, params):
        s = np.array([0.95, 0.02, 0.01, 0.03])
        Z = dyn.to_momenta(s)
        f, d1, d2 = fb.perturbation_f(Z, NU, params, derivative=True)
        h = 1e-5
        g = lambda a, b: fb.perturbation_f(Z, fb.FrozenPhase(a, b), params)
        fd1 = (g(NU.nu1 + h, NU.nu2) - g(NU.nu1 - h, NU.nu2)) / (2 * h)
        fd2 = (g(NU.nu1, NU.nu2 + h) - g(NU.nu1, NU.nu2 - h)) / (2 * h)
        assert d1 == pytest.approx(fd1, rel=1e-5)
        assert d2 == pytest.approx(fd2, rel=1e-5)

    def test_collision_guard(self, params):
        qP = fb.background(NU.nu1, NU.nu2, params).qP[0]
        with pytest.raises(SingularityError):
            fb.perturbation_f(np.array([qP[0], qP[1], 0.0, 0.0]), NU, params)

    def test_mass_power_flag(self, planets):
        P = planets[63]
        eps = P.epsilon
        p1 = fb.FourBodyParams(MU_SJ, eps**3, P)
        p2 = fb.FourBodyParams(MU_SJ, eps**3, P, planet_mass_power=2)
        assert p2.planet_coupling == pytest.approx(eps**6)
        Z = dyn.to_momenta(np.array([0.95, 0.02, 0.01, 0.03]))
        assert fb.perturbation_f(Z, NU, p1) != fb.perturbation_f(Z, NU, p2)


class TestEnergy:
    def test_forms_agree(self, params, rng):
        for Z in neck_states(rng, 50):
            a = fb.asteroid_energy(Z, NU, params, "cartesian")
            b = fb.asteroid_energy(Z, NU, params, "delaunay")
            assert abs(a - b) < 1e-10
        with pytest.raises(DomainError):
            fb.asteroid_energy(Z, NU, params, "polar")

    def test_rpc3bp_part(self):
        s = np.array([0.9, 0.05, 0.02, -0.01])
        H = fb.rpc3bp_hamiltonian(dyn.to_momenta(s), MU_SJ)
        # h carries the constant -mu(1-mu)/2 of the effective potential
        assert H == pytest.approx(dyn.energy(s, MU_SJ) + 0.5 * MU_SJ * (1 - MU_SJ), abs=1e-14)

    def test_energy_level_reduces_at_zero_delta(self, zero):
        s = np.array([0.9, 0.05, 0.02, -0.01])
        assert fb.energy_level(dyn.to_momenta(s), 12.0, zero) == pytest.approx(dyn.energy(s, MU_SJ), abs=1e-14)

    def test_frozen_conservation(self, params, orbits_ref):
        Z0 = dyn.to_momenta(orbits_ref[0].initial_state) + [1e-3, 0, 0, 0]
        _, Y = fb.integrate_frozen(Z0, NU, params, 100.0, dyn.TIGHT, t_eval=np.linspace(0, 100, 201))
        H = np.array([fb.asteroid_energy(y, NU, params) for y in Y])
        assert np.max(np.abs(H - H[0])) < 1e-9

    def test_zero_delta_is_rpc3bp(self, zero):
        s0 = np.array([0.85, 0.0, 0.0, 0.1])
        a = fb.integrate_full(dyn.to_momenta(s0), (0.0, 3.0), zero, dyn.TIGHT).y[:, -1]
        b = dyn.flow(s0, 3.0, MU_SJ, dyn.TIGHT)
        assert np.max(np.abs(dyn.to_velocities(a) - b)) < 1e-9


class TestAverages:
    def test_constant_integrand(self, params):
        Z = dyn.to_momenta(np.array([0.95, 0.02, 0.01, 0.03]))
        nodes = np.tile(Z, (16, 1))
        avg = fb.frozen_average(nodes, np.array([NU.nu1]), np.array([NU.nu2]), params)
        assert avg.fbar[0] == pytest.approx(fb.perturbation_f(Z, NU, params), rel=1e-14)

    def test_mean_velocity_vanishes(self, orbits_ref):
        for o in orbits_ref:
            _, S = o.sample(256)
            assert np.max(np.abs(S[:, 2:].mean(axis=0))) < 1e-9
            # the canonical momentum averages to (-mean y, mean x), not to zero
            P = dyn.to_momenta(S)
            np.testing.assert_allclose(P[:, 2:].mean(axis=0), [-S[:, 1].mean(), S[:, 0].mean()],
                                       atol=1e-12)

    def test_node_doubling(self, params, orbits_ref):
        nu1 = np.linspace(0, 2 * math.pi, 9)
        nu2 = params.theta(params.time_of(nu1))
        for o in orbits_ref:
            a = fb.frozen_average(o, nu1, nu2, params, n_nodes=128)
            b = fb.frozen_average(o, nu1, nu2, params, n_nodes=256)
            assert np.max(np.abs(a.fbar - b.fbar)) < 1e-11

    def test_along_matches_differences(self, params, orbits_ref):
        o = orbits_ref[0]

        def fbar(n1):
            n1 = np.atleast_1d(n1)
            return fb.frozen_average(o, n1, params.theta(params.time_of(n1)), params).fbar[0]
        nu1 = np.array([0.7])
        a = fb.frozen_average(o, nu1, params.theta(params.time_of(nu1)), params)
        h = 1e-4
        fd = (-fbar(nu1 + 2 * h) + 8 * fbar(nu1 + h) - 8 * fbar(nu1 - h) + fbar(nu1 - 2 * h)) / (12 * h)
        assert a.along[0] == pytest.approx(fd, rel=1e-6)


def _dnu_scale(planets, orbits):
    ms = sorted(planets)
    out = []
    nu1 = np.linspace(0, 2 * math.pi, 256, endpoint=False)
    for m in ms:
        P = planets[m]
        p = fb.FourBodyParams(MU_SJ, P.epsilon**3, P)
        nu2 = p.theta(p.time_of(nu1))
        a1 = fb.frozen_average(orbits[0], nu1, nu2, p)
        a2 = fb.frozen_average(orbits[1], nu1, nu2, p)
        out.append(np.max(np.abs(a1.d_nu1 - a2.d_nu1)) / p.delta)
    return np.polyfit(np.log([1 / m for m in ms]), np.log(out), 1)[0]


class TestNondegeneracy:
    def test_zero_delta(self, zero, orbits_ref):
        r = fb.nondegeneracy_diagnostic(*orbits_ref, H_REF, zero)
        assert r.variation == 0.0 and r.degenerate

    def test_reference_level(self, params, orbits_ref, families):
        r = fb.nondegeneracy_diagnostic(*families, H_REF, params)
        assert not r.degenerate and r.variation > 10 * r.floor
        assert r.h == pytest.approx(H_REF, abs=1e-12)
        other = fb.nondegeneracy_diagnostic(*orbits_ref, None, params)
        assert other.variation == pytest.approx(r.variation, rel=1e-6)

    def test_small_mu_bracket(self):
        # mu = 1e-6, L2 orbit of amplitude 1e-4 and the L1 orbit on its level
        mu = 1e-6
        o2 = ly.lyapunov_orbit(mu, "L2", amplitude=1e-4)
        c1 = ly.build_family(mu, "L1", o2.energy + 1e-9, max_dh=2e-6)
        o1 = c1.orbit_at(o2.energy)
        P = pl.planet_orbit(mu, pl.ResonanceSpec(63))
        r = fb.nondegeneracy_diagnostic(o1, o2, None, fb.FourBodyParams(mu, P.epsilon**3, P))
        assert 0.8 <= r.u_ratio <= 1.2
        assert r.explained > 0.8 and r.leading_residual < 0.2

    def test_d_nu_scale(self, planets, orbits_ref):
        # q_P turns once per unit time in the rotating frame, so d q_P/d nu1 ~ T_P r_P ~ eps^(-5/3)
        assert _dnu_scale(planets, orbits_ref) == pytest.approx(-5 / 3, abs=0.3)

    @pytest.mark.xfail(strict=True, reason="measured slope is -5/3: q_P rotates at unit rate "
                       "in the rotating frame; see notes")
    def test_d_nu_scale_two_thirds(self, planets, orbits_ref):
        assert _dnu_scale(planets, orbits_ref) == pytest.approx(-2 / 3, abs=0.3)

    def test_level_checks(self, params, families, orbits_ref):
        with pytest.raises(DomainError):
            fb.nondegeneracy_diagnostic(*families, 0.0, params)
        with pytest.raises(DomainError):
            fb.nondegeneracy_diagnostic(*families, None, params)
        with pytest.raises(DomainError):
            fb.nondegeneracy_diagnostic(orbits_ref[0], orbits_ref[1], H_REF + 1e-3, params)

    def test_csv(self, params, orbits_ref, tmp_path):
        r = fb.nondegeneracy_diagnostic(*orbits_ref, None, params,
                                        nu_grid=fb.default_nu_grid(params, 16))
        path = tmp_path / "nd.csv"
        r.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# h = ") and "np." not in path.read_text()
        assert lines[5] == "nu1,nu2,f1,f2,diff,leading" and len(lines) == 6 + 16


class TestGtl:
    def test_nondecreasing_where_max_positive(self, gtl_runs, families, params):
        sol, _ = gtl_runs
        vf = fb._VField(*families, params, 64)
        nu = np.linspace(sol.nu[0], min(sol.nu[-1], 2.0), 401)
        h = sol.sol(nu)[0]
        mid = 0.5 * (nu[1:] + nu[:-1])
        hm = sol.sol(mid)[0]
        vmax = np.array([max(a[0], b[0]) for a, b in (vf.v(x, y) for x, y in zip(hm, mid))])
        dh = np.diff(h)
        clear = vmax > 0.05 * np.max(np.abs(vmax))
        assert np.all(dh[clear] > 0)

    def test_gain_identity(self, gtl_runs, families, params):
        sol, _ = gtl_runs
        gain, half_sum, half_abs = fb.gtl_gain_identity(sol, families, params, n=4001)
        assert gain > 0 and half_abs > 0
        assert gain == pytest.approx(half_sum + half_abs, rel=1e-3)

    def test_equal_fields_no_net_growth(self, gtl_runs, families, params):
        pair, same = gtl_runs
        c1 = families[0]
        gain, half_sum, half_abs = fb.gtl_gain_identity(same, (c1, c1), params, n=2001)
        assert half_abs == 0.0
        assert abs(same.h[-1] - same.h[0]) < 0.05 * (pair.h[-1] - pair.h[0])

    def test_switches_recorded(self, gtl_runs):
        sol, _ = gtl_runs
        assert len(sol.switches) > 0
        assert set(np.unique(sol.active)) <= {1, 2}
        assert sol.diagnostic

    def test_stall(self, families, params, energy_range):
        sol = fb.gtl_energy_ode(*families, params, energy_range[0] + 5e-4, sigma=1.0, beta0=1.0)
        assert sol.diagnostic.startswith("stall") and len(sol.h) == 1

    def test_outside_range(self, families, params):
        with pytest.raises(DomainError):
            fb.gtl_energy_ode(*families, params, 0.0)

    def test_time_to_gain_and_csv(self, gtl_runs, tmp_path):
        sol, _ = gtl_runs
        g = 0.5 * (sol.h.max() - sol.h[0])
        t = sol.time_to_gain(g)
        assert 0 < t <= sol.t[-1]
        assert math.isnan(sol.time_to_gain(1.0))
        path = tmp_path / "gtl.csv"
        sol.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "nu,h,active" and len(lines) == 1 + len(sol.nu)


class TestSimulation:
    def test_trace_validation(self):
        with pytest.raises(DomainError):
            fb.EnergyTrace(np.array([0.0, 0.0]), np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2))
        with pytest.raises(DomainError):
            fb.EnergyTrace(np.array([0.0, 1.0]), np.array([0.0, math.nan]), np.zeros(2),
                           np.zeros(2), np.zeros(2))

    def test_zero_delta_constant(self, zero, families, energy_range):
        tr = fb.simulate_diffusion(zero, *families, energy_range[0] + 5e-4, 5.0)
        assert len(tr.t) > 3
        assert np.max(np.abs(tr.h - tr.h[0])) < 1e-9
        assert abs(tr.slope()) < 1e-9

    def test_csv(self, zero, families, energy_range, tmp_path):
        tr = fb.simulate_diffusion(zero, *families, energy_range[0] + 5e-4, 1.0)
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
        assert lines[0] == "t,h,segment,nu1,nu2" and len(lines) == 1 + len(tr.t)

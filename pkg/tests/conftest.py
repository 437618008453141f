"""Shared, expensive objects built once per test session."""
import numpy as np
import pytest

from rp4bp import fourbody as fb
from rp4bp import lyapunov as ly
from rp4bp import manifolds as mf
from rp4bp import planet as pl

MU_SJ = 0.0009537
J_REF = 3.03
H_REF = -J_REF / 2


@pytest.fixture(scope="session")
def energy_range():
    return ly.default_energy_range(MU_SJ)


@pytest.fixture(scope="session")
def families(energy_range):
    """L1 and L2 cylinders over the default range at the Sun-Jupiter mass ratio."""
    hi = energy_range[1]
    return ly.build_family(MU_SJ, "L1", hi), ly.build_family(MU_SJ, "L2", hi)


@pytest.fixture(scope="session")
def orbits_ref(families):
    c1, c2 = families
    return c1.orbit_at(H_REF), c2.orbit_at(H_REF)


@pytest.fixture(scope="session")
def search_ref(orbits_ref):
    return mf.search_connections(*orbits_ref, n_phase=128)


@pytest.fixture(scope="session")
def planets():
    return {m: pl.planet_orbit(MU_SJ, pl.ResonanceSpec(m)) for m in (31, 63, 127)}


@pytest.fixture(scope="session")
def params(planets):
    P = planets[63]
    return fb.FourBodyParams(MU_SJ, P.epsilon**3, P)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> list of (part, ok, detail, counts); filled by test_acceptance
ACCEPTANCE: dict[int, list] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[1] for p in parts if p[3])
        detail = "; ".join(f"{p[0]}: {'ok' if p[1] else 'FAILED'} ({p[2]})" for p in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")

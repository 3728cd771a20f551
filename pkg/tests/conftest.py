import os

import numpy as np
import pytest

from scrapkf.model import ElementSpec, HeatRecord, Heats, NoiseSpec

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


def small_heats(rng, T=40, n=3, slag=False, missing=()):
    """Random heats with plausible masses; ``missing`` positions have no f_steel."""
    sm = rng.uniform(0, 20e3, (T, n)) * (rng.random((T, n)) < 0.8)
    m_hm = rng.uniform(250e3, 300e3, T)
    m_steel = 0.92 * (m_hm + sm.sum(1))
    f_steel = rng.uniform(100e-6, 400e-6, T)
    f_steel[list(missing)] = np.nan
    return Heats(
        heat_index=np.arange(1, T + 1),
        scrap_mass=sm,
        m_hm=m_hm,
        f_hm=rng.uniform(20e-6, 40e-6, T),
        m_steel=m_steel,
        f_steel=f_steel,
        m_slag=rng.uniform(25e3, 45e3, T) if slag else np.zeros(T),
        f_feon_slag=rng.uniform(0.15, 0.3, T) if slag else np.full(T, np.nan),
    )


CU = ElementSpec("Cu", False)
CR = ElementSpec("Cr", True)


# acceptance outcomes, filled in by test_acceptance and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

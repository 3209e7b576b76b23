"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from commonatoms.cam_gibbs import ChainConfig
from commonatoms.data_model import CovariateSchema
from commonatoms.simgen import ScenarioSpec, gen_from_prior, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mixed_schema():
    return CovariateSchema.from_spec([("x1", 0), ("x2", 0), ("g", 3)])


@pytest.fixture(scope="session")
def prior_study(mixed_schema):
    """Small study drawn from the model's own prior, with censoring."""
    st, truth = gen_from_prior(12, 40, mixed_schema, np.random.default_rng(7), k=6,
                               censor_shift=1.0)
    return st, truth


@pytest.fixture(scope="session")
def cam_study():
    spec = ScenarioSpec("CAM", n1=30, p=6, delta=2.0)
    return generate(spec, np.random.default_rng(11))


@pytest.fixture
def short_cfg():
    return ChainConfig(k=6, iters=60, burn_in=20, thin=2, seed=3)


# -- acceptance summary lines ------------------------------------------------------------

_ACCEPTANCE: list = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def add(number: int, name: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append((number, f"criterion {number} [{name}]: "
                                    f"{'PASS' if ok else 'FAIL'}  {detail}"))
        print(_ACCEPTANCE[-1][1])
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)

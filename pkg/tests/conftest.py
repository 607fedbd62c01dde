from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def eval_table():
    from placebench.predict import priors

    return priors.load_table(priors.EVAL)


@pytest.fixture(scope="session")
def table_scene():
    """5x5 m room with one 1x1x0.5 m box table in the middle."""
    from placebench.scenesim.scene import SceneBuilder

    b = SceneBuilder((5.0, 5.0), 2.5, name="table-room")
    b.add_room()
    b.add_box("Table", "receptacle", (2.0, 2.0, 0.0), (3.0, 3.0, 0.5))
    return b.build()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

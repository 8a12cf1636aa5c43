import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from depthfuse import sim
from depthfuse.camera import CameraIntrinsics

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def intr640():
    return CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)


@pytest.fixture
def intr_small():
    return CameraIntrinsics(60.0, 60.0, 39.5, 29.5, 80, 60)


@pytest.fixture
def intr_distorted():
    return CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480, (0.08, -0.02, 0.001, -0.0015))


@pytest.fixture(scope="session")
def demo_scene():
    return sim.demo_scene()


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A short simulated sequence: 12 frames, keyframe every 5."""
    root = tmp_path_factory.mktemp("small_ds")
    traj = sim.line_trajectory(12)
    info = sim.generate_dataset(sim.demo_scene(), traj, 5, sim.SimConfig(seed=7), root)
    return info


def rng(seed=0):
    return np.random.default_rng(seed)


# ------------------------------------------------------------------ acceptance report

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``with criterion(n, title): ...`` records one pass/fail line for the run summary."""
    import contextlib
    import time

    @contextlib.contextmanager
    def run(n, title):
        t0 = time.perf_counter()
        notes = []
        try:
            yield notes
        except BaseException:
            _ACCEPTANCE[n] = f"criterion {n} FAIL  {title} ({time.perf_counter() - t0:.2f} s) {'; '.join(notes)}"
            raise
        _ACCEPTANCE[n] = f"criterion {n} PASS  {title} ({time.perf_counter() - t0:.2f} s) {'; '.join(notes)}"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])

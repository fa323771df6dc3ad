import os
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from expdb import learner

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> list of (test id, outcome)
_CRITERIA: dict[int, list] = defaultdict(list)
_TITLES: dict[int, str] = {}

# every layer layout instantiated during the session, for the gradient-check criterion
ARCHITECTURES: set[tuple[int, ...]] = set()
_init_model = learner.init_model


def _recording_init_model(dims, seed):
    model = _init_model(dims, seed)
    ARCHITECTURES.add(tuple(model.dims))
    return model


learner.init_model = _recording_init_model


def draw_biases_off_kink(model, x, rng, scale: float, margin: float = 1e-3) -> None:
    """Redraw biases until every hidden pre-activation is at least ``margin`` from 0.

    Gradients are undefined at a ReLU kink, and a central difference whose step
    crosses one is not a derivative. With margin 1e-3 no step of h = 1e-5 can cross.
    """
    for _ in range(1000):
        for b in model.biases:
            b[:] = rng.normal(scale=scale, size=b.shape)
        h, closest = np.asarray(x, dtype=np.float64), np.inf
        for w, b in zip(model.weights[:-1], model.biases[:-1]):
            z = h @ w + b
            closest = min(closest, float(np.abs(z).min()))
            h = np.maximum(z, 0.0)
        if closest >= margin:
            return
    raise RuntimeError("no bias draw kept hidden units off the kink")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): test backing an acceptance criterion")
    config.addinivalue_line("markers", "run_last: run after every other collected test")


def pytest_collection_modifyitems(items):
    # tests marked run_last need everything else to have run first
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            num, title = mark.args
            _TITLES[num] = title
            item.user_properties.append(("criterion", num))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[props["criterion"]].append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_TITLES):
        results = _CRITERIA.get(num, [])
        if not results:
            status = "NOT RUN"
        elif all(outcome == "passed" for _, outcome in results):
            status = "PASS"
        else:
            status = "FAIL"
        tr.write_line(f"criterion {num:2d} {status:7s} {_TITLES[num]} ({len(results)} checks)")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)

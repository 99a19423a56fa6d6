import numpy as np
import pytest

from lrbs.lattice import ModelParams, make_competition_kernel, make_dispersal_kernel

LAZY1 = {-1: 0.25, 0: 0.5, 1: 0.25}
LAZY2 = {(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125}
FIVE2 = {(0, 0): 0.2, (1, 0): 0.2, (-1, 0): 0.2, (0, 1): 0.2, (0, -1): 0.2}


@pytest.fixture
def lazy1():
    return make_dispersal_kernel(1, LAZY1)


@pytest.fixture
def lazy2():
    return make_dispersal_kernel(2, LAZY2)


def model(m=2.0, lam=None, d=1, extent=None, p=None, boundary="torus"):
    p = p or make_dispersal_kernel(d, LAZY1 if d == 1 else LAZY2)
    lam = lam if lam is not None else {(0,) * d: 0.01}
    extent = extent or (16,) * d
    return ModelParams(m, p, make_competition_kernel(d, lam), extent, boundary)


@pytest.fixture
def rng_np():
    return np.random.default_rng(20240611)

from hypothesis import settings  # noqa: E402

settings.register_profile("lrbs", deadline=None, max_examples=100)
settings.load_profile("lrbs")


SMALL_CONFIGS = {
    "simulate": "m = 2\nlambda0 = 0.05\nextent = 16,16\nsteps = 30\nreplicas = 4\nsnapshots = 0,30\n",
    "cml": "m = 2.5\nlambda0 = 1\nextent = 32\nmax_steps = 400\n",
    "couple": "m = 2\nlambda0 = 0.05\nextent = 16\nsteps = 60\nreplicas = 4\n",
    "two-species": "extent = 16\nlambda0 = 0.05\ncross = 0.005\nsteps = 30\nreplicas = 4\n",
    "logistic": "m_values = 1.5,2,2.5\neps_values = 0.1\n",
    "lemma7": "m = 2\nextent = 16\nadversaries = 4\n",
    "percolation": "theta = 0.9\nhorizon = 30\nhalf_width = 30\nreplicas = 4\nburn_in = 10\n",
    "survival-sweep": "m_values = 0.9,2\nlambda0 = 0.05\nextent = 16\nsteps = 30\nreplicas = 3\n",
    "coexistence-sweep": "extent = 16\nlambda0 = 0.05\ncross_values = 0,0.005\nsteps = 30\nreplicas = 3\n",
    "complete-convergence": "m = 2\nlambda0 = 0.05\nextent = 16\nsteps = 200\nburn_in = 20\nreplicas = 2\n",
}


def write_config(tmp_path, name, seed=5, extra=""):
    p = tmp_path / f"{name}.cfg"
    p.write_text(f"experiment = {name}\nseed = {seed}\n" + SMALL_CONFIGS[name] + extra)
    return p


# --- acceptance report ---------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        _ACCEPTANCE[report.nodeid] = (props.get("criterion", report.nodeid), report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, (name, outcome, detail) in sorted(_ACCEPTANCE.items(), key=lambda kv: kv[0]):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  [{detail}]")

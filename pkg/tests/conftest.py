import json
from pathlib import Path

import numpy as np
import pytest

from gaquant.core import Box, Dataset, FitConfig, QuantileLevel
from gaquant.dgp import Component, ErrorLaw, Link, TrueModel

FIXTURES = Path(__file__).parent / "fixtures"
ROOT = Path(__file__).resolve().parents[1]

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def frozen():
    return json.loads((FIXTURES / "frozen_constants.json").read_text())


@pytest.fixture
def box2():
    return Box([0.1, 0.1], [0.9, 0.9])


def linear_model(error=None, tau=0.5, rho=0.0):
    """``Y = 2 + 3 x1 - x2 (+ error)``."""
    return TrueModel(Link(), (Component("linear", scale=3.0, shift=2.0),
                              Component("linear", scale=-1.0)),
                     error or ErrorLaw("none"), phi=(0.3,), rho=rho, tau=tau)


def sine_bump_model(rho=0.0, sigma=0.1):
    return TrueModel(Link(), (Component("sine_bump", {"b": 0.5}),
                              Component("sine_bump", {"b": 0.5})),
                     ErrorLaw("gaussian", sigma), phi=(0.3,), rho=rho, tau=0.5)


def fit_config(n, box=None, anchors=(0.5, 0.5), tau=0.5, h=None, p=2):
    box = box or Box([0.1, 0.1], [0.9, 0.9])
    return FitConfig(p=p, h=h if h is not None else n ** (-1.0 / (2 * p + 1)), h_g=None,
                     level=QuantileLevel.from_tau(tau), box=box,
                     anchors=np.asarray(anchors, dtype=float))


def uniform_data(n, fn, d=2, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (n, d))
    return Dataset(x, fn(x))

from pathlib import Path

import numpy as np
import pytest

from flsim.learning import ModelArch, Model, init_model

ROOT = Path(__file__).resolve().parents[1]
DESK_CONFIG = ROOT / "configs" / "desk.yaml"

# filled by test_acceptance.report, printed after the run
ACCEPTANCE_LINES = []


def make_model(seed, sizes=(4, 5, 3), scale=1.0):
    arch = ModelArch(sizes)
    rng = np.random.default_rng(seed)
    return Model(arch, scale * rng.standard_normal(arch.n_params))


def perturbed(base, seed, std):
    rng = np.random.default_rng(seed)
    return base.with_params(base.params + std * rng.standard_normal(base.params.shape))


@pytest.fixture
def small_arch():
    return ModelArch((4, 5, 3))


@pytest.fixture
def g0(small_arch):
    return init_model(small_arch, 0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)

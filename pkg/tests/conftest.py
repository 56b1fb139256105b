import numpy as np
import pytest

from lffattack import config, harness
from lffattack.oracles import LinearSoftmaxModel, MlpModel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_mlp(rng, n=20, h=16, k=5):
    return MlpModel(rng.normal(0, 1 / np.sqrt(n), (h, n)), rng.normal(0, 0.1, h),
                    rng.normal(0, 1 / np.sqrt(h), (k, h)), rng.normal(0, 0.1, k))


def make_linear(rng, n=20, k=5):
    return LinearSoftmaxModel(rng.normal(0, 1, (k, n)), rng.normal(0, 0.1, k))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mlp(rng):
    return make_mlp(rng)


@pytest.fixture
def linear(rng):
    return make_linear(rng)


@pytest.fixture(scope="session")
def default_cfg():
    return config.loads(config.bundled("default"))


@pytest.fixture(scope="session")
def default_world(default_cfg):
    """Dataset and trained models of the frozen default experiment."""
    cfg = default_cfg
    ds = harness.generate_dataset(cfg.dataset, (cfg.seed, cfg.dataset_seed))
    trained = harness.train_models(cfg, ds)
    models = harness.assemble_models(cfg, {k: v.model for k, v in trained.items()})
    return ds, trained, models


@pytest.fixture(scope="session")
def default_experiment(default_cfg, default_world):
    ds, _, models = default_world
    return harness.run_experiment(default_cfg, ds, models)

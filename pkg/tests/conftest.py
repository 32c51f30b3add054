import sys

import numpy as np
import pytest
from hypothesis import settings

from consnet.labels import build_label_space

settings.register_profile("default", deadline=None, max_examples=50, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ride_space():
    return build_label_space(["ride", "hold"], ["bicycle", "horse", "cup"],
                             [("ride", "bicycle"), ("ride", "horse"), ("hold", "cup"), ("hold", "horse")])


def tiny_config(**overrides):
    """A RunConfig small enough to train in a couple of seconds."""
    from dataclasses import replace

    from consnet.harness import GraphSection, ModelSection, RunConfig, TrainSection
    from consnet.synth import SynthConfig

    cfg = RunConfig(graph=GraphSection(eps_a=1, eps_o=1, eps_t=2),
                    model=ModelSection(d_v=16, hidden=16, fusion_widths=(8, 8, 4), heads=2),
                    train=TrainSection(epochs=1, warmup_iters=5, eta=10.0),
                    synth=SynthConfig(n_actions=3, n_objects=4, combo_density=0.75, d_a=8, d_e=8, latent_dim=4,
                                      images=40, test_images=10))
    return replace(cfg, **overrides)


@pytest.fixture
def tiny():
    return tiny_config()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)

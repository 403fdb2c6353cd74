import numpy as np
import pytest

from thzalloc.config import RunConfig
from thzalloc.orchestrator import drop_seed, plan_from_config, prepare_drop
from thzalloc.spectrum import TW_REGISTRY, build_plan


@pytest.fixture(scope="session")
def default_cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def default_plan(default_cfg):
    return plan_from_config(default_cfg)


@pytest.fixture(scope="session")
def tw3_worked_plan():
    return build_plan(TW_REGISTRY["TW3"], w_I=5e9, w_E=5e9, w_G=1e9, B_th=0.01)


@pytest.fixture(scope="session")
def default_drop(default_cfg, default_plan):
    return prepare_drop(default_cfg, drop_seed(default_cfg.seed, 0), default_plan)


def tiny_plan(S=1, w=1e9, f=0.8e12, k=0.0):
    """Hand-built plan with constant absorption ``k`` and explicit centers."""
    from thzalloc.spectrum import SpectrumPlan
    return SpectrumPlan(fit=TW_REGISTRY["TW3"], epsilon=0.05, w_I=0.0, w_E=0.0, w_G=0.0, B_th=1.0,
                        S_star=S, w=w, f_centers=np.full(S, f) if np.ndim(f) == 0 else np.asarray(f, float),
                        k_override=k)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

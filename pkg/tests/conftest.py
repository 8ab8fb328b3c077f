import numpy as np
import pytest

from tokenprune.model import ViTConfig, generate_random_model


@pytest.fixture(scope="session")
def tiny_config():
    return ViTConfig(depth=4, embed_dim=32, num_heads=4, mlp_ratio=2.0, num_tokens=17,
                     num_special_tokens=1, num_classes=5)


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    return generate_random_model(tiny_config, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record one line each; printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Call ``criterion(ok, detail)`` once per acceptance criterion; asserts ``ok``."""
    name = request.node.name

    def record(ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

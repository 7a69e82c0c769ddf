import pytest

from fastq.config import TrainConfig
from fastq.datagen import SimConfig, simulate

TINY_SIM = SimConfig(episodes_per_policy=25, max_len=12)
TINY_TRAIN = TrainConfig(
    gammas=(0.1, 0.3, 0.5, 0.7), phase_max_steps=12, plateau_window=4, plateau_threshold=1e-9,
    batch_size=32, warmup_steps=5, pe_steps=20, pe_batch_size=32, hidden=8, br_dim=8,
    classifier_hidden=8, critic_hidden=16, actor_hidden=16, window=4,
)


@pytest.fixture(scope="session")
def tiny_buffer():
    return simulate(TINY_SIM, 3)


@pytest.fixture(scope="session")
def tiny_config():
    return TINY_TRAIN


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

from __future__ import annotations

import pytest

from avvp.data import SynthConfig, split, synth_generate


def tiny_config(**overrides) -> SynthConfig:
    base = dict(num_videos=24, T=6, num_classes=4, d_a=5, d_v=6, seed=3)
    base.update(overrides)
    return SynthConfig(**base)


@pytest.fixture
def tiny_dataset():
    return synth_generate(tiny_config())


@pytest.fixture
def tiny_split(tiny_dataset):
    return split(tiny_dataset.records, (0.5, 0.25, 0.25), seed=1)


# acceptance criteria record one line each; they are echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

"""Shared fixtures: controllable clock, seeded server cores, staged projects."""

from __future__ import annotations

import random

import numpy as np
import pytest

from fedmask.masking import PrimeModulus
from fedmask.server import ServerCore
from fedmask.storage import SqliteStorage


class FakeClock:
    """Settable time source for timeout tests."""

    def __init__(self, start: float = 1000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


class FixedWordRng:
    """Noise source whose raw 64-bit words are all one constant.

    Feeding a value below the modulus through rejection sampling forces the
    field noise to that exact value, which lets tests pin masked shares.
    """

    def __init__(self, word: int):
        self.word = word

    def raw_words(self, count: int) -> np.ndarray:
        return np.full(count, self.word, dtype=np.uint64)

    def normal(self, sigma: float, shape) -> np.ndarray:
        return np.zeros(shape, dtype=np.float64)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def small_modulus():
    return PrimeModulus(17)


@pytest.fixture
def server_core(clock):
    core = ServerCore(
        storage=SqliteStorage(":memory:"),
        clock=clock,
        rng=random.Random(1234),
        round_timeout=300.0,
    )
    yield core
    core.storage.close()


def stage_project(core, participants=3, algorithm="variance", draft_extra=None):
    """Create a project with a full roster, one join short of starting.

    Returns (project_id, coordinator_session, tokens, joined) where joined
    maps username -> token for the participants already bound. The last
    participant's credentials are in tokens[-1]; join them to start the run.
    """
    core.signup("coordinator", "coordinator-pw")
    session = core.login("coordinator", "coordinator-pw")["session"]
    draft = {
        "name": "fixture project",
        "description": "staged by conftest",
        "tool": "stats",
        "algorithm": algorithm,
        "participant_count": participants,
        "hyperparameters": {},
    }
    draft.update(draft_extra or {})
    project_id = core.create_project(session, draft)["project"]["id"]
    tokens = core.issue_tokens(session, project_id, participants)["tokens"]
    joined = {}
    for i, token in enumerate(tokens[:-1]):
        username = f"user{i + 1}"
        core.signup(username, f"pw{i + 1}")
        core.join(project_id, username, f"pw{i + 1}", token)
        joined[username] = token
    return project_id, session, tokens, joined


def start_project(core, participants=3, **kwargs):
    """stage_project plus the final join; returns a running project."""
    project_id, session, tokens, joined = stage_project(core, participants, **kwargs)
    last = f"user{participants}"
    core.signup(last, f"pw{participants}")
    core.join(project_id, last, f"pw{participants}", tokens[-1])
    joined[last] = tokens[-1]
    return project_id, session, tokens, joined

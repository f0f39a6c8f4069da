"""Shared solved fields; each is computed once per test session."""

import numpy as np
import pytest

from _fields import solved
from sdgame import build_example


def field(*key):
    spec, vf, _ = solved(*key)
    return spec, vf


@pytest.fixture(scope="session")
def ex51():
    return build_example("ex51")


@pytest.fixture(scope="session")
def ex52():
    return build_example("ex52")


@pytest.fixture(scope="session")
def ex53():
    return build_example("ex53")


@pytest.fixture(scope="session")
def ex51_field():
    """ex51 on [-2, 2] with dx = 0.01."""
    return field("ex51", -2.0, 2.0, 401)


@pytest.fixture(scope="session")
def ex52_field():
    """ex52 on [-2, 2] with dx = 0.01."""
    return field("ex52", -2.0, 2.0, 401)


@pytest.fixture(scope="session")
def ex53_field():
    return field("ex53", 0.0, 8.0, 161)


@pytest.fixture(scope="session")
def ex51_pair(ex51_field):
    from sdgame.game import extract_feedback

    spec, vf = ex51_field
    return extract_feedback(spec, vf)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

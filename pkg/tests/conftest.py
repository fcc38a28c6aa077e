from __future__ import annotations

import numpy as np
import pytest

import draws


@pytest.fixture
def ref():
    return draws.REFERENCE


@pytest.fixture
def het_ref():
    return draws.HET_REFERENCE


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)

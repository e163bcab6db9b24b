from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240901)


@pytest.fixture(scope="session")
def session_synth_store():
    from helpers import tiny_synth_store

    return tiny_synth_store()


@pytest.fixture(scope="session")
def session_identity_store():
    from helpers import identity_view_store

    return identity_view_store()

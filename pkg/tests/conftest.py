import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from seqtag import kernels  # noqa: E402


@pytest.fixture(params=[b.BACKEND for b in kernels.available_backends()])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    mod = {b.BACKEND: b for b in kernels.available_backends()}[request.param]
    monkeypatch.setattr(kernels, "active", mod)
    return mod


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)

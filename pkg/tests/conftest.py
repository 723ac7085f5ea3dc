import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from easecp.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def coupled_ds():
    """Mid-size coupled dataset shared by statistical tests."""
    return generate(SynthConfig(n=8000, k=20, l=4, target_accuracy=0.75, seed=42))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_prob_rows(rng, n, k):
    """Dirichlet rows, float32-quantized like every dataset in the toolkit."""
    rows = rng.dirichlet(np.ones(k) * rng.uniform(0.3, 3.0), size=n)
    return rows.astype(np.float32).astype(np.float64)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def away_from(values, reference, margin=0.05, rng=None):
    """Shift random values so |values - reference| stays off the FD step.

    Finite differences use step 1e-3; abs/max kinks at exact equality would
    make central differences meaningless, so gradient-test points keep a
    margin.
    """
    rng = rng or np.random.default_rng(0)
    sign = np.where(rng.random(np.shape(reference)) < 0.5, -1.0, 1.0)
    return reference + sign * (margin + np.abs(values))

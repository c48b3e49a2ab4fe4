import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bayesdr import PanelDataset, Trajectory


@pytest.fixture
def rng():
    return np.random.default_rng(20240615)


def make_panel(n=4, K=3, P=2, seed=0, family="gaussian_identity"):
    """Small synthetic panel with confounded continuous dose."""
    g = np.random.default_rng(seed)
    trajs = []
    for i in range(n):
        x = g.normal(size=(K, P))
        d = 1.0 + (x @ np.arange(1, P + 1) if P else 0.0) + g.normal(size=K)
        if family == "poisson_log":
            y = g.poisson(np.exp(0.5 + 0.2 * d)).astype(float)
        else:
            y = 2.0 + 0.7 * d + (x[:, 0] if P else 0.0) + g.normal(size=K)
        trajs.append(Trajectory(unit_id=f"u{i}", times=np.arange(1, K + 1),
                                outcomes=y, doses=d, covariates=x))
    return PanelDataset(trajectories=tuple(trajs), family=family,
                        covariate_names=tuple(f"x{j + 1}" for j in range(P)))


@pytest.fixture
def small_panel():
    return make_panel()

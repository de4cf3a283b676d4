import numpy as np
import pytest

from hybridrc.rcmodel import (
    ThetaParams,
    RC_BOUNDS,
    F_BOUNDS,
    AWIN_BOUNDS,
    CAPACITY_BOUNDS,
)


def sample_theta(rng: np.random.Generator) -> ThetaParams:
    """Random parameter set inside the identification bounds (log-uniform
    for the positive box parameters)."""

    def logu(lo, hi):
        return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))

    return ThetaParams(
        C_w=logu(*RC_BOUNDS),
        C_za=logu(*RC_BOUNDS),
        R_zw=logu(*RC_BOUNDS),
        R_zo=logu(*RC_BOUNDS),
        f=float(rng.uniform(*F_BOUNDS)),
        A_win=logu(*AWIN_BOUNDS),
        Q_h=logu(*CAPACITY_BOUNDS),
        Q_c=-logu(*CAPACITY_BOUNDS),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)

"""Gray-box 2R-2C building model toolkit.

Identifies thermal network parameters from operational data under
unmeasured internal gains, estimates the hidden disturbances with
Kalman-type filters, forecasts them with small neural networks, and
fuses model and forecast into a hybrid long-horizon predictor.
"""

from .rcmodel import (
    ThetaParams,
    ContinuousModel,
    DiscreteModel,
    THETA_TRUE,
    build_continuous,
    discretize,
    simulate,
    bode_magnitude,
    step_response,
    dc_gain,
)

__version__ = "0.1.0"

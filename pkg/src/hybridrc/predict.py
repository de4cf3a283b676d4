"""Temperature prediction and required-runtime inversion.

The conventional predictor runs the identified model open loop over
forecast inputs with the unmeasured-gain channel silent; the hybrid
predictor injects a forecast disturbance, through the gain channel for
ID forecasts or added at the output for OD forecasts. The runtime
inversion recovers, per step, the heating/cooling runtime fraction
that reproduces a given temperature trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import DisturbanceTrace, NoiseConfig, augment_id, kalman_filter
from .datagen import OperationalDataset
from .rcmodel import ThetaParams, build_continuous, discretize, simulate


@dataclass(frozen=True)
class PredictionRun:
    origin: np.datetime64
    method: str                  # conventional | hybrid-id | hybrid-od
    timestamps: np.ndarray
    y_pred: np.ndarray
    fingerprint: str = ""

    def __post_init__(self):
        if self.method not in ("conventional", "hybrid-id", "hybrid-od"):
            raise ValueError(f"unknown prediction method {self.method!r}")
        if len(self.timestamps) != len(self.y_pred):
            raise ValueError("prediction length mismatch")
        if not np.all(np.isfinite(self.y_pred)):
            raise ValueError("non-finite prediction")


@dataclass(frozen=True)
class LoadRequirement:
    """Required runtime fractions reproducing a temperature trajectory."""

    u_h: np.ndarray
    u_c: np.ndarray
    states: np.ndarray           # reconstructed state per step, (N, 2)
    saturated: np.ndarray        # |u| beyond the 0..1 range


def warmup_state(
    theta: ThetaParams,
    recent: OperationalDataset,
    noise: NoiseConfig | None = None,
) -> np.ndarray:
    """Thermal state estimate at the end of a trailing data window.

    Filters the window with the ID-augmented model (which absorbs the
    unmeasured gains into the integrator state) and returns the
    one-step-ahead thermal state prediction for the step after the
    window, i.e. the prediction origin.
    """
    model = discretize(augment_id(build_continuous(theta)), recent.step_seconds)
    res = kalman_filter(model, recent.y_za, recent.w, recent.u, noise or NoiseConfig())
    bv = model.B_wd @ recent.w[-1] + model.B_ud @ recent.u[-1]
    x_next = model.A_d @ res.x_filt[-1] + bv
    return x_next[:2]


def predict_conventional(
    theta: ThetaParams,
    x0,
    w_future: np.ndarray,
    u_future: np.ndarray,
    ts_seconds: float,
    origin=None,
) -> PredictionRun:
    """Open-loop forecast with the unmeasured-gain channel at zero."""
    model = discretize(build_continuous(theta), ts_seconds)
    y = simulate(model, x0, w_future, u_future)
    stamps = _future_stamps(origin, len(y), ts_seconds)
    return PredictionRun(origin=stamps[0], method="conventional",
                         timestamps=stamps, y_pred=y)


def predict_hybrid(
    theta: ThetaParams,
    x0,
    w_future: np.ndarray,
    u_future: np.ndarray,
    forecast: DisturbanceTrace,
    ts_seconds: float,
    origin=None,
) -> PredictionRun:
    """Forecast with a predicted disturbance injected.

    ID forecasts (kW) drive the gain input channel; OD forecasts (degC)
    add to the model output.
    """
    n = len(w_future)
    if len(forecast.values) < n:
        raise ValueError("disturbance forecast shorter than the horizon")
    vals = np.asarray(forecast.values[:n], dtype=float)
    model = discretize(build_continuous(theta), ts_seconds)
    if forecast.kind == "ID":
        y = simulate(model, x0, w_future, u_future, vals)
        method = "hybrid-id"
    elif forecast.kind == "OD":
        y = simulate(model, x0, w_future, u_future) + vals
        method = "hybrid-od"
    else:
        raise ValueError(f"unknown forecast kind {forecast.kind!r}")
    stamps = _future_stamps(origin, n, ts_seconds)
    return PredictionRun(origin=stamps[0], method=method, timestamps=stamps, y_pred=y)


def _future_stamps(origin, n, ts_seconds):
    if origin is None:
        origin = np.datetime64("1970-01-01", "s")
    return (np.datetime64(origin, "s")
            + (np.arange(n) * ts_seconds).astype("timedelta64[s]"))


def required_rtf(
    theta: ThetaParams,
    y_traj: np.ndarray,
    w: np.ndarray,
    x0,
    ts_seconds: float,
    q_g: np.ndarray | None = None,
) -> LoadRequirement:
    """Runtime fractions that drive the model along a temperature path.

    Solves, step by step, C_d B_u u(k) = y(k+1) - C_d (A_d x(k) + B_w w(k))
    for the single active channel: positive residual demand maps to the
    heating column, negative to the cooling column, matching mutually
    exclusive staging. States advance with the recovered input. With
    q_g given, the known disturbance contribution is removed first.
    """
    model = discretize(build_continuous(theta), ts_seconds)
    y_traj = np.asarray(y_traj, dtype=float)
    w = np.asarray(w, dtype=float)
    N = len(y_traj) - 1
    if w.shape[0] < N:
        raise ValueError("weather series shorter than the trajectory")
    bh = float((model.C_d @ model.B_ud[:, 0])[0])
    bc = float((model.C_d @ model.B_ud[:, 1])[0])
    if abs(bh) < 1e-12 or abs(bc) < 1e-12:
        raise ValueError("degenerate control gain; cannot invert")
    bg = float((model.C_d @ model.B_gd[:, 0])[0])
    x = np.asarray(x0, dtype=float).copy()
    uh = np.zeros(N)
    uc = np.zeros(N)
    states = np.zeros((N, 2))
    for k in range(N):
        states[k] = x
        free = model.A_d @ x + model.B_wd @ w[k]
        delta = y_traj[k + 1] - float(free[1])
        if q_g is not None:
            delta -= bg * q_g[k]
        if delta >= 0:
            uh[k] = delta / bh
        else:
            uc[k] = delta / bc
        x = free + model.B_ud @ np.array([uh[k], uc[k]])
        if q_g is not None:
            x = x + model.B_gd[:, 0] * q_g[k]
    saturated = (uh > 1.0) | (uc > 1.0)
    return LoadRequirement(u_h=uh, u_c=uc, states=states, saturated=saturated)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("series must align and be non-empty")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def mae(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("series must align and be non-empty")
    return float(np.mean(np.abs(a - b)))


def evaluate(runs: list[PredictionRun], measured: OperationalDataset) -> dict:
    """Score prediction runs against measured data.

    Returns per-run metrics, per-method aggregates and, when both are
    present, hybrid-minus-conventional RMSE deltas per origin and on
    average (negative deltas mean the hybrid run was better).
    """
    index = {int(t.astype("datetime64[s]").astype(np.int64)): i
             for i, t in enumerate(measured.timestamps)}
    per_run = []
    for run in runs:
        keys = [int(t.astype(np.int64)) for t in run.timestamps.astype("datetime64[s]")]
        try:
            sel = np.array([index[k] for k in keys])
        except KeyError:
            raise ValueError("prediction timestamps missing from the measured series")
        y_true = measured.y_za[sel]
        per_run.append({
            "origin": str(run.origin.astype("datetime64[s]")),
            "method": run.method,
            "rmse": rmse(run.y_pred, y_true),
            "mae": mae(run.y_pred, y_true),
        })
    methods = sorted({r["method"] for r in per_run})
    per_method = {}
    for m in methods:
        vals = [r["rmse"] for r in per_run if r["method"] == m]
        maes = [r["mae"] for r in per_run if r["method"] == m]
        per_method[m] = {"mean_rmse": float(np.mean(vals)),
                         "mean_mae": float(np.mean(maes)),
                         "n_runs": len(vals)}
    report = {"per_run": per_run, "per_method": per_method}
    conv = {r["origin"]: r["rmse"] for r in per_run if r["method"] == "conventional"}
    for m in methods:
        if m.startswith("hybrid"):
            deltas = [r["rmse"] - conv[r["origin"]] for r in per_run
                      if r["method"] == m and r["origin"] in conv]
            if deltas:
                report.setdefault("delta_rmse", {})[m] = {
                    "per_origin": deltas, "mean": float(np.mean(deltas))}
    return report

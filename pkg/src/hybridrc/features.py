"""Supervised windows for the disturbance forecasters.

Encodes the catalog of input-feature combinations swept during model
selection: feed-forward cases concatenate a multi-day disturbance
history with future weather blocks into one flat vector, recurrent
cases present a per-step feature sequence whose disturbance channel is
only observed over the past steps (the builder reports those slots so
the training glue can blank them post-normalization).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datagen import OperationalDataset
from .estimation import DisturbanceTrace

FEATURES = ("zeta", "how", "hod", "dow", "weekday", "toa", "qsol", "iheat", "icool")
HORIZON_HOURS = 24


@dataclass(frozen=True)
class FeatureCase:
    case_id: str
    family: str                  # "feedforward" or "recurrent"
    pattern_days: int
    past_features: tuple[str, ...]
    future_features: tuple[str, ...]

    def __post_init__(self):
        if self.family not in ("feedforward", "recurrent"):
            raise ValueError("family must be feedforward or recurrent")
        for f in self.past_features + self.future_features:
            if f not in FEATURES:
                raise ValueError(f"unknown feature {f!r}")
        if self.family == "recurrent" and self.past_features != ("zeta",) + self.future_features:
            raise ValueError("recurrent cases use the same per-step features plus zeta")

    @property
    def n_steps_in(self) -> int:
        return self.pattern_days * 24


def _ff(case_id, days, past, future):
    return FeatureCase(case_id, "feedforward", days, tuple(past), tuple(future))


def _rec(case_id, days, future):
    return FeatureCase(case_id, "recurrent", days, ("zeta",) + tuple(future), tuple(future))


# q_sol,surface in the first feed-forward case is read as the window
# irradiance signal used everywhere else.
FEEDFORWARD_CASES = {c.case_id: c for c in [
    _ff("case01", 1, ("zeta", "how", "toa", "qsol"), ("how", "toa", "qsol")),
    _ff("case02", 4, ("zeta",), ("toa", "qsol")),
    _ff("case03", 4, ("zeta", "how"), ("how", "toa", "qsol")),
    _ff("case04", 4, ("zeta", "weekday"), ("weekday", "toa", "qsol")),
    _ff("case05", 4, ("zeta", "how", "toa", "qsol"), ("how", "toa", "qsol")),
    _ff("case06", 4, ("zeta", "weekday", "toa", "qsol"), ("weekday", "toa", "qsol")),
    _ff("case07", 7, ("zeta",), ("toa", "qsol")),
    _ff("case08", 7, ("zeta", "how"), ("how", "toa", "qsol")),
    _ff("case09", 7, ("zeta", "weekday"), ("weekday", "toa", "qsol")),
    _ff("case10", 7, ("zeta", "how", "toa", "qsol"), ("how", "toa", "qsol")),
    _ff("case11", 7, ("zeta", "weekday", "toa", "qsol"), ("weekday", "toa", "qsol")),
    _ff("case12", 4, ("zeta", "dow", "toa", "qsol"), ("dow", "toa", "qsol")),
    _ff("case13", 7, ("zeta", "dow", "toa", "qsol"), ("dow", "toa", "qsol")),
    _ff("case14", 4, ("zeta", "toa", "qsol"), ("toa", "qsol")),
    _ff("case15", 7, ("zeta", "toa", "qsol"), ("toa", "qsol")),
    _ff("case16", 4, ("zeta", "weekday", "toa", "qsol", "iheat", "icool"), ("dow", "toa", "qsol")),
    _ff("case17", 7, ("zeta", "weekday", "toa", "qsol", "iheat", "icool"), ("dow", "toa", "qsol")),
    _ff("case18", 4, ("zeta", "dow", "toa", "qsol", "iheat", "icool"), ("dow", "toa", "qsol")),
    _ff("case19", 7, ("zeta", "dow", "toa", "qsol", "iheat", "icool"), ("dow", "toa", "qsol")),
    _ff("case20", 4, ("zeta", "how", "toa", "qsol", "iheat", "icool"), ("dow", "toa", "qsol")),
    _ff("case21", 7, ("zeta", "how", "toa", "qsol", "iheat", "icool"), ("dow", "toa", "qsol")),
]}

RECURRENT_CASES = {c.case_id: c for c in [
    _rec("case01", 1, ("how", "toa", "qsol")),
    _rec("case02", 1, ("how",)),
    _rec("case03", 1, ("toa", "qsol")),
    _rec("case04", 1, ("hod", "toa", "qsol")),
    _rec("case05", 1, ("dow", "toa", "qsol")),
    _rec("case06", 1, ("weekday", "toa", "qsol")),
    _rec("case07", 2, ("how", "toa", "qsol")),
    _rec("case08", 4, ("how", "toa", "qsol")),
    _rec("case09", 7, ("how", "toa", "qsol")),
    _rec("case10", 4, ("toa", "qsol")),
    _rec("case11", 7, ("toa", "qsol")),
    _rec("case12", 2, ("weekday", "toa", "qsol")),
    _rec("case13", 4, ("weekday", "toa", "qsol")),
    _rec("case14", 7, ("weekday", "toa", "qsol")),
    _rec("case15", 2, ("dow", "toa", "qsol")),
    _rec("case16", 4, ("dow", "toa", "qsol")),
    _rec("case17", 7, ("dow", "toa", "qsol")),
]}


def lookup_case(family: str, case_id: str) -> FeatureCase:
    table = FEEDFORWARD_CASES if family == "feedforward" else RECURRENT_CASES
    if case_id not in table:
        raise KeyError(f"no {family} {case_id}")
    return table[case_id]


def calendar_features(timestamps: np.ndarray):
    """(hour of week, hour of day, day of week, weekday flag); Monday 0:00
    maps to how=0, dow=0, weekday=1."""
    ts = timestamps.astype("datetime64[s]")
    days = ts.astype("datetime64[D]")
    dow = ((days.astype(np.int64) + 3) % 7).astype(np.int64)
    hod = ((ts - days).astype(np.int64) // 3600).astype(np.int64)
    how = 24 * dow + hod
    weekday = (dow < 5).astype(np.int64)
    return how, hod, dow, weekday


def resample_hourly(dataset: OperationalDataset) -> OperationalDataset:
    """Mean-aggregate a finer uniform dataset onto hourly steps."""
    step = dataset.step_seconds
    ratio = 3600.0 / step
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError("dataset step must divide one hour")
    r = int(round(ratio))
    n_hours = len(dataset) // r
    if n_hours * r != len(dataset):
        warnings.warn("dropping trailing samples that do not fill an hour")
    m = n_hours * r
    agg = lambda a: a[:m].reshape(n_hours, r).mean(axis=1)
    return OperationalDataset(
        timestamps=dataset.timestamps[:m:r].copy(),
        T_oa=agg(dataset.T_oa),
        q_sol_win=agg(dataset.q_sol_win),
        u_h=agg(dataset.u_h),
        u_c=agg(dataset.u_c),
        y_za=agg(dataset.y_za),
        T_hsp=agg(dataset.T_hsp),
        T_csp=agg(dataset.T_csp),
        Q_g=None if dataset.Q_g is None else agg(dataset.Q_g),
    )


def resample_trace_hourly(trace: DisturbanceTrace) -> DisturbanceTrace:
    step = float(np.diff(trace.timestamps.astype("datetime64[s]").astype(np.int64))[0])
    r = int(round(3600.0 / step))
    if r < 1 or abs(3600.0 / step - r) > 1e-9:
        raise ValueError("trace step must divide one hour")
    n = len(trace) // r
    if n * r != len(trace):
        warnings.warn("dropping trailing trace samples that do not fill an hour")
    vals = trace.values[: n * r].reshape(n, r).mean(axis=1)
    return DisturbanceTrace(trace.kind, vals, trace.timestamps[: n * r: r].copy(), trace.source)


@dataclass
class WindowSet:
    """Raw supervised windows for one feature case.

    psi is (N, D) for feed-forward cases and (N, T, F) for recurrent
    cases; xi is (N, horizon). For recurrent cases the disturbance
    channel index and the past-step count are recorded so the future
    disturbance slots can be blanked after normalization.
    """

    case: FeatureCase
    psi: np.ndarray
    xi: np.ndarray
    starts: np.ndarray
    zeta_channel: int | None = None
    n_steps_in: int = 0

    def __len__(self):
        return len(self.psi)


def _feature_table(trace, dataset: OperationalDataset) -> dict[str, np.ndarray]:
    if len(trace) != len(dataset):
        raise ValueError("trace and dataset must be aligned")
    if not np.array_equal(trace.timestamps, dataset.timestamps):
        raise ValueError("trace and dataset timestamps differ")
    how, hod, dow, weekday = calendar_features(dataset.timestamps)
    return {
        "zeta": np.asarray(trace.values, dtype=float),
        "how": how.astype(float),
        "hod": hod.astype(float),
        "dow": dow.astype(float),
        "weekday": weekday.astype(float),
        "toa": dataset.T_oa,
        "qsol": dataset.q_sol_win,
        "iheat": (dataset.u_h > 0).astype(float),
        "icool": (dataset.u_c > 0).astype(float),
    }


def build_windows(
    trace: DisturbanceTrace,
    dataset: OperationalDataset,
    case: FeatureCase,
    horizon: int = HORIZON_HOURS,
) -> WindowSet:
    """Sliding supervised windows over aligned hourly series.

    Every admissible start contributes one window (stride one hour), so
    a gapless series of N samples yields N - (n_in + horizon) + 1
    windows.
    """
    if abs(dataset.step_seconds - 3600.0) > 1e-6:
        raise ValueError("windows are built on hourly data; resample first")
    table = _feature_table(trace, dataset)
    n_in = case.n_steps_in
    N = len(dataset)
    n_win = N - (n_in + horizon) + 1
    if n_win < 1:
        raise ValueError("series too short for the requested window layout")
    zeta = table["zeta"]
    starts = dataset.timestamps[:n_win].copy()
    xi = np.stack([zeta[i + n_in: i + n_in + horizon] for i in range(n_win)])

    if case.family == "feedforward":
        blocks = []
        for f in case.past_features:
            col = table[f]
            blocks.append(np.stack([col[i: i + n_in] for i in range(n_win)]))
        for f in case.future_features:
            col = table[f]
            blocks.append(np.stack([col[i + n_in: i + n_in + horizon] for i in range(n_win)]))
        psi = np.concatenate(blocks, axis=1)
        return WindowSet(case, psi, xi, starts)

    T = n_in + horizon
    feats = case.past_features  # zeta first, then the shared per-step set
    psi = np.zeros((n_win, T, len(feats)))
    for j, f in enumerate(feats):
        col = table[f]
        psi[:, :, j] = np.stack([col[i: i + T] for i in range(n_win)])
    # future disturbance values are unknown at prediction time; they are
    # blanked after normalization, the builder just records where
    return WindowSet(case, psi, xi, starts, zeta_channel=0, n_steps_in=n_in)


def blank_future_zeta(ws: WindowSet, psi_normalized: np.ndarray) -> np.ndarray:
    """Zero the normalized future disturbance slots of recurrent windows
    (zero is the training mean after z-scoring)."""
    if ws.case.family != "recurrent":
        return psi_normalized
    out = psi_normalized.copy()
    out[:, ws.n_steps_in:, ws.zeta_channel] = 0.0
    return out


def export_windows_csv(ws: WindowSet, path) -> None:
    """One row per window: start timestamp, flattened psi, then xi."""
    import csv
    from pathlib import Path

    flat = ws.psi.reshape(len(ws), -1)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["start"]
            + [f"psi{i}" for i in range(flat.shape[1])]
            + [f"xi{i}" for i in range(ws.xi.shape[1])]
        )
        for i in range(len(ws)):
            writer.writerow(
                [str(ws.starts[i].astype("datetime64[s]"))]
                + [f"{v:.10g}" for v in flat[i]]
                + [f"{v:.10g}" for v in ws.xi[i]]
            )

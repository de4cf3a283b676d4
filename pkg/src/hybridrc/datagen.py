"""Synthetic operational data from the reference thermal model.

Builds the excitation-rich datasets the identification study runs on:
hour-of-week internal gain schedules with stochastic variation, weekday
comfort setpoints with a PRBS perturbation on selected weekend days,
and a closed-loop two-mode ON/OFF thermostat simulated on a fine inner
grid then resampled to the controller sampling time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rcmodel import ThetaParams, build_continuous, discretize
from .weather import WeatherSeries, weather_to_inner_grid

# Maximal-length LFSR feedback taps per register order.
LFSR_TAPS = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5),
    7: (7, 6), 8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7),
}


@dataclass(frozen=True)
class ScheduleConfig:
    """Setpoint bands and internal gain schedule.

    Bands are (heating, cooling) setpoints in degC. Gains are weekday
    step profiles: full/partial occupancy and lighting levels in kW,
    with weekends held at the unoccupied level. Gain noise is Gaussian
    with a standard deviation proportional to the instantaneous base.
    """

    occupied_band: tuple[float, float] = (23.0, 25.0)
    unoccupied_band: tuple[float, float] = (18.0, 30.0)
    occupied_hours: tuple[int, int] = (6, 19)
    occupancy_full_kw: float = 0.6
    occupancy_part_kw: float = 0.3
    lighting_full_kw: float = 0.35
    lighting_part_kw: float = 0.175
    plug_base_kw: float = 0.0
    weekend_kw: float = 0.0
    gain_noise_frac: float = 0.15
    gain_scale: float = 1.0
    # unmeasured air exchange, lumped into the disturbance: base
    # infiltration around the clock plus ventilation when occupied,
    # driving heat gain/loss proportional to (T_oa - indoor reference)
    infiltration_ua: float = 0.0     # kW/K
    ventilation_ua: float = 0.0      # kW/K, occupied hours only
    exchange_ref_temp: float = 22.0  # degC

    def __post_init__(self):
        for band in (self.occupied_band, self.unoccupied_band):
            if band[0] >= band[1]:
                raise ValueError("heating setpoint must lie below cooling setpoint")
        for name in ("occupancy_full_kw", "occupancy_part_kw", "lighting_full_kw",
                     "lighting_part_kw", "plug_base_kw", "weekend_kw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def hourly_gain_base(self) -> np.ndarray:
        """Hour-of-week base gain profile in kW (168 entries, Monday 0:00 first)."""
        day = np.zeros(24)
        for h0, h1, kw in ((8, 12, self.occupancy_full_kw), (13, 17, self.occupancy_full_kw),
                           (7, 8, self.occupancy_part_kw), (12, 13, self.occupancy_part_kw),
                           (17, 18, self.occupancy_part_kw)):
            day[h0:h1] += kw
        for h0, h1, kw in ((7, 16, self.lighting_full_kw), (6, 7, self.lighting_part_kw),
                           (16, 20, self.lighting_part_kw)):
            day[h0:h1] += kw
        day += self.plug_base_kw
        week = np.concatenate([np.tile(day, 5), np.full(48, self.weekend_kw)])
        return week * self.gain_scale


@dataclass(frozen=True)
class OperationalDataset:
    """Uniformly sampled operational record.

    u_h/u_c are 0/1 stages at the inner grid or runtime fractions after
    resampling. Q_g (true internal gains) is present only for synthetic
    data and never shown to the identification algorithms.
    """

    timestamps: np.ndarray
    T_oa: np.ndarray
    q_sol_win: np.ndarray
    u_h: np.ndarray
    u_c: np.ndarray
    y_za: np.ndarray
    T_hsp: np.ndarray
    T_csp: np.ndarray
    Q_g: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.timestamps)
        for name in ("T_oa", "q_sol_win", "u_h", "u_c", "y_za", "T_hsp", "T_csp"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} length mismatch")
        if self.Q_g is not None and len(self.Q_g) != n:
            raise ValueError("column Q_g length mismatch")
        if n >= 2:
            steps = np.diff(self.timestamps.astype("datetime64[s]").astype(np.int64))
            if not np.all(steps == steps[0]) or steps[0] <= 0:
                raise ValueError("timestamps must be uniform and increasing")
        if not np.all(np.isfinite(self.y_za)):
            raise ValueError("non-finite y_za")

    @property
    def step_seconds(self) -> float:
        steps = np.diff(self.timestamps.astype("datetime64[s]").astype(np.int64))
        return float(steps[0])

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def w(self) -> np.ndarray:
        return np.column_stack([self.T_oa, self.q_sol_win])

    @property
    def u(self) -> np.ndarray:
        return np.column_stack([self.u_h, self.u_c])

    def slice(self, start: int, stop: int) -> "OperationalDataset":
        return OperationalDataset(
            self.timestamps[start:stop],
            self.T_oa[start:stop],
            self.q_sol_win[start:stop],
            self.u_h[start:stop],
            self.u_c[start:stop],
            self.y_za[start:stop],
            self.T_hsp[start:stop],
            self.T_csp[start:stop],
            None if self.Q_g is None else self.Q_g[start:stop],
        )


DATASET_COLUMNS = ["timestamp", "Toa", "qsol_win", "uh", "uc", "yza", "Thsp", "Tcsp"]


def write_dataset_csv(dataset: OperationalDataset, path) -> None:
    path = Path(path)
    cols = DATASET_COLUMNS + (["Qg"] if dataset.Q_g is not None else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(len(dataset)):
            row = [
                str(dataset.timestamps[i].astype("datetime64[s]")),
                f"{dataset.T_oa[i]:.10g}",
                f"{dataset.q_sol_win[i]:.10g}",
                f"{dataset.u_h[i]:.10g}",
                f"{dataset.u_c[i]:.10g}",
                f"{dataset.y_za[i]:.10g}",
                f"{dataset.T_hsp[i]:.10g}",
                f"{dataset.T_csp[i]:.10g}",
            ]
            if dataset.Q_g is not None:
                row.append(f"{dataset.Q_g[i]:.10g}")
            writer.writerow(row)


def read_dataset_csv(path) -> OperationalDataset:
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(DATASET_COLUMNS) <= set(reader.fieldnames):
            raise ValueError(f"dataset CSV must have columns {DATASET_COLUMNS}")
        has_qg = "Qg" in reader.fieldnames
        rows = list(reader)
    n = len(rows)
    stamps = np.array([np.datetime64(r["timestamp"], "s") for r in rows])
    get = lambda key: np.array([float(r[key]) for r in rows])
    return OperationalDataset(
        stamps, get("Toa"), get("qsol_win"), get("uh"), get("uc"),
        get("yza"), get("Thsp"), get("Tcsp"),
        get("Qg") if has_qg else None,
    )


def make_prbs_setpoints(
    duration_hours: float,
    order: int = 4,
    hold_hours: float = 2.0,
    levels: tuple[float, float] = (18.0, 25.0),
    step_seconds: float = 900.0,
    seed: int = 0,
) -> np.ndarray:
    """PRBS setpoint excitation.

    A maximal-length LFSR of the given order produces the bit stream;
    each bit is held for `hold_hours`. On every bit flip (including the
    first bit) the setpoint is redrawn uniformly inside `levels`, so the
    emitted series is a randomly leveled binary-timed excitation.
    """
    if order not in LFSR_TAPS:
        raise ValueError(f"unsupported PRBS order {order}")
    if duration_hours <= hold_hours:
        raise ValueError("duration must exceed the hold time")
    rng = np.random.default_rng(seed)
    n_bits = int(np.ceil(duration_hours / hold_hours))
    taps = LFSR_TAPS[order]
    mask = (1 << order) - 1
    state = 1  # any nonzero register works; fixed for determinism
    bits = np.zeros(n_bits, dtype=int)
    for i in range(n_bits):
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) | fb) & mask
        bits[i] = fb

    lo, hi = levels
    sp_bits = np.zeros(n_bits)
    current = rng.uniform(lo, hi)
    for i in range(n_bits):
        if i > 0 and bits[i] != bits[i - 1]:
            current = rng.uniform(lo, hi)
        sp_bits[i] = current

    steps_per_bit = int(round(hold_hours * 3600.0 / step_seconds))
    n_steps = int(round(duration_hours * 3600.0 / step_seconds))
    return np.repeat(sp_bits, steps_per_bit)[:n_steps]


def lfsr_bit_period(order: int) -> int:
    """Period of the maximal-length sequence (2^order - 1)."""
    if order not in LFSR_TAPS:
        raise ValueError(f"unsupported PRBS order {order}")
    taps = LFSR_TAPS[order]
    mask = (1 << order) - 1
    state = 1
    seen = {}
    for i in range(2 ** order + 1):
        if state in seen:
            return i - seen[state]
        seen[state] = i
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) | fb) & mask
    raise RuntimeError("no cycle found")


def hour_of_week(timestamps: np.ndarray) -> np.ndarray:
    """0..167, Monday 00:00 = 0 (tz-naive local time)."""
    ts = timestamps.astype("datetime64[s]")
    days = ts.astype("datetime64[D]")
    dow = (days.astype(np.int64) + 3) % 7  # 1970-01-01 was a Thursday
    hod = (ts - days).astype(np.int64) // 3600
    return (24 * dow + hod).astype(np.int64)


def make_gain_profile(
    schedule: ScheduleConfig,
    timestamps: np.ndarray,
    seed: int = 0,
    ar_tau_minutes: float = 45.0,
    toa: np.ndarray | None = None,
) -> np.ndarray:
    """Lumped unmeasured disturbance at the given timestamps.

    The scheduled part is the hour-of-week base profile with zero-mean
    Gaussian variation, clipped at zero; the variation is AR(1) with
    time constant `ar_tau_minutes` so it survives resampling, and its
    pointwise standard deviation is gain_noise_frac times the base.
    When `toa` is given and the schedule carries exchange coefficients,
    an infiltration/ventilation term proportional to the outdoor-indoor
    temperature difference is added (it may be negative: a net loss).
    """
    base_week = schedule.hourly_gain_base()
    how = hour_of_week(timestamps)
    base = base_week[how]
    n = len(base)
    rng = np.random.default_rng(seed)
    if n >= 2:
        dt_min = float(
            np.diff(timestamps.astype("datetime64[s]").astype(np.int64))[0] / 60.0
        )
    else:
        dt_min = 1.0
    phi = np.exp(-dt_min / ar_tau_minutes)
    z = np.zeros(n)
    innov = rng.normal(0.0, np.sqrt(1.0 - phi * phi), n)
    z[0] = rng.normal()
    for k in range(1, n):
        z[k] = phi * z[k - 1] + innov[k]
    total = np.maximum(base * (1.0 + schedule.gain_noise_frac * z), 0.0)
    if toa is not None and (schedule.infiltration_ua > 0 or schedule.ventilation_ua > 0):
        dow = how // 24
        hod = how % 24
        occupied = (dow < 5) & (hod >= schedule.occupied_hours[0]) & (hod < schedule.occupied_hours[1])
        ua = schedule.infiltration_ua + schedule.ventilation_ua * occupied
        exchange = ua * (np.asarray(toa, dtype=float) - schedule.exchange_ref_temp)
        total = total + exchange * (1.0 + schedule.gain_noise_frac * z)
    return total


def schedule_setpoints(
    schedule: ScheduleConfig, timestamps: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Weekday occupied/unoccupied setpoint bands; weekends unoccupied."""
    how = hour_of_week(timestamps)
    dow = how // 24
    hod = how % 24
    occupied = (dow < 5) & (hod >= schedule.occupied_hours[0]) & (hod < schedule.occupied_hours[1])
    hsp = np.where(occupied, schedule.occupied_band[0], schedule.unoccupied_band[0])
    csp = np.where(occupied, schedule.occupied_band[1], schedule.unoccupied_band[1])
    return hsp.astype(float), csp.astype(float)


def run_true_model(
    theta: ThetaParams,
    weather: WeatherSeries,
    setpoints: tuple[np.ndarray, np.ndarray],
    gains: np.ndarray,
    T_s: float = 900.0,
    min_cycle_s: float = 300.0,
    inner_step_s: float = 60.0,
    deadband: float = 0.25,
    x0=None,
    record_gains: bool = True,
    return_inner_log: bool = False,
    sensor_noise_std: float = 0.0,
    noise_seed: int = 0,
):
    """Closed-loop simulation with a two-mode ON/OFF thermostat.

    Setpoints and gains must be given on the inner grid implied by the
    weather series and `inner_step_s`. Heat switches on below the
    heating setpoint, cooling above the cooling setpoint, each with a
    hysteresis deadband, and every mode (including OFF) is held at
    least `min_cycle_s`. Outputs land on the `T_s` grid: y_za is the
    instantaneous zone temperature at the window start, u_h/u_c are
    runtime fractions over the window, weather and gains are window
    means.

    With sensor_noise_std > 0, iid Gaussian sensor noise is added to
    the recorded y_za (the thermostat always acts on the true
    temperature; hysteresis stands in for its noise immunity). The
    replay-consistency bound on y_za holds for the noise-free default.
    """
    stamps_in, toa_in, qsol_in = weather_to_inner_grid(weather, inner_step_s)
    n_in = len(stamps_in)
    hsp, csp = setpoints
    if len(hsp) != n_in or len(csp) != n_in or len(gains) != n_in:
        raise ValueError("setpoint/gain series must be on the inner grid")
    if np.any(hsp > csp):
        raise ValueError("heating setpoint above cooling setpoint")
    if min_cycle_s < inner_step_s:
        raise ValueError("min cycle must cover at least one inner step")

    ratio = T_s / inner_step_s
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("T_s must be a multiple of the inner step")
    r = int(round(ratio))
    n_out = n_in // r

    d = discretize(build_continuous(theta), inner_step_s)
    a00, a01 = d.A_d[0]
    a10, a11 = d.A_d[1]
    bw = d.B_wd
    bu = d.B_ud
    bg = d.B_gd[:, 0]

    if x0 is None:
        x_w = x_a = float(np.clip(toa_in[0], hsp[0], csp[0]))
    else:
        x_w, x_a = float(x0[0]), float(x0[1])

    min_steps = int(round(min_cycle_s / inner_step_s))
    mode = 0  # 0 off, 1 heat, -1 cool
    steps_in_mode = min_steps

    T_log = np.zeros(n_in)
    Tw_log = np.zeros(n_in)
    uh_log = np.zeros(n_in)
    uc_log = np.zeros(n_in)
    for k in range(n_in):
        T_log[k] = x_a
        Tw_log[k] = x_w
        meas = x_a
        if steps_in_mode >= min_steps:
            if mode == 0:
                if meas < hsp[k] - deadband:
                    mode, steps_in_mode = 1, 0
                elif meas > csp[k] + deadband:
                    mode, steps_in_mode = -1, 0
            elif mode == 1:
                if meas > hsp[k] + deadband:
                    mode, steps_in_mode = 0, 0
            else:
                if meas < csp[k] - deadband:
                    mode, steps_in_mode = 0, 0
        uh = 1.0 if mode == 1 else 0.0
        uc = 1.0 if mode == -1 else 0.0
        uh_log[k] = uh
        uc_log[k] = uc
        w0, w1 = toa_in[k], qsol_in[k]
        qg = gains[k]
        nx_w = a00 * x_w + a01 * x_a + bw[0, 0] * w0 + bw[0, 1] * w1 + bu[0, 0] * uh + bu[0, 1] * uc + bg[0] * qg
        nx_a = a10 * x_w + a11 * x_a + bw[1, 0] * w0 + bw[1, 1] * w1 + bu[1, 0] * uh + bu[1, 1] * uc + bg[1] * qg
        x_w, x_a = nx_w, nx_a
        steps_in_mode += 1

    m = n_out * r
    block = lambda a: a[:m].reshape(n_out, r)
    out_stamps = stamps_in[:m:r]
    y_rec = T_log[:m:r].copy()
    if sensor_noise_std > 0:
        noise_rng = np.random.default_rng(noise_seed)
        y_rec = y_rec + noise_rng.normal(0.0, sensor_noise_std, n_out)
    dataset = OperationalDataset(
        timestamps=out_stamps,
        T_oa=block(toa_in).mean(axis=1),
        q_sol_win=block(qsol_in).mean(axis=1),
        u_h=block(uh_log).mean(axis=1),
        u_c=block(uc_log).mean(axis=1),
        y_za=y_rec,
        T_hsp=hsp[:m:r].copy(),
        T_csp=csp[:m:r].copy(),
        Q_g=block(np.asarray(gains, dtype=float)).mean(axis=1) if record_gains else None,
    )
    if not return_inner_log:
        return dataset
    inner = {
        "timestamps": stamps_in,
        "u_h": uh_log,
        "u_c": uc_log,
        "T_za": T_log,
        "T_w": Tw_log,
    }
    return dataset, inner

"""Bundled synthetic scenarios.

The reference two-week identification scenario: true-parameter 2R-2C
plant, mild-coastal weather, hour-of-week internal gains hidden from
the identification methods, and a PRBS setpoint experiment on the
first weekend. Longer variants of the same recipe provide multi-month
train/test datasets for the hybrid prediction experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import (
    OperationalDataset,
    ScheduleConfig,
    hour_of_week,
    make_gain_profile,
    make_prbs_setpoints,
    run_true_model,
    schedule_setpoints,
)
from .rcmodel import THETA_TRUE, ThetaParams
from .weather import synthetic_weather, weather_to_inner_grid


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    climate: str = "oakland"
    start: str = "2021-06-07"  # a Monday
    days: float = 14.0
    T_s: float = 900.0
    inner_step_s: float = 60.0
    prbs_weekends: tuple[int, ...] = (0,)
    prbs_order: int = 4
    prbs_hold_hours: float = 2.0
    prbs_levels: tuple[float, float] = (18.0, 25.0)
    sensor_noise_std: float = 0.25
    weather_seed: int = 99  # one climate realization per scenario, like a TMY file
    schedule: ScheduleConfig = ScheduleConfig(gain_scale=1.4)


# The prediction studies train on a cooling-season month and score
# one-day-ahead predictions on a heating-season month of the same
# continuous record.
PAPER_TWO_WEEK = ScenarioSpec(name="paper-twoweek")
BERKELEY_TRAINTEST = ScenarioSpec(
    name="berkeley-traintest", climate="berkeley", start="2021-07-05", days=217.0,
)
CHICAGO_TRAINTEST = ScenarioSpec(
    name="chicago-traintest", climate="chicago", start="2021-07-05", days=217.0,
)

SCENARIOS = {s.name: s for s in (PAPER_TWO_WEEK, BERKELEY_TRAINTEST, CHICAGO_TRAINTEST)}


def prbs_mask(timestamps: np.ndarray, start: np.datetime64, weekends: tuple[int, ...]) -> np.ndarray:
    """True on samples belonging to the selected weekends (Sat+Sun),
    counting whole weeks from the scenario start."""
    how = hour_of_week(timestamps)
    dow = how // 24
    days_since = (
        timestamps.astype("datetime64[D]") - start.astype("datetime64[D]")
    ).astype(int)
    week = days_since // 7
    mask = np.zeros(len(timestamps), dtype=bool)
    for wk in weekends:
        mask |= (week == wk) & (dow >= 5)
    return mask


def build_dataset(
    spec: ScenarioSpec,
    seed: int = 1,
    theta: ThetaParams = THETA_TRUE,
    record_gains: bool = True,
) -> OperationalDataset:
    """Generate a scenario dataset.

    The weather realization is fixed by the scenario (one climate file);
    `seed` drives the stochastic gains, the PRBS levels and the sensor
    noise draw.
    """
    root = np.random.SeedSequence(seed)
    s_gain, s_prbs, s_noise = [int(c.generate_state(1)[0]) for c in root.spawn(3)]

    weather = synthetic_weather(
        spec.climate, start=spec.start, days=spec.days, step_seconds=3600.0,
        seed=spec.weather_seed,
    )
    stamps_in, toa_in, _ = weather_to_inner_grid(weather, spec.inner_step_s)
    gains = make_gain_profile(spec.schedule, stamps_in, seed=s_gain, toa=toa_in)
    hsp, csp = schedule_setpoints(spec.schedule, stamps_in)

    mask = prbs_mask(stamps_in, np.datetime64(spec.start, "s"), spec.prbs_weekends)
    if mask.any():
        dur_h = mask.sum() * spec.inner_step_s / 3600.0
        sp = make_prbs_setpoints(
            duration_hours=dur_h + spec.prbs_hold_hours,
            order=spec.prbs_order,
            hold_hours=spec.prbs_hold_hours,
            levels=spec.prbs_levels,
            step_seconds=spec.inner_step_s,
            seed=s_prbs,
        )[: mask.sum()]
        hsp = hsp.copy()
        csp = csp.copy()
        hsp[mask] = sp
        csp[mask] = sp

    return run_true_model(
        theta, weather, (hsp, csp), gains,
        T_s=spec.T_s, inner_step_s=spec.inner_step_s, record_gains=record_gains,
        sensor_noise_std=spec.sensor_noise_std, noise_seed=s_noise,
    )

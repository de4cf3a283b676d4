"""Weather series: EPW/CSV ingestion and synthetic climate generation.

EPW files follow the canonical fixed layout: 8 header lines (the first
being LOCATION with latitude, longitude and UTC offset), then hourly
comma-separated records whose fields 6, 14 and 15 (0-based) carry
dry-bulb temperature, direct normal irradiance and diffuse horizontal
irradiance. Incident window solar is computed with an isotropic-sky
tilted-surface model when not supplied directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EPW_HEADER_LINES = 8
EPW_FIELD_DRYBULB = 6
EPW_FIELD_DNI = 14
EPW_FIELD_DHI = 15


@dataclass(frozen=True)
class WeatherSeries:
    """Uniformly sampled outdoor conditions (tz-naive local time)."""

    timestamps: np.ndarray  # datetime64[s]
    T_oa: np.ndarray        # degC
    q_sol_win: np.ndarray   # kW/m2 incident on the zone window

    def __post_init__(self):
        n = len(self.timestamps)
        if len(self.T_oa) != n or len(self.q_sol_win) != n:
            raise ValueError("weather column length mismatch")
        if n >= 2:
            steps = np.diff(self.timestamps.astype("datetime64[s]").astype(np.int64))
            if not np.all(steps == steps[0]) or steps[0] <= 0:
                raise ValueError("timestamps must be uniform and increasing")
        if np.any(self.q_sol_win < 0):
            raise ValueError("q_sol_win must be non-negative")
        if not (np.all(np.isfinite(self.T_oa)) and np.all(np.isfinite(self.q_sol_win))):
            raise ValueError("non-finite weather value")

    @property
    def step_seconds(self) -> float:
        steps = np.diff(self.timestamps.astype("datetime64[s]").astype(np.int64))
        return float(steps[0])

    def __len__(self) -> int:
        return len(self.timestamps)


def solar_incidence_factor(
    lat_deg: float,
    lon_deg: float,
    tz_hours: float,
    day_of_year: int,
    local_hour: float,
    surface_azimuth_deg: float,
    surface_tilt_deg: float,
) -> tuple[float, float]:
    """Geometry factors for beam and sky-diffuse irradiance on a surface.

    Returns (cos of beam incidence angle clipped at 0, isotropic sky view
    factor). Azimuth is degrees clockwise from north; tilt 90 is vertical.
    """
    phi = math.radians(lat_deg)
    n = day_of_year
    decl = math.radians(23.45) * math.sin(2.0 * math.pi * (284 + n) / 365.0)
    b = 2.0 * math.pi * (n - 1) / 365.0
    eot_min = 229.2 * (
        0.000075
        + 0.001868 * math.cos(b)
        - 0.032077 * math.sin(b)
        - 0.014615 * math.cos(2 * b)
        - 0.04089 * math.sin(2 * b)
    )
    # Longitudes east-positive; standard meridian at 15 deg per tz hour.
    solar_hour = local_hour + (4.0 * (lon_deg - 15.0 * tz_hours) + eot_min) / 60.0
    omega = math.radians(15.0 * (solar_hour - 12.0))
    cos_zen = math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(omega)
    tilt = math.radians(surface_tilt_deg)
    sky_view = (1.0 + math.cos(tilt)) / 2.0
    if cos_zen <= 0.0:
        return 0.0, sky_view
    sin_zen = math.sqrt(max(0.0, 1.0 - cos_zen * cos_zen))
    # Solar azimuth from south, positive toward west.
    if sin_zen < 1e-12:
        gamma_s = 0.0
    else:
        arg = (cos_zen * math.sin(phi) - math.sin(decl)) / (sin_zen * math.cos(phi))
        gamma_s = math.copysign(math.acos(min(1.0, max(-1.0, arg))), omega)
    gamma_surf = math.radians(surface_azimuth_deg - 180.0)
    cos_inc = cos_zen * math.cos(tilt) + sin_zen * math.sin(tilt) * math.cos(gamma_s - gamma_surf)
    return max(0.0, cos_inc), sky_view


def read_epw(
    path,
    window_azimuth_deg: float = 180.0,
    window_tilt_deg: float = 90.0,
) -> WeatherSeries:
    """Parse an EPW file into an hourly WeatherSeries.

    Window solar is DNI * cos(incidence) + DHI * sky view factor from the
    isotropic model; records map to the start of the hour they cover.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if len(lines) <= EPW_HEADER_LINES:
        raise ValueError("EPW file too short")
    loc = lines[0].split(",")
    if loc[0].strip().upper() != "LOCATION" or len(loc) < 10:
        raise ValueError("malformed EPW LOCATION header")
    lat = float(loc[6])
    lon = float(loc[7])
    tz = float(loc[8])

    stamps, toa, qsol = [], [], []
    for ln in lines[EPW_HEADER_LINES:]:
        if not ln.strip():
            continue
        f = ln.split(",")
        if len(f) <= EPW_FIELD_DHI:
            raise ValueError("EPW data row has too few fields")
        year, month, day, hour = int(f[0]), int(f[1]), int(f[2]), int(f[3])
        # EPW hour 1..24 labels the hour ending; stamp its start.
        ts = np.datetime64(f"{year:04d}-{month:02d}-{day:02d}", "s") + np.timedelta64(
            (hour - 1) * 3600, "s"
        )
        drybulb = float(f[EPW_FIELD_DRYBULB])
        dni = float(f[EPW_FIELD_DNI]) / 1000.0  # Wh/m2 over the hour -> kW/m2
        dhi = float(f[EPW_FIELD_DHI]) / 1000.0
        doy = (ts.astype("datetime64[D]") - np.datetime64(f"{year:04d}-01-01", "D")).astype(int) + 1
        cos_inc, sky = solar_incidence_factor(
            lat, lon, tz, int(doy), hour - 0.5, window_azimuth_deg, window_tilt_deg
        )
        stamps.append(ts)
        toa.append(drybulb)
        qsol.append(max(0.0, dni * cos_inc + dhi * sky))

    ts_arr = np.array(stamps, dtype="datetime64[s]")
    if len(ts_arr) >= 2 and np.any(np.diff(ts_arr).astype(np.int64) <= 0):
        raise ValueError("non-monotone EPW timestamps")
    return WeatherSeries(ts_arr, np.array(toa), np.array(qsol))


def read_weather_csv(path) -> WeatherSeries:
    """Read `timestamp,Toa,qsol_win` CSV (explicit window solar, no model)."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"timestamp", "Toa", "qsol_win"} <= set(
            reader.fieldnames
        ):
            raise ValueError("weather CSV must have columns timestamp,Toa,qsol_win")
        stamps, toa, qsol = [], [], []
        for row in reader:
            stamps.append(np.datetime64(row["timestamp"], "s"))
            toa.append(float(row["Toa"]))
            qsol.append(float(row["qsol_win"]))
    return WeatherSeries(np.array(stamps, dtype="datetime64[s]"), np.array(toa), np.array(qsol))


def ingest_weather(
    path,
    format: str = "epw",
    window_azimuth_deg: float = 180.0,
    window_tilt_deg: float = 90.0,
) -> WeatherSeries:
    if format == "epw":
        return read_epw(path, window_azimuth_deg, window_tilt_deg)
    if format == "csv":
        return read_weather_csv(path)
    raise ValueError(f"unknown weather format {format!r}")


# Synthetic climates for the bundled scenarios. The shipped experiments
# need reproducible weather without redistributing TMY files; these
# profiles mimic a mild coastal climate and a four-season continental one.
CLIMATE_PROFILES = {
    "oakland": dict(mean=14.0, seasonal=5.0, diurnal=4.5, noise=1.2, solar_peak=0.55),
    "berkeley": dict(mean=13.5, seasonal=5.0, diurnal=4.0, noise=1.2, solar_peak=0.55),
    "chicago": dict(mean=10.0, seasonal=14.0, diurnal=5.0, noise=2.2, solar_peak=0.60),
}


def synthetic_weather(
    profile: str,
    start: str = "2021-06-07",
    days: float = 14.0,
    step_seconds: float = 3600.0,
    seed: int = 0,
) -> WeatherSeries:
    """Seasonal + diurnal sinusoid climate with AR(1) weather noise and a
    clear-sky solar shape modulated by slowly varying cloudiness."""
    if profile not in CLIMATE_PROFILES:
        raise ValueError(f"unknown climate profile {profile!r}")
    p = CLIMATE_PROFILES[profile]
    rng = np.random.default_rng(seed)
    n = int(round(days * 86400.0 / step_seconds))
    t0 = np.datetime64(start, "s")
    stamps = t0 + (np.arange(n) * step_seconds).astype("timedelta64[s]")

    day_idx = stamps.astype("datetime64[D]")
    doy = (day_idx - day_idx.astype("datetime64[Y]")).astype(int) + 1
    hod = ((stamps - day_idx).astype(np.int64)) / 3600.0

    seasonal = -np.cos(2.0 * np.pi * (doy - 19) / 365.0)  # peak ~July 19
    diurnal = -np.cos(2.0 * np.pi * (hod - 2.0) / 24.0)   # peak ~14:00

    steps_per_hour = 3600.0 / step_seconds
    rho = 0.97 ** (1.0 / steps_per_hour)
    ar = np.zeros(n)
    eps = rng.normal(0.0, p["noise"] * np.sqrt(1 - rho**2), n)
    for k in range(1, n):
        ar[k] = rho * ar[k - 1] + eps[k]

    toa = p["mean"] + p["seasonal"] * seasonal + p["diurnal"] * diurnal + ar

    daylen = 12.0 + 2.5 * seasonal
    sunrise = 12.0 - daylen / 2.0
    x = (hod - sunrise) / daylen
    shape = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 1.3, 0.0)
    cloud_ar = np.zeros(n)
    ceps = rng.normal(0.0, 0.18 * np.sqrt(1 - rho**2), n)
    for k in range(1, n):
        cloud_ar[k] = rho * cloud_ar[k - 1] + ceps[k]
    cloud = np.clip(0.8 + cloud_ar, 0.25, 1.0)
    season_sol = 1.0 + 0.35 * seasonal
    qsol = p["solar_peak"] * shape * cloud * season_sol

    return WeatherSeries(stamps, toa, np.maximum(qsol, 0.0))


def weather_to_inner_grid(weather: WeatherSeries, inner_step_s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-order-hold expansion of a weather series onto a finer grid."""
    ratio = weather.step_seconds / inner_step_s
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError("inner step must divide the weather step")
    r = int(round(ratio))
    n = len(weather) * r
    stamps = weather.timestamps[0] + (
        np.arange(n) * inner_step_s
    ).astype("timedelta64[s]")
    return stamps, np.repeat(weather.T_oa, r), np.repeat(weather.q_sol_win, r)

import math

import numpy as np
import numpy.testing as npt
import pytest

from hybridrc.weather import (
    WeatherSeries,
    ingest_weather,
    read_epw,
    read_weather_csv,
    solar_incidence_factor,
    synthetic_weather,
)

EPW_HEADER = [
    "LOCATION,Oakland Intl Ap,CA,USA,TMY3,724930,37.72,-122.22,-8.0,2.0",
    "DESIGN CONDITIONS,0",
    "TYPICAL/EXTREME PERIODS,0",
    "GROUND TEMPERATURES,0",
    "HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0",
    "COMMENTS 1,synthetic fixture",
    "COMMENTS 2,",
    "DATA PERIODS,1,1,Data,Sunday,1/1,12/31",
]


def _epw_row(year, month, day, hour, drybulb, dni, dhi):
    fields = ["0"] * 35
    fields[0], fields[1], fields[2], fields[3], fields[4] = (
        str(year), str(month), str(day), str(hour), "0",
    )
    fields[5] = "?"
    fields[6] = str(drybulb)
    fields[14] = str(dni)
    fields[15] = str(dhi)
    return ",".join(fields)


def _write_epw(tmp_path, rows):
    path = tmp_path / "fixture.epw"
    path.write_text("\n".join(EPW_HEADER + rows) + "\n")
    return path


def test_epw_zero_irradiance_gives_zero_window_solar(tmp_path):
    rows = [_epw_row(2021, 6, 21, h, 15.0, 0, 0) for h in range(1, 25)]
    ws = read_epw(_write_epw(tmp_path, rows))
    assert len(ws) == 24
    npt.assert_array_equal(ws.q_sol_win, 0.0)
    npt.assert_array_equal(ws.T_oa, 15.0)


def test_epw_noon_row_matches_hand_computed_isotropic_value(tmp_path):
    # Independent spreadsheet-style evaluation of the isotropic model for
    # the solar noon record on June 21 at Oakland, south-facing vertical.
    dni, dhi = 800.0, 120.0
    rows = [_epw_row(2021, 6, 21, 13, 22.0, dni, dhi)]  # hour 13 covers 12:00-13:00
    ws = read_epw(_write_epw(tmp_path, rows), window_azimuth_deg=180.0, window_tilt_deg=90.0)

    lat, lon, tz = math.radians(37.72), -122.22, -8.0
    n = 172  # June 21
    decl = math.radians(23.45) * math.sin(2 * math.pi * (284 + n) / 365)
    b = 2 * math.pi * (n - 1) / 365
    eot = 229.2 * (
        0.000075 + 0.001868 * math.cos(b) - 0.032077 * math.sin(b)
        - 0.014615 * math.cos(2 * b) - 0.04089 * math.sin(2 * b)
    )
    solar_hour = 12.5 + (4 * (lon - 15 * tz) + eot) / 60.0
    omega = math.radians(15 * (solar_hour - 12))
    cos_zen = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(omega)
    sin_zen = math.sqrt(1 - cos_zen**2)
    gamma_s = math.copysign(
        math.acos((cos_zen * math.sin(lat) - math.sin(decl)) / (sin_zen * math.cos(lat))),
        omega,
    )
    cos_inc = sin_zen * math.cos(gamma_s)  # vertical surface facing south
    expected = (dni / 1000.0) * max(0.0, cos_inc) + (dhi / 1000.0) * 0.5

    npt.assert_allclose(ws.q_sol_win[0], expected, atol=1e-9)


def test_epw_malformed_header_rejected(tmp_path):
    path = tmp_path / "bad.epw"
    path.write_text("NOT A LOCATION LINE\n" + "\n".join(EPW_HEADER[1:]) + "\n")
    with pytest.raises(ValueError):
        read_epw(path)


def test_epw_nonmonotone_timestamps_rejected(tmp_path):
    rows = [
        _epw_row(2021, 6, 21, 2, 15.0, 0, 0),
        _epw_row(2021, 6, 21, 1, 15.0, 0, 0),
    ]
    with pytest.raises(ValueError):
        read_epw(_write_epw(tmp_path, rows))


def test_csv_passthrough(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text(
        "timestamp,Toa,qsol_win\n"
        "2021-06-07T00:00:00,12.5,0.0\n"
        "2021-06-07T01:00:00,12.0,0.05\n"
    )
    ws = ingest_weather(path, format="csv")
    npt.assert_allclose(ws.T_oa, [12.5, 12.0])
    npt.assert_allclose(ws.q_sol_win, [0.0, 0.05])


def test_csv_missing_column_rejected(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("timestamp,Toa\n2021-06-07T00:00:00,12.5\n")
    with pytest.raises(ValueError):
        read_weather_csv(path)


def test_night_incidence_is_zero():
    cos_inc, sky = solar_incidence_factor(37.72, -122.22, -8.0, 172, 0.5, 180.0, 90.0)
    assert cos_inc == 0.0
    assert sky == pytest.approx(0.5)


def test_synthetic_weather_deterministic_and_valid():
    a = synthetic_weather("oakland", days=7, seed=42)
    b = synthetic_weather("oakland", days=7, seed=42)
    npt.assert_array_equal(a.T_oa, b.T_oa)
    npt.assert_array_equal(a.q_sol_win, b.q_sol_win)
    assert len(a) == 7 * 24
    assert np.all(a.q_sol_win >= 0)
    # nights are dark
    hod = (a.timestamps - a.timestamps.astype("datetime64[D]")).astype(np.int64) / 3600.0
    assert np.all(a.q_sol_win[hod < 4] == 0)


def test_synthetic_chicago_colder_than_berkeley_in_winter():
    chi = synthetic_weather("chicago", start="2021-01-04", days=14, seed=3)
    ber = synthetic_weather("berkeley", start="2021-01-04", days=14, seed=3)
    assert chi.T_oa.mean() < ber.T_oa.mean() - 5.0


def test_weather_series_validation():
    ts = np.array(["2021-06-07T00:00:00", "2021-06-07T02:00:00", "2021-06-07T03:00:00"],
                  dtype="datetime64[s]")
    with pytest.raises(ValueError):
        WeatherSeries(ts, np.zeros(3), np.zeros(3))

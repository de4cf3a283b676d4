import numpy as np
import numpy.testing as npt
import pytest

from hybridrc.rcmodel import (
    THETA_TRUE,
    ThetaParams,
    build_continuous,
    discretize,
    simulate,
    _simulate_loop,
    bode_magnitude,
    dc_gain,
    step_response,
)
from conftest import sample_theta


def expm_taylor(M, tol=1e-16):
    """Independent matrix exponential oracle: scaling-and-squaring with a
    plain Taylor series, written before and apart from the main path."""
    M = np.asarray(M, dtype=float)
    norm = np.max(np.sum(np.abs(M), axis=1))
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    A = M / (2.0 ** s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ A / k
        E = E + term
        if np.max(np.abs(term)) < tol:
            break
    for _ in range(s):
        E = E @ E
    return E


def discretize_oracle(model, ts_seconds):
    n = model.A.shape[0]
    B = np.hstack([model.B_w, model.B_u, model.B_g])
    m = B.shape[1]
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = model.A
    blk[:n, n:] = B
    E = expm_taylor(blk * ts_seconds / 3600.0)
    return E[:n, :n], E[:n, n:]


def test_matrix_entries_theta_true():
    m = build_continuous(THETA_TRUE)
    npt.assert_allclose(m.A[0, 0], -1.0 / (4.0 * 1.2), rtol=1e-12)
    npt.assert_allclose(m.A[0, 1], 1.0 / (4.0 * 1.2), rtol=1e-12)
    npt.assert_allclose(m.A[1, 0], 1.0 / (1.0 * 1.2), rtol=1e-12)
    npt.assert_allclose(m.A[1, 1], -(1.0 / 1.2 + 1.0 / 9.0), rtol=1e-12)
    npt.assert_allclose(m.B_w[0, 1], 0.7 * 3.0 / 4.0, rtol=1e-12)
    npt.assert_allclose(m.B_w[1, 0], 1.0 / 9.0, rtol=1e-12)
    npt.assert_allclose(m.B_u[1, 0], 6.0, rtol=1e-12)
    npt.assert_allclose(m.B_u[1, 1], -6.0, rtol=1e-12)
    npt.assert_allclose(m.B_g[1, 0], 1.0, rtol=1e-12)
    npt.assert_array_equal(m.C, [[0.0, 1.0]])


def test_all_solar_to_air_when_f_is_one():
    theta = ThetaParams(4.0, 1.0, 1.2, 9.0, 1.0, 3.0, 6.0, -6.0)
    m = build_continuous(theta)
    assert m.B_w[0, 1] == 0.0
    npt.assert_allclose(m.B_w[1, 1], 3.0, rtol=1e-12)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ThetaParams(0.01, 1.0, 1.2, 9.0, 0.3, 3.0, 6.0, -6.0)
    with pytest.raises(ValueError):
        ThetaParams(4.0, 1.0, 1.2, 9.0, 1.5, 3.0, 6.0, -6.0)
    with pytest.raises(ValueError):
        ThetaParams(4.0, 1.0, 1.2, 9.0, 0.3, 3.0, -6.0, -6.0)
    with pytest.raises(ValueError):
        ThetaParams(4.0, 1.0, 1.2, 9.0, 0.3, 3.0, 6.0, 6.0)
    with pytest.raises(ValueError):
        ThetaParams(np.nan, 1.0, 1.2, 9.0, 0.3, 3.0, 6.0, -6.0)


def test_a_matrix_is_hurwitz(rng):
    for _ in range(200):
        m = build_continuous(sample_theta(rng))
        eig = np.linalg.eigvals(m.A)
        assert np.all(eig.real < 0)


def test_discretize_matches_taylor_oracle(rng):
    for _ in range(30):
        theta = sample_theta(rng)
        m = build_continuous(theta)
        for ts in (60.0, 900.0, 3600.0):
            d = discretize(m, ts)
            A_ref, B_ref = discretize_oracle(m, ts)
            npt.assert_allclose(d.A_d, A_ref, rtol=1e-9, atol=1e-14)
            B = np.hstack([d.B_wd, d.B_ud, d.B_gd])
            npt.assert_allclose(B, B_ref, rtol=1e-9, atol=1e-14)


def test_discretize_small_ts_limit():
    m = build_continuous(THETA_TRUE)
    d = discretize(m, 1e-6)
    npt.assert_allclose(d.A_d, np.eye(2), atol=1e-6)
    assert np.max(np.abs(d.input_stack())) < 1e-6


def test_discretize_semigroup():
    m = build_continuous(THETA_TRUE)
    d1 = discretize(m, 900.0)
    d2 = discretize(m, 1800.0)
    npt.assert_allclose(d2.A_d, d1.A_d @ d1.A_d, rtol=1e-12)


def test_discretize_schur_stable(rng):
    for _ in range(50):
        m = build_continuous(sample_theta(rng))
        for ts in (60.0, 900.0, 3600.0, 86400.0):
            d = discretize(m, ts)
            assert np.max(np.abs(np.linalg.eigvals(d.A_d))) < 1.0


def test_discretize_rejects_nonpositive_ts():
    m = build_continuous(THETA_TRUE)
    with pytest.raises(ValueError):
        discretize(m, 0.0)
    with pytest.raises(ValueError):
        discretize(m, -900.0)


def test_simulate_equilibrium():
    d = discretize(build_continuous(THETA_TRUE), 900.0)
    N = 200
    w = np.zeros((N, 2))
    w[:, 0] = 20.0
    y = simulate(d, [20.0, 20.0], w, np.zeros((N, 2)))
    npt.assert_allclose(y, 20.0, atol=1e-10)


def test_simulate_matches_loop_reference(rng):
    for _ in range(10):
        theta = sample_theta(rng)
        d = discretize(build_continuous(theta), 900.0)
        N = 300
        w = rng.normal(10.0, 5.0, (N, 2))
        w[:, 1] = np.abs(w[:, 1]) / 10.0
        u = rng.uniform(0, 1, (N, 2))
        qg = rng.normal(0.5, 0.2, N)
        x0 = rng.uniform(10, 30, 2)
        y_fast = simulate(d, x0, w, u, qg)
        y_ref = _simulate_loop(d, x0, w, u, qg)
        npt.assert_allclose(y_fast, y_ref, rtol=1e-9, atol=1e-9)


def test_simulate_superposition(rng):
    d = discretize(build_continuous(THETA_TRUE), 900.0)
    N = 400
    w1 = rng.normal(0, 3, (N, 2))
    w2 = rng.normal(0, 3, (N, 2))
    u = np.zeros((N, 2))
    y1 = simulate(d, [0, 0], w1, u)
    y2 = simulate(d, [0, 0], w2, u)
    y12 = simulate(d, [0, 0], w1 + w2, u)
    npt.assert_allclose(y12, y1 + y2, atol=1e-10)


def test_simulate_time_invariance(rng):
    d = discretize(build_continuous(THETA_TRUE), 900.0)
    N, shift = 300, 40
    w = np.zeros((N, 2))
    w[:100, 0] = rng.normal(0, 5, 100)
    u = np.zeros((N, 2))
    y = simulate(d, [0, 0], w, u)
    w_s = np.roll(w, shift, axis=0)
    w_s[:shift] = 0
    y_s = simulate(d, [0, 0], w_s, u)
    npt.assert_allclose(y_s[shift:], y[:-shift], atol=1e-10)


def test_simulate_heat_step_initial_slope():
    # dT_za/dt at t=0+ with only u_h = 1 is Q_h / C_za = 6 K/h.
    d = discretize(build_continuous(THETA_TRUE), 10.0)
    N = 50
    u = np.zeros((N, 2))
    u[:, 0] = 1.0
    y = simulate(d, [0.0, 0.0], np.zeros((N, 2)), u)
    slope = (y[1] - y[0]) / d.ts_hours
    assert abs(slope - 6.0) / 6.0 < 0.05


def test_simulate_length_mismatch():
    d = discretize(build_continuous(THETA_TRUE), 900.0)
    with pytest.raises(ValueError):
        simulate(d, [0, 0], np.zeros((10, 2)), np.zeros((9, 2)))
    with pytest.raises(ValueError):
        simulate(d, [0, 0], np.zeros((10, 2)), np.zeros((10, 2)), np.zeros(8))


def test_bode_dc_gains_theta_true():
    m = build_continuous(THETA_TRUE)
    npt.assert_allclose(bode_magnitude(m, "toa", [0.0])[0], 1.0, rtol=1e-9)
    # All window solar ends up crossing R_zo at steady state.
    npt.assert_allclose(bode_magnitude(m, "qsol", [0.0])[0], 27.0, rtol=1e-9)
    npt.assert_allclose(bode_magnitude(m, "uh", [0.0])[0], 54.0, rtol=1e-9)
    npt.assert_allclose(bode_magnitude(m, "qg", [0.0])[0], 9.0, rtol=1e-9)


def test_bode_dc_matches_steady_state_solve(rng):
    for _ in range(50):
        theta = sample_theta(rng)
        m = build_continuous(theta)
        npt.assert_allclose(bode_magnitude(m, "toa", [0.0])[0], 1.0, rtol=1e-9)
        npt.assert_allclose(
            bode_magnitude(m, "qsol", [0.0])[0], theta.A_win * theta.R_zo, rtol=1e-9
        )
        npt.assert_allclose(
            bode_magnitude(m, "uh", [0.0])[0], theta.Q_h * theta.R_zo, rtol=1e-9
        )
        npt.assert_allclose(dc_gain(m, "qg"), theta.R_zo, rtol=1e-9)


def test_bode_high_frequency_rolloff():
    m = build_continuous(THETA_TRUE)
    cph = 1.0 / 3600.0  # 1 cycle per hour in Hz
    freqs = np.array([0.0, 1e-2 * cph, 1e-1 * cph, 1.0 * cph, 1e3 * cph])
    mags = bode_magnitude(m, "toa", freqs)
    assert np.all(np.diff(mags) < 0)
    assert mags[-1] < 1e-3 * mags[0]


def test_step_response_heating():
    m = build_continuous(THETA_TRUE)
    # Dominant time constant is a few hours; 10x that is well converged.
    t, y = step_response(m, "uh", horizon_hours=400.0, dt_seconds=300.0)
    assert y[0] == 0.0
    npt.assert_allclose(y[-1], 54.0, rtol=1e-3)


def test_step_response_matches_simulate():
    m = build_continuous(THETA_TRUE)
    t, y = step_response(m, "qsol", horizon_hours=12.0, dt_seconds=900.0)
    d = discretize(m, 900.0)
    N = len(t)
    w = np.zeros((N, 2))
    w[:, 1] = 1.0
    y_sim = simulate(d, [0.0, 0.0], w, np.zeros((N, 2)))
    npt.assert_allclose(y, y_sim, atol=1e-9)

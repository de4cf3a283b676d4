"""2R-2C thermal network state-space model.

Two states: wall mass temperature T_w and zone air temperature T_za.
The zone air exchanges heat with the wall mass through R_zw and with
the outdoor air through R_zo. Solar gains through the window split
between the two nodes by the convective fraction f; HVAC heat and
unmeasured internal gains enter the air node directly.

Unit convention: capacitances in kWh/K and resistances in K/kW, so the
state matrix entries carry units of 1/h and all internal time is in
hours. Sampling times cross the API boundary in seconds and are
converted here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.signal import lfilter

SECONDS_PER_HOUR = 3600.0

# Identification bounds (R/C/A_win boxes; f on its logit range).
RC_BOUNDS = (0.1, 40.0)
F_BOUNDS = (1e-6, 1.0)
AWIN_BOUNDS = (0.1, 25.0)
# Capacity magnitude box reused from the R/C range (signs are fixed).
CAPACITY_BOUNDS = (0.1, 40.0)

CHANNELS = ("toa", "qsol", "uh", "uc", "qg")


@dataclass(frozen=True)
class ThetaParams:
    """Physical parameters of the 2R-2C network.

    C_w, C_za   thermal capacitances [kWh/K]
    R_zw, R_zo  thermal resistances [K/kW]
    f           convective fraction of window solar gains [-]
    A_win       effective window area [m^2]
    Q_h, Q_c    rated heating (> 0) and cooling (< 0) capacity [kW]
    """

    C_w: float
    C_za: float
    R_zw: float
    R_zo: float
    f: float
    A_win: float
    Q_h: float
    Q_c: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite parameter value")
        lo, hi = RC_BOUNDS
        for name in ("C_w", "C_za", "R_zw", "R_zo"):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        if not F_BOUNDS[0] <= self.f <= F_BOUNDS[1]:
            raise ValueError(f"f={self.f} outside {F_BOUNDS}")
        if not AWIN_BOUNDS[0] <= self.A_win <= AWIN_BOUNDS[1]:
            raise ValueError(f"A_win={self.A_win} outside {AWIN_BOUNDS}")
        if self.Q_h <= 0:
            raise ValueError("Q_h must be positive")
        if self.Q_c >= 0:
            raise ValueError("Q_c must be negative")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.C_w, self.C_za, self.R_zw, self.R_zo,
             self.f, self.A_win, self.Q_h, self.Q_c]
        )

    @classmethod
    def from_array(cls, arr) -> "ThetaParams":
        return cls(*[float(v) for v in arr])

    names = ("C_w", "C_za", "R_zw", "R_zo", "f", "A_win", "Q_h", "Q_c")


# Reference parameter set used by the bundled synthetic scenarios.
THETA_TRUE = ThetaParams(
    C_w=4.0, C_za=1.0, R_zw=1.2, R_zo=9.0,
    f=0.3, A_win=3.0, Q_h=6.0, Q_c=-6.0,
)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ContinuousModel:
    """Continuous state-space matrices (time unit: hours)."""

    A: np.ndarray      # (n, n)
    B_w: np.ndarray    # (n, 2)  columns: T_oa, q_sol_win
    B_u: np.ndarray    # (n, 2)  columns: u_h, u_c
    B_g: np.ndarray    # (n, 1)  unmeasured gain
    C: np.ndarray      # (1, n)

    def __post_init__(self):
        for name in ("A", "B_w", "B_u", "B_g", "C"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    def input_matrix(self, channel: str) -> np.ndarray:
        """Column vector driving the given input channel."""
        if channel == "toa":
            return self.B_w[:, 0:1]
        if channel == "qsol":
            return self.B_w[:, 1:2]
        if channel == "uh":
            return self.B_u[:, 0:1]
        if channel == "uc":
            return self.B_u[:, 1:2]
        if channel == "qg":
            return self.B_g
        raise ValueError(f"unknown channel {channel!r}")


@dataclass(frozen=True)
class DiscreteModel:
    """Exact zero-order-hold discretization at sampling time T_s."""

    A_d: np.ndarray
    B_wd: np.ndarray
    B_ud: np.ndarray
    B_gd: np.ndarray
    C_d: np.ndarray
    T_s: float  # seconds

    def __post_init__(self):
        for name in ("A_d", "B_wd", "B_ud", "B_gd", "C_d"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def nstates(self) -> int:
        return self.A_d.shape[0]

    @property
    def ts_hours(self) -> float:
        return self.T_s / SECONDS_PER_HOUR

    def input_stack(self) -> np.ndarray:
        """All input columns as one (n, 5) matrix in channel order."""
        return np.hstack([self.B_wd, self.B_ud, self.B_gd])


def build_continuous(theta: ThetaParams) -> ContinuousModel:
    """Assemble the continuous 2R-2C model from physical parameters.

    Wall node:  C_w  dT_w/dt  = (T_za - T_w)/R_zw + (1-f) A_win q_sol
    Air node:   C_za dT_za/dt = (T_w - T_za)/R_zw + (T_oa - T_za)/R_zo
                                + f A_win q_sol + Q_h u_h + Q_c u_c + Q_g
    """
    if not isinstance(theta, ThetaParams):
        theta = ThetaParams.from_array(np.asarray(theta, dtype=float))
    cw, cza = theta.C_w, theta.C_za
    rzw, rzo = theta.R_zw, theta.R_zo
    A = np.array(
        [
            [-1.0 / (cw * rzw), 1.0 / (cw * rzw)],
            [1.0 / (cza * rzw), -1.0 / (cza * rzw) - 1.0 / (cza * rzo)],
        ]
    )
    B_w = np.array(
        [
            [0.0, (1.0 - theta.f) * theta.A_win / cw],
            [1.0 / (cza * rzo), theta.f * theta.A_win / cza],
        ]
    )
    B_u = np.array([[0.0, 0.0], [theta.Q_h / cza, theta.Q_c / cza]])
    B_g = np.array([[0.0], [1.0 / cza]])
    C = np.array([[0.0, 1.0]])
    return ContinuousModel(A=A, B_w=B_w, B_u=B_u, B_g=B_g, C=C)


def discretize(model: ContinuousModel, ts_seconds: float) -> DiscreteModel:
    """Exact ZOH discretization via the augmented block matrix exponential.

    exp([[A, B], [0, 0]] * T) = [[A_d, B_d], [0, I]], so no explicit
    inverse of A is formed.
    """
    if not np.isfinite(ts_seconds) or ts_seconds <= 0:
        raise ValueError("sampling time must be positive")
    n = model.nstates
    B = np.hstack([model.B_w, model.B_u, model.B_g])
    m = B.shape[1]
    block = np.zeros((n + m, n + m))
    block[:n, :n] = model.A
    block[:n, n:] = B
    M = expm(block * (ts_seconds / SECONDS_PER_HOUR))
    A_d = M[:n, :n]
    B_d = M[:n, n:]
    return DiscreteModel(
        A_d=A_d,
        B_wd=B_d[:, 0:2],
        B_ud=B_d[:, 2:4],
        B_gd=B_d[:, 4:5],
        C_d=model.C,
        T_s=float(ts_seconds),
    )


def _char_poly_and_numerators(A: np.ndarray, B: np.ndarray, C: np.ndarray):
    """Transfer-function coefficients via the Faddeev-LeVerrier recursion.

    Returns (den, nums) with den of length n+1 and one numerator of
    length n+1 per column of B (leading coefficient zero: the system is
    strictly proper).
    """
    n = A.shape[0]
    den = np.zeros(n + 1)
    den[0] = 1.0
    T = np.eye(n)
    nums = np.zeros((B.shape[1], n + 1))
    cvec = C.ravel()
    for k in range(1, n + 1):
        nums[:, k] = (cvec @ T) @ B
        AT = A @ T
        a_k = -np.trace(AT) / k
        den[k] = a_k
        T = AT + a_k * np.eye(n)
    return den, nums


def simulate(
    model: DiscreteModel,
    x0,
    w: np.ndarray,
    u: np.ndarray,
    q_g: np.ndarray | None = None,
) -> np.ndarray:
    """Open-loop simulation y(k) = C x(k), x(k+1) = A_d x(k) + B v(k).

    w is (N, 2), u is (N, 2), q_g is (N,) or None (treated as zero).
    Returns y of length N with y[0] = C x0; the input sample at step k
    acts over [k, k+1). Linear in (x0, w, u, q_g) jointly.
    """
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    N = w.shape[0]
    if u.shape[0] != N:
        raise ValueError("input series length mismatch")
    if q_g is None:
        q_g = np.zeros(N)
    q_g = np.asarray(q_g, dtype=float)
    if q_g.shape[0] != N:
        raise ValueError("input series length mismatch")
    x0 = np.asarray(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x0)):
        raise ValueError("non-finite initial state")

    V = np.column_stack([w, u, q_g])
    B = model.input_stack()
    den, nums = _char_poly_and_numerators(model.A_d, B, model.C_d)
    y = np.zeros(N)
    for j in range(B.shape[1]):
        col = V[:, j]
        if np.any(col):
            y += lfilter(nums[j], den, col)
    # Free response C A_d^k x0: strictly-proper impulse response through a
    # pseudo-channel b = A_d x0 gives the k >= 1 terms; add C x0 at k = 0.
    if np.any(x0):
        imp = np.zeros(N)
        imp[0] = 1.0
        _, num0 = _char_poly_and_numerators(
            model.A_d, (model.A_d @ x0).reshape(-1, 1), model.C_d
        )
        y += lfilter(num0[0], den, imp)
        y[0] += float((model.C_d @ x0)[0])
    return y


def _simulate_loop(model, x0, w, u, q_g=None):
    """Reference state-space recursion (slow path, used for verification)."""
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    N = w.shape[0]
    if q_g is None:
        q_g = np.zeros(N)
    x = np.asarray(x0, dtype=float).ravel().copy()
    y = np.zeros(N)
    for k in range(N):
        y[k] = float((model.C_d @ x)[0])
        x = (
            model.A_d @ x
            + model.B_wd @ w[k]
            + model.B_ud @ u[k]
            + model.B_gd[:, 0] * q_g[k]
        )
    return y


def bode_magnitude(model: ContinuousModel, channel: str, frequencies_hz) -> np.ndarray:
    """|C (jwI - A)^-1 B_channel| at each frequency (Hz; 0 allowed)."""
    freqs = np.asarray(frequencies_hz, dtype=float)
    if not np.all(np.isfinite(freqs)) or np.any(freqs < 0):
        raise ValueError("frequencies must be finite and >= 0")
    b = model.input_matrix(channel)
    n = model.nstates
    mags = np.zeros(len(freqs))
    for i, f_hz in enumerate(freqs):
        omega = 2.0 * np.pi * f_hz * SECONDS_PER_HOUR  # rad/h
        G = np.linalg.solve(1j * omega * np.eye(n) - model.A, b)
        mags[i] = float(np.abs(model.C @ G)[0, 0])
    return mags


def dc_gain(model: ContinuousModel, channel: str) -> float:
    """Steady-state gain from the channel to the output."""
    b = model.input_matrix(channel)
    return float((-model.C @ np.linalg.solve(model.A, b))[0, 0])


def step_response(
    model: ContinuousModel, channel: str, horizon_hours: float, dt_seconds: float = 60.0
):
    """Unit-step response from zero state.

    Returns (t_hours, y) sampled every dt_seconds up to the horizon.
    """
    if horizon_hours <= 0:
        raise ValueError("horizon must be positive")
    dmodel = discretize(model, dt_seconds)
    N = int(round(horizon_hours / dmodel.ts_hours)) + 1
    t = np.arange(N) * dmodel.ts_hours
    V = np.zeros((N, 5))
    j = CHANNELS.index(channel)
    V[:, j] = 1.0
    y = simulate(dmodel, np.zeros(model.nstates), V[:, 0:2], V[:, 2:4], V[:, 4])
    return t, y

"""Disturbance estimation: Kalman filtering and ID/OD trace extraction.

The input-disturbance (ID) route augments the thermal model with an
integrator state for the lumped unmeasured gain, driven by state noise,
and filters it with a standard Kalman recursion. The output-disturbance
(OD) route leaves the model alone and describes the output residual as
first-order filtered white noise with parameters (rho1, rho2).

The filter freezes its gain once the covariance recursion has converged
(relative change below 1e-12); past that point the innovation sequence
is an LTI function of the data and is computed with a compiled filter,
which keeps the prediction-error objectives cheap enough for multi-start
optimization.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import csv

import numpy as np
from scipy.signal import lfilter

from .datagen import OperationalDataset
from .rcmodel import (
    ContinuousModel,
    DiscreteModel,
    ThetaParams,
    _char_poly_and_numerators,
    build_continuous,
    discretize,
)

SIGMA_BOUNDS = (1e-9, 1.0)
RHO_BOUNDS = (-0.999, 0.999)

# Measurement noise convention: +-0.5 degC sensor noise gives variance
# 0.25^2 divided by the sampling time in hours.
MEAS_NOISE_BASE = 0.25 ** 2

P_FREEZE_RTOL = 1e-11


@dataclass(frozen=True)
class NoiseConfig:
    """State/measurement noise levels for the ID-augmented filter."""

    sigma_x: float = 1e-3
    sigma_zeta: float = 0.8
    r_meas: float | None = None  # default: 0.25^2 / T_s[h]

    def __post_init__(self):
        lo, hi = SIGMA_BOUNDS
        for name in ("sigma_x", "sigma_zeta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and lo <= v <= hi):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        if self.r_meas is not None and self.r_meas <= 0:
            raise ValueError("r_meas must be positive")

    def r_for(self, ts_hours: float) -> float:
        return self.r_meas if self.r_meas is not None else MEAS_NOISE_BASE / ts_hours


@dataclass(frozen=True)
class ODParams:
    """First-order output-disturbance dynamics."""

    rho1: float = 0.9
    rho2: float = 0.5

    def __post_init__(self):
        lo, hi = RHO_BOUNDS
        for name in ("rho1", "rho2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and lo <= v <= hi):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class FilterState:
    """Terminal filter condition: posterior mean, prediction covariance
    and the Kalman gain in effect."""

    x: np.ndarray
    P: np.ndarray
    K: np.ndarray


@dataclass
class KalmanResult:
    innovations: np.ndarray     # y(k) - y_hat(k|k-1)
    x_filt: np.ndarray          # x_hat(k|k), (N, n)
    y_pred: np.ndarray          # y_hat(k|k-1)
    state: FilterState
    frozen_at: int | None       # step index where the gain froze


@dataclass(frozen=True)
class DisturbanceTrace:
    """Estimated unmeasured-disturbance series.

    kind "ID" carries lumped heat gains in kW; kind "OD" carries the
    output disturbance in degC.
    """

    kind: str
    values: np.ndarray
    timestamps: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.kind not in ("ID", "OD"):
            raise ValueError("kind must be ID or OD")
        if len(self.values) != len(self.timestamps):
            raise ValueError("trace length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite trace values")

    def __len__(self):
        return len(self.values)


def write_trace_csv(trace: DisturbanceTrace, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "value", "kind"])
        for i in range(len(trace)):
            writer.writerow(
                [str(trace.timestamps[i].astype("datetime64[s]")),
                 f"{trace.values[i]:.12g}", trace.kind]
            )


def read_trace_csv(path) -> DisturbanceTrace:
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty trace file")
    stamps = np.array([np.datetime64(r["timestamp"], "s") for r in rows])
    vals = np.array([float(r["value"]) for r in rows])
    return DisturbanceTrace(rows[0]["kind"], vals, stamps)


def augment_id(model: ContinuousModel) -> ContinuousModel:
    """Append the lumped input-disturbance integrator state.

    The new state has zero dynamics and couples into the air node the
    same way an unmeasured gain does; the output matrix gains a zero.
    """
    if model.nstates != 2:
        raise ValueError("expected the plain 2-state model")
    A = np.zeros((3, 3))
    A[:2, :2] = model.A
    A[:2, 2:3] = model.B_g
    B_w = np.vstack([model.B_w, np.zeros((1, 2))])
    B_u = np.vstack([model.B_u, np.zeros((1, 2))])
    B_g = np.vstack([model.B_g, np.zeros((1, 1))])
    C = np.array([[0.0, 1.0, 0.0]])
    return ContinuousModel(A=A, B_w=B_w, B_u=B_u, B_g=B_g, C=C)


def _process_noise(n: int, noise: NoiseConfig) -> np.ndarray:
    q = np.full(n, noise.sigma_x ** 2)
    if n == 3:
        q[2] = noise.sigma_zeta ** 2
    return np.diag(q)


def _input_effect(model: DiscreteModel, w, u, q_g) -> np.ndarray:
    """Per-step deterministic state increment B_w w + B_u u (+ B_g q_g)."""
    bv = w @ model.B_wd.T + u @ model.B_ud.T
    if q_g is not None:
        bv = bv + np.outer(np.asarray(q_g, dtype=float), model.B_gd[:, 0])
    return bv


def default_x0(model: DiscreteModel, y0: float) -> np.ndarray:
    """Both thermal states at the first measurement; zero disturbance."""
    x0 = np.full(model.nstates, float(y0))
    if model.nstates == 3:
        x0[2] = 0.0
    return x0


def kalman_filter(
    model: DiscreteModel,
    y: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    noise: NoiseConfig,
    x0=None,
    P0=None,
    q_g=None,
) -> KalmanResult:
    """Standard predict/update recursion for the plain or ID-augmented model.

    Output is the zone air temperature (second state). Covariances are
    symmetrized every step and the gain freezes once the covariance
    recursion has converged, which leaves the innovations unchanged to
    machine precision but skips the Riccati arithmetic.
    """
    y = np.asarray(y, dtype=float)
    N = len(y)
    n = model.nstates
    A = model.A_d
    R = noise.r_for(model.ts_hours)
    Q = _process_noise(n, noise)
    bv = _input_effect(model, np.asarray(w, float), np.asarray(u, float), q_g)
    if bv.shape[0] != N:
        raise ValueError("input/measurement length mismatch")

    x = default_x0(model, y[0]) if x0 is None else np.asarray(x0, dtype=float).copy()
    P = np.eye(n) if P0 is None else np.asarray(P0, dtype=float).copy()
    if not np.allclose(P, P.T) or np.any(np.linalg.eigvalsh(P) < -1e-12):
        raise ValueError("P0 must be symmetric positive semidefinite")

    eps = np.zeros(N)
    y_pred = np.zeros(N)
    x_filt = np.zeros((N, n))
    K = np.zeros(n)
    frozen_at = None
    P_prev = None
    delta_prev = None
    In = np.eye(n)

    for k in range(N):
        # x, P hold the prediction (k|k-1); P0/x0 seed step 0.
        yp = x[1]
        e = y[k] - yp
        if frozen_at is None:
            S = P[1, 1] + R
            if S <= 0:
                raise ValueError("singular innovation covariance")
            K = P[:, 1] / S
            IKC = In.copy()
            IKC[:, 1] -= K
            P = IKC @ P @ IKC.T + R * np.outer(K, K)
            P = 0.5 * (P + P.T)
        x = x + K * e
        eps[k] = e
        y_pred[k] = yp
        x_filt[k] = x
        # predict to k+1
        x = A @ x + bv[k]
        if frozen_at is None:
            P = A @ P @ A.T + Q
            P = 0.5 * (P + P.T)
            if P_prev is not None:
                delta = np.max(np.abs(P - P_prev))
                if _riccati_converged(delta, delta_prev, np.max(np.abs(P))):
                    frozen_at = k
                delta_prev = delta
            else:
                delta_prev = None
            P_prev = P.copy()

    state = FilterState(x=x_filt[-1].copy(), P=P.copy(), K=K.copy())
    return KalmanResult(eps, x_filt, y_pred, state, frozen_at)


def _fast_innovation_sse(
    model: DiscreteModel,
    y: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    noise: NoiseConfig,
    q_g=None,
    x0=None,
) -> float:
    """Sum of squared one-step prediction errors, optimized for repeated
    calls inside identification objectives.

    Runs the exact scalar covariance recursion until the gain has
    converged to within 1e-12, then evaluates the remaining innovations
    through the constant-gain LTI predictor with a compiled filter. The
    result matches `kalman_filter` to the freeze tolerance.
    """
    y = np.asarray(y, dtype=float)
    N = len(y)
    n = model.nstates
    A = model.A_d
    R = noise.r_for(model.ts_hours)
    bv = _input_effect(model, np.asarray(w, float), np.asarray(u, float), q_g)
    x = default_x0(model, y[0]) if x0 is None else np.asarray(x0, dtype=float).copy()

    if n == 2:
        sse, k0, xp, K = _transient_2(A, bv, y, noise.sigma_x ** 2, R, x)
    elif n == 3:
        sse, k0, xp, K = _transient_3(
            A, bv, y, noise.sigma_x ** 2, noise.sigma_zeta ** 2, R, x
        )
    else:
        raise ValueError("unsupported state dimension")

    if k0 >= N:
        return sse
    # Constant-gain phase: prediction-form LTI system driven by (bv, y).
    Kv = np.asarray(K)
    Acl = A - np.outer(A @ Kv, _c_row(n))
    cols = np.hstack([np.eye(n), (A @ Kv).reshape(-1, 1)])
    den, nums = _char_poly_and_numerators(Acl, cols, _c_row(n).reshape(1, -1))
    seg = slice(k0, N)
    yp = np.zeros(N - k0)
    for j in range(n):
        col = bv[seg, j]
        if np.any(col):
            yp += lfilter(nums[j], den, col)
    yp += lfilter(nums[n], den, y[seg])
    # free response of the prediction state entering this phase
    imp = np.zeros(N - k0)
    imp[0] = 1.0
    _, num0 = _char_poly_and_numerators(Acl, (Acl @ xp).reshape(-1, 1), _c_row(n).reshape(1, -1))
    yp += lfilter(num0[0], den, imp)
    yp[0] += xp[1]
    resid = y[seg] - yp
    return sse + float(resid @ resid)


def _c_row(n: int) -> np.ndarray:
    c = np.zeros(n)
    c[1] = 1.0
    return c


def _riccati_converged(delta, delta_prev, scale) -> bool:
    """Distance-to-fixed-point test: with geometric convergence at rate r
    the remaining distance is ~ delta * r / (1 - r)."""
    if delta_prev is None or delta_prev <= 0.0:
        return delta == 0.0
    rate = min(delta / delta_prev, 0.99999)
    dist = delta * rate / (1.0 - rate)
    return dist <= P_FREEZE_RTOL * (1.0 + scale)


def _transient_2(A, bv, y, qx, R, x, freeze=True):
    """Scalar-unrolled 2-state filter until gain convergence.

    With freeze=False the recursion runs over all samples and the
    returned state is the one-step prediction past the data end."""
    a00, a01 = A[0]
    a10, a11 = A[1]
    x0, x1 = float(x[0]), float(x[1])
    p00 = p11 = 1.0
    p01 = 0.0
    sse = 0.0
    N = len(y)
    chk = None
    delta_prev = None
    k = 0
    k0f = k1f = 0.0
    while k < N:
        e = y[k] - x1
        sse += e * e
        S = p11 + R
        k0 = p01 / S
        k1 = p11 / S
        # P - K S K^T (symmetric by construction; S is dominated by R)
        u00 = p00 - S * k0 * k0
        u01 = p01 - S * k0 * k1
        u11 = p11 - S * k1 * k1
        xu0 = x0 + k0 * e
        xu1 = x1 + k1 * e
        b0, b1 = bv[k]
        x0 = a00 * xu0 + a01 * xu1 + b0
        x1 = a10 * xu0 + a11 * xu1 + b1
        # predict covariance
        m00 = a00 * u00 + a01 * u01
        m01 = a00 * u01 + a01 * u11
        m10 = a10 * u00 + a11 * u01
        m11 = a10 * u01 + a11 * u11
        pp00 = m00 * a00 + m01 * a01 + qx
        pp01 = m00 * a10 + m01 * a11
        pp11 = m10 * a10 + m11 * a11 + qx
        k += 1
        if freeze and not k % 10:
            if chk is not None:
                delta = max(abs(pp00 - chk[0]), abs(pp01 - chk[1]), abs(pp11 - chk[2]))
                if _riccati_converged(delta, delta_prev, max(abs(pp00), abs(pp11))):
                    k0f, k1f = k0, k1
                    p00, p01, p11 = pp00, pp01, pp11
                    break
                delta_prev = delta
            chk = (pp00, pp01, pp11)
        p00, p01, p11 = pp00, pp01, pp11
    return sse, k, np.array([x0, x1]), np.array([k0f, k1f])


def _transient_3(A, bv, y, qx, qz, R, x):
    """Scalar-unrolled 3-state (ID-augmented) filter until gain convergence."""
    a00, a01, a02 = A[0]
    a10, a11, a12 = A[1]
    a20, a21, a22 = A[2]
    x0, x1, x2 = float(x[0]), float(x[1]), float(x[2])
    p00 = p11 = p22 = 1.0
    p01 = p02 = p12 = 0.0
    sse = 0.0
    N = len(y)
    chk = None
    delta_prev = None
    k = 0
    kf = (0.0, 0.0, 0.0)
    while k < N:
        e = y[k] - x1
        sse += e * e
        S = p11 + R
        k0 = p01 / S
        k1 = p11 / S
        k2 = p12 / S
        # P - K S K^T (symmetric by construction; S is dominated by R)
        u00 = p00 - S * k0 * k0
        u01 = p01 - S * k0 * k1
        u02 = p02 - S * k0 * k2
        u11 = p11 - S * k1 * k1
        u12 = p12 - S * k1 * k2
        u22 = p22 - S * k2 * k2
        xu0 = x0 + k0 * e
        xu1 = x1 + k1 * e
        xu2 = x2 + k2 * e
        b0, b1, b2 = bv[k]
        x0 = a00 * xu0 + a01 * xu1 + a02 * xu2 + b0
        x1 = a10 * xu0 + a11 * xu1 + a12 * xu2 + b1
        x2 = a20 * xu0 + a21 * xu1 + a22 * xu2 + b2
        # PP = A U A^T + Q (U symmetric)
        m00 = a00 * u00 + a01 * u01 + a02 * u02
        m01 = a00 * u01 + a01 * u11 + a02 * u12
        m02 = a00 * u02 + a01 * u12 + a02 * u22
        m10 = a10 * u00 + a11 * u01 + a12 * u02
        m11 = a10 * u01 + a11 * u11 + a12 * u12
        m12 = a10 * u02 + a11 * u12 + a12 * u22
        m20 = a20 * u00 + a21 * u01 + a22 * u02
        m21 = a20 * u01 + a21 * u11 + a22 * u12
        m22 = a20 * u02 + a21 * u12 + a22 * u22
        pp00 = m00 * a00 + m01 * a01 + m02 * a02 + qx
        pp01 = m00 * a10 + m01 * a11 + m02 * a12
        pp02 = m00 * a20 + m01 * a21 + m02 * a22
        pp11 = m10 * a10 + m11 * a11 + m12 * a12 + qx
        pp12 = m10 * a20 + m11 * a21 + m12 * a22
        pp22 = m20 * a20 + m21 * a21 + m22 * a22 + qz
        k += 1
        if not k % 10:
            if chk is not None:
                delta = max(
                    abs(pp00 - chk[0]), abs(pp01 - chk[1]), abs(pp02 - chk[2]),
                    abs(pp11 - chk[3]), abs(pp12 - chk[4]), abs(pp22 - chk[5]),
                )
                scale = max(abs(pp00), abs(pp11), abs(pp22))
                # Gain this small cannot move the innovations at float64
                # resolution; stop refining it.
                negligible = max(abs(k0), abs(k1), abs(k2)) < 1e-10 and delta_prev is not None and delta < delta_prev
                if _riccati_converged(delta, delta_prev, scale) or negligible:
                    kf = (k0, k1, k2)
                    p00, p01, p02, p11, p12, p22 = pp00, pp01, pp02, pp11, pp12, pp22
                    break
                delta_prev = delta
            chk = (pp00, pp01, pp02, pp11, pp12, pp22)
        p00, p01, p02, p11, p12, p22 = pp00, pp01, pp02, pp11, pp12, pp22
    return sse, k, np.array([x0, x1, x2]), np.array(kf)


def estimate_id_trace(
    theta: ThetaParams,
    noise: NoiseConfig,
    dataset: OperationalDataset,
    source: str = "",
) -> tuple[DisturbanceTrace, KalmanResult]:
    """Filtered lumped-gain estimate from the ID-augmented model."""
    model = discretize(augment_id(build_continuous(theta)), dataset.step_seconds)
    result = kalman_filter(model, dataset.y_za, dataset.w, dataset.u, noise)
    trace = DisturbanceTrace("ID", result.x_filt[:, 2].copy(), dataset.timestamps, source)
    return trace, result


def od_innovations(
    theta: ThetaParams,
    od: ODParams,
    dataset: OperationalDataset,
    x0=None,
) -> tuple[np.ndarray, np.ndarray]:
    """One-step prediction errors and the output-disturbance series.

    The thermal model runs open loop from the first measurement; the
    output residual nu(k) = y(k) - C x(k) is the output disturbance, and
    the innovation recursion zeta(k+1) = rho1 zeta(k) + rho2 eps(k),
    eps(k) = nu(k) - zeta(k) is evaluated in filter form.
    """
    from .rcmodel import simulate

    model = discretize(build_continuous(theta), dataset.step_seconds)
    if x0 is None:
        x0 = np.array([dataset.y_za[0], dataset.y_za[0]])
    ylin = simulate(model, x0, dataset.w, dataset.u)
    nu = dataset.y_za - ylin
    # zeta(k+1) = (rho1 - rho2) zeta(k) + rho2 nu(k), zeta(0) = 0
    zeta = lfilter([0.0, od.rho2], [1.0, -(od.rho1 - od.rho2)], nu)
    eps = nu - zeta
    return eps, nu


def estimate_od_trace(
    theta: ThetaParams,
    od: ODParams,
    dataset: OperationalDataset,
    source: str = "",
) -> DisturbanceTrace:
    """Output-disturbance series nu_hat from the OD recursion."""
    eps, nu = od_innovations(theta, od, dataset)
    return DisturbanceTrace("OD", nu, dataset.timestamps, source)


def riccati_prediction_covariance(
    A: np.ndarray, Q: np.ndarray, R: float, iters: int = 100000, tol: float = 1e-14
) -> np.ndarray:
    """Fixed point of the prediction-covariance Riccati iteration."""
    n = A.shape[0]
    c = _c_row(n)
    P = np.eye(n)
    for _ in range(iters):
        S = P[1, 1] + R
        K = P[:, 1] / S
        Pu = P - np.outer(K, P[1, :])
        Pn = A @ Pu @ A.T + Q
        Pn = 0.5 * (Pn + Pn.T)
        if np.max(np.abs(Pn - P)) < tol * (1.0 + np.max(np.abs(Pn))):
            return Pn
        P = Pn
    return P

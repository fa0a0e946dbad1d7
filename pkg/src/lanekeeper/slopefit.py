"""Slope-vs-yaw study: mean-slope feature variants, baseline and linear
regression with an 80/20 split, and nonlinear least-squares fits of the
sigmoid, arctangent, and piecewise reciprocal-linear-reciprocal curves.
"""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

GN_MAX_ITERATIONS = 500
GN_REL_TOL = 1e-8


@dataclass(frozen=True)
class SlopeSample:
    mean_slope: float
    yaw: float
    frame_id: str = ""


@dataclass(frozen=True)
class SigmoidParams:
    L: float
    k: float
    x0: float


@dataclass(frozen=True)
class ArctanParams:
    k: float
    w: float
    x0: float
    y0: float


@dataclass(frozen=True)
class PiecewiseParams:
    x0: float
    k1: float
    m: float
    b: float
    x1: float
    k2: float
    r1: float
    r2: float


FEATURE_MODES = ("plain", "sign_balanced", "side_balanced", "windowed_median")


def _weighted_mean_slope(segments) -> float:
    total = sum(s.length for s in segments)
    if total == 0:
        return sum(s.slope for s in segments) / len(segments)
    return sum(s.slope * s.length for s in segments) / total


def mean_slope_features(frames, mode: str, image_width: int = 640,
                        window: int = 10) -> list[SlopeSample]:
    """Per-frame slope features from (frame_id, segments, yaw) triples.

    plain: arithmetic mean of segment slopes.
    sign_balanced: (mean of positive slopes + mean of negative slopes) / 2.
    side_balanced: (mean over left-half segments + mean over right-half) / 2.
    windowed_median: median of the trailing `window` frames'
    length-weighted mean slopes.

    Frames without segments yield no sample.  For the balanced modes a
    side/sign with no members falls back to the mean of the other.
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}")
    samples = []
    trailing: deque = deque(maxlen=window)
    half = image_width / 2.0
    for frame_id, segments, yaw in frames:
        if not segments:
            continue
        slopes = [s.slope for s in segments]
        if mode == "plain":
            value = sum(slopes) / len(slopes)
        elif mode == "sign_balanced":
            pos = [s for s in slopes if s > 0]
            neg = [s for s in slopes if s <= 0]
            parts = [sum(p) / len(p) for p in (pos, neg) if p]
            value = sum(parts) / len(parts)
        elif mode == "side_balanced":
            left = [s.slope for s in segments if s.center_x < half]
            right = [s.slope for s in segments if s.center_x >= half]
            parts = [sum(p) / len(p) for p in (left, right) if p]
            value = sum(parts) / len(parts)
        else:  # windowed_median
            trailing.append(_weighted_mean_slope(segments))
            value = float(np.median(list(trailing)))
        samples.append(SlopeSample(float(value), float(yaw), str(frame_id)))
    return samples


@dataclass
class BaselineFit:
    prediction: float
    sse: float
    r2: float = 0.0


def fit_baseline(samples) -> BaselineFit:
    """Constant predictor at the mean yaw; R^2 is zero by definition."""
    if not samples:
        raise ValueError("no samples")
    ys = np.array([s.yaw for s in samples], np.float64)
    mean = float(ys.mean())
    return BaselineFit(mean, float(np.sum((ys - mean) ** 2)))


@dataclass
class LinearFit:
    slope: float
    intercept: float
    train_sse: float
    test_sse: float
    train_r2: float
    test_r2: float


def _r2(y: np.ndarray, pred: np.ndarray) -> float:
    sst = float(np.sum((y - y.mean()) ** 2))
    sse = float(np.sum((y - pred) ** 2))
    if sst == 0.0:
        return 1.0 if sse == 0.0 else 0.0
    return 1.0 - sse / sst


def fit_linear(samples, split_seed: int = 0) -> LinearFit:
    """Ordinary least squares on a seeded 80/20 train/test split."""
    if len(samples) < 5:
        raise ValueError("need at least 5 samples for an 80/20 split")
    xs = np.array([s.mean_slope for s in samples], np.float64)
    ys = np.array([s.yaw for s in samples], np.float64)
    rng = np.random.default_rng(split_seed)
    order = rng.permutation(len(samples))
    n_train = int(math.floor(0.8 * len(samples)))
    tr, te = order[:n_train], order[n_train:]
    x, y = xs[tr], ys[tr]
    xm, ym = x.mean(), y.mean()
    var = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / var) if var > 0 else 0.0
    intercept = float(ym - slope * xm)
    pred_tr = slope * x + intercept
    pred_te = slope * xs[te] + intercept
    return LinearFit(slope, intercept,
                     float(np.sum((y - pred_tr) ** 2)),
                     float(np.sum((ys[te] - pred_te) ** 2)),
                     _r2(y, pred_tr), _r2(ys[te], pred_te))


def sigmoid(params: SigmoidParams, x):
    return params.L / (1.0 + np.exp(-params.k * (x - params.x0)))


def arctan_curve(params: ArctanParams, x):
    return params.k * np.arctan(params.w * (x - params.x0)) + params.y0


def piecewise(params: PiecewiseParams, x):
    x = np.asarray(x, np.float64)
    out = params.m * x + params.b
    left = x < params.r1
    right = x > params.r2
    out = np.where(left, -1.0 / (x + params.x0) + params.k1, out)
    out = np.where(right, -1.0 / (x + params.x1) + params.k2, out)
    return out


@dataclass
class CurveFit:
    params: object
    sse: float
    converged: bool
    iterations: int


def _gauss_newton(residual_jac, theta0: np.ndarray):
    """Damped Gauss-Newton: accept only SSE-decreasing steps, inflating
    the damping term when a step fails.  Returns (theta, sse, converged,
    iterations)."""
    theta = theta0.astype(np.float64)
    r, _ = residual_jac(theta)
    sse = float(r @ r)
    lam = 1e-8
    converged = False
    it = 0
    for it in range(1, GN_MAX_ITERATIONS + 1):
        r, J = residual_jac(theta)
        g = J.T @ r
        A = J.T @ J
        improved = False
        for _ in range(24):
            try:
                delta = np.linalg.solve(A + lam * np.eye(A.shape[0]), g)
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-12)
                continue
            cand = theta - delta
            rc, _ = residual_jac(cand)
            cand_sse = float(rc @ rc)
            if math.isfinite(cand_sse) and cand_sse <= sse:
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        lam = max(lam / 10.0, 1e-12)
        rel = (sse - cand_sse) / sse if sse > 0 else 0.0
        theta = cand
        sse = cand_sse
        if rel < GN_REL_TOL:
            converged = True
            break
    return theta, sse, converged, it


def _sigmoid_residual_jac(xs, ys):
    def rj(theta):
        L, k, x0 = theta
        e = np.exp(-k * (xs - x0))
        s = 1.0 / (1.0 + e)
        r = L * s - ys
        dL = s
        dk = L * s * s * e * (xs - x0)
        dx0 = -L * s * s * e * k
        return r, np.column_stack([dL, dk, dx0])
    return rj


def _arctan_residual_jac(xs, ys):
    def rj(theta):
        k, w, x0, y0 = theta
        u = w * (xs - x0)
        at = np.arctan(u)
        den = 1.0 + u * u
        r = k * at + y0 - ys
        dk = at
        dw = k * (xs - x0) / den
        dx0 = -k * w / den
        dy0 = np.ones_like(xs)
        return r, np.column_stack([dk, dw, dx0, dy0])
    return rj


def _recip_residual_jac(xs, ys):
    # y = -1/(x + x0) + k
    def rj(theta):
        x0, k = theta
        den = xs + x0
        r = -1.0 / den + k - ys
        dx0 = 1.0 / (den * den)
        dk = np.ones_like(xs)
        return r, np.column_stack([dx0, dk])
    return rj


def fit_sigmoid(samples, init: SigmoidParams | None = None) -> CurveFit:
    if len(samples) < 3:
        raise ValueError("need at least 3 samples")
    xs = np.array([s.mean_slope for s in samples], np.float64)
    ys = np.array([s.yaw for s in samples], np.float64)
    rj = _sigmoid_residual_jac(xs, ys)
    y_range = float(ys.max() - ys.min())
    inits = []
    if init is not None:
        inits.append(np.array([init.L, init.k, init.x0]))
    inits.append(np.array([y_range if y_range > 0 else 1.0, 1.0, float(np.median(xs))]))
    # flat start matching the baseline predictor, so the fit can never
    # end up worse than the constant model
    inits.append(np.array([2.0 * float(ys.mean()), 1e-6, float(np.median(xs))]))
    best = None
    for theta0 in inits:
        theta, sse, conv, it = _gauss_newton(rj, theta0)
        if best is None or sse < best[1]:
            best = (theta, sse, conv, it)
    theta, sse, conv, it = best
    return CurveFit(SigmoidParams(*theta), sse, conv, it)


def fit_arctan(samples, init: ArctanParams | None = None) -> CurveFit:
    if len(samples) < 4:
        raise ValueError("need at least 4 samples")
    xs = np.array([s.mean_slope for s in samples], np.float64)
    ys = np.array([s.yaw for s in samples], np.float64)
    rj = _arctan_residual_jac(xs, ys)
    y_range = float(ys.max() - ys.min())
    inits = []
    if init is not None:
        inits.append(np.array([init.k, init.w, init.x0, init.y0]))
    inits.append(np.array([y_range / math.pi if y_range > 0 else 1.0, 1.0,
                           float(np.median(xs)), float(ys.mean())]))
    inits.append(np.array([1e-6, 1e-6, float(np.median(xs)), float(ys.mean())]))
    best = None
    for theta0 in inits:
        theta, sse, conv, it = _gauss_newton(rj, theta0)
        if best is None or sse < best[1]:
            best = (theta, sse, conv, it)
    theta, sse, conv, it = best
    return CurveFit(ArctanParams(*theta), sse, conv, it)


def default_breakpoint_grid(samples) -> list[tuple[float, float]]:
    """Decile-based (r1, r2) candidates plus the all-in-middle candidate."""
    xs = np.array([s.mean_slope for s in samples], np.float64)
    deciles = np.quantile(xs, np.linspace(0.1, 0.9, 9))
    grid = [(float(a), float(b)) for i, a in enumerate(deciles)
            for b in deciles[i + 1:]]
    grid.append((float(xs.min()) - 1.0, float(xs.max()) + 1.0))
    return grid


def fit_piecewise(samples, breakpoint_grid=None) -> CurveFit:
    """Grid search over breakpoints; closed-form middle line, damped
    Gauss-Newton for the reciprocal branches.  Candidates with a
    nonempty side region of fewer than 2 samples are skipped."""
    n_params = 8
    if len(samples) < n_params:
        raise ValueError(f"need at least {n_params} samples")
    if breakpoint_grid is None:
        breakpoint_grid = default_breakpoint_grid(samples)
    xs = np.array([s.mean_slope for s in samples], np.float64)
    ys = np.array([s.yaw for s in samples], np.float64)

    def fit_line(x, y):
        if x.size == 0:
            return 0.0, 0.0, 0.0
        xm, ym = x.mean(), y.mean()
        var = float(np.sum((x - xm) ** 2))
        m = float(np.sum((x - xm) * (y - ym)) / var) if var > 0 else 0.0
        b = float(ym - m * xm)
        pred = m * x + b
        return m, b, float(np.sum((y - pred) ** 2))

    def fit_recip(x, y, pole):
        # `pole` sits just outside the branch domain
        if x.size == 0:
            return -pole, 0.0, 0.0, True
        x0_init = -pole
        k_init = float(np.mean(y + 1.0 / (x + x0_init)))
        theta, sse, conv, _ = _gauss_newton(_recip_residual_jac(x, y),
                                            np.array([x0_init, k_init]))
        # reject fits whose pole migrated into the branch domain
        if np.any(np.abs(x + theta[0]) < 1e-9):
            return x0_init, k_init, float(np.sum((-1.0 / (x + x0_init) + k_init - y) ** 2)), False
        pred = -1.0 / (x + theta[0]) + theta[1]
        return float(theta[0]), float(theta[1]), float(np.sum((pred - y) ** 2)), conv

    best = None
    for r1, r2 in breakpoint_grid:
        if not r1 < r2:
            continue
        left = xs < r1
        right = xs > r2
        mid = ~left & ~right
        if (0 < left.sum() < 2) or (0 < right.sum() < 2) or (0 < mid.sum() < 2):
            continue
        x0, k1, sse_l, conv_l = fit_recip(xs[left], ys[left], r1 + 1.0)
        m, b, sse_m = fit_line(xs[mid], ys[mid])
        x1, k2, sse_r, conv_r = fit_recip(xs[right], ys[right], r2 - 1.0)
        sse = sse_l + sse_m + sse_r
        key = (sse, r1, r2)
        if best is None or key < best[0]:
            params = PiecewiseParams(x0, k1, m, b, x1, k2, r1, r2)
            best = (key, params, conv_l and conv_r)
    if best is None:
        raise ValueError("no admissible breakpoint candidates")
    (sse, _, _), params, conv = best
    return CurveFit(params, sse, conv, 0)

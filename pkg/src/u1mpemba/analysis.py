"""Mpemba-time extraction from pairs of asymmetry curves and power-law fits."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares


class GridMismatchError(ValueError):
    pass


class OrderingError(ValueError):
    pass


class InsufficientPointsError(ValueError):
    pass


class FitError(RuntimeError):
    def __init__(self, msg, residuals=()):
        super().__init__(msg)
        self.residuals = list(residuals)


def z_theory(alpha):
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return min(alpha - 1.0, 2.0)


@dataclass
class CrossingResult:
    t_M: float = None
    bracket: tuple = None
    resolved: bool = False
    difference: np.ndarray = field(default=None, repr=False)
    error: np.ndarray = field(default=None, repr=False)


def _curve(trace):
    """(times, asymmetry, stderr) from an AsymmetryTrace or a tuple."""
    if hasattr(trace, "asymmetry"):
        t, y, e = trace.times, trace.asymmetry, trace.stderr
    else:
        t, y, e = trace
    t, y = np.asarray(t, float), np.asarray(y, float)
    e = np.zeros_like(y) if e is None else np.nan_to_num(np.asarray(e, float))
    return t, y, e


def _check_params(a, b):
    pa, pb = getattr(a, "params", None), getattr(b, "params", None)
    if pa is None or pb is None:
        return
    ignore = {"theta", "seed", "seeds"}
    diff = {k for k in set(pa) | set(pb) - ignore if k not in ignore and pa.get(k) != pb.get(k)}
    if diff:
        raise GridMismatchError(f"traces differ in {sorted(diff)}")


def crossing_from_difference(t, d, err, sigma=1.0, require_resolved=True):
    """First negative-to-positive sign change of ``d`` that persists.

    A candidate at grid index ``k`` (``d[k-1] < 0 <= d[k]``) persists when
    ``d`` never falls below ``-sigma * err`` afterwards. It is resolved when
    ``d`` exceeds ``sigma * err`` somewhere after it.
    """
    t, d, err = np.asarray(t, float), np.asarray(d, float), np.asarray(err, float)
    band = sigma * err
    for k in range(1, len(d)):
        if not (d[k - 1] < 0 <= d[k]):
            continue
        tail = slice(k, None)
        if np.any(d[tail] < -band[tail]):
            continue
        resolved = bool(np.any(d[tail] > band[tail]))
        if require_resolved and not resolved:
            continue
        t_m = t[k - 1] - d[k - 1] * (t[k] - t[k - 1]) / (d[k] - d[k - 1])
        return CrossingResult(float(t_m), (int(t[k - 1]), int(t[k])), resolved, d, err)
    return CrossingResult(None, None, False, d, err)


def find_mpemba_time(trace_small_theta, trace_large_theta, sigma=1.0, require_resolved=True):
    """Crossing time of the asymmetry curves of the smaller and larger tilt."""
    ta, ya, ea = _curve(trace_small_theta)
    tb, yb, eb = _curve(trace_large_theta)
    if ta.shape != tb.shape or not np.array_equal(ta, tb):
        raise GridMismatchError("traces are on different time grids")
    _check_params(trace_small_theta, trace_large_theta)
    d = ya - yb
    if d[0] > 0:
        raise OrderingError(f"initial asymmetries not ordered: difference {d[0]:.3e} > 0")
    return crossing_from_difference(ta, d, np.hypot(ea, eb), sigma, require_resolved)


def realization_crossings(samples_small, samples_large, times=None):
    """Per-realization crossing times, the alternative to crossing the averaged curves.

    ``samples_*`` are ``(purity, dephased_purity)`` arrays of shape
    (realizations, times); realization ``r`` of both runs must share positions.
    Returns an array with ``nan`` where a realization never crosses.
    """
    pa, qa = (np.atleast_2d(x) for x in samples_small)
    pb, qb = (np.atleast_2d(x) for x in samples_large)
    if pa.shape != pb.shape:
        raise GridMismatchError("sample arrays have different shapes")
    t = np.arange(pa.shape[1]) if times is None else np.asarray(times, float)
    d = -np.log(qa / pa) + np.log(qb / pb)
    zeros = np.zeros(pa.shape[1])
    out = []
    for row in d:
        res = crossing_from_difference(t, row, zeros, require_resolved=False)
        out.append(np.nan if res.t_M is None else res.t_M)
    return np.array(out)


@dataclass
class MpembaFit:
    points: list
    params: dict
    covariance: np.ndarray
    z_theory: float
    fit_window: tuple
    residual_norm: float
    starts: list = field(default_factory=list)

    @property
    def z(self):
        return self.params["z"]

    @property
    def z_stderr(self):
        return float(np.sqrt(self.covariance[2, 2]))


def power_law(n_a, b, x0, z, c):
    return b * (np.asarray(n_a, float) - x0) ** z + c


def fit_power_law(points, alpha=None, min_na=3, z_starts=(0.5, 1.0, 1.5, 2.0, 2.5),
                  allow_short_range=False):
    """Weighted fit of ``t_M = b (N_A - x0)^z + c`` with ``x0 < min N_A``.

    ``points`` holds ``(N_A, t_M, stderr)``; non-positive or missing errors
    count as unit weight.
    """
    if alpha is not None and alpha <= 1 and not allow_short_range:
        raise ValueError(f"fits are only done for alpha > 1, got {alpha}")
    pts = sorted((float(n), float(t), float(s) if s is not None else 0.0)
                 for n, t, s in points if n >= min_na and t is not None and np.isfinite(t))
    if len(pts) < 4:
        raise InsufficientPointsError(f"need at least 4 points with N_A >= {min_na}, got {len(pts)}")
    n = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    s = np.array([p[2] for p in pts])
    s = np.where(s > 0, s, 1.0)
    nmin = n.min()

    def unpack(v):
        b, u, z, c = v
        return b, nmin - np.exp(u), z, c

    def resid_direct(p):
        return (power_law(n, *p) - y) / s

    def jac_direct(p):
        b, x0, z, _ = p
        base = n - x0
        pw = base ** z
        return np.column_stack([pw, -b * z * pw / base, b * pw * np.log(base),
                                np.ones_like(n)]) / s[:, None]

    def resid(v):
        return resid_direct(unpack(v))

    def jac(v):
        j = jac_direct(unpack(v))
        j[:, 1] *= -np.exp(v[1])
        return j

    fits = []
    for z0 in z_starts:
        x0 = nmin - 1.0
        basis = np.column_stack([(n - x0) ** z0, np.ones_like(n)]) / s[:, None]
        (b0, c0), *_ = np.linalg.lstsq(basis, y / s, rcond=None)
        try:
            with np.errstate(all="ignore"):
                r = least_squares(resid, [b0, 0.0, z0, c0], jac=jac, method="lm",
                                  x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                  max_nfev=20000)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            fits.append((z0, np.inf, None))
            continue
        ok = r.status > 0 and np.all(np.isfinite(r.x)) and np.isfinite(r.cost)
        fits.append((z0, float(np.sqrt(2 * r.cost)) if ok else np.inf, r if ok else None))
    best = min(fits, key=lambda f: f[1])
    if best[2] is None:
        raise FitError("no start converged", [(z0, cost) for z0, cost, _ in fits])
    p = np.array(unpack(best[2].x))

    # Gauss-Newton polish in the natural parameters
    cost = np.sum(resid_direct(p) ** 2)
    for _ in range(10):
        step = np.linalg.lstsq(jac_direct(p), -resid_direct(p), rcond=None)[0]
        trial = p + step
        if trial[1] >= nmin:
            break
        trial_cost = np.sum(resid_direct(trial) ** 2)
        # the cost is flat to rounding near the optimum, so allow tiny increases
        if not trial_cost <= cost * (1 + 1e-12) + 1e-300:
            break
        p, cost = trial, min(cost, trial_cost)
    b, x0, z, c = p

    j = jac_direct(p)
    cov = np.linalg.pinv(j.T @ j)
    if np.all(np.array([q[2] for q in pts]) <= 0):
        dof = max(len(n) - 4, 1)
        cov = cov * np.sum(resid_direct(p) ** 2) / dof
    return MpembaFit(
        points=[tuple(q) for q in pts],
        params={"b": float(b), "x0": float(x0), "z": float(z), "c": float(c)},
        covariance=cov,
        z_theory=z_theory(alpha) if alpha is not None else None,
        fit_window=(int(n.min()), int(n.max())),
        residual_norm=float(np.linalg.norm(resid_direct(p))),
        starts=[(z0, cost) for z0, cost, _ in fits],
    )

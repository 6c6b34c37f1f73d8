"""Disk statistics and the asymptotic mean value remainder.

For ``1 < p < inf`` the remainder at radius ``eps`` is

    (p - 2)/(p + 2) * (max + min)/2 + 4/(p + 2) * mean - u(center)

and for ``p = inf`` only the midrange enters.  A field is any callable that
maps an array of complex points to an array of reals.  Fields carrying a
truthy ``p_harmonic`` attribute have their extrema searched on the boundary
circle only (maximum principle); everything else also gets an interior scan.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hodograph import HodographSeries, eval_u_at_z, image_radius, main_term_series

__all__ = [
    "DiskStatistics",
    "DecayLadderReport",
    "FieldEvaluationError",
    "SeriesField",
    "disk_statistics",
    "amv_remainder",
    "amv_weights",
    "midrange_remainder",
    "decay_ladder",
    "fit_power_law",
    "aronsson_field",
    "default_eps_max",
]

_GOLDEN = (math.sqrt(5) - 1) / 2
# rounding allowance per unit of field magnitude, added to the quadrature estimate
_ROUNDING = 64 * np.finfo(float).eps


class FieldEvaluationError(RuntimeError):
    def __init__(self, point: complex, cause: BaseException):
        super().__init__(f"field evaluation failed at {point!r}: {cause}")
        self.point = point


@dataclass(frozen=True)
class DiskStatistics:
    center: complex
    radius: float
    mean: float
    max: float
    min: float
    midrange: float
    quadrature_error_estimate: float


@dataclass
class DecayLadderReport:
    radii: np.ndarray
    remainders: np.ndarray
    noise_floors: np.ndarray
    used_in_fit: np.ndarray
    fitted_exponent: float
    fitted_coefficient: float
    fit_residual: float
    floor_hit: bool

    @property
    def reliable(self) -> bool:
        return math.isfinite(self.fit_residual)

    def summary(self) -> dict:
        return {
            "exponent": self.fitted_exponent,
            "coefficient": self.fitted_coefficient,
            "residual": self.fit_residual,
            "floor_hit": self.floor_hit,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["radius", "remainder", "noise_floor", "used_in_fit"])
            for r, rem, fl, used in zip(
                self.radii, self.remainders, self.noise_floors, self.used_in_fit
            ):
                w.writerow([f"{r:.17g}", f"{rem:.17g}", f"{fl:.17g}", int(bool(used))])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_json_safe(self.summary()), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _json_safe(obj):
    # JSON has no inf/nan; encode them as strings so files stay standard
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


class SeriesField:
    """The potential of a hodograph series as a plane field."""

    p_harmonic = True

    def __init__(self, series: HodographSeries, main_only: bool = False):
        self.series = main_term_series(series) if main_only else series

    @property
    def p(self) -> float:
        return self.series.p

    def __call__(self, z):
        return eval_u_at_z(self.series, z)


def aronsson_field(point):
    """``x^{4/3} - y^{4/3}`` with the 4/3-power extended oddly to negative arguments."""
    z = np.asarray(point, dtype=complex)
    x, y = z.real, z.imag
    out = np.sign(x) * np.abs(x) ** (4 / 3) - np.sign(y) * np.abs(y) ** (4 / 3)
    return float(out) if z.ndim == 0 else out


def _evaluate(fn: Callable, pts: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(fn(pts), dtype=float)
    except Exception as exc:
        # retry point by point to name the offending sample
        for q in np.ravel(pts):
            try:
                fn(np.array([q]))
            except Exception as inner:
                raise FieldEvaluationError(complex(q), inner) from inner
        raise FieldEvaluationError(complex(np.ravel(pts)[0]), exc) from exc
    bad = ~np.isfinite(vals)
    if np.any(bad):
        q = complex(np.ravel(pts)[np.argmax(np.ravel(bad))])
        raise FieldEvaluationError(q, ValueError("non-finite value"))
    return vals


def _polar_nodes(center: complex, radius: float, shells: int):
    dr = radius / shells
    r = (np.arange(shells) + 0.5) * dr
    m = 4 * shells
    th = (np.arange(m) + 0.5) * (2 * np.pi / m)
    pts = center + r[:, None] * np.exp(1j * th)[None, :]
    w = np.repeat(r * dr * (2 * np.pi / m), m).reshape(shells, m)
    return pts, w


def _disk_mean(fn, center, radius, shells):
    pts, w = _polar_nodes(center, radius, shells)
    vals = _evaluate(fn, pts)
    # fixed-order reduction: shells first, then their pairwise sum
    return float(np.sum(np.sum(vals * w, axis=1)) / (np.pi * radius**2)), pts, vals


def _golden(g: Callable[[float], float], a: float, b: float, tol: float = 1e-10):
    """Maximise ``g`` on ``[a, b]``; returns (argmax, value)."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = g(d)
    return (c, gc) if gc >= gd else (d, gd)


def _boundary_extremum(fn, center, radius, theta, vals, sign):
    j = int(np.argmax(sign * vals))
    step = theta[1] - theta[0]

    def g(t):
        return sign * float(_evaluate(fn, np.array([center + radius * np.exp(1j * t)]))[0])

    _, best = _golden(g, theta[j] - step, theta[j] + step)
    return max(best, sign * vals[j]) * sign


def disk_statistics(
    field: Callable,
    center: complex,
    radius: float,
    resolution: int = 64,
    boundary_extrema: bool | None = None,
) -> DiskStatistics:
    """Mean, max, min and midrange of ``field`` over the closed disk.

    The mean uses the polar midpoint rule with ``resolution`` shells and
    ``4 * resolution`` angles; its error estimate is the change against half
    the resolution plus a rounding allowance.  Extrema come from
    ``16 * resolution`` boundary samples refined by golden-section search.
    """
    if resolution < 16:
        raise ValueError(f"resolution must be >= 16, got {resolution}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    center = complex(center)
    if boundary_extrema is None:
        boundary_extrema = bool(getattr(field, "p_harmonic", False))

    mean, pts, vals = _disk_mean(field, center, radius, resolution)
    coarse, _, _ = _disk_mean(field, center, radius, resolution // 2)

    nb = 16 * resolution
    theta = 2 * np.pi * np.arange(nb) / nb
    bvals = _evaluate(field, center + radius * np.exp(1j * theta))
    vmax = _boundary_extremum(field, center, radius, theta, bvals, 1.0)
    vmin = _boundary_extremum(field, center, radius, theta, bvals, -1.0)
    if not boundary_extrema:
        vmax = max(vmax, float(np.max(vals)))
        vmin = min(vmin, float(np.min(vals)))
        cval = float(_evaluate(field, np.array([center]))[0])
        vmax, vmin = max(vmax, cval), min(vmin, cval)

    scale = max(abs(vmax), abs(vmin))
    err = abs(mean - coarse) + _ROUNDING * scale
    return DiskStatistics(
        center=center,
        radius=float(radius),
        mean=mean,
        max=vmax,
        min=vmin,
        midrange=(vmax + vmin) / 2,
        quadrature_error_estimate=err,
    )


def amv_weights(p: float) -> tuple[float, float]:
    """Weights ``((p-2)/(p+2), 4/(p+2))`` of midrange and mean."""
    if math.isinf(p):
        return 1.0, 0.0
    if not p > 1:
        raise ValueError(f"p must satisfy p > 1, got {p}")
    return (p - 2) / (p + 2), 4 / (p + 2)


def _center_value(field, center) -> float:
    return float(_evaluate(field, np.array([complex(center)]))[0])


def amv_remainder(field, p: float, center: complex, radius: float, resolution: int = 64,
                  stats: DiskStatistics | None = None) -> float:
    if math.isinf(p):
        raise ValueError("use midrange_remainder for p = inf")
    alpha, beta = amv_weights(p)
    s = stats or disk_statistics(field, center, radius, resolution)
    return alpha * s.midrange + beta * s.mean - _center_value(field, center)


def midrange_remainder(field, center: complex, radius: float, resolution: int = 64,
                       stats: DiskStatistics | None = None) -> float:
    s = stats or disk_statistics(field, center, radius, resolution)
    return s.midrange - _center_value(field, center)


def fit_power_law(radii, values):
    """Least squares of ``log|value|`` on ``log radius``.

    Returns ``(exponent, coefficient, rms_residual)``; the coefficient takes
    the sign of the median value.
    """
    x = np.log(np.asarray(radii, dtype=float))
    vals = np.asarray(values, dtype=float)
    y = np.log(np.abs(vals))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sign = 1.0 if np.median(vals) >= 0 else -1.0
    return float(slope), sign * float(np.exp(intercept)), float(np.sqrt(np.mean(resid**2)))


def default_eps_max(field) -> float:
    series = getattr(field, "series", None)
    if series is None:
        raise ValueError("eps_max has no default for fields without a hodograph series")
    return 0.5 * image_radius(series)


def decay_ladder(
    field,
    p: float,
    center: complex = 0j,
    eps_max: float | None = None,
    rungs: int = 10,
    ratio: float = 0.7,
    resolution: int = 64,
    workers: int = 0,
) -> DecayLadderReport:
    """Remainders on the radii ``eps_max * ratio**j`` and their log-log slope.

    Rungs whose remainder is below ten times the error estimate are at the
    noise floor and left out of the fit.  With fewer than three usable rungs
    the fit is unreliable and ``fit_residual`` is ``inf``.  ``workers > 0``
    evaluates rungs on a thread pool; results are kept in rung order.
    """
    if rungs < 4:
        raise ValueError(f"rungs must be >= 4, got {rungs}")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    if eps_max is None:
        eps_max = default_eps_max(field)
    radii = eps_max * ratio ** np.arange(rungs)
    u0 = _center_value(field, center)
    rem = np.empty(rungs)
    floor = np.empty(rungs)

    def stats(eps):
        return disk_statistics(field, center, float(eps), resolution)

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_stats = list(pool.map(stats, radii))
    else:
        all_stats = [stats(eps) for eps in radii]
    for j, s in enumerate(all_stats):
        if math.isinf(p):
            rem[j] = s.midrange - u0
        else:
            alpha, beta = amv_weights(p)
            rem[j] = alpha * s.midrange + beta * s.mean - u0
        floor[j] = 10 * (s.quadrature_error_estimate + _ROUNDING * abs(u0))
    used = np.abs(rem) >= floor
    floor_hit = bool(not np.any(used))
    if np.count_nonzero(used) >= 3:
        exponent, coeff, resid = fit_power_law(radii[used], rem[used])
    elif np.count_nonzero(used) == 2:
        exponent, coeff, _ = fit_power_law(radii[used], rem[used])
        resid = math.inf
    else:
        exponent, coeff, resid = math.nan, math.nan, math.inf
    return DecayLadderReport(
        radii=radii,
        remainders=rem,
        noise_floors=floor,
        used_in_fit=used,
        fitted_exponent=exponent,
        fitted_coefficient=coeff,
        fit_residual=resid,
        floor_hit=floor_hit,
    )

"""Hodograph series near a critical point of a planar p-harmonic function.

A series ``H`` maps the zeta-plane to the z-plane,

    H(zeta) = sum_k (A_k zeta^k + eps_k conj(A_k) conj(zeta)^k) zeta^{-n} |zeta|^{lam_k + n - k}

and its inverse ``chi`` gives the complex gradient ``f = du/dz = chi^n``.  The
potential is recovered from ``du = Re(2 f dz)``; integrating along rays and
using the homogeneity of each term gives the closed form

    u(H(zeta)) = sum_k 2 lam_k / (lam_k + n) * Re(zeta^n H_k(zeta)).

All evaluators accept scalars or numpy arrays of complex numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exponents import PLaplaceParams, epsilon_k, lambda_k

__all__ = [
    "HodographSeries",
    "WirtingerPair",
    "InversionError",
    "TrustRadiusError",
    "SeriesFormatError",
    "default_trust_radius",
    "eval_term",
    "eval_H",
    "split_main_remainder",
    "wirtinger_derivatives",
    "invert_H",
    "eval_u",
    "eval_u_at_z",
    "main_term_series",
    "image_radius",
    "series_from_dict",
    "series_to_dict",
    "load_series",
    "dump_series",
]


class TrustRadiusError(ValueError):
    """Evaluation requested outside the disk where the truncated series is trusted."""


class InversionError(RuntimeError):
    """Newton and continuation both failed to invert ``H``."""


class SeriesFormatError(ValueError):
    """Malformed series document; ``path`` names the offending JSON field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def default_trust_radius(params: PLaplaceParams, coefficients: Mapping[int, complex]) -> float:
    """Crude radius inside which the leading term dominates the tail.

    Uses the lower bound ``(1 - |eps|)|A|`` for the leading angular factor and
    ``(1 + |eps_k|)|A_k|`` for each tail term.  Returns 1.0 for a single mode.
    """
    n = params.n
    lead = abs(coefficients.get(n + 1, 0))
    if lead == 0:
        raise ValueError(f"leading coefficient A_{n + 1} must be non-zero")
    tail = sum(
        abs(a) * (1 + abs(epsilon_k(params, k)))
        for k, a in coefficients.items()
        if k > n + 1
    )
    if tail == 0:
        return 1.0
    gap = lambda_k(params, n + 2) - lambda_k(params, n + 1)
    lower = lead * (1 - abs(epsilon_k(params, n + 1)))
    return 0.5 * (lower / tail) ** (1.0 / gap)


@dataclass(frozen=True)
class HodographSeries:
    params: PLaplaceParams
    coefficients: tuple[tuple[int, complex], ...]
    trust_radius: float = 0.0
    _lam: dict = field(init=False, repr=False, compare=False)
    _eps: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.params.n
        seen = {}
        for k, a in self.coefficients:
            if int(k) != k or k <= n:
                raise ValueError(f"mode index must be an integer >= n+1={n + 1}, got {k}")
            a = complex(a)
            if not (math.isfinite(a.real) and math.isfinite(a.imag)):
                raise ValueError(f"coefficient A_{k} is not finite")
            if int(k) in seen:
                raise ValueError(f"duplicate mode k={k}")
            seen[int(k)] = a
        if not seen:
            raise ValueError("a series needs at least one mode")
        coeffs = tuple(sorted(seen.items()))
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "_lam", {k: lambda_k(self.params, k) for k, _ in coeffs})
        object.__setattr__(self, "_eps", {k: epsilon_k(self.params, k) for k, _ in coeffs})
        radius = self.trust_radius
        if not radius:
            radius = default_trust_radius(self.params, dict(coeffs))
        if not (radius > 0 and math.isfinite(radius)):
            raise ValueError(f"trust_radius must be positive and finite, got {radius!r}")
        object.__setattr__(self, "trust_radius", float(radius))

    @classmethod
    def from_modes(
        cls,
        p: float,
        n: int,
        modes: Mapping[int, complex],
        trust_radius: float | None = None,
    ) -> "HodographSeries":
        return cls(PLaplaceParams(p, n), tuple(modes.items()), trust_radius or 0.0)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def modes(self) -> list[int]:
        return [k for k, _ in self.coefficients]

    @property
    def leading(self) -> complex:
        return dict(self.coefficients).get(self.n + 1, 0j)

    def coefficient(self, k: int) -> complex:
        return dict(self.coefficients)[k]

    def lam(self, k: int) -> float:
        return self._lam[k]

    def eps(self, k: int) -> float:
        return self._eps[k]

    @property
    def energy_sum(self) -> float:
        """``sum k |A_k|^2``, the square-summability condition on the coefficients."""
        return float(sum(k * abs(a) ** 2 for k, a in self.coefficients))


@dataclass(frozen=True)
class WirtingerPair:
    d_zeta: complex | np.ndarray
    d_zetabar: complex | np.ndarray

    @property
    def jacobian(self):
        """Real Jacobian determinant ``|H_zeta|^2 - |H_zetabar|^2``."""
        return np.abs(self.d_zeta) ** 2 - np.abs(self.d_zetabar) ** 2


def _as_complex(zeta):
    arr = np.asarray(zeta, dtype=complex)
    return arr


def _check_trust(series: HodographSeries, zeta: np.ndarray) -> None:
    limit = series.trust_radius * (1 + 1e-12)
    if np.any(np.abs(zeta) > limit):
        worst = np.max(np.abs(zeta))
        raise TrustRadiusError(
            f"|zeta|={worst:.6g} exceeds trust radius {series.trust_radius:.6g}"
        )


def _term(series: HodographSeries, k: int, zeta: np.ndarray) -> np.ndarray:
    a = series.coefficient(k)
    lam, eps, n = series.lam(k), series.eps(k), series.n
    r = np.abs(zeta)
    nz = r > 0
    out = np.zeros_like(zeta)
    z = zeta[nz]
    rr = r[nz]
    # zeta^k zeta^-n written via the unit vector to keep huge/tiny powers in range
    e = z / rr
    ang = a * e ** (k - n) + eps * np.conj(a) * np.conj(e) ** k * np.conj(e) ** n
    out[nz] = ang * rr**lam
    return out


def _H(series: HodographSeries, zeta: np.ndarray) -> np.ndarray:
    total = np.zeros_like(zeta)
    for k in series.modes:
        total = total + _term(series, k, zeta)
    return total


def _unwrap(result, scalar: bool):
    if scalar:
        return complex(result) if np.iscomplexobj(result) else float(result)
    return result


def eval_term(series: HodographSeries, k: int, zeta):
    """The ``k``-th term of the series; 0 at ``zeta = 0`` by continuity."""
    if k not in series.modes:
        raise KeyError(f"mode k={k} is not present in the series")
    z = _as_complex(zeta)
    return _unwrap(_term(series, k, np.atleast_1d(z)).reshape(z.shape), z.ndim == 0)


def eval_H(series: HodographSeries, zeta):
    z = _as_complex(zeta)
    _check_trust(series, z)
    return _unwrap(_H(series, np.atleast_1d(z)).reshape(z.shape), z.ndim == 0)


def split_main_remainder(series: HodographSeries, zeta):
    """Return ``(main, remainder)`` with ``main`` the k=n+1 term."""
    z = _as_complex(zeta)
    _check_trust(series, z)
    flat = np.atleast_1d(z)
    lead = series.n + 1
    main = _term(series, lead, flat) if lead in series.modes else np.zeros_like(flat)
    rem = np.zeros_like(flat)
    for k in series.modes:
        if k != lead:
            rem = rem + _term(series, k, flat)
    scalar = z.ndim == 0
    return (
        _unwrap(main.reshape(z.shape), scalar),
        _unwrap(rem.reshape(z.shape), scalar),
    )


def _wirtinger(series: HodographSeries, zeta: np.ndarray):
    n = series.n
    d_z = np.zeros_like(zeta)
    d_zb = np.zeros_like(zeta)
    zb = np.conj(zeta)
    r = np.abs(zeta)
    for k in series.modes:
        a = series.coefficient(k)
        lam, eps = series.lam(k), series.eps(k)
        m = lam + n - k
        rm = r**m
        # P = A zeta^(k-n) + eps conj(A) zetabar^k zeta^-n ; term = P |zeta|^m
        P = a * zeta ** (k - n) + eps * np.conj(a) * zb**k * zeta ** (-n)
        P_z = a * (k - n) * zeta ** (k - n - 1) - n * eps * np.conj(a) * zb**k * zeta ** (-n - 1)
        P_zb = k * eps * np.conj(a) * zb ** (k - 1) * zeta ** (-n)
        d_z = d_z + (P_z + P * (m / 2) / zeta) * rm
        d_zb = d_zb + (P_zb + P * (m / 2) / zb) * rm
    return d_z, d_zb


def wirtinger_derivatives(series: HodographSeries, zeta) -> WirtingerPair:
    z = _as_complex(zeta)
    if np.any(z == 0):
        raise ValueError("Wirtinger derivatives are singular at zeta = 0")
    _check_trust(series, z)
    d_z, d_zb = _wirtinger(series, np.atleast_1d(z))
    scalar = z.ndim == 0
    return WirtingerPair(
        _unwrap(d_z.reshape(z.shape), scalar), _unwrap(d_zb.reshape(z.shape), scalar)
    )


def main_term_series(series: HodographSeries) -> HodographSeries:
    """Series keeping only the leading mode; generates the odd special solution."""
    lead = series.n + 1
    if series.leading == 0:
        raise ValueError(f"A_{lead} must be non-zero to split off the main term")
    return HodographSeries(series.params, ((lead, series.leading),), series.trust_radius)


def image_radius(series: HodographSeries, samples: int = 4096) -> float:
    """Smallest ``|H|`` over the trust circle; the disk of this radius is in the image."""
    theta = 2 * np.pi * np.arange(samples) / samples
    return float(np.min(np.abs(_H(series, series.trust_radius * np.exp(1j * theta)))))


def _seed(series: HodographSeries, z: np.ndarray) -> np.ndarray:
    lead = series.n + 1
    a = series.leading
    lam = series.lam(lead)
    r = np.abs(z)
    return (r / abs(a)) ** (1.0 / lam) * np.exp(1j * (np.angle(z) - np.angle(a)))


def _newton(series, z, zeta, max_iter=60):
    """Damped Newton on the real 2x2 system; returns (zeta, residual)."""
    R = series.trust_radius
    res = z - _H(series, zeta)
    err = np.abs(res)
    target = 2e-16 * np.maximum(np.abs(z), 1e-300) * 4
    active = err > target
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        zi = zeta[idx]
        ri = res[idx]
        safe = np.where(zi == 0, 1e-300, zi)
        a, b = _wirtinger(series, safe)
        det = np.abs(a) ** 2 - np.abs(b) ** 2
        step = (np.conj(a) * ri - b * np.conj(ri)) / det
        t = np.ones(idx.size)
        new_z = zi + step
        best_err = err[idx]
        accepted = np.zeros(idx.size, dtype=bool)
        for _half in range(30):
            mag = np.abs(new_z)
            over = mag > R
            cand = np.where(over, new_z / np.where(mag > 0, mag, 1) * R, new_z)
            cres = z[idx] - _H(series, cand)
            cerr = np.abs(cres)
            ok = (cerr < best_err) & ~accepted
            zeta[idx[ok]] = cand[ok]
            res[idx[ok]] = cres[ok]
            err[idx[ok]] = cerr[ok]
            accepted |= ok
            if np.all(accepted):
                break
            t = t * 0.5
            new_z = zi + t * step
        # points where no step improved the residual have stalled
        stalled = idx[~accepted]
        active[stalled] = False
        active[idx[accepted]] = err[idx[accepted]] > target[idx[accepted]]
    return zeta, err


def _continuation(series, z0: complex, steps: int = 64) -> complex:
    zeta = _seed(series, np.array([z0 / steps]))
    for j in range(1, steps + 1):
        zt = np.array([z0 * j / steps])
        zeta, err = _newton(series, zt, zeta.copy())
    return complex(zeta[0])


def invert_H(series: HodographSeries, z, guess=None):
    """Solve ``H(zeta) = z`` inside the trust disk.

    Newton is seeded by inverting the leading term radially (or by ``guess``);
    points that stall fall back to continuation along the ray from 0 to z.
    """
    zin = _as_complex(z)
    flat = np.atleast_1d(zin).ravel().copy()
    zeta = np.zeros_like(flat)
    nz = flat != 0
    if np.any(nz):
        zz = flat[nz]
        if guess is not None:
            seed = np.atleast_1d(_as_complex(guess)).ravel()[nz].copy()
        else:
            seed = _seed(series, zz)
        seed = np.where(np.abs(seed) > series.trust_radius,
                        seed / np.abs(seed) * series.trust_radius, seed)
        sol, err = _newton(series, zz, seed)
        tol = 1e-12 * np.maximum(1.0, np.abs(zz))
        bad = np.nonzero(err > tol)[0]
        for i in bad:
            sol[i] = _continuation(series, complex(zz[i]))
            err[i] = abs(zz[i] - _H(series, np.array([sol[i]]))[0])
        if np.any(err > tol):
            i = int(np.argmax(err / tol))
            raise InversionError(
                f"could not invert H at z={complex(zz[i])!r} (residual {err[i]:.3g}); "
                "z may lie outside the image of the trust disk"
            )
        zeta[nz] = sol
    return _unwrap(zeta.reshape(zin.shape), zin.ndim == 0)


def _u(series: HodographSeries, zeta: np.ndarray) -> np.ndarray:
    n = series.n
    total = np.zeros(zeta.shape)
    zn = zeta**n
    for k in series.modes:
        lam = series.lam(k)
        total = total + (2 * lam / (lam + n)) * np.real(zn * _term(series, k, zeta))
    return total


def eval_u(series: HodographSeries, zeta):
    """The p-harmonic potential at ``z = H(zeta)``, normalised by ``u(0) = 0``."""
    z = _as_complex(zeta)
    _check_trust(series, z)
    return _unwrap(_u(series, np.atleast_1d(z)).reshape(z.shape), z.ndim == 0)


def eval_u_at_z(series: HodographSeries, z):
    zeta = invert_H(series, z)
    return eval_u(series, zeta)


def series_to_dict(series: HodographSeries) -> dict:
    return {
        "p": series.p,
        "n": series.n,
        "modes": [{"k": k, "re": a.real, "im": a.imag} for k, a in series.coefficients],
        "trust_radius": series.trust_radius,
    }


def _number(doc, key, path, kind=float):
    if key not in doc:
        raise SeriesFormatError(f"{path}.{key}" if path else key, "missing field")
    v = doc[key]
    where = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SeriesFormatError(where, f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise SeriesFormatError(where, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise SeriesFormatError(where, "must be finite")
    return kind(v)


def series_from_dict(doc) -> HodographSeries:
    if not isinstance(doc, dict):
        raise SeriesFormatError("$", "expected a JSON object")
    p = _number(doc, "p", "")
    n = _number(doc, "n", "", int)
    if p <= 1:
        raise SeriesFormatError("p", f"p must satisfy p > 1, got {p}")
    if n < 1:
        raise SeriesFormatError("n", f"n must be >= 1, got {n}")
    modes = doc.get("modes")
    if not isinstance(modes, list) or not modes:
        raise SeriesFormatError("modes", "expected a non-empty list")
    coeffs = {}
    for i, m in enumerate(modes):
        path = f"modes[{i}]"
        if not isinstance(m, dict):
            raise SeriesFormatError(path, "expected an object")
        k = _number(m, "k", path, int)
        if k <= n:
            raise SeriesFormatError(f"{path}.k", f"k must be >= n+1={n + 1}, got {k}")
        if k in coeffs:
            raise SeriesFormatError(f"{path}.k", f"duplicate mode k={k}")
        coeffs[k] = complex(_number(m, "re", path), _number(m, "im", path))
    if coeffs.get(n + 1, 0) == 0:
        raise SeriesFormatError("modes", f"leading coefficient A_{n + 1} must be non-zero")
    trust = None
    if doc.get("trust_radius") is not None:
        trust = _number(doc, "trust_radius", "")
        if trust <= 0:
            raise SeriesFormatError("trust_radius", "must be positive")
    return HodographSeries.from_modes(p, n, coeffs, trust)


def dump_series(series: HodographSeries, path) -> None:
    with open(path, "w") as fh:
        json.dump(series_to_dict(series), fh, indent=2)
        fh.write("\n")


def load_series(path) -> HodographSeries:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SeriesFormatError("$", f"invalid JSON: {exc}") from None
    return series_from_dict(doc)

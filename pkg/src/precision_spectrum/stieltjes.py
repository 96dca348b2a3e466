"""Stieltjes transforms of empirical and limiting spectra.

Conventions: ``b(z) = int dF(x) / (x - z)``.  The limiting SCM transform
``b_K`` solves the Marcenko-Pastur equation

    b = (1/N) sum_i N_i / (lambda_i (1 - c - c z b) - z),

the dual (``Y^H Y``) transform is ``c b(z) - (1 - c)/z`` and the limiting SMI
transform is recovered from the dual one evaluated at ``1/z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConvergenceError, PoleError
from .model import PopulationSpectrum

__all__ = [
    "TransformValue",
    "empirical_stieltjes",
    "dual_stieltjes",
    "mp_residual",
    "solve_mp_fixed_point",
    "solve_mp_path",
    "dual_mp",
    "solve_mp_precision",
    "precision_residual",
    "psi",
    "psi_prime",
    "xi",
    "xi_prime",
    "precision_transform",
    "phi_map",
]

POLE_ATOL = 1e-14
POLE_RTOL = 1e-13
FP_TOL = 1e-12
FP_DAMPING = 0.5
FP_MAX_ITER = 10_000


@dataclass(frozen=True)
class TransformValue:
    z: complex
    value: complex
    derivative: complex | None = None


def empirical_stieltjes(eigs: ArrayLike, z: complex) -> TransformValue:
    """``(1/N) sum 1/(e_i - z)`` and its derivative ``(1/N) sum 1/(e_i - z)^2``."""
    e = np.asarray(eigs, dtype=float).ravel()
    d = e - z
    if np.min(np.abs(d)) < POLE_ATOL:
        raise PoleError(f"z={z} coincides with an eigenvalue")
    inv = 1.0 / d
    return TransformValue(complex(z), complex(inv.mean()), complex((inv * inv).mean()))


def dual_stieltjes(b_scm: complex, c_K: float, z: complex) -> complex:
    """Transform of ``Y^H Y`` from that of ``Y Y^H``: ``c b - (1 - c)/z``."""
    if z == 0:
        raise PoleError("dual transform has a pole at z = 0")
    return c_K * b_scm - (1.0 - c_K) / z


def _mp_terms(lam: NDArray, w: NDArray, c: float, z: complex, b: complex):
    d = lam * (1.0 - c - c * z * b) - z
    inv = 1.0 / d
    inv2 = inv * inv
    f = np.dot(w, inv)
    df_db = np.dot(w, lam * inv2) * c * z
    df_dz = np.dot(w, (lam * c * b + 1.0) * inv2)
    return f, df_db, df_dz


def mp_residual(spec: PopulationSpectrum, c: float, z: complex, b: complex) -> float:
    """``|b - F(b)|`` for the Marcenko-Pastur map ``F``."""
    lam = np.asarray(spec.lambdas, dtype=float)
    f, _, _ = _mp_terms(lam, spec.weights, c, z, b)
    return abs(b - f)


def _newton(lam, w, c, z, b, steps=50):
    for _ in range(steps):
        f, df_db, _ = _mp_terms(lam, w, c, z, b)
        g = b - f
        if abs(g) <= 0.1 * FP_TOL * (1.0 + abs(b)):
            break
        b = b - g / (1.0 - df_db)
        if not np.isfinite(b):
            break
    return b


def _finish(lam, w, c, z, b) -> TransformValue:
    f, df_db, df_dz = _mp_terms(lam, w, c, z, b)
    res = abs(b - f)
    if not np.isfinite(res) or res > FP_TOL * (1.0 + abs(b)):
        raise ConvergenceError(f"Marcenko-Pastur fixed point not reached at z={z}", res)
    if z.imag != 0 and b.imag * z.imag <= 0:
        raise ConvergenceError(f"fixed point at z={z} violates the Herglotz sign", res)
    return TransformValue(z, complex(b), complex(df_dz / (1.0 - df_db)))


def solve_mp_fixed_point(
    spec: PopulationSpectrum, c: float, z: complex, b0: complex | None = None
) -> TransformValue:
    """Limiting SCM Stieltjes transform ``b_K(z)`` and its derivative.

    Damped iteration ``b <- (1 - a) b + a F(b)`` (``a = 0.5``) from
    ``b0 = -1/z``, finished with Newton steps.  If the iteration cap is hit
    (typically very close to the real axis) the solution is continued down
    from a point farther from the axis.  The derivative comes from implicit
    differentiation of the fixed-point equation.
    """
    z = complex(z)
    if z.imag == 0:
        raise PoleError("fixed-point solver needs Im(z) != 0")
    if not 0.0 < c < 1.0:
        raise ValueError(f"aspect ratio must lie in (0, 1), got {c}")
    lam = np.asarray(spec.lambdas, dtype=float)
    w = spec.weights
    b = complex(b0) if b0 is not None else -1.0 / z
    res = np.inf
    for _ in range(FP_MAX_ITER):
        f, _, _ = _mp_terms(lam, w, c, z, b)
        res = abs(b - f)
        if res <= FP_TOL * (1.0 + abs(b)):
            break
        b = (1.0 - FP_DAMPING) * b + FP_DAMPING * f
    else:
        b = _continue_from_above(spec, c, z)
    b = _newton(lam, w, c, z, b)
    return _finish(lam, w, c, z, b)


def _continue_from_above(spec: PopulationSpectrum, c: float, z: complex) -> complex:
    lam = np.asarray(spec.lambdas, dtype=float)
    w = spec.weights
    sign = 1.0 if z.imag > 0 else -1.0
    start = max(1.0, 10.0 * abs(z.imag))
    heights = np.geomspace(start, abs(z.imag), 200)
    b = solve_mp_fixed_point(spec, c, complex(z.real, sign * start)).value
    for h in heights[1:]:
        b = _newton(lam, w, c, complex(z.real, sign * h), b)
    return b


def solve_mp_path(
    spec: PopulationSpectrum, c: float, zs: ArrayLike
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Solve along an ordered path of points, warm-starting Newton from the previous node.

    Points are allowed on the real axis away from the support; there the
    solution is real and continuity along the path selects the right branch.
    Falls back to :func:`solve_mp_fixed_point` whenever a warm start fails.
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    lam = np.asarray(spec.lambdas, dtype=float)
    w = spec.weights
    vals = np.empty_like(zs)
    ders = np.empty_like(zs)
    prev: complex | None = None
    for j, z in enumerate(zs):
        z = complex(z)
        tv = None
        if prev is not None:
            try:
                tv = _finish(lam, w, c, z, _newton(lam, w, c, z, prev))
            except ConvergenceError:
                tv = None
        if tv is None:
            tv = solve_mp_fixed_point(spec, c, z)
        vals[j], ders[j] = tv.value, tv.derivative
        prev = tv.value
    return vals, ders


def dual_mp(spec: PopulationSpectrum, c: float, z: complex) -> TransformValue:
    """Limiting dual transform ``c b_K(z) - (1 - c)/z`` with derivative."""
    tv = solve_mp_fixed_point(spec, c, z)
    return TransformValue(tv.z, c * tv.value - (1.0 - c) / tv.z, c * tv.derivative + (1.0 - c) / tv.z**2)


def precision_residual(spec: PopulationSpectrum, c: float, z: complex, bt: complex) -> float:
    """Residual of the SMI fixed-point equation at ``bt``."""
    g = np.asarray(spec.gammas, dtype=float)
    u = 1.0 + z * c * bt
    return abs(bt - np.dot(spec.weights, u / (g - z * u)))


def solve_mp_precision(spec: PopulationSpectrum, c: float, z: complex) -> TransformValue:
    """Limiting SMI Stieltjes transform ``b~_K(z)`` and its derivative.

    Obtained from the dual SCM transform at ``1/z`` through
    ``b~(z) = -(1/(z c)) (B(1/z)/z + 1)`` and
    ``b~'(z) = (B'(1/z) + 2 z B(1/z) + z^2) / (c z^4)``.
    """
    z = complex(z)
    if z == 0 or z.imag == 0:
        raise PoleError("precision transform needs Im(z) != 0")
    dual = dual_mp(spec, c, 1.0 / z)
    B, dB = dual.value, dual.derivative
    bt = -(B / z + 1.0) / (z * c)
    dbt = (dB + 2.0 * z * B + z * z) / (c * z**4)
    res = precision_residual(spec, c, z, bt)
    if res > 1e-10 * (1.0 + abs(bt)):
        raise ConvergenceError(f"SMI fixed point residual too large at z={z}", res)
    if bt.imag * z.imag <= 0:
        raise ConvergenceError(f"SMI transform at z={z} violates the Herglotz sign", res)
    return TransformValue(z, bt, dbt)


def _pole_guard(x: NDArray, poles: NDArray, what: str) -> None:
    scale = float(np.max(np.abs(poles)))
    dist = np.min(np.abs(x[:, None] - poles[None, :]), axis=1)
    if np.any(dist < POLE_RTOL * scale):
        bad = x[np.argmin(dist)]
        raise PoleError(f"{what} evaluated at a pole ({bad!r})")


def _scalar_or_array(x: ArrayLike, out: NDArray):
    return float(out[0]) if np.ndim(x) == 0 else out


def psi(spec: PopulationSpectrum, c: float, f: ArrayLike):
    """``1 - (c/N) sum N_i (lambda_i / (lambda_i - f))^2``; vectorised in ``f``."""
    lam = np.asarray(spec.lambdas, dtype=float)
    x = np.atleast_1d(np.asarray(f, dtype=float))
    _pole_guard(x, lam, "Psi")
    r = lam[None, :] / (lam[None, :] - x[:, None])
    return _scalar_or_array(f, 1.0 - c * (r * r) @ spec.weights)


def psi_prime(spec: PopulationSpectrum, c: float, f: ArrayLike):
    lam = np.asarray(spec.lambdas, dtype=float)
    x = np.atleast_1d(np.asarray(f, dtype=float))
    _pole_guard(x, lam, "Psi'")
    d = lam[None, :] - x[:, None]
    return _scalar_or_array(f, -2.0 * c * (lam[None, :] ** 2 / d**3) @ spec.weights)


def xi(spec: PopulationSpectrum, c: float, omega: ArrayLike):
    """``1 - (c/N) sum N_i (omega / (gamma_i - omega))^2``; vectorised in ``omega``."""
    g = np.asarray(spec.gammas, dtype=float)
    x = np.atleast_1d(np.asarray(omega, dtype=float))
    _pole_guard(x, g, "xi")
    r = x[:, None] / (g[None, :] - x[:, None])
    return _scalar_or_array(omega, 1.0 - c * (r * r) @ spec.weights)


def xi_prime(spec: PopulationSpectrum, c: float, omega: ArrayLike):
    g = np.asarray(spec.gammas, dtype=float)
    x = np.atleast_1d(np.asarray(omega, dtype=float))
    _pole_guard(x, g, "xi'")
    d = g[None, :] - x[:, None]
    return _scalar_or_array(omega, -2.0 * c * (x[:, None] * g[None, :] / d**3) @ spec.weights)


def precision_transform(spec: PopulationSpectrum, omega: ArrayLike):
    """Population precision transform ``b_M(w) = (1/N) sum N_i / (gamma_i - w)``."""
    g = np.asarray(spec.gammas, dtype=float)
    x = np.atleast_1d(np.asarray(omega))
    out = (1.0 / (g[None, :] - x[:, None])) @ spec.weights
    return out[0] if np.ndim(omega) == 0 else out


def phi_map(spec: PopulationSpectrum, c: float, omega: ArrayLike):
    """``Phi(w) = w / (1 + c w b_M(w))``, the inverse of ``z -> z (1 + c z b~(z))``."""
    x = np.asarray(omega)
    return x / (1.0 + c * x * precision_transform(spec, x))

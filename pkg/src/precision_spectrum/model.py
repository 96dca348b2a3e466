"""Population spectra, Gaussian observations and sample eigenvalues.

The population covariance is kept diagonal: every quantity computed in this
package depends on the sample spectrum only, and that spectrum is invariant
under a unitary change of basis.  ``sample_observations(..., rotate=True)``
applies a Haar-random basis anyway so the invariance can be tested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (
    AspectRatioError,
    DegenerateSpectrumError,
    InvalidSpectrumError,
    ShapeError,
    SingularSCMError,
)

__all__ = [
    "FieldKind",
    "PopulationSpectrum",
    "ObservationMatrix",
    "SampleSpectrum",
    "make_population",
    "population_from_fractions",
    "load_population",
    "sample_observations",
    "sample_covariance",
    "hermitian_eigenvalues",
    "smi_spectrum",
    "sample_spectrum",
    "TIE_RTOL",
]

FieldKind = Literal["complex", "real"]

# Relative spacing below which two sample eigenvalues count as tied.
TIE_RTOL = 1e-12
HERMITIAN_RTOL = 1e-12
EIG_RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class PopulationSpectrum:
    """Distinct covariance eigenvalues (ascending) with their multiplicities."""

    lambdas: tuple[float, ...]
    mults: tuple[int, ...]

    @property
    def L(self) -> int:
        return len(self.lambdas)

    @property
    def N(self) -> int:
        return int(sum(self.mults))

    @property
    def gammas(self) -> tuple[float, ...]:
        """Precision eigenvalues ``1/lambda``, hence strictly descending."""
        return tuple(1.0 / lam for lam in self.lambdas)

    @property
    def weights(self) -> NDArray[np.float64]:
        """Multiplicity fractions ``N_i / N``."""
        return np.asarray(self.mults, dtype=float) / self.N

    def diagonal(self) -> NDArray[np.float64]:
        """Covariance eigenvalues repeated by multiplicity, ascending."""
        return np.repeat(np.asarray(self.lambdas, dtype=float), self.mults)

    def to_dict(self) -> dict:
        return {"lambdas": list(self.lambdas), "mults": list(self.mults)}


def make_population(lambdas: Sequence[float], mults: Sequence[int]) -> PopulationSpectrum:
    """Validate and build a :class:`PopulationSpectrum`."""
    lam = [float(v) for v in lambdas]
    if len(lam) == 0 or len(lam) != len(mults):
        raise InvalidSpectrumError(
            f"lambdas and mults must be non-empty and of equal length (got {len(lam)} and {len(mults)})"
        )
    if any(not np.isfinite(v) or v <= 0.0 for v in lam):
        raise InvalidSpectrumError(f"covariance eigenvalues must be positive and finite: {lam}")
    if any(b <= a for a, b in zip(lam, lam[1:])):
        raise InvalidSpectrumError(f"covariance eigenvalues must be strictly ascending: {lam}")
    ms = []
    for m in mults:
        if int(m) != m or int(m) <= 0:
            raise InvalidSpectrumError(f"multiplicities must be positive integers: {list(mults)}")
        ms.append(int(m))
    return PopulationSpectrum(tuple(lam), tuple(ms))


def population_from_fractions(
    lambdas: Sequence[float], fractions: Sequence[float | Fraction | str], N: int
) -> PopulationSpectrum:
    """Build a spectrum whose multiplicities are ``fraction * N`` (must be integral)."""
    mults = []
    for f in fractions:
        exact = Fraction(f).limit_denominator(10_000) * N
        if exact.denominator != 1:
            raise InvalidSpectrumError(f"N={N} does not split into integer multiplicities for fraction {f}")
        mults.append(int(exact))
    if sum(mults) != N:
        raise InvalidSpectrumError(f"fractions {list(fractions)} do not sum to one")
    return make_population(lambdas, mults)


def load_population(source: str | Path | dict) -> PopulationSpectrum:
    """Read ``{"lambdas": [...], "mults": [...]}`` from a path, JSON text or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text(encoding="utf-8") if Path(str(source)).exists() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidSpectrumError(f"population spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "lambdas" not in doc or "mults" not in doc:
        raise InvalidSpectrumError('population spec must be an object with "lambdas" and "mults"')
    return make_population(doc["lambdas"], doc["mults"])


@dataclass(frozen=True)
class ObservationMatrix:
    """``N x K`` observation matrix already scaled by ``1/sqrt(K)``."""

    entries: NDArray
    field_kind: FieldKind = "complex"

    def __post_init__(self) -> None:
        if self.entries.ndim != 2:
            raise ShapeError("observation matrix must be two-dimensional")
        n, k = self.entries.shape
        if n >= k:
            raise AspectRatioError(f"need N < K, got N={n}, K={k}")

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def from_raw(cls, columns: NDArray) -> "ObservationMatrix":
        """Wrap unscaled observations ``y_1..y_K`` (as columns), applying ``1/sqrt(K)``."""
        y = np.asarray(columns)
        if y.ndim != 2:
            raise ShapeError("raw observations must form an N x K matrix")
        kind: FieldKind = "complex" if np.iscomplexobj(y) else "real"
        return cls(y / np.sqrt(y.shape[1]), kind)


@dataclass(frozen=True)
class SampleSpectrum:
    """SCM eigenvalues (ascending) and their reciprocals, the SMI eigenvalues (descending)."""

    sigma_hat: NDArray[np.float64]
    rho_hat: NDArray[np.float64]
    K: int
    N: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "N", int(self.rho_hat.size))

    @property
    def c_K(self) -> float:
        return self.N / self.K


def _haar_unitary(n: int, rng: np.random.Generator, field_kind: FieldKind) -> NDArray:
    z = rng.standard_normal((n, n))
    if field_kind == "complex":
        z = z + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_observations(
    spec: PopulationSpectrum,
    K: int,
    seed: int | np.random.Generator,
    field_kind: FieldKind = "complex",
    *,
    rotate: bool = False,
) -> ObservationMatrix:
    """Draw ``Y = R^{1/2} X`` with i.i.d. entries of ``X`` of variance ``1/K``.

    Complex entries are ``(u + i v) / sqrt(2K)``, real ones ``u / sqrt(K)``,
    with ``u, v`` standard normal.  The same ``seed`` always yields the same
    matrix.
    """
    N = spec.N
    if K <= N:
        raise AspectRatioError(f"sample size K={K} must exceed dimension N={N}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if field_kind == "complex":
        x = (rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))) / np.sqrt(2.0 * K)
    elif field_kind == "real":
        x = rng.standard_normal((N, K)) / np.sqrt(K)
    else:
        raise ValueError(f"unknown field kind {field_kind!r}")
    y = np.sqrt(spec.diagonal())[:, None] * x
    if rotate:
        y = _haar_unitary(N, rng, field_kind) @ y
    return ObservationMatrix(y, field_kind)


def sample_covariance(Y: ObservationMatrix) -> NDArray:
    """``R = Y Y^H``, symmetrised so it is exactly Hermitian."""
    y = Y.entries
    r = y @ y.conj().T
    return 0.5 * (r + r.conj().T)


def hermitian_eigenvalues(H: NDArray, *, check: bool = True) -> NDArray[np.float64]:
    """Ascending eigenvalues of a Hermitian matrix.

    With ``check=True`` the input is tested for Hermitian symmetry (relative
    Frobenius tolerance 1e-12) and every eigenpair's residual
    ``||H v - s v||`` is verified against ``1e-10 ||H||``.
    """
    h = np.asarray(H)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {h.shape}")
    if not check:
        return np.linalg.eigvalsh(h)
    scale = np.linalg.norm(h)
    asym = np.linalg.norm(h - h.conj().T)
    if asym > HERMITIAN_RTOL * max(scale, np.finfo(float).tiny):
        raise ShapeError(f"matrix is not Hermitian (relative asymmetry {asym / scale:.2e})")
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    resid = np.linalg.norm(h @ v - v * w, axis=0)
    if np.any(resid > EIG_RESIDUAL_RTOL * max(np.linalg.norm(h, 2), np.finfo(float).tiny)):
        raise ShapeError("eigendecomposition residual exceeds tolerance")
    return w


def _check_ties(values: NDArray[np.float64], what: str) -> None:
    gaps = np.abs(np.diff(values))
    if gaps.size and np.min(gaps) <= TIE_RTOL * np.max(np.abs(values)):
        i = int(np.argmin(gaps))
        raise DegenerateSpectrumError(f"tied {what} at positions {i} and {i + 1}: {values[i]!r}")


def smi_spectrum(scm_eigs: Sequence[float] | NDArray, K: int) -> SampleSpectrum:
    """Invert ascending SCM eigenvalues into the descending SMI spectrum."""
    sigma = np.asarray(scm_eigs, dtype=float).ravel()
    if sigma.size == 0:
        raise ShapeError("empty eigenvalue list")
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0.0):
        raise SingularSCMError("sample covariance eigenvalues must all be positive (K > N required)")
    if np.any(np.diff(sigma) < 0):
        raise ShapeError("SCM eigenvalues must be sorted ascending")
    _check_ties(sigma, "SCM eigenvalues")
    if K <= sigma.size:
        raise AspectRatioError(f"sample size K={K} must exceed dimension N={sigma.size}")
    return SampleSpectrum(sigma, 1.0 / sigma, int(K))


def sample_spectrum(
    spec: PopulationSpectrum,
    K: int,
    seed: int | np.random.Generator,
    field_kind: FieldKind = "complex",
    *,
    check: bool = True,
) -> SampleSpectrum:
    """Draw observations and return their SCM/SMI spectrum in one call."""
    Y = sample_observations(spec, K, seed, field_kind)
    return smi_spectrum(hermitian_eigenvalues(sample_covariance(Y), check=check), K)

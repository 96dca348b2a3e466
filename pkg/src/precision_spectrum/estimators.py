"""Closed-form estimators built from the SMI eigenvalues.

Everything here is O(N^2) arithmetic on the descending SMI spectrum
``rho_hat`` and a user-supplied partition into groups of known size
(``mults``, ordered like the descending precision eigenvalues).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateSpectrumError, ShapeError
from .model import TIE_RTOL, SampleSpectrum

__all__ = [
    "GroupIndex",
    "EstimationResult",
    "group_index",
    "estimate_precision_eigs",
    "ml_estimate",
    "estimate_clt_covariance",
    "estimate_trace_functional",
    "estimate",
]


@dataclass(frozen=True)
class GroupIndex:
    """Contiguous index ranges into the descending ``rho_hat`` list."""

    mults: tuple[int, ...]
    starts: tuple[int, ...]

    @property
    def N(self) -> int:
        return int(sum(self.mults))

    def members(self, m: int) -> slice:
        return slice(self.starts[m], self.starts[m] + self.mults[m])

    def complement(self, m: int) -> NDArray[np.intp]:
        idx = np.arange(self.N)
        s = self.members(m)
        return np.concatenate([idx[: s.start], idx[s.stop :]])

    def labels(self) -> NDArray[np.intp]:
        """Group number of every position."""
        return np.repeat(np.arange(len(self.mults)), self.mults)


def group_index(mults: Sequence[int], N: int) -> GroupIndex:
    ms = tuple(int(m) for m in mults)
    if len(ms) == 0 or any(m <= 0 for m in ms) or any(int(m) != m for m in mults):
        raise ShapeError(f"multiplicities must be positive integers, got {list(mults)}")
    if sum(ms) != N:
        raise ShapeError(f"multiplicities sum to {sum(ms)} but there are {N} sample eigenvalues")
    starts = tuple(int(s) for s in np.concatenate([[0], np.cumsum(ms)[:-1]]))
    return GroupIndex(ms, starts)


@dataclass(frozen=True)
class EstimationResult:
    gamma_breve: NDArray[np.float64]
    theta_hat: NDArray[np.float64] | None = None
    g1_hat: float | None = None

    def to_dict(self) -> dict:
        out: dict = {"gamma_breve": [float(v) for v in self.gamma_breve]}
        if self.theta_hat is not None:
            out["theta_hat"] = [[float(v) for v in row] for row in self.theta_hat]
        if self.g1_hat is not None:
            out["g1_hat"] = float(self.g1_hat)
        return out


def _rho(sample: SampleSpectrum) -> NDArray[np.float64]:
    """SMI eigenvalues in the caller's order, after a tie check.

    Groups are contiguous ranges of this order (normally descending); the
    formulas only need each group's set, so order inside a group is free.
    """
    rho = np.asarray(sample.rho_hat, dtype=float)
    srt = np.sort(rho)
    gaps = np.diff(srt)
    if gaps.size and np.min(gaps) <= TIE_RTOL * np.max(np.abs(rho)):
        i = int(np.argmin(gaps))
        raise DegenerateSpectrumError(f"tied SMI eigenvalues {srt[i]!r} and {srt[i + 1]!r}")
    return rho


def _pair_ratio(rho: NDArray[np.float64]) -> NDArray[np.float64]:
    """``rho_i / (rho_k - rho_i)`` indexed ``[k, i]`` with a zero diagonal."""
    diff = rho[:, None] - rho[None, :]
    np.fill_diagonal(diff, 1.0)
    out = rho[None, :] / diff
    np.fill_diagonal(out, 0.0)
    return out


def estimate_precision_eigs(sample: SampleSpectrum, mults: Sequence[int]) -> NDArray[np.float64]:
    """Consistent estimates of the distinct precision eigenvalues.

    ``gamma_m = (1/N_m) sum_{k in group m} rho_k (1 - c - (c/N) sum_{i != k} rho_i / (rho_k - rho_i))``
    """
    rho = _rho(sample)
    groups = group_index(mults, rho.size)
    c = sample.c_K
    per_k = rho * (1.0 - c - (c / rho.size) * _pair_ratio(rho).sum(axis=1))
    sums = np.add.reduceat(per_k, groups.starts)
    return sums / np.asarray(groups.mults, dtype=float)


def ml_estimate(sample: SampleSpectrum, mults: Sequence[int]) -> NDArray[np.float64]:
    """Group means of the SMI eigenvalues (inverse-covariance ML baseline)."""
    rho = np.asarray(sample.rho_hat, dtype=float)
    groups = group_index(mults, rho.size)
    return np.add.reduceat(rho, groups.starts) / np.asarray(groups.mults, dtype=float)


def estimate_clt_covariance(sample: SampleSpectrum, mults: Sequence[int]) -> NDArray[np.float64]:
    """Plug-in estimate of the limiting covariance of ``K (gamma_breve - gamma)``.

    Off-diagonal entries are ``-(1/(N_m N_n)) sum_{k in m, l in n} w_kl`` with
    ``w_kl = rho_k^2 rho_l^2 / (rho_k - rho_l)^2``; diagonal entries sum
    ``w_kl`` over ``l`` outside group ``m`` and add ``(K - N)/N_m^2 sum rho_k^2``.
    """
    rho = _rho(sample)
    groups = group_index(mults, rho.size)
    L = len(groups.mults)
    diff = rho[:, None] - rho[None, :]
    np.fill_diagonal(diff, 1.0)
    sq = rho * rho
    w = np.outer(sq, sq) / (diff * diff)
    np.fill_diagonal(w, 0.0)
    # block sums S[m, n] = sum_{k in m, l in n} w_kl, in a fixed order
    starts = list(groups.starts)
    block = np.add.reduceat(np.add.reduceat(w, starts, axis=0), starts, axis=1)
    nm = np.asarray(groups.mults, dtype=float)
    theta = -block / np.outer(nm, nm)
    row_tot = block.sum(axis=1)
    per_group_sq = np.add.reduceat(sq, starts)
    for m in range(L):
        outside = row_tot[m] - block[m, m]
        theta[m, m] = (outside + (sample.K - rho.size) * per_group_sq[m]) / nm[m] ** 2
    return 0.5 * (theta + theta.T)


def estimate_trace_functional(gamma_est: Sequence[float], mults: Sequence[int]) -> float:
    """``(1/N) sum N_i gamma_i``, the normalised trace of the precision matrix."""
    g = np.asarray(gamma_est, dtype=float).ravel()
    m = np.asarray(mults, dtype=float).ravel()
    if g.size != m.size or g.size == 0:
        raise ShapeError(f"{g.size} estimates for {m.size} multiplicities")
    return float(np.dot(m, g) / m.sum())


def estimate(sample: SampleSpectrum, mults: Sequence[int], *, with_theta: bool = True) -> EstimationResult:
    """Point estimates, their covariance estimate and the trace functional."""
    gamma = estimate_precision_eigs(sample, mults)
    theta = estimate_clt_covariance(sample, mults) if with_theta else None
    return EstimationResult(gamma, theta, estimate_trace_functional(gamma, mults))

"""Limiting spectral supports of the SCM and SMI and the separation diagnostics.

On every open interval between consecutive poles, ``Psi'`` and ``xi'`` are
strictly decreasing and ``Psi``, ``xi`` are concave, so each gap holds exactly
one critical point and either zero or two roots.  Roots are therefore found
by bracketing on the pole intervals and refining with Brent's method; no
probe grid is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NumericalError
from .model import PopulationSpectrum
from .stieltjes import phi_map, psi, psi_prime, xi, xi_prime

__all__ = ["SupportReport", "separability", "support_clusters"]

XTOL = 1e-13
_POLE_OFFSET = 1e-10


@dataclass
class SupportReport:
    """Cluster structure of the limiting SMI/SCM spectra.

    Precision-side clusters are listed from the largest eigenvalue down, so
    cluster ``k`` of ``clusters_prec`` and of ``clusters_cov`` both belong to
    ``gamma_k = 1/lambda_k``.
    """

    c: float
    f_crit: list[float]
    omega_bar: list[float]
    gap_margins: list[float]
    phi: list[float]
    separable: bool
    separable_clusters: list[bool]
    omega_crit: list[tuple[float, float]] = field(default_factory=list)
    clusters_prec: list[tuple[float, float]] = field(default_factory=list)
    clusters_cov: list[tuple[float, float]] = field(default_factory=list)
    members: list[list[int]] = field(default_factory=list)

    @property
    def Q(self) -> int:
        return len(self.clusters_prec)

    @property
    def merged(self) -> list[bool]:
        return [len(m) > 1 for m in self.members]

    def to_dict(self) -> dict:
        def num(x: float):
            return x if math.isfinite(x) else None

        return {
            "c": self.c,
            "Q": self.Q,
            "separable": self.separable,
            "separable_clusters": list(self.separable_clusters),
            "phi": [num(p) for p in self.phi],
            "gap_margins": list(self.gap_margins),
            "f_crit": list(self.f_crit),
            "omega_bar": list(self.omega_bar),
            "omega_crit": [list(p) for p in self.omega_crit],
            "clusters_prec": [list(p) for p in self.clusters_prec],
            "clusters_cov": [list(p) for p in self.clusters_cov],
            "members": [list(m) for m in self.members],
            "merged": self.merged,
        }


def _bisect(fn, a: float, b: float, what: str) -> float:
    fa, fb = fn(a), fn(b)
    if not (np.sign(fa) * np.sign(fb) < 0):
        raise NumericalError(f"{what}: no sign change on [{a!r}, {b!r}] (values {fa!r}, {fb!r})")
    return brentq(fn, a, b, xtol=XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def _inner(lo: float, hi: float) -> tuple[float, float]:
    pad = _POLE_OFFSET * max(abs(lo), abs(hi))
    return lo + pad, hi - pad


def _psi_critical_points(spec: PopulationSpectrum, c: float) -> list[float]:
    lam = spec.lambdas
    out = []
    for lo, hi in zip(lam, lam[1:]):
        a, b = _inner(lo, hi)
        out.append(_bisect(lambda f: psi_prime(spec, c, f), a, b, "Psi' root"))
    return out


def separability(spec: PopulationSpectrum, c: float) -> SupportReport:
    """Critical points of ``Psi``, the per-cluster margins and separability flags.

    ``phi[m]`` follows the literal per-eigenvalue condition (a ``max`` over
    the two neighbouring gaps for interior clusters).  The boolean flags use
    the stricter reading: a cluster is isolated when both adjacent gaps have
    positive margin, and the whole spectrum is separable when every gap does.
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"aspect ratio must lie in (0, 1), got {c}")
    f_bar = _psi_critical_points(spec, c)
    margins = [float(psi(spec, c, f)) for f in f_bar]
    L = spec.L
    if L == 1:
        phi = [math.inf]
    else:
        phi = [margins[0]]
        phi += [max(margins[m - 1], margins[m]) for m in range(1, L - 1)]
        phi += [margins[L - 2]]
    open_gap = [m > 0 for m in margins]
    per_cluster = []
    for m in range(L):
        left = open_gap[m - 1] if m > 0 else True
        right = open_gap[m] if m < L - 1 else True
        per_cluster.append(left and right)
    # f_bar ascending pairs with omega_bar descending through omega = 1/f
    return SupportReport(
        c=c,
        f_crit=f_bar,
        omega_bar=[1.0 / f for f in f_bar],
        gap_margins=margins,
        phi=phi,
        separable=all(open_gap),
        separable_clusters=per_cluster,
    )


def _xi_roots(spec: PopulationSpectrum, c: float) -> list[float]:
    """All real roots of ``xi``, ascending."""
    poles = sorted(spec.gammas)
    f = lambda w: xi(spec, c, w)
    roots = [_bisect(f, 0.0, _inner(0.0, poles[0])[1], "xi root below smallest pole")]
    for lo, hi in zip(poles, poles[1:]):
        a, b = _inner(lo, hi)
        wbar = _bisect(lambda w: xi_prime(spec, c, w), a, b, "xi' root")
        if f(wbar) > 0:
            roots.append(_bisect(f, a, wbar, "xi root"))
            roots.append(_bisect(f, wbar, b, "xi root"))
    top = poles[-1]
    hi = 2.0 * top
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("could not bracket the largest root of xi")
    roots.append(_bisect(f, top * (1 + _POLE_OFFSET), hi, "xi root above largest pole"))
    return roots


def support_clusters(spec: PopulationSpectrum, c: float) -> SupportReport:
    """Full :class:`SupportReport`: cluster edges on both sides plus diagnostics.

    The precision-side edges are ``Phi(omega^-), Phi(omega^+)`` where
    ``omega^-`` < ``omega^+`` are consecutive roots of ``xi``; the SCM edges
    follow by reciprocity.  When fewer than ``L`` clusters exist, each
    ``gamma_i`` is assigned to the root interval containing it and the
    affected clusters are flagged as merged.
    """
    report = separability(spec, c)
    roots = _xi_roots(spec, c)
    if len(roots) % 2:
        raise NumericalError(f"xi has an odd number of roots ({len(roots)})")
    pairs = [(roots[i], roots[i + 1]) for i in range(0, len(roots), 2)][::-1]
    gammas = spec.gammas
    members = []
    for lo, hi in pairs:
        members.append([i for i, g in enumerate(gammas) if lo < g < hi])
    if sorted(i for m in members for i in m) != list(range(spec.L)) or any(not m for m in members):
        raise NumericalError("precision eigenvalues do not interlace with the roots of xi")
    prec = []
    for lo, hi in pairs:
        a, b = phi_map(spec, c, np.array([lo, hi]))
        prec.append((float(a), float(b)))
    report.omega_crit = pairs
    report.clusters_prec = prec
    report.clusters_cov = [(1.0 / b, 1.0 / a) for a, b in prec]
    report.members = members
    return report

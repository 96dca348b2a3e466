"""Contour-integral oracle for the closed-form estimators.

The closed forms in :mod:`precision_spectrum.estimators` are residue sums of
contour integrals around clusters of SMI eigenvalues.  This module evaluates
those integrals numerically with Gauss-Legendre quadrature on rectangles
symmetric about the real axis, so the two routes can be compared.  It is
validation infrastructure; nothing in the estimation path imports it.

Notation used below, for a sample spectrum ``rho`` with ``c = N/K``::

    B(z)  = b_dual(1/z) = -(c/N) sum rho_i z / (rho_i - z) - (1 - c) z
    B'(z) = d/dz B(z)   = -(c/N) sum (rho_i / (rho_i - z))^2 - (1 - c)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContourError, PoleError, ShapeError
from .estimators import group_index
from .model import PopulationSpectrum, SampleSpectrum
from .stieltjes import solve_mp_path
from .support import SupportReport

__all__ = [
    "ContourSpec",
    "ghat",
    "ghat_residues",
    "ghat_residue_sum",
    "dual_at_inverse",
    "kappa",
    "level_set_winding",
    "cluster_bounds",
    "build_contour",
    "contour_pair",
    "contour_estimate",
    "contour_clt_covariance",
    "clt_covariance_parts",
    "theoretical_clt_covariance",
]

SINGLE_NODES = 512
DOUBLE_NODES = 128
INNER_SCALE = 0.5
OUTER_SCALE = 0.9
POLE_PROXIMITY = 1e-6


@lru_cache(maxsize=16)
def _legendre(n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class ContourSpec:
    """Positively oriented rectangle ``t1 <= Re z <= t2, |Im z| <= y``.

    ``grade_lo`` and ``grade_hi`` give the distance from the real crossings
    at ``t1`` and ``t2`` to the nearest singularity.  When it is much
    smaller than ``y`` the vertical edge is split into panels shrinking
    geometrically towards the real axis, each with ``nodes_per_edge // 4``
    points (at least 16).
    """

    t1: float
    t2: float
    y: float
    nodes_per_edge: int = SINGLE_NODES
    grade_lo: float = 0.0
    grade_hi: float = 0.0

    def __post_init__(self) -> None:
        if not self.t1 < self.t2:
            raise ContourError(f"need t1 < t2, got {self.t1} and {self.t2}")
        if not self.y > 0:
            raise ContourError(f"half-height must be positive, got {self.y}")
        if self.nodes_per_edge < 2:
            raise ContourError("need at least two nodes per edge")

    def corners(self) -> list[complex]:
        t1, t2, y = self.t1, self.t2, self.y
        return [complex(t1, -y), complex(t2, -y), complex(t2, y), complex(t1, y)]

    def _breaks(self, grade: float) -> NDArray[np.float64]:
        """Imaginary parts splitting a vertical edge, ascending from ``-y`` to ``y``."""
        if not 0.0 < grade < 0.25 * self.y:
            return np.array([-self.y, self.y])
        levels = int(np.ceil(np.log2(self.y / grade)))
        pos = self.y * 0.5 ** np.arange(levels + 1)
        return np.concatenate([-pos, pos[::-1]])

    def nodes(self) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
        """Quadrature points and complex weights ``dz``, counter-clockwise from ``t1 - iy``."""
        t1, t2, y = self.t1, self.t2, self.y
        right = self._breaks(self.grade_hi)
        left = self._breaks(self.grade_lo)[::-1]
        paths = [
            ([complex(t1, -y), complex(t2, -y)], self.nodes_per_edge),
            ([complex(t2, v) for v in right], self._panel_nodes(right)),
            ([complex(t2, y), complex(t1, y)], self.nodes_per_edge),
            ([complex(t1, v) for v in left], self._panel_nodes(left)),
        ]
        zs, dzs = [], []
        for pts, n in paths:
            x, w = _legendre(n)
            for a, b in zip(pts[:-1], pts[1:]):
                half = 0.5 * (b - a)
                zs.append(0.5 * (a + b) + half * x)
                dzs.append(half * w)
        return np.concatenate(zs), np.concatenate(dzs)

    def _panel_nodes(self, breaks: NDArray[np.float64]) -> int:
        return self.nodes_per_edge if breaks.size == 2 else max(16, self.nodes_per_edge // 4)

    def encloses(self, x: ArrayLike) -> NDArray[np.bool_]:
        x = np.asarray(x, dtype=float)
        return (x > self.t1) & (x < self.t2)

    def overlaps(self, other: "ContourSpec") -> bool:
        """True when the two rectangles' boundaries intersect."""
        a, b = self, other
        inside = lambda p, q: q.t1 < p.t1 and p.t2 < q.t2 and p.y < q.y
        disjoint = a.t2 < b.t1 or b.t2 < a.t1
        return not (disjoint or inside(a, b) or inside(b, a))


def ghat(sample: SampleSpectrum, z: ArrayLike) -> NDArray[np.complex128]:
    """Plug-in integrand ``-(1/N sum z/(rho_i - z)) (1 - c + (c/N) sum (rho_r/(rho_r - z))^2)``."""
    rho = np.asarray(sample.rho_hat, dtype=float)
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    d = rho[:, None] - zz[None, :]
    if np.min(np.abs(d)) < 1e-14 * max(1.0, float(rho.max())):
        raise PoleError("ghat evaluated at a sample eigenvalue")
    c = sample.c_K
    first = (zz[None, :] / d).mean(axis=0)
    r = rho[:, None] / d
    second = 1.0 - c + c * (r * r).mean(axis=0)
    out = -first * second
    return out[0] if np.ndim(z) == 0 else out


def ghat_residues(sample: SampleSpectrum, k: int) -> tuple[float, NDArray[np.float64]]:
    """Residues at ``rho_k`` of the per-eigenvalue terms ``g_i = -z S(z) / (rho_i - z)``.

    ``S(z) = 1 - c + (c/N) sum_r (rho_r / (rho_r - z))^2``.  Returns the
    third-order residue of ``g_k``,
    ``rho_k (1 - c + (c/N) sum_{r != k} (rho_r / (rho_r - rho_k))^2)``, and the
    second-order residues of ``g_i`` for ``i != k`` (in index order),
    ``-(c/N) rho_k^2 rho_i / (rho_k - rho_i)^2``.
    """
    rho = np.asarray(sample.rho_hat, dtype=float)
    N, c = rho.size, sample.c_K
    others = np.delete(rho, k)
    third = rho[k] * (1.0 - c + (c / N) * np.sum((others / (others - rho[k])) ** 2))
    second = -(c / N) * rho[k] ** 2 * others / (rho[k] - others) ** 2
    return float(third), second


def ghat_residue_sum(sample: SampleSpectrum, mults: Sequence[int], m: int) -> float:
    """``(1/N_m) sum_{k in m} sum_i Res(g_i, rho_k)``, the residue form of the estimate."""
    groups = group_index(mults, sample.N)
    total = 0.0
    for k in range(groups.starts[m], groups.starts[m] + groups.mults[m]):
        third, second = ghat_residues(sample, k)
        total += third + float(np.sum(second))
    return total / groups.mults[m]


def dual_at_inverse(sample: SampleSpectrum, z: ArrayLike) -> tuple[NDArray, NDArray]:
    """``B(z) = b_dual(1/z)`` of the sample and its derivative in ``z``."""
    rho = np.asarray(sample.rho_hat, dtype=float)
    zz = np.asarray(z, dtype=complex)
    c, N = sample.c_K, rho.size
    d = rho[:, None] - zz.ravel()[None, :]
    r = rho[:, None] / d
    B = -(c / N) * (r * zz.ravel()[None, :]).sum(axis=0) - (1.0 - c) * zz.ravel()
    dB = -(c / N) * (r * r).sum(axis=0) - (1.0 - c)
    return B.reshape(zz.shape), dB.reshape(zz.shape)


def kappa(b1, b2, db1, db2, z1, z2):
    """``b'(z1) b'(z2) / (b(z1) - b(z2))^2 - 1/(z1 - z2)^2`` (broadcasting)."""
    return db1 * db2 / (b1 - b2) ** 2 - 1.0 / (z1 - z2) ** 2


def cluster_bounds(
    sample: SampleSpectrum | None, mults: Sequence[int] | None, report: SupportReport | None
) -> list[tuple[float, float]]:
    """Precision-side intervals to be enclosed, ordered from the top cluster down.

    Limiting support edges when a report is given, otherwise the extreme SMI
    eigenvalues of each group.
    """
    if report is not None:
        return [(float(a), float(b)) for a, b in report.clusters_prec]
    if sample is None or mults is None:
        raise ShapeError("need either a support report or a sample with multiplicities")
    rho = np.asarray(sample.rho_hat, dtype=float)
    groups = group_index(mults, rho.size)
    out = []
    for m in range(len(groups.mults)):
        seg = rho[groups.members(m)]
        out.append((float(seg.min()), float(seg.max())))
    return out


def _rectangle(
    bounds: list[tuple[float, float]], m: int, scale_lo: float, scale_hi: float, nodes: int
) -> ContourSpec:
    lo, hi = bounds[m]
    width = hi - lo
    gap_below = lo - bounds[m + 1][1] if m + 1 < len(bounds) else None
    gap_above = bounds[m - 1][0] - hi if m > 0 else None
    if (gap_below is not None and gap_below <= 0) or (gap_above is not None and gap_above <= 0):
        raise ContourError(f"cluster {m} overlaps a neighbouring cluster")
    floor = 0.1 * width
    pad_lo = 0.5 * gap_below if gap_below is not None else max(0.5 * (gap_above or 0.0), floor)
    pad_hi = 0.5 * gap_above if gap_above is not None else max(0.5 * (gap_below or 0.0), floor)
    if gap_below is None:
        pad_lo = min(pad_lo, 0.5 * lo)
    if pad_lo <= 0 or pad_hi <= 0:
        pad_lo = pad_hi = max(floor, 1e-3 * max(abs(hi), 1.0))
    t1 = lo - scale_lo * pad_lo
    t2 = hi + scale_hi * pad_hi
    below = lo - t1 if gap_below is None else min(lo - t1, t1 - bounds[m + 1][1])
    above = t2 - hi if gap_above is None else min(t2 - hi, bounds[m - 1][0] - t2)
    if gap_below is None:
        below = min(below, t1)
    return ContourSpec(t1, t2, 0.5 * (t2 - t1), nodes, below, above)


def _check_enclosure(contour: ContourSpec, sample: SampleSpectrum, expected: slice) -> None:
    rho = np.asarray(sample.rho_hat, dtype=float)
    inside = np.flatnonzero(contour.encloses(rho))
    want = np.arange(rho.size)[expected]
    if inside.size != want.size or np.any(inside != want):
        raise ContourError(
            f"contour [{contour.t1:.6g}, {contour.t2:.6g}] encloses {inside.size} sample "
            f"eigenvalues, expected indices {want[0]}..{want[-1]} ({want.size})"
        )
    span = contour.t2 - contour.t1
    if np.min(np.abs(rho[:, None] - np.array([contour.t1, contour.t2])[None, :])) < POLE_PROXIMITY * span:
        raise PoleError("a sample eigenvalue lies on the contour")


def build_contour(
    report: SupportReport | None,
    sample: SampleSpectrum,
    mults: Sequence[int],
    m: int,
    *,
    scale: float = 1.0,
    nodes_per_edge: int = SINGLE_NODES,
) -> ContourSpec:
    """Rectangle around cluster ``m`` that encloses exactly group ``m`` of ``rho_hat``.

    Vertical edges sit at the midpoints of the gaps to the neighbouring
    clusters (``scale`` < 1 pulls them towards the cluster); an outermost edge
    is padded by half the adjacent gap, at least 10% of the cluster width.
    The half-height is ``(t2 - t1)/2``.
    """
    if report is not None and report.Q != len(mults):
        raise ContourError(f"support has {report.Q} clusters for {len(mults)} eigenvalue groups")
    bounds = cluster_bounds(sample, mults, report)
    contour = _rectangle(bounds, m, scale, scale, nodes_per_edge)
    _check_enclosure(contour, sample, group_index(mults, sample.N).members(m))
    return contour


def level_set_winding(
    sample: SampleSpectrum, first: ContourSpec, second: ContourSpec
) -> NDArray[np.float64]:
    """Winding number of ``B(first)`` around ``B(z2)`` for every node ``z2`` of ``second``.

    This equals the number of solutions of ``B(z1) = B(z2)`` inside ``first``
    minus the number of sample eigenvalues it encloses.  The first piece of
    the double integral vanishes exactly when it is constant along
    ``second``; a non-integer value flags a near-singular node pair.
    """
    z1, w1 = first.nodes()
    z2, _ = second.nodes()
    B1, D1 = dual_at_inverse(sample, z1)
    B2, _ = dual_at_inverse(sample, z2)
    wind = ((w1 * D1) @ (1.0 / (B1[:, None] - B2[None, :]))) / (2j * np.pi)
    return wind.real if np.max(np.abs(wind.imag)) < 0.5 else np.full(z2.size, np.nan)


def _constant_winding(sample: SampleSpectrum, first: ContourSpec, second: ContourSpec) -> bool:
    wind = level_set_winding(sample, first, second)
    if not np.all(np.isfinite(wind)):
        return False
    nearest = np.round(wind)
    return bool(np.max(np.abs(wind - nearest)) < 1e-6 and np.ptp(nearest) == 0)


def _with_height(c: ContourSpec, factor: float, nodes: int) -> ContourSpec:
    return replace(c, y=factor * 0.5 * (c.t2 - c.t1), nodes_per_edge=nodes)


def _resolved(sample, mults, m, n, first: ContourSpec, second: ContourSpec) -> bool:
    """Both pieces agree with a 1.5x denser rule to 1e-10 of the larger one."""
    coarse = clt_covariance_parts(sample, mults, m, n, (first, second))
    dense_n = (3 * first.nodes_per_edge) // 2
    fine = clt_covariance_parts(
        sample, mults, m, n, (replace(first, nodes_per_edge=dense_n), replace(second, nodes_per_edge=dense_n))
    )
    scale = max(abs(coarse[1]), np.finfo(float).tiny)
    return all(abs(a - b) <= 1e-10 * scale for a, b in zip(coarse, fine))


def _pair_candidates(m: int, n: int):
    inner_scales = (INNER_SCALE, 0.25, 0.75, 0.1)
    outer_scales = (OUTER_SCALE, 0.6, 0.97, 0.3)
    heights = ((1.0, 1.0), (0.5, 1.0), (1.0, 2.0), (0.25, 0.5), (2.0, 4.0))
    for h_in, h_out in heights:
        for a_lo, a_hi in itertools.product(inner_scales, repeat=2):
            for b_lo, b_hi in itertools.product(outer_scales, repeat=2):
                if m == n and (b_lo <= a_lo or b_hi <= a_hi or h_out <= h_in):
                    continue
                yield (a_lo, a_hi, h_in), (b_lo, b_hi, h_out)


def contour_pair(
    report: SupportReport | None,
    sample: SampleSpectrum,
    mults: Sequence[int],
    m: int,
    n: int,
    nodes_per_edge: int = DOUBLE_NODES,
    max_candidates: int = 2000,
) -> tuple[ContourSpec, ContourSpec]:
    """Non-intersecting contours around clusters ``m`` and ``n`` for the double integral.

    The second-order integrand is analytic away from the sample eigenvalues
    except for poles on the level set ``B(z1) = B(z2)``.  These are harmless
    only if the number of them inside the first contour stays fixed along
    the second, which :func:`level_set_winding` checks.  Edge offsets and
    heights are searched, starting from the default inner/outer placement,
    until that holds and the quadrature is resolved.
    """
    if report is not None and report.Q != len(mults):
        raise ContourError(f"support has {report.Q} clusters for {len(mults)} eigenvalue groups")
    bounds = cluster_bounds(sample, mults, report)
    groups = group_index(mults, sample.N)
    tried = 0
    for (a_lo, a_hi, h_in), (b_lo, b_hi, h_out) in _pair_candidates(m, n):
        if tried >= max_candidates:
            break
        first = _with_height(_rectangle(bounds, m, a_lo, a_hi, nodes_per_edge), h_in, nodes_per_edge)
        second = _with_height(_rectangle(bounds, n, b_lo, b_hi, nodes_per_edge), h_out, nodes_per_edge)
        if first.overlaps(second) or (m != n and _nested(first, second)):
            continue
        try:
            _check_enclosure(first, sample, groups.members(m))
            _check_enclosure(second, sample, groups.members(n))
        except (ContourError, PoleError):
            continue
        tried += 1
        if _constant_winding(sample, first, second) and _resolved(sample, mults, m, n, first, second):
            return first, second
    raise ContourError(
        f"no contour pair for clusters ({m}, {n}) avoids the level-set poles ({tried} tried)"
    )


def _nested(a: ContourSpec, b: ContourSpec) -> bool:
    return (a.t1 < b.t1 and b.t2 < a.t2) or (b.t1 < a.t1 and a.t2 < b.t2)


def contour_estimate(
    sample: SampleSpectrum, mults: Sequence[int], m: int, contour: ContourSpec
) -> float:
    """``N/(N_m 2 pi i) * integral of ghat`` around ``contour``."""
    groups = group_index(mults, sample.N)
    _check_enclosure(contour, sample, groups.members(m))
    z, dz = contour.nodes()
    val = np.sum(ghat(sample, z) * dz) * sample.N / (groups.mults[m] * 2j * np.pi)
    if abs(val.imag) > 1e-8 * (1.0 + abs(val.real)):
        raise ContourError(f"quadrature left an imaginary part {val.imag:.3e}; increase nodes")
    return float(val.real)


def clt_covariance_parts(
    sample: SampleSpectrum,
    mults: Sequence[int],
    m: int,
    n: int,
    contours: tuple[ContourSpec, ContourSpec],
) -> tuple[complex, complex]:
    """The two pieces ``(I1, I2)`` of the double-contour covariance estimate.

    ``I1`` integrates ``B1 B2 B1' B2' / (B1 - B2)^2`` and ``I2`` integrates
    ``-B1 B2 / (z1 - z2)^2``, both scaled by ``-K^2 / (4 pi^2 N_m N_n)``.
    """
    first, second = contours
    if first.overlaps(second):
        raise ContourError("the two contours intersect")
    groups = group_index(mults, sample.N)
    _check_enclosure(first, sample, groups.members(m))
    _check_enclosure(second, sample, groups.members(n))
    z1, w1 = first.nodes()
    z2, w2 = second.nodes()
    B1, D1 = dual_at_inverse(sample, z1)
    B2, D2 = dual_at_inverse(sample, z2)
    prod = np.outer(B1, B2)
    part1 = prod * np.outer(D1, D2) / (B1[:, None] - B2[None, :]) ** 2
    part2 = -prod / (z1[:, None] - z2[None, :]) ** 2
    beta = -(sample.K**2) / (4.0 * np.pi**2 * groups.mults[m] * groups.mults[n])
    I1 = beta * (w1 @ part1 @ w2)
    I2 = beta * (w1 @ part2 @ w2)
    return complex(I1), complex(I2)


def contour_clt_covariance(
    sample: SampleSpectrum,
    mults: Sequence[int],
    m: int,
    n: int,
    contours: tuple[ContourSpec, ContourSpec] | None = None,
) -> float:
    """Entry ``(m, n)`` of the covariance estimate by double quadrature."""
    if contours is None:
        contours = contour_pair(None, sample, mults, m, n)
    I1, I2 = clt_covariance_parts(sample, mults, m, n, contours)
    val = I1 + I2
    if abs(val.imag) > 1e-8 * (1.0 + abs(val.real)):
        raise ContourError(f"quadrature left an imaginary part {val.imag:.3e}; increase nodes")
    return float(val.real)


def _limiting_dual_on(spec: PopulationSpectrum, c: float, contour: ContourSpec):
    """Limiting ``B(1/z)`` and ``B'(1/z)`` (derivative in the argument) on the contour nodes."""
    z, dz = contour.nodes()
    b, db = solve_mp_path(spec, c, 1.0 / z)
    w = 1.0 / z
    return z, dz, c * b - (1.0 - c) / w, c * db + (1.0 - c) / w**2


def theoretical_clt_covariance(
    spec: PopulationSpectrum,
    c: float,
    report: SupportReport,
    *,
    nodes_per_edge: int = DOUBLE_NODES,
    contours: dict[tuple[int, int], tuple[ContourSpec, ContourSpec]] | None = None,
) -> NDArray[np.float64]:
    """Limiting covariance of ``K (gamma_breve - gamma)`` by double quadrature.

    Uses the limiting dual transform from the fixed-point solver (with its
    implicit derivative) inside the kernel ``kappa``; the contours around two
    clusters never touch, so ``kappa``'s removable singularity is not hit.
    """
    if not report.separable or report.Q != spec.L:
        raise ContourError("limiting covariance needs a separable spectrum")
    L = spec.L
    bounds = cluster_bounds(None, None, report)
    cm = c * spec.weights
    cache: dict[tuple[int, float], tuple] = {}

    def on(k: int, contour: ContourSpec):
        key = (k, contour.t1, contour.t2, contour.y, contour.nodes_per_edge)
        if key not in cache:
            cache[key] = _limiting_dual_on(spec, c, contour)
        return cache[key]

    theta = np.zeros((L, L))
    for m in range(L):
        for n in range(m, L):
            if contours and (m, n) in contours:
                g1, g2 = contours[(m, n)]
            else:
                g1 = _rectangle(bounds, m, INNER_SCALE, INNER_SCALE, nodes_per_edge)
                g2 = _rectangle(bounds, n, OUTER_SCALE, OUTER_SCALE, nodes_per_edge)
            if g1.overlaps(g2):
                raise ContourError("the two contours intersect")
            z1, w1, B1, D1 = on(m, g1)
            z2, w2, B2, D2 = on(n, g2)
            u1, u2 = 1.0 / z1, 1.0 / z2
            k = kappa(B1[:, None], B2[None, :], D1[:, None], D2[None, :], u1[:, None], u2[None, :])
            integrand = np.outer(B1 / z1**2, B2 / z2**2) * k
            val = -(w1 @ integrand @ w2) / (4.0 * np.pi**2 * cm[m] * cm[n])
            theta[m, n] = theta[n, m] = val.real
    return theta

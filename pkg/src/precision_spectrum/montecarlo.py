"""Monte Carlo experiments: bias/MSE sweeps, trace functional, CLT and timing.

Every trial draws its own generator from ``trial_seed(base_seed, N, index)``
(two rounds of the SplitMix64 finaliser), so any trial can be replayed alone
and results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .errors import DegenerateSpectrumError, ExcessiveExclusionsError, InvalidSpectrumError
from .estimators import estimate_clt_covariance, estimate_precision_eigs, estimate_trace_functional, ml_estimate
from .model import (
    FieldKind,
    PopulationSpectrum,
    SampleSpectrum,
    hermitian_eigenvalues,
    population_from_fractions,
    sample_covariance,
    sample_observations,
    smi_spectrum,
)

__all__ = [
    "ESTIMATORS",
    "ExperimentConfig",
    "TrialRecord",
    "BiasMseRow",
    "G1Row",
    "TimingRow",
    "CltSummary",
    "CltStudy",
    "BiasOrderRow",
    "SeparationResult",
    "mix_seed",
    "trial_seed",
    "load_config",
    "run_trial",
    "run_trials",
    "run_bias_mse",
    "run_g1_comparison",
    "run_clt_study",
    "run_timing",
    "run_bias_order",
    "separating_points",
    "count_exact_separation",
    "write_csv",
]

MAX_EXCLUDED_SHARE = 0.01
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

ESTIMATORS: dict[str, Callable[[SampleSpectrum, Sequence[int]], NDArray[np.float64]]] = {
    "proposed": estimate_precision_eigs,
    "ml": ml_estimate,
}


def mix_seed(base: int, index: int) -> int:
    """SplitMix64 output for state ``base + (index + 1) * golden`` (mod 2^64)."""
    z = (int(base) + (int(index) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trial_seed(base: int, N: int, index: int) -> int:
    return mix_seed(mix_seed(base, N), index)


def _fraction(x) -> Fraction:
    return Fraction(x) if not isinstance(x, float) else Fraction(x).limit_denominator(10_000)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: population shape, aspect ratio, sizes and trial budget.

    ``fractions`` are the multiplicity shares ``N_i / N``; every ``N`` in
    ``N_grid`` must turn them and ``ratio = N/K`` into integers.
    """

    lambdas: tuple[float, ...]
    fractions: tuple[Fraction, ...]
    ratio: Fraction
    N_grid: tuple[int, ...]
    trials: int = 1000
    estimators: tuple[str, ...] = ("proposed", "ml")
    base_seed: int = 0
    field_kind: FieldKind = "complex"
    outputs: tuple[str, ...] = ("bias", "mse")

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidSpectrumError(f"need at least one trial, got {self.trials}")
        if not 0 < self.ratio < 1:
            raise InvalidSpectrumError(f"N/K must lie in (0, 1), got {self.ratio}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise InvalidSpectrumError(f"unknown estimators {sorted(unknown)}")
        if self.field_kind not in ("complex", "real"):
            raise InvalidSpectrumError(f"unknown field kind {self.field_kind!r}")
        if not self.N_grid:
            raise InvalidSpectrumError("N grid is empty")
        for N in self.N_grid:
            self.population(N)
            self.K(N)

    def population(self, N: int) -> PopulationSpectrum:
        return population_from_fractions(self.lambdas, self.fractions, N)

    def K(self, N: int) -> int:
        k = Fraction(N) / self.ratio
        if k.denominator != 1:
            raise InvalidSpectrumError(f"N={N} with N/K={self.ratio} gives a non-integer K")
        return int(k)

    @property
    def gammas(self) -> NDArray[np.float64]:
        return 1.0 / np.asarray(self.lambdas, dtype=float)

    @property
    def g1(self) -> float:
        """``(1/N) sum N_i gamma_i`` of the population."""
        return float(sum(f * (1 / Fraction(lam)) for f, lam in zip(self.fractions, map(_fraction, self.lambdas))))

    def with_(self, **changes) -> "ExperimentConfig":
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc.update(changes)
        return ExperimentConfig(**doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            grid = doc.get("N_grid", doc.get("N"))
            if isinstance(grid, int):
                grid = [grid]
            return cls(
                lambdas=tuple(float(v) for v in doc["lambdas"]),
                fractions=tuple(_fraction(f) for f in doc["fractions"]),
                ratio=_fraction(doc["ratio"]),
                N_grid=tuple(int(n) for n in grid),
                trials=int(doc.get("trials", 1000)),
                estimators=tuple(doc.get("estimators", ("proposed", "ml"))),
                base_seed=int(doc.get("base_seed", doc.get("seed", 0))),
                field_kind=doc.get("field", doc.get("field_kind", "complex")),
                outputs=tuple(doc.get("outputs", ("bias", "mse"))),
            )
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, InvalidSpectrumError):
                raise
            raise InvalidSpectrumError(f"malformed experiment config: {exc!r}") from exc

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "fractions": [str(f) for f in self.fractions],
            "ratio": str(self.ratio),
            "N_grid": list(self.N_grid),
            "trials": self.trials,
            "estimators": list(self.estimators),
            "base_seed": self.base_seed,
            "field": self.field_kind,
            "outputs": list(self.outputs),
        }


def load_config(source: str | Path | dict) -> ExperimentConfig:
    """Config from a dict, a JSON file path or JSON text."""
    if isinstance(source, dict):
        return ExperimentConfig.from_dict(source)
    path = Path(str(source))
    text = path.read_text(encoding="utf-8") if path.exists() else str(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpectrumError(f"experiment config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidSpectrumError("experiment config must be a JSON object")
    return ExperimentConfig.from_dict(doc)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    seed: int
    N: int
    K: int
    estimates: dict[str, NDArray[np.float64]]
    theta_hat: NDArray[np.float64] | None = None
    durations: dict[str, float] = field(default_factory=dict)
    sample: SampleSpectrum | None = None


def run_trial(
    config: ExperimentConfig,
    N: int,
    index: int,
    *,
    with_theta: bool = False,
    keep_sample: bool = False,
) -> TrialRecord:
    """One realization: draw data, invert the SCM spectrum, run each estimator."""
    spec = config.population(N)
    K = config.K(N)
    seed = trial_seed(config.base_seed, N, index)
    t0 = time.perf_counter()
    Y = sample_observations(spec, K, seed, config.field_kind)
    sample = smi_spectrum(hermitian_eigenvalues(sample_covariance(Y), check=False), K)
    durations = {"sampling": time.perf_counter() - t0}
    estimates = {}
    for name in config.estimators:
        t = time.perf_counter()
        estimates[name] = ESTIMATORS[name](sample, spec.mults)
        durations[name] = time.perf_counter() - t
    theta = None
    if with_theta:
        t = time.perf_counter()
        theta = estimate_clt_covariance(sample, spec.mults)
        durations["theta"] = time.perf_counter() - t
    return TrialRecord(index, seed, N, K, estimates, theta, durations, sample if keep_sample else None)


def run_trials(
    config: ExperimentConfig, N: int, *, with_theta: bool = False, trials: int | None = None
) -> tuple[list[TrialRecord], int]:
    """All trials at size ``N`` in index order, plus the number excluded for ties."""
    n_trials = config.trials if trials is None else trials
    records, excluded = [], 0
    for index in range(n_trials):
        try:
            records.append(run_trial(config, N, index, with_theta=with_theta))
        except DegenerateSpectrumError:
            excluded += 1
    if excluded > MAX_EXCLUDED_SHARE * n_trials:
        raise ExcessiveExclusionsError(
            f"{excluded} of {n_trials} trials at N={N} had tied eigenvalues (limit 1%)"
        )
    return records, excluded


@dataclass(frozen=True)
class BiasMseRow:
    N: int
    K: int
    estimator: str
    bias: float
    mse: float
    excluded_trials: int


@dataclass(frozen=True)
class G1Row:
    N: int
    K: int
    estimator: str
    mse: float
    excluded_trials: int


def _stack(records: list[TrialRecord], name: str) -> NDArray[np.float64]:
    return np.array([r.estimates[name] for r in records])


def run_bias_mse(config: ExperimentConfig) -> list[BiasMseRow]:
    """Bias ``sum_i |mean_k est_i - gamma_i|`` and MSE ``sum_i mean_k (est_i - gamma_i)^2``."""
    truth = config.gammas
    rows = []
    for N in config.N_grid:
        records, excluded = run_trials(config, N)
        for name in config.estimators:
            est = _stack(records, name)
            bias = float(np.sum(np.abs(est.mean(axis=0) - truth)))
            mse = float(np.sum(np.mean((est - truth) ** 2, axis=0)))
            rows.append(BiasMseRow(N, config.K(N), name, bias, mse, excluded))
    return rows


def run_g1_comparison(config: ExperimentConfig) -> list[G1Row]:
    """MSE of the normalised precision trace ``(1/N) sum N_i gamma_i`` per estimator."""
    g1 = config.g1
    rows = []
    for N in config.N_grid:
        mults = config.population(N).mults
        records, excluded = run_trials(config, N)
        for name in config.estimators:
            vals = np.array([estimate_trace_functional(r.estimates[name], mults) for r in records])
            rows.append(G1Row(N, config.K(N), name, float(np.mean((vals - g1) ** 2)), excluded))
    return rows


@dataclass(frozen=True)
class CltSummary:
    m: int
    mean: float
    variance: float
    ks_statistic: float
    ks_pvalue: float


@dataclass(frozen=True)
class CltStudy:
    """Standardised deviations ``K (gamma_breve - gamma) / sqrt(theta_hat_mm)``, one row per trial."""

    N: int
    K: int
    trial_index: NDArray[np.intp]
    samples: NDArray[np.float64]
    summary: list[CltSummary]
    excluded_trials: int

    @property
    def sufficient(self) -> bool:
        return self.samples.shape[0] >= 2

    def rows(self) -> list[tuple[int, int, float]]:
        L = self.samples.shape[1]
        return [(int(t), m + 1, float(self.samples[i, m])) for i, t in enumerate(self.trial_index) for m in range(L)]

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "K": self.K,
            "trials": int(self.samples.shape[0]),
            "excluded_trials": self.excluded_trials,
            "sufficient": self.sufficient,
            "summary": [asdict(s) for s in self.summary],
        }


def run_clt_study(config: ExperimentConfig, N: int | None = None) -> CltStudy:
    """Standardised estimation errors and their normality diagnostics.

    With fewer than two trials the summary is left empty (no test is run).
    """
    N = config.N_grid[0] if N is None else N
    K = config.K(N)
    truth = config.gammas
    records, excluded = run_trials(config.with_(estimators=("proposed",)), N, with_theta=True)
    est = _stack(records, "proposed")
    sd = np.sqrt(np.array([np.diag(r.theta_hat) for r in records]))
    samples = K * (est - truth) / sd
    index = np.array([r.index for r in records], dtype=np.intp)
    summary = []
    if samples.shape[0] >= 2:
        for m in range(samples.shape[1]):
            col = samples[:, m]
            ks = stats.kstest(col, "norm")
            summary.append(CltSummary(m + 1, float(col.mean()), float(col.var(ddof=1)), float(ks.statistic), float(ks.pvalue)))
    return CltStudy(N, K, index, samples, summary, excluded)


@dataclass(frozen=True)
class TimingRow:
    N: int
    K: int
    estimator: str
    median_seconds: float
    end_to_end_seconds: float


def run_timing(config: ExperimentConfig, repeats: int | None = None) -> list[TimingRow]:
    """Median wall-clock per realization: estimator arithmetic alone and end to end.

    End-to-end time covers sampling, the eigendecomposition and the estimator.
    """
    reps = max(10, config.trials if repeats is None else repeats)
    rows = []
    for N in config.N_grid:
        records = [run_trial(config, N, i) for i in range(reps)]
        for name in config.estimators:
            arith = np.median([r.durations[name] for r in records])
            total = np.median([r.durations["sampling"] + r.durations[name] for r in records])
            rows.append(TimingRow(N, config.K(N), name, float(arith), float(total)))
    return rows


@dataclass(frozen=True)
class BiasOrderRow:
    """Signed mean error per eigenvalue with its Monte Carlo standard error."""

    N: int
    K: int
    m: int
    mean_bias: float
    std_error: float
    excluded_trials: int


def run_bias_order(config: ExperimentConfig) -> list[BiasOrderRow]:
    """Mean of ``gamma_breve_m - gamma_m`` and its standard error at each ``N``."""
    truth = config.gammas
    rows = []
    for N in config.N_grid:
        records, excluded = run_trials(config.with_(estimators=("proposed",)), N)
        err = _stack(records, "proposed") - truth
        se = err.std(axis=0, ddof=1) / np.sqrt(err.shape[0]) if err.shape[0] > 1 else np.full(err.shape[1], np.nan)
        for m in range(err.shape[1]):
            rows.append(BiasOrderRow(N, config.K(N), m + 1, float(err[:, m].mean()), float(se[m]), excluded))
    return rows


def separating_points(clusters_prec: Sequence[tuple[float, float]]) -> NDArray[np.float64]:
    """Midpoints of the gaps between consecutive precision clusters, descending."""
    return np.array([0.5 * (clusters_prec[k][0] + clusters_prec[k + 1][1]) for k in range(len(clusters_prec) - 1)])


@dataclass(frozen=True)
class SeparationResult:
    N: int
    trials: int
    exact: int

    @property
    def share(self) -> float:
        return self.exact / self.trials


def count_exact_separation(
    config: ExperimentConfig, N: int, clusters_prec: Sequence[tuple[float, float]]
) -> SeparationResult:
    """How many trials put exactly ``N_m`` SMI eigenvalues in each precision cluster.

    A cluster's region runs between the gap midpoints on either side of it,
    so sample eigenvalues that fluctuate slightly past a limiting edge but
    stay on their side of the gap are still counted with their cluster.
    """
    spec = config.population(N)
    cuts = separating_points(clusters_prec)
    want = np.asarray(spec.mults)
    exact = 0
    for index in range(config.trials):
        rho = run_trial(config.with_(estimators=()), N, index, keep_sample=True).sample.rho_hat
        # rho descending; count per region from the top
        below = np.searchsorted(-rho, -cuts, side="left")
        counts = np.diff(np.concatenate([[0], below, [rho.size]]))
        exact += int(np.array_equal(counts, want))
    return SeparationResult(N, config.trials, exact)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(rows: Iterable, out: TextIO | str | Path | None = None, header: Sequence[str] | None = None) -> str:
    """Write dataclass rows (or plain tuples with ``header``) as CSV; returns the text."""
    rows = list(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header is None:
        if not rows:
            raise ValueError("need a header for an empty table")
        header = [f.name for f in fields(rows[0])]
    writer.writerow(header)
    for row in rows:
        values = [getattr(row, h) for h in header] if hasattr(row, "__dataclass_fields__") else list(row)
        writer.writerow([_fmt(v) for v in values])
    text = buf.getvalue()
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    elif out is not None:
        out.write(text)
    return text

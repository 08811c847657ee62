"""Repeated-trial benchmarks: MSE, statistical efficiency and overall efficiency.

For a method ``M`` and each integrand::

    SE(M) = MSE[MC] / MSE[M]
    OE(M) = SE(M) * runtime(MC) / (runtime(M) + runtime(MC))

``runtime(MC)`` is the sampling time shared by every method and
``runtime(M)`` is the method's postprocessing time only.  Scalar summaries
are arithmetic means over integrands.
"""

from __future__ import annotations

import logging
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import basis_size, enumerate_basis
from .errors import IdentifiabilityError, SteinCVError
from .specs import Method, evaluate_integrands, integrand_names, parse_integrands, parse_method, parse_target
from .stein import build_design_matrix
from .targets import TargetModel, mala_sample, sample_iid
from .zvcv import fit_zvcv

logger = logging.getLogger(__name__)

# an MSE below (ZERO_MSE_RTOL * max(1, |truth|))**2 counts as exactly zero
ZERO_MSE_RTOL = 1e-9
GOLDEN_ORDER = 3
GOLDEN_SIZE = 100_000


def estimate_mse(estimates, truth) -> np.ndarray:
    """Mean over repetitions of the squared error, per integrand."""
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if est.shape[0] == 0:
        raise ValueError("no repetitions to average")
    if est.shape[0] < 2:
        raise ValueError("MSE estimation needs at least 2 repetitions")
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if not np.all(np.isfinite(truth)):
        raise ValueError("truth must be finite")
    return np.mean((est - truth) ** 2, axis=0)


@dataclass(frozen=True)
class Efficiency:
    per_integrand: np.ndarray
    mean: float
    infinite: np.ndarray


def statistical_efficiency(mse_mc, mse_method, zero_tol=None) -> Efficiency:
    """``MSE[MC] / MSE[method]`` per integrand and averaged.

    Entries with zero method MSE (or below ``zero_tol``) become ``inf`` and
    are flagged in ``infinite``.
    """
    mse_mc = np.atleast_1d(np.asarray(mse_mc, dtype=float))
    mse_method = np.atleast_1d(np.asarray(mse_method, dtype=float))
    if np.any(mse_mc < 0) or np.any(mse_method < 0):
        raise ValueError("MSE values must be non-negative")
    zero = mse_method <= (0.0 if zero_tol is None else np.asarray(zero_tol, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(zero, np.inf, mse_mc / np.where(zero, 1.0, mse_method))
    return Efficiency(se, float(np.mean(se)), zero)


def overall_efficiency(se, runtime_mc: float, runtime_method: float):
    """SE discounted by the method's share of total runtime."""
    if runtime_mc < 0 or runtime_method < 0:
        raise ValueError("runtimes must be non-negative")
    if runtime_mc == 0 and runtime_method == 0:
        raise ValueError("overall efficiency is undefined when both runtimes are zero")
    return se * (runtime_mc / (runtime_method + runtime_mc))


def _integrand_exponents(integrands, d):
    if isinstance(integrands, str):
        return parse_integrands(integrands, d)
    return [tuple(int(a) for a in e) for e in integrands]


def _draw(target, S, seed, sampler, warmup):
    if sampler == "iid":
        return sample_iid(target, S, seed)
    if sampler == "mala":
        return mala_sample(target, S, warmup=warmup, seed=seed).samples
    raise ValueError(f"unknown sampler {sampler!r}")


def golden_estimate(
    target: TargetModel,
    integrands="theta",
    S_large: int = GOLDEN_SIZE,
    seed=0,
    sampler: str = "mala",
    warmup: int = 1000,
    return_se: bool = False,
):
    """Reference values from a two-chain ZV3 fit.

    Coefficients come from one chain and the estimate ``mean(f - Z beta)``
    from a second, independently seeded chain of the same length.  With
    ``return_se`` the i.i.d. standard error of that mean is returned too.
    """
    exps = _integrand_exponents(integrands, target.dim)
    J = basis_size(target.dim, GOLDEN_ORDER)
    if not J < S_large:
        raise IdentifiabilityError(f"golden ZV3 needs more than {J} samples, got {S_large}")
    fit_seed, eval_seed = np.random.SeedSequence(seed).spawn(2)
    train = _draw(target, S_large, np.random.default_rng(fit_seed), sampler, warmup)
    test = _draw(target, S_large, np.random.default_rng(eval_seed), sampler, warmup)
    est = fit_zvcv(train, evaluate_integrands(train.thetas, exps), GOLDEN_ORDER)
    Z = build_design_matrix(test, enumerate_basis(target.dim, GOLDEN_ORDER))
    resid = evaluate_integrands(test.thetas, exps) - Z.values @ est.fit.coefficients
    values = resid.mean(axis=0)
    if return_se:
        return values, resid.std(axis=0, ddof=1) / math.sqrt(S_large)
    return values


@dataclass(frozen=True)
class TrialRecord:
    """One method applied to one chain."""

    target: str
    S: int
    method: str
    rep: int
    estimates: np.ndarray | None
    sampling_time: float
    post_time: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class CellSummary:
    """Aggregated efficiency of one method for one (target, S) cell."""

    target: str
    S: int
    method: str
    mse: np.ndarray
    se: np.ndarray
    se_mean: float
    oe: np.ndarray
    oe_mean: float
    se_infinite: np.ndarray
    n_ok: int
    n_failed: int
    failures: tuple[str, ...]
    sampling_time: float
    post_time: float


@dataclass
class EfficiencyReport:
    cells: list[CellSummary]
    records: list[TrialRecord]
    truth: dict[str, np.ndarray]
    truth_source: dict[str, str]
    integrands: list[str]
    config: dict = field(default_factory=dict)

    def cell(self, target: str, S: int, method: str) -> CellSummary:
        for c in self.cells:
            if c.target == target and c.S == S and c.method == method:
                return c
        raise KeyError((target, S, method))


def _label(target, i):
    return target.name if isinstance(target, TargetModel) else str(target)


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode())


def _run_rep(target, label, S, rep, methods, exps, seed, sampler, warmup, threads):
    base = [int(seed), _stable_hash(label), int(S), int(rep)]
    chain_rng = np.random.default_rng(np.random.SeedSequence(base + [0]))
    start = time.perf_counter()
    samples = _draw(target, S, chain_rng, sampler, warmup)
    F = evaluate_integrands(samples.thetas, exps)
    sampling_time = time.perf_counter() - start
    records = []
    for m in methods:
        method_seed = int(np.random.SeedSequence(base + [_stable_hash(m.label)]).generate_state(1)[0])
        try:
            est, post = m.run(samples, F, seed=method_seed, threads=threads)
            records.append(TrialRecord(label, S, m.label, rep, est.values, sampling_time, post))
        except (SteinCVError, np.linalg.LinAlgError, RuntimeError) as exc:
            records.append(TrialRecord(label, S, m.label, rep, None, sampling_time, 0.0, f"{type(exc).__name__}: {exc}"))
    return records


def _summarise(label, S, method, recs, mc_recs, truth):
    ok = [r for r in recs if r.ok]
    failures = tuple(r.error for r in recs if not r.ok)
    T = truth.size
    nan = np.full(T, np.nan)
    mc_ok = [r for r in mc_recs if r.ok]
    if len(ok) < 2 or len(mc_ok) < 2:
        return CellSummary(label, S, method, nan, nan, math.nan, nan, math.nan, np.zeros(T, bool), len(ok), len(failures), failures, math.nan, math.nan)
    mse = estimate_mse(np.stack([r.estimates for r in ok]), truth)
    mse_mc = estimate_mse(np.stack([r.estimates for r in mc_ok]), truth)
    zero_tol = (ZERO_MSE_RTOL * np.maximum(1.0, np.abs(truth))) ** 2
    eff = statistical_efficiency(mse_mc, mse, zero_tol=zero_tol)
    t_mc = float(np.mean([r.sampling_time for r in mc_ok]))
    t_post = float(np.mean([r.post_time for r in ok]))
    oe = overall_efficiency(eff.per_integrand, t_mc, t_post) if (t_mc > 0 or t_post > 0) else eff.per_integrand
    return CellSummary(label, S, method, mse, eff.per_integrand, eff.mean, oe, float(np.mean(oe)), eff.infinite, len(ok), len(failures), failures, t_mc, t_post)


def run_benchmark(
    targets,
    methods,
    sample_sizes,
    reps: int,
    seed=0,
    integrands="theta",
    sampler: str = "mala",
    warmup: int = 1000,
    threads: int = 1,
    golden_size: int = GOLDEN_SIZE,
    truth=None,
) -> EfficiencyReport:
    """Repeat every method on fresh seeded chains and aggregate SE / OE.

    ``targets`` are TargetModels or target spec strings and ``methods`` are
    Method objects or method spec strings.  Vanilla MC is always run as the
    baseline.  Truth is the analytic moment when the target knows it,
    otherwise a golden ZV3 estimate of size ``golden_size``.  Each rep's
    seed depends only on ``(seed, target, S, rep)``, so adding reps leaves
    earlier ones unchanged, and the numbers do not depend on ``threads``.
    """
    if reps < 2:
        raise ValueError("a benchmark needs at least 2 repetitions")
    targets = [parse_target(t) if isinstance(t, str) else t for t in targets]
    methods = [parse_method(m) if isinstance(m, str) else m for m in methods]
    if not any(m.name == "mc" for m in methods):
        methods = [parse_method("mc"), *methods]
    labels = [_label(t, i) for i, t in enumerate(targets)]
    if len(set(labels)) != len(labels):
        raise ValueError(f"target labels must be unique, got {labels}")

    truths, sources, names = {}, {}, None
    for target, label in zip(targets, labels):
        exps = _integrand_exponents(integrands, target.dim)
        names = integrand_names(exps)
        if truth is not None and label in truth:
            truths[label] = np.asarray(truth[label], dtype=float)
            sources[label] = "supplied"
            continue
        moments = [target.moment(e) for e in exps]
        if all(m is not None for m in moments):
            truths[label] = np.array(moments, dtype=float)
            sources[label] = "analytic"
        else:
            truths[label] = golden_estimate(target, exps, golden_size, seed=[int(seed), _stable_hash(label)], sampler=sampler, warmup=warmup)
            sources[label] = f"golden-zv{GOLDEN_ORDER}(S={golden_size})"

    records: list[TrialRecord] = []
    cells: list[CellSummary] = []
    for target, label in zip(targets, labels):
        exps = _integrand_exponents(integrands, target.dim)
        for S in sample_sizes:
            def job(rep, target=target, label=label, S=S, exps=exps):
                return _run_rep(target, label, S, rep, methods, exps, seed, sampler, warmup, 1)

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    per_rep = list(pool.map(job, range(reps)))
            else:
                per_rep = [job(r) for r in range(reps)]
            cell_records = [r for rep_records in per_rep for r in rep_records]
            records.extend(cell_records)
            mc_recs = [r for r in cell_records if r.method == "mc"]
            for m in methods:
                recs = [r for r in cell_records if r.method == m.label]
                cells.append(_summarise(label, S, m.label, recs, mc_recs, truths[label]))
    config = {
        "targets": labels,
        "methods": [m.label for m in methods],
        "sample_sizes": list(sample_sizes),
        "reps": reps,
        "seed": seed,
        "integrands": integrands if isinstance(integrands, str) else [list(e) for e in integrands],
        "sampler": sampler,
        "warmup": warmup,
    }
    return EfficiencyReport(cells, records, truths, sources, names or [], config)

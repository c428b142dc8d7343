"""Independent verification machinery.

Nothing in this module evaluates a closed form.  Three oracles live here:

* a truncated banded linear solver for the site occupancy generating
  function X_j(z) and its exact z-derivative on the truncated lattice,
* the exact periodic linear system for mean absorption times, and
* a seeded, counter-based Monte-Carlo walker whose statistics are
  bit-identical for a given (seed, walks, step_cap) regardless of how the
  work is partitioned across workers.

Golden values for the closed-form engines are generated here first and only
then frozen into tests and golden files.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    ExcessCensoring,
    IllConditioned,
    SingularSystem,
    TruncationInsufficient,
)
from .walk_model import Branch, WalkModel, barrier_spectrum

__all__ = [
    "TruncatedVisits",
    "MeanTimeSplit",
    "GfDerivative",
    "EmpiricalStats",
    "default_truncation",
    "truncated_visits",
    "periodic_mean_times",
    "truncated_mean_times",
    "gf_derivative",
    "gf_derivative_profile",
    "simulate",
    "write_golden",
    "read_golden",
    "oracle_battery",
]

DEFAULT_TAIL_TOL = 1e-12
# one-sided difference steps for the generating-function derivative; the
# expansion parameter is (mean time) * h, so slow walks need small steps
DEFAULT_STEPS = (1e-4, 5e-5, 2.5e-5, 1.25e-5)

# Monte-Carlo stream layout constants.  Walk w belongs to batch w // BATCH;
# block b of batch j is drawn from Philox counter (j << 128) | (b << 64),
# walk w uses row w % BATCH.  Changing these changes every sampled walk.
_BATCH = 8192
_BLOCK = 64


def _decay_rate(model: WalkModel) -> float:
    spectrum = barrier_spectrum(model)
    return max(spectrum.xi2, 1.0 / spectrum.xi1)


def default_truncation(model: WalkModel, tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest barrier count K with geometric tail bound below ``tol``."""
    rate = _decay_rate(model)
    return max(5, math.ceil(math.log(tol) / math.log(rate))) + 5


# ---------------------------------------------------------------------------
# truncated occupancy solver

@dataclass(frozen=True)
class TruncatedVisits:
    """Occupancy generating-function values on the truncated lattice.

    Sites -K*N .. K*N are retained; the two fringe sites are exit sinks so
    that every walk either gets absorbed at a genuine barrier or leaks out.
    ``values[j]`` approximates X_j(z) with geometric tail error
    ``tail_bound``; at z = 1 the identity
    ``absorbed_mass + leak == 1`` holds to solver precision.
    """

    model: WalkModel
    K: int
    z: float
    values: dict[int, float]
    tail_bound: float
    absorbed_mass: float
    leak: float

    def __getitem__(self, site: int) -> float:
        return self.values[site]


def _banded_system(model: WalkModel, K: int, z: float) -> tuple[np.ndarray, int]:
    """Banded storage of I - z * P^T over sites -K*N .. K*N (sinks at the ends)."""
    m = model
    n = 2 * K * m.N + 1
    half = K * m.N
    sites = np.arange(-half, half + 1)
    is_barrier = (sites % m.N) == 0
    fw = np.where(is_barrier, m.p0, m.p)
    bw = np.where(is_barrier, m.q0, m.q)
    hold = np.where(is_barrier, m.r0, m.r)
    fw[0] = bw[0] = hold[0] = 0.0          # fringe sinks: no outgoing mass
    fw[-1] = bw[-1] = hold[-1] = 0.0

    # solve_banded stores a[i, j] at ab[1 + i - j, j]: the entry above the
    # diagonal, M[j-1, j], is the inflow into j-1 from j (site j stepping
    # backward), and M[j+1, j] is site j stepping forward.
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 - z * hold
    ab[0, 1:] = -z * bw[1:]
    ab[2, :-1] = -z * fw[:-1]
    return ab, half


def truncated_visits(model: WalkModel, K: int | None = None, z: float = 1.0,
                     tol: float = DEFAULT_TAIL_TOL) -> TruncatedVisits:
    """Solve the truncated occupancy system.

    Parameters
    ----------
    K : barriers -K..K are retained (states -K*N..K*N).  Defaults to the
        smallest K whose geometric tail bound is below ``tol``.
    z : evaluation point of the generating function, 0 < z <= 1.

    Raises ``TruncationInsufficient`` if an explicit K cannot meet ``tol``.
    """
    if not 0.0 < z <= 1.0:
        raise ValueError(f"z must lie in (0, 1] (got {z})")
    if K is None:
        K = default_truncation(model, tol)
    if K < 3:
        raise ValueError(f"K must be >= 3 (got {K})")
    rate = _decay_rate(model)
    tail = rate ** K
    if tail > tol:
        raise TruncationInsufficient(
            f"tail bound {tail:.3e} at K={K} exceeds requested tolerance {tol:.3e}")

    ab, half = _banded_system(model, K, z)
    rhs = np.zeros(2 * half + 1)
    rhs[half + model.i0] = 1.0
    try:
        x = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):  # pragma: no cover - defensive
        raise SingularSystem("non-finite solution entries")

    sites = np.arange(-half, half + 1)
    barrier_mask = (sites % model.N == 0) & (np.abs(sites) < half)
    absorbed = model.s0 * float(x[barrier_mask].sum())
    leak = float(x[0] + x[-1])
    values = {int(j): float(v) for j, v in zip(sites, x)}
    return TruncatedVisits(model=model, K=K, z=z, values=values,
                           tail_bound=tail, absorbed_mass=absorbed, leak=leak)


def truncated_visit_derivatives(model: WalkModel, K: int | None = None,
                                tol: float = DEFAULT_TAIL_TOL) -> dict[int, float]:
    """Exact dX_j/dz at z = 1 on the truncated lattice.

    Differentiating (I - z P^T) x(z) = e_i0 gives
    (I - P^T) x'(1) = P^T x(1): one extra banded solve, no differencing.
    """
    base = truncated_visits(model, K=K, z=1.0, tol=tol)
    K = base.K
    ab, half = _banded_system(model, K, 1.0)
    x = np.array([base.values[j] for j in range(-half, half + 1)])
    # P^T x = (I - M) x where M = I - P^T is the banded matrix built above
    ptx = x - _banded_matvec(ab, x)
    xprime = solve_banded((1, 1), ab, ptx)
    return {int(j): float(v) for j, v in zip(range(-half, half + 1), xprime)}


def _banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


# ---------------------------------------------------------------------------
# mean absorption times

def periodic_mean_times(model: WalkModel) -> np.ndarray:
    """Mean absorption times m_0..m_N from the exact periodic linear system.

    The defining equations are ``(1 - r) m_i = p m_{i+1} + q m_{i-1} + 1``
    for interior i and ``(1 - r0) m_0 = p0 m_1 + q0 m_{N-1} + 1 - s0`` with
    ``m_N = m_0``; the absorbing transition itself is not counted as a step.
    Returns an array of length N + 1 with ``m[N] == m[0]``.
    """
    m = model
    n = m.N
    A = np.zeros((n, n))
    b = np.zeros(n)
    A[0, 0] = 1.0 - m.r0
    A[0, 1 % n] -= m.p0
    A[0, (n - 1) % n] -= m.q0
    b[0] = 1.0 - m.s0
    for i in range(1, n):
        A[i, i] = 1.0 - m.r
        A[i, (i + 1) % n] -= m.p
        A[i, (i - 1) % n] -= m.q
        b[i] = 1.0
    sol = np.linalg.solve(A, b)
    return np.append(sol, sol[0])


@dataclass(frozen=True)
class MeanTimeSplit:
    """Mean times from the linear-system oracles.

    ``period[i]`` is m_i for i = 0..N (exact periodic solve); ``per_barrier``
    maps barrier index k to the expected time mass s0 * dX_{kN}/dz at z = 1
    carried by walks absorbed at that barrier (truncated solve).
    """

    model: WalkModel
    period: np.ndarray
    per_barrier: dict[int, float]
    tail_bound: float


def truncated_mean_times(model: WalkModel, K: int | None = None,
                         tol: float = DEFAULT_TAIL_TOL) -> MeanTimeSplit:
    """Exact m_i (periodic solve) plus the per-barrier time split."""
    period = periodic_mean_times(model)
    deriv = truncated_visit_derivatives(model, K=K, tol=tol)
    if K is None:
        K = default_truncation(model, tol)
    per_barrier = {k: model.s0 * deriv[k * model.N]
                   for k in range(-(K - 1), K)}
    return MeanTimeSplit(model=model, period=period, per_barrier=per_barrier,
                         tail_bound=_decay_rate(model) ** K)


# ---------------------------------------------------------------------------
# numeric generating-function derivative

@dataclass(frozen=True)
class GfDerivative:
    """One-sided difference-quotient estimate of s0 * dX_{kN}/dz at z = 1.

    ``error_estimate`` is the spread of the last two extrapolation stages.
    ``balanced_extension`` marks values computed for a balanced walk, where
    no closed-form counterpart exists.
    """

    model: WalkModel
    k: int
    value: float
    error_estimate: float
    steps: tuple[float, ...]
    K: int
    balanced_extension: bool


def gf_derivative_profile(model: WalkModel, ks: Iterable[int],
                          steps: Sequence[float] = DEFAULT_STEPS,
                          K: int | None = None,
                          tol: float | None = None) -> dict[int, GfDerivative]:
    """Numeric s0 * X'_{kN}(1) for several k sharing the same solves.

    One-sided differences from below (the series is only guaranteed on
    z <= 1) extrapolated to step zero by Neville's scheme over the given
    step sizes.  At least two steps are required; three or more give a
    usable error estimate.
    """
    steps = tuple(float(h) for h in steps)
    if len(steps) < 2:
        raise ValueError("need at least two step sizes")
    if any(not 0.0 < h < 1.0 for h in steps):
        raise ValueError(f"step sizes must lie in (0, 1): {steps}")
    ks = list(ks)
    if K is None:
        K = default_truncation(model)
    base = truncated_visits(model, K=K, z=1.0)
    shifted = [truncated_visits(model, K=K, z=1.0 - h) for h in steps]

    balanced = model.branch is Branch.BALANCED
    out = {}
    for k in ks:
        site = k * model.N
        quotients = [(base.values[site] - tv.values[site]) / h
                     for h, tv in zip(steps, shifted)]
        value, err = _neville_to_zero(steps, quotients)
        value *= model.s0
        err *= model.s0
        if tol is not None and err > tol * max(1.0, abs(value)):
            raise IllConditioned(
                f"extrapolation stages disagree by {err:.3e} at k={k} "
                f"(requested tolerance {tol:.3e})")
        out[k] = GfDerivative(model=model, k=k, value=value, error_estimate=err,
                              steps=steps, K=K, balanced_extension=balanced)
    return out


def gf_derivative(model: WalkModel, k: int,
                  steps: Sequence[float] = DEFAULT_STEPS,
                  K: int | None = None, tol: float | None = None) -> GfDerivative:
    """Numeric estimate of s0 * dX_{kN}/dz at z = 1 for a single barrier."""
    return gf_derivative_profile(model, [k], steps=steps, K=K, tol=tol)[k]


def _neville_to_zero(hs: Sequence[float], vals: Sequence[float]) -> tuple[float, float]:
    # polynomial extrapolation of vals(h) to h = 0; the difference quotient
    # has a smooth expansion in h, so each stage gains one order
    tableau = [list(vals)]
    n = len(vals)
    for m in range(1, n):
        prev = tableau[-1]
        row = []
        for i in range(n - m):
            num = hs[i] * prev[i + 1] - hs[i + m] * prev[i]
            row.append(num / (hs[i] - hs[i + m]))
        tableau.append(row)
    best = tableau[-1][0]
    err = abs(best - tableau[-2][-1]) if n >= 2 else float("inf")
    return best, err


# ---------------------------------------------------------------------------
# Monte-Carlo walker

@dataclass(frozen=True)
class EmpiricalStats:
    """Seeded Monte-Carlo estimates.

    ``visit_means`` maps site -> (mean arrivals per walk, standard error);
    ``absorption_hist`` maps barrier index -> frequency; frequencies plus
    the censored fraction sum to one.  ``mean_steps`` is the mean number of
    non-absorbing transitions of absorbed walks.  All fields are exact
    functions of (model, walks, seed, step_cap, window): batch reductions
    are over integer accumulators, so results are bit-identical for any
    worker count.
    """

    model: WalkModel
    walks: int
    seed: int
    step_cap: int
    mean_steps: float
    mean_steps_se: float
    visit_means: dict[int, tuple[float, float]]
    absorption_hist: dict[int, float]
    censored: int
    absorbed: int


def _uniform_block(seed: int, batch_index: int, block_index: int,
                   rows: int) -> np.ndarray:
    counter = (batch_index << 128) | (block_index << 64)
    gen = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    return gen.random((rows, _BLOCK))


def _simulate_batch(model: WalkModel, seed: int, batch_index: int, rows: int,
                    step_cap: int, lo: int, hi: int):
    """One batch of walks; returns integer accumulators only."""
    m = model
    n_sites = hi - lo + 1
    pos = np.full(rows, m.i0, dtype=np.int64)
    alive = np.ones(rows, dtype=bool)
    steps = np.zeros(rows, dtype=np.int64)
    absorbed_site = np.zeros(rows, dtype=np.int64)
    was_absorbed = np.zeros(rows, dtype=bool)
    visits = np.zeros((rows, n_sites), dtype=np.int64)
    visits[:, m.i0 - lo] += 1  # the time-zero arrival at the start site

    t = 0
    block = -1
    uniforms = None
    while t < step_cap and alive.any():
        b, off = divmod(t, _BLOCK)
        if b != block:
            uniforms = _uniform_block(seed, batch_index, b, rows)
            block = b
        u = uniforms[:, off]

        at_barrier = alive & (pos % m.N == 0)
        interior = alive & ~at_barrier
        absorb = at_barrier & (u < m.s0)
        fwd = (at_barrier & ~absorb & (u < m.s0 + m.p0)) | (interior & (u < m.p))
        back = ((at_barrier & (u >= m.s0 + m.p0) & (u < m.s0 + m.p0 + m.q0))
                | (interior & (u >= m.p) & (u < m.p + m.q)))
        # anything else alive holds in place

        absorbed_site[absorb] = pos[absorb]
        was_absorbed |= absorb
        alive &= ~absorb
        pos[fwd] += 1
        pos[back] -= 1
        steps[alive] += 1

        walkers = np.nonzero(alive)[0]
        here = pos[walkers]
        inside = (here >= lo) & (here <= hi)
        np.add.at(visits, (walkers[inside], here[inside] - lo), 1)
        t += 1

    abs_steps = steps[was_absorbed]
    barrier_idx = absorbed_site[was_absorbed] // m.N
    # int64 squares cannot overflow while step_cap stays below ~3e7 per
    # batch; beyond that fall back to Python integers (still exact)
    if step_cap <= 30_000_000:
        sum_steps_sq = int(np.dot(abs_steps, abs_steps))
        visit_sum_sq = (visits * visits).sum(axis=0)
    else:
        sum_steps_sq = sum(int(s) * int(s) for s in abs_steps)
        visit_sum_sq = np.array([sum(int(v) * int(v) for v in visits[:, c])
                                 for c in range(visits.shape[1])], dtype=object)
    return {
        "absorbed": int(was_absorbed.sum()),
        "censored": int(rows - was_absorbed.sum()),
        "sum_steps": int(abs_steps.sum()),
        "sum_steps_sq": sum_steps_sq,
        "hist": _count_dict(barrier_idx),
        "visit_sum": visits.sum(axis=0),
        "visit_sum_sq": visit_sum_sq,
    }


def _count_dict(values: np.ndarray) -> dict[int, int]:
    keys, counts = np.unique(values, return_counts=True)
    return {int(k): int(c) for k, c in zip(keys, counts)}


def simulate(model: WalkModel, walks: int, seed: int,
             step_cap: int | None = None, workers: int = 1,
             window: tuple[int, int] | None = None) -> EmpiricalStats:
    """Run ``walks`` independent walks and collect empirical statistics.

    Each walk consumes exactly one uniform per transition (the absorbing
    draw included) from its own slice of a Philox counter space keyed by
    ``seed``, so the sampled trajectories depend only on (seed, walk index).
    Partial results are reduced in batch order over integer accumulators,
    making the output bit-identical across worker counts.

    ``step_cap`` defaults to 50x the mean absorption time (at least 1000);
    walks still alive at the cap are reported as censored, keep their
    truncated visit counts, and are excluded from the absorption histogram
    and the step mean.
    """
    if walks < 1:
        raise ValueError(f"walks must be >= 1 (got {walks})")
    if workers < 1:
        raise ValueError(f"workers must be >= 1 (got {workers})")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must fit in 64 bits")
    if step_cap is None:
        step_cap = max(1000, math.ceil(50.0 * periodic_mean_times(model)[model.i0]))
    if window is None:
        window = (-3 * model.N, 3 * model.N)
    lo, hi = int(window[0]), int(window[1])
    if lo > hi:
        raise ValueError(f"empty site window {window}")

    batches = [(j, min(_BATCH, walks - j * _BATCH))
               for j in range((walks + _BATCH - 1) // _BATCH)]

    def run(batch):
        j, rows = batch
        return _simulate_batch(model, seed, j, rows, step_cap, lo, hi)

    if workers == 1:
        partials = [run(s) for s in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, batches))

    # reduction in batch order; every accumulator is an integer
    absorbed = sum(p["absorbed"] for p in partials)
    censored = sum(p["censored"] for p in partials)
    sum_steps = sum(p["sum_steps"] for p in partials)
    sum_steps_sq = sum(p["sum_steps_sq"] for p in partials)
    hist: dict[int, int] = {}
    for p in partials:
        for k, c in p["hist"].items():
            hist[k] = hist.get(k, 0) + c
    visit_sum = sum(p["visit_sum"] for p in partials)
    visit_sum_sq = sum(p["visit_sum_sq"] for p in partials)

    mean_steps, se_steps = _mean_se(sum_steps, sum_steps_sq, absorbed)
    visit_means = {}
    for offset, site in enumerate(range(lo, hi + 1)):
        visit_means[site] = _mean_se(int(visit_sum[offset]),
                                     int(visit_sum_sq[offset]), walks)
    stats = EmpiricalStats(
        model=model, walks=walks, seed=seed, step_cap=step_cap,
        mean_steps=mean_steps, mean_steps_se=se_steps,
        visit_means=visit_means,
        absorption_hist={k: hist[k] / walks for k in sorted(hist)},
        censored=censored, absorbed=absorbed)
    if censored > 1e-3 * walks:
        warnings.warn(ExcessCensoring(
            f"{censored} of {walks} walks hit the step cap {step_cap}"))
    return stats


def _mean_se(total: int, total_sq: int, n: int) -> tuple[float, float]:
    if n == 0:
        return float("nan"), float("nan")
    mean = total / n
    if n == 1:
        return mean, float("nan")
    var = (total_sq - total * total / n) / (n - 1)
    return mean, math.sqrt(max(var, 0.0) / n)


# ---------------------------------------------------------------------------
# golden-value records

def oracle_battery(model: WalkModel, window: int = 3, K: int | None = None,
                   steps: Sequence[float] = DEFAULT_STEPS,
                   walks: int = 0, seed: int = 42) -> list[dict]:
    """Oracle ground-truth records for a model.

    Each record is ``{model, quantity, index, value, error_bound, oracle,
    params}``.  Monte-Carlo records are included only when ``walks > 0``.
    """
    if K is None:
        K = default_truncation(model)
    records = []
    mdl = model.to_dict()

    tv = truncated_visits(model, K=K)
    for j in range(-window * model.N, window * model.N + 1):
        records.append({"model": mdl, "quantity": "site_visits", "index": j,
                        "value": tv.values[j], "error_bound": 10 * tv.tail_bound,
                        "oracle": "truncated_solver", "params": {"K": K}})

    mts = truncated_mean_times(model, K=K)
    for i in range(model.N + 1):
        records.append({"model": mdl, "quantity": "mean_time_any", "index": i,
                        "value": float(mts.period[i]), "error_bound": 1e-12,
                        "oracle": "periodic_solve", "params": {}})

    if model.branch is Branch.DRIFT and model.i0 == 0:
        profile = gf_derivative_profile(model, range(-5, 6), steps=steps, K=K)
        for k, gd in profile.items():
            records.append({"model": mdl, "quantity": "mean_time_to_barrier",
                            "index": k, "value": gd.value,
                            "error_bound": max(gd.error_estimate * 10, 1e-9),
                            "oracle": "gf_derivative",
                            "params": {"K": K, "steps": list(steps)}})

    if walks > 0:
        stats = simulate(model, walks=walks, seed=seed)
        records.append({"model": mdl, "quantity": "mean_steps", "index": 0,
                        "value": stats.mean_steps, "error_bound": 0.0,
                        "oracle": "simulate",
                        "params": {"walks": walks, "seed": seed,
                                   "step_cap": stats.step_cap}})
        for k in range(-2, 3):
            records.append({"model": mdl, "quantity": "absorption_frequency",
                            "index": k,
                            "value": stats.absorption_hist.get(k, 0.0),
                            "error_bound": 0.0, "oracle": "simulate",
                            "params": {"walks": walks, "seed": seed,
                                       "step_cap": stats.step_cap}})
    return records


def write_golden(path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1)
        fh.write("\n")


def read_golden(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)

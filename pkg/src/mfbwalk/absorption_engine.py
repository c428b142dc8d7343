"""Mean absorption times, in closed form.

Two quantities live here:

* ``mean_time_any``: the expected number of steps before absorption from
  any start site, periodic with period N.  The closed form is checked
  against the exact periodic linear system on every call; if the two
  disagree beyond 1e-9 relative, a :class:`FormulaDiscrepancy` warning is
  emitted and the solve value (the defining system is authoritative) is
  returned instead.  Step counting convention: the absorbing transition is
  not counted, which is what the defining system
  ``(1 - r0) m_0 = p0 m_1 + q0 m_{N-1} + 1 - s0`` encodes.

* ``mean_time_to_barrier``: the expected time carried by walks absorbed at
  one specific barrier, for drift walks started on a barrier (i0 = 0).  It
  equals s0 times the z-derivative at z = 1 of the barrier occupancy
  generating function X_{kN}(z) = Omega(z) (lambda1^N(z) - lambda2^N(z))
  xi_i^k(z), differentiated term by term through the implicit derivatives
  of the two quadratics.  A compact display form of the coupling-coefficient
  derivative circulates that drops the (1 - r0) and (N-1)(rho q0 + p0)
  factors; it is evaluated as a diagnostic and flagged with
  :class:`FormulaDiscrepancy` (it genuinely disagrees), while the
  chain-rule path is the one that matches the numeric oracle.

The driftless case has no closed form for the per-barrier split; the
numeric oracle (:func:`mfbwalk.oracle.gf_derivative`) covers it as a
clearly flagged extension.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import (
    BalancedUnsupported,
    ConsistencyFailure,
    FormulaDiscrepancy,
    StartNotBarrier,
)
from .oracle import periodic_mean_times
from .walk_model import Branch, WalkModel, barrier_spectrum, lambda_pair

__all__ = [
    "AbsorptionTimes",
    "DerivativeBundle",
    "mean_time_any",
    "spectral_derivatives",
    "mean_time_to_barrier",
    "absorption_times",
]

FORMULA_TOL = 1e-9


@dataclass(frozen=True)
class AbsorptionTimes:
    """Mean times over one period plus the per-barrier split.

    ``period_values[i]`` is m_i for i = 0..N (so m_0 appears at both ends);
    ``per_barrier`` maps k to m_{0k} and is empty for balanced walks or
    off-barrier starts, where the closed form does not exist.
    """

    model: WalkModel
    period_values: tuple[float, ...]
    per_barrier: dict[int, float]


@dataclass(frozen=True)
class DerivativeBundle:
    """z-derivatives at z = 1 of every spectral ingredient (drift branch).

    All follow from implicit differentiation:

        dlambda_i/dz = (-1)^i zeta lambda_i
        dzeta/dz     = zeta^3 alpha,           alpha = r(1 - r) + 4 p q
        dxi_i/dz     = (-1)^i xi_i Omega [alpha omega0 zeta^2 + domega0]

    ``domega0`` is the chain-rule derivative of the z-dependent coupling
    coefficient omega0(z); ``domega0_display`` is the compact display form
    of the same derivative, retained for diagnostics only (it drops two
    factors and does not match finite differences).
    """

    model: WalkModel
    dlambda1: float
    dlambda2: float
    dzeta: float
    domega0: float
    dxi1: float
    dxi2: float
    alpha: float
    domega0_display: float


def _drift_formula(model: WalkModel, i: int) -> float:
    m = model
    rho, n = m.rho, m.N
    qp = m.q - m.p
    denom = 1.0 - rho ** (-n)
    return (n * rho ** (-i) / (qp * denom)
            + i / qp
            + (m.p0 + m.q0 * (n - 1)) / (qp * m.s0)
            + (1.0 - m.s0) / m.s0
            + n * (m.p0 / rho + m.q0 * rho ** (1 - n) + m.r0 - 1.0)
            / (qp * denom * m.s0))


def _balanced_formula(model: WalkModel, i: int) -> float:
    m = model
    return (m.N * i / (2.0 * m.p)
            - i * i / (2.0 * m.p)
            + (m.p0 + m.q0) * (m.N - 1) / (2.0 * m.p * m.s0)
            + (1.0 - m.s0) / m.s0)


def mean_time_any(model: WalkModel, i: int) -> float:
    """Mean number of steps before absorption when starting from site i.

    ``i`` may be any integer; times are periodic, m_i = m_{i mod N}.  The
    branch formula is cross-checked against the exact periodic solve; on
    disagreement beyond 1e-9 relative the solve wins (with a
    FormulaDiscrepancy warning), which also keeps near-balanced drift
    models accurate where the drift formula cancels catastrophically.
    """
    i = i % model.N
    formula = (_balanced_formula(model, i) if model.branch is Branch.BALANCED
               else _drift_formula(model, i))
    solved = float(periodic_mean_times(model)[i])
    if abs(formula - solved) > FORMULA_TOL * max(abs(solved), 1e-30):
        warnings.warn(FormulaDiscrepancy(
            f"mean time at i={i}: branch formula {formula!r} vs "
            f"periodic solve {solved!r}; returning the solve value"))
        return solved
    return formula


def spectral_derivatives(model: WalkModel) -> DerivativeBundle:
    """All z = 1 derivatives needed to differentiate X_{kN}(z) (drift only).

    Raises :class:`BalancedUnsupported` for balanced walks, whose root pair
    degenerates at z = 1.
    """
    if model.branch is Branch.BALANCED:
        raise BalancedUnsupported(
            "spectral z-derivatives require drift (p != q); no closed form "
            "exists in the balanced case")
    m = model
    pair = lambda_pair(m, 1.0)
    spectrum = barrier_spectrum(m)
    l1, l2, zeta = pair.lambda1, pair.lambda2, pair.zeta
    n, rho = m.N, m.rho
    alpha = spectrum.alpha
    coup = m.rho * m.q0 + m.p0

    # chain rule through omega0(z) = (l2^N - l1^N)(1 - r0 z)
    #                                + z (l1^(N-1) - l2^(N-1)) (rho q0 + p0)
    domega0 = (n * zeta * (1.0 - m.r0) * (l1 ** n + l2 ** n)
               + m.r0 * (l1 ** n - l2 ** n)
               + coup * (l1 ** (n - 1) - l2 ** (n - 1))
               - (n - 1) * zeta * coup * (l1 ** (n - 1) + l2 ** (n - 1)))
    # display form of the same derivative (diagnostic only)
    domega0_display = (m.r0 * (l1 ** n - l2 ** n)
                       + coup * (l1 ** (n - 1) - l2 ** (n - 1))
                       + zeta * (n * (l1 ** n + l2 ** n)
                                 - (l1 ** (n - 1) + l2 ** (n - 1))))

    xi_factor = spectrum.Omega * (alpha * spectrum.omega0 * zeta ** 2 + domega0)
    return DerivativeBundle(
        model=m,
        dlambda1=-zeta * l1,
        dlambda2=zeta * l2,
        dzeta=zeta ** 3 * alpha,
        domega0=domega0,
        dxi1=-spectrum.xi1 * xi_factor,
        dxi2=spectrum.xi2 * xi_factor,
        alpha=alpha,
        domega0_display=domega0_display,
    )


def _time_to_barrier(model: WalkModel, k: int, domega0: float) -> float:
    """s0 * d/dz [Omega(z) (l1^N - l2^N) xi^k] at z = 1 for one derivative
    choice of the coupling coefficient."""
    m = model
    pair = lambda_pair(m, 1.0)
    spectrum = barrier_spectrum(m)
    l1, l2, zeta = pair.lambda1, pair.lambda2, pair.zeta
    n, rho = m.N, m.rho
    gap = l1 ** n - l2 ** n
    dgap = -n * zeta * (l1 ** n + l2 ** n)
    ratio = 4.0 * m.p0 * m.q0 / (m.p * m.q) * rho ** n
    domega_big = -spectrum.Omega ** 3 * (spectrum.omega0 * domega0 + ratio * spectrum.alpha)
    xi_factor = spectrum.Omega * (spectrum.alpha * spectrum.omega0 * zeta ** 2 + domega0)
    xi = spectrum.xi1 if k <= 0 else spectrum.xi2
    return m.s0 * xi ** k * (domega_big * gap
                             + spectrum.Omega * dgap
                             + spectrum.Omega * gap * abs(k) * xi_factor)


def mean_time_to_barrier(model: WalkModel, k: int) -> float:
    """Mean time carried by walks absorbed at barrier k*N, start at 0.

    Requires the drift branch and i0 = 0.  The left and right barrier roots
    both apply at k = 0; the two evaluations must coincide there
    (:class:`ConsistencyFailure` otherwise).  The verbatim display form
    built on the compact coupling-derivative is compared on every call and
    flagged with :class:`FormulaDiscrepancy`; the chain-rule value is
    returned.
    """
    if model.branch is Branch.BALANCED:
        raise BalancedUnsupported(
            "per-barrier mean times have no closed form for a balanced "
            "walk; use the numeric oracle gf_derivative instead")
    if model.i0 != 0:
        raise StartNotBarrier(
            f"per-barrier mean times are derived for a barrier start "
            f"(i0 = 0); model has i0 = {model.i0}")
    bundle = spectral_derivatives(model)
    value = _time_to_barrier(model, k, bundle.domega0)
    if k == 0:
        # k = 0 belongs to both geometric branches; evaluate the xi1 side
        # too and require agreement
        other = _c0_left_branch(model, bundle.domega0)
        if abs(other - value) > FORMULA_TOL * max(abs(value), 1e-30):
            warnings.warn(ConsistencyFailure(
                f"k=0 branch values disagree: {value!r} (right) vs "
                f"{other!r} (left)"))
    shown = _time_to_barrier(model, k, bundle.domega0_display)
    if abs(shown - value) > FORMULA_TOL * max(abs(value), 1e-30):
        warnings.warn(FormulaDiscrepancy(
            f"per-barrier mean time at k={k}: chain rule {value!r} vs "
            f"display form {shown!r}; the chain-rule value is returned"))
    return value


def _c0_left_branch(model: WalkModel, domega0: float) -> float:
    # same expression as _time_to_barrier at k=0 but forcing the xi1 branch;
    # identical algebraically because the |k| term vanishes
    m = model
    pair = lambda_pair(m, 1.0)
    spectrum = barrier_spectrum(m)
    gap = pair.lambda1 ** m.N - pair.lambda2 ** m.N
    dgap = -m.N * pair.zeta * (pair.lambda1 ** m.N + pair.lambda2 ** m.N)
    ratio = 4.0 * m.p0 * m.q0 / (m.p * m.q) * m.rho ** m.N
    domega_big = -spectrum.Omega ** 3 * (spectrum.omega0 * domega0 + ratio * spectrum.alpha)
    return m.s0 * spectrum.xi1 ** 0 * (domega_big * gap + spectrum.Omega * dgap)


def absorption_times(model: WalkModel, k_min: int = -3, k_max: int = 3) -> AbsorptionTimes:
    """Period of mean times plus the per-barrier split over a window.

    The split is included only where its closed form exists (drift branch,
    barrier start); otherwise ``per_barrier`` is empty.
    """
    period = tuple(mean_time_any(model, i) for i in range(model.N + 1))
    per_barrier: dict[int, float] = {}
    if model.branch is Branch.DRIFT and model.i0 == 0:
        per_barrier = {k: mean_time_to_barrier(model, k)
                       for k in range(k_min, k_max + 1)}
    return AbsorptionTimes(model=model, period_values=period,
                           per_barrier=per_barrier)

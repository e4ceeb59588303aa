"""Nonparametric survival estimation, conditional RMST via pseudo-observations,
and the two-sample cRMSTd test.

The conditional RMST mu(s, w) is the expected additional survival within the
window w for subjects still at risk at the prediction time s.  Two equivalent
Kaplan-Meier routes exist: restarting the estimator on the risk set at s, or
integrating the full-sample curve over [s, s+w] and dividing by S(s).  Both
are provided; the restart route is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import EmptyRiskSet, InvalidInput, TailUndefined

__all__ = [
    "SurvivalRecord",
    "StepSurvivalCurve",
    "CRmstEstimate",
    "PseudoObservationSet",
    "CRmstdTestResult",
    "km_fit",
    "crmst_km",
    "crmst_km_ratio",
    "pseudo_observations",
    "crmst_pseudo",
    "crmstd_test",
]


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time Y = min(T, C) and event indicator."""

    id: object
    time: float
    status: int
    group: object = None
    covariates: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepSurvivalCurve:
    """Right-continuous product-limit estimate with risk/event counts.

    ``start`` is the time origin (survival is 1 on [start, t_1)); ``last_observed``
    is the largest observed time among the subjects the curve was fitted on,
    beyond which the estimate is undefined unless survival has reached zero.
    """

    event_times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    start: float
    last_observed: float
    n_at_risk: int

    def survival_at(self, t):
        """S(t) for t >= start (right-continuous step lookup)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        vals = np.concatenate(([1.0], self.survival))
        return vals[idx] if t.ndim else float(vals[idx])

    def integral(self, a, b, extend_tail=False):
        """Integral of the step function over [a, b], a >= start.

        Raises TailUndefined when b exceeds the last observed time while
        survival is still positive there, unless ``extend_tail``.
        """
        if b <= a:
            return 0.0
        if b > self.last_observed and not extend_tail:
            tail_surv = self.survival[-1] if self.event_times.size else 1.0
            if tail_surv > 0.0:
                raise TailUndefined(
                    f"curve support ends at {self.last_observed} with survival "
                    f"{tail_surv:.6g} > 0; cannot integrate to {b} "
                    f"(pass extend_tail=True to carry the curve forward)"
                )
        knots = np.concatenate(([a], np.clip(self.event_times, a, b), [b]))
        vals = np.concatenate(([1.0], self.survival))
        # value on [knots[k], knots[k+1]) is vals[k'] for the matching step
        steps = np.searchsorted(self.event_times, knots[:-1], side="right")
        return float(np.sum(vals[steps] * np.diff(knots)))


@dataclass(frozen=True)
class CRmstEstimate:
    s: float
    w: float
    value: float
    variance: float | None
    n_at_risk: int


@dataclass(frozen=True)
class PseudoObservationSet:
    """Per-subject jackknife pseudo-values of the cRMST at (s, w),
    ordered by ascending subject id."""

    s: float
    w: float
    entries: tuple  # of (subject id, pseudo-value)

    def values(self):
        return np.array([v for _, v in self.entries], dtype=float)

    def ids(self):
        return [i for i, _ in self.entries]


@dataclass(frozen=True)
class CRmstdTestResult:
    delta: float
    se: float
    z: float
    p_value: float
    ci_lower: float
    ci_upper: float
    alpha: float
    s: float
    w: float


def _as_arrays(records):
    """Validate records and return (ids, times, status) sorted by ascending id."""
    if not records:
        raise InvalidInput("no records")
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise InvalidInput("duplicate subject ids")
    recs = sorted(records, key=lambda r: r.id)
    times = np.array([r.time for r in recs], dtype=float)
    status = np.array([r.status for r in recs], dtype=np.int64)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise InvalidInput("times must be finite and nonnegative")
    if not np.all((status == 0) | (status == 1)):
        raise InvalidInput("status must be 0 or 1")
    return [r.id for r in recs], times, status


def _risk_set(ids, times, status, s):
    keep = times > s
    return [i for i, k in zip(ids, keep) if k], times[keep], status[keep]


def km_fit(records, start=0.0):
    """Product-limit curve over distinct event times > start, fitted on the
    risk set {i : Y_i > start} with S(start) := 1 (restart convention)."""
    ids, times, status = _as_arrays(records)
    _, t, d = _risk_set(ids, times, status, start)
    n = t.size
    if n == 0:
        raise EmptyRiskSet(f"no subjects at risk after t={start}")
    ut, dk = np.unique(t[d == 1], return_counts=True)
    t_sorted = np.sort(t)
    yk = n - np.searchsorted(t_sorted, ut, side="left")
    surv = np.cumprod(1.0 - dk / yk)
    return StepSurvivalCurve(
        event_times=ut,
        survival=surv,
        at_risk=yk.astype(np.int64),
        events=dk.astype(np.int64),
        start=float(start),
        last_observed=float(t.max()),
        n_at_risk=int(n),
    )


def crmst_km(records, s, w, extend_tail=False):
    """cRMST by restarting the Kaplan-Meier estimator on the risk set at s."""
    _check_window(s, w)
    curve = km_fit(records, start=s)
    if curve.n_at_risk < 2:
        raise EmptyRiskSet(f"risk set at s={s} has {curve.n_at_risk} subject(s)")
    value = curve.integral(s, s + w, extend_tail=extend_tail)
    return CRmstEstimate(s=float(s), w=float(w), value=value, variance=None,
                         n_at_risk=curve.n_at_risk)


def crmst_km_ratio(records, s, w, extend_tail=False):
    """cRMST via the full-sample curve: integral_s^{s+w} S(t)dt / S(s).

    Algebraically identical to the restart route; kept as the second route
    of the equivalence invariant.
    """
    _check_window(s, w)
    ids, times, status = _as_arrays(records)
    n_s = int(np.sum(times > s))
    if n_s < 2:
        raise EmptyRiskSet(f"risk set at s={s} has {n_s} subject(s)")
    curve = km_fit(records, start=0.0)
    s_at = curve.survival_at(s)
    value = curve.integral(s, s + w, extend_tail=extend_tail) / s_at
    return CRmstEstimate(s=float(s), w=float(w), value=value, variance=None,
                         n_at_risk=n_s)


def pseudo_observations(records, s, w, extend_tail=False):
    """Leave-one-out pseudo-values mu_i(s, w) = N_s * mu_KM - (N_s - 1) * mu_KM^{-i}
    for every member of the risk set at s."""
    _check_window(s, w)
    ids, times, status = _as_arrays(records)
    rids, t, d = _risk_set(ids, times, status, s)
    n = t.size
    if n < 2:
        raise EmptyRiskSet(f"risk set at s={s} has {n} subject(s)")
    # tail policy is enforced on the full risk-set curve; leave-one-out
    # curves are always carried forward at their last value
    crmst_km(records, s, w, extend_tail=extend_tail)
    pv = _kernels.jackknife_pseudo(t, d, float(s), float(w))
    return PseudoObservationSet(s=float(s), w=float(w),
                                entries=tuple(zip(rids, pv.tolist())))


def crmst_pseudo(records, s, w, extend_tail=False):
    """Pseudo-observation estimator: mean of the pseudo-values, with the
    jackknife variance sum (mu_i - mu)^2 / (N_s (N_s - 1))."""
    pset = pseudo_observations(records, s, w, extend_tail=extend_tail)
    return _estimate_from_pseudo(pset)


def _estimate_from_pseudo(pset):
    v = pset.values()
    n = v.size
    mu = float(np.sum(v) / n)
    var = float(np.sum((v - mu) ** 2) / (n * (n - 1)))
    return CRmstEstimate(s=pset.s, w=pset.w, value=mu, variance=var, n_at_risk=n)


def crmstd_test(group0, group1, s, w, alpha=0.05, extend_tail=False):
    """Two-sided test of mu_1(s, w) - mu_0(s, w) = 0 with normal reference."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInput("alpha must be in (0, 1)")
    est0 = crmst_pseudo(group0, s, w, extend_tail=extend_tail)
    est1 = crmst_pseudo(group1, s, w, extend_tail=extend_tail)
    delta = est1.value - est0.value
    se = float(np.sqrt(est0.variance + est1.variance))
    if se == 0.0:
        z = 0.0 if delta == 0.0 else float(np.sign(delta)) * np.inf
    else:
        z = delta / se
    p = float(2.0 * stats.norm.sf(abs(z)))
    zq = float(stats.norm.ppf(1.0 - alpha / 2.0))
    return CRmstdTestResult(
        delta=delta, se=se, z=z, p_value=p,
        ci_lower=delta - zq * se, ci_upper=delta + zq * se,
        alpha=float(alpha), s=float(s), w=float(w),
    )


def _check_window(s, w):
    if s < 0 or w <= 0 or not np.isfinite(s) or not np.isfinite(w):
        raise InvalidInput(f"invalid prediction time/window (s={s}, w={w})")

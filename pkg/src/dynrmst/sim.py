"""Generative models and Monte Carlo harnesses.

Two data-generating families: two-arm piecewise-exponential designs with
uniform censoring (for the cRMSTd test), and a longitudinal-survival joint
model with a Weibull baseline whose log-hazard is linear or quadratic in
time per subject (for the dynamic landmark model).  Harnesses compute the
usual calibration metrics (bias, RMSE, Rel SE, CP, rejection rate) over
independent replicates.

Determinism: every replicate draws from its own
``SeedSequence(entropy=master_seed, spawn_key=(1, rep))`` stream, so results
are bitwise identical for any worker count.  The population draw of
``coefficient_mc`` uses ``spawn_key=(0,)``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, stats

from . import _kernels
from .errors import InvalidInput, NoConvergence
from .gee import IDENTITY, fit_arrays, sandwich_arrays
from .landmark import LongitudinalRecord
from .surv import SurvivalRecord, crmstd_test

__all__ = [
    "ScenarioSpec",
    "JointModelSpec",
    "JointTruth",
    "JointSample",
    "MetricsReport",
    "CoefficientMCResult",
    "PredictionRow",
    "scenario_spec",
    "simulate_scenario",
    "true_crmstd",
    "joint_spec",
    "simulate_joint",
    "calibrate_joint_censoring",
    "mc_metrics",
    "scenario_mc",
    "coefficient_mc",
    "prediction_experiment",
]

# composite Gauss-Legendre rule used for all hazard quadrature
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
# panels over the follow-up window for cumulative-hazard tabulation
HAZARD_PANELS = 160
# panels (even, for Simpson) when integrating survival for true cRMST values
SURVIVAL_PANELS = 128
INVERSION_TOL = 1e-12
INVERSION_MAX_ITER = 200


def _rng_of(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _rep_rng(master_seed, rep):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(1, rep))
    )


# ---------------------------------------------------------------------------
# two-arm piecewise-exponential designs


@dataclass(frozen=True)
class ScenarioSpec:
    """Two-arm design: exponential control, treatment via a piecewise-constant
    hazard ratio, independent uniform censoring per arm.

    ``hr_pieces`` is ((start_0, hr_0), (start_1, hr_1), ...) with start_0 = 0;
    each hazard ratio applies from its start time to the next.  ``censor_a``
    and ``censor_b`` are the U(0, .) upper bounds for the control and
    treatment arms (None = no censoring in that arm).
    """

    control_median: float
    hr_pieces: tuple
    censor_a: float | None
    censor_b: float | None
    n_per_arm: int

    def __post_init__(self):
        if self.control_median <= 0:
            raise InvalidInput("control_median must be positive")
        if self.n_per_arm < 2:
            raise InvalidInput("n_per_arm must be at least 2")
        pieces = tuple((float(a), float(h)) for a, h in self.hr_pieces)
        object.__setattr__(self, "hr_pieces", pieces)
        starts = [a for a, _ in pieces]
        if not pieces or pieces[0][0] != 0.0 or starts != sorted(set(starts)):
            raise InvalidInput("hr_pieces must start at 0 with increasing starts")
        if any(h <= 0 for _, h in pieces):
            raise InvalidInput("hazard ratios must be positive")
        for bound in (self.censor_a, self.censor_b):
            if bound is not None and bound <= 0:
                raise InvalidInput("censoring bounds must be positive")

    @property
    def control_rate(self):
        return np.log(2.0) / self.control_median

    def arm_hazard(self, arm):
        """(breaks, rates) of the piecewise-constant hazard for arm 0/1."""
        r = self.control_rate
        if arm == 0:
            return np.array([0.0]), np.array([r])
        breaks = np.array([a for a, _ in self.hr_pieces])
        rates = np.array([r * h for _, h in self.hr_pieces])
        return breaks, rates


def _pw_cum_at_breaks(breaks, rates):
    gaps = np.diff(breaks)
    return np.concatenate(([0.0], np.cumsum(rates[:-1] * gaps)))


def _pw_invert(breaks, rates, e):
    """t with cumulative hazard(t) = e, for piecewise-constant rates."""
    cum = _pw_cum_at_breaks(breaks, rates)
    j = np.searchsorted(cum, e, side="right") - 1
    return breaks[j] + (e - cum[j]) / rates[j]


def _pw_surv_integral(breaks, rates, a, b):
    """Closed-form integral of exp(-cumhaz) over [a, b]."""
    if b <= a:
        return 0.0
    cum = _pw_cum_at_breaks(breaks, rates)
    total = 0.0
    edges = np.concatenate((breaks, [np.inf]))
    for j, r in enumerate(rates):
        lo, hi = max(a, edges[j]), min(b, edges[j + 1])
        if hi <= lo:
            continue
        s_lo = np.exp(-(cum[j] + r * (lo - breaks[j])))
        total += s_lo * (1.0 - np.exp(-r * (hi - lo))) / r
    return total


def _censor_bound_for(breaks, rates, target):
    """U(0, a) upper bound giving censoring probability ``target`` against the
    piecewise-exponential event distribution (closed form, no pilot draws)."""

    def rate(upper):
        return _pw_surv_integral(breaks, rates, 0.0, upper) / upper - target

    return float(optimize.brentq(rate, 1e-8, 1e8, xtol=1e-10))


_SCENARIO_PIECES = {
    1: ((0.0, 1.0),),
    2: ((0.0, 0.67),),
    3: ((0.0, 0.1), (5.0, 0.67), (15.0, 1.0)),
    4: ((0.0, 1.0), (10.0, 0.33)),
}


def scenario_spec(number, n_per_arm, censor_target=0.0, control_median=10.0):
    """Benchmark designs 1-4: no effect; constant HR 0.67; early-then-fading
    effect (0.1 / 0.67 / 1.0 switching at 5 and 15); delayed effect (1.0
    before 10, 0.33 after).  ``censor_target`` is the per-arm censoring
    fraction, hit exactly in expectation via closed-form calibration."""
    if number not in _SCENARIO_PIECES:
        raise InvalidInput(f"unknown scenario {number}")
    if not 0.0 <= censor_target < 1.0:
        raise InvalidInput("censor_target must be in [0, 1)")
    spec = ScenarioSpec(control_median=float(control_median),
                        hr_pieces=_SCENARIO_PIECES[number],
                        censor_a=None, censor_b=None, n_per_arm=int(n_per_arm))
    if censor_target > 0.0:
        a = _censor_bound_for(*spec.arm_hazard(0), censor_target)
        b = _censor_bound_for(*spec.arm_hazard(1), censor_target)
        spec = replace(spec, censor_a=a, censor_b=b)
    return spec


def simulate_scenario(spec, seed):
    """One dataset: (control records, treatment records), ids 'c<i>'/'t<i>'."""
    rng = _rng_of(seed)
    out = []
    for arm, prefix, bound in ((0, "c", spec.censor_a), (1, "t", spec.censor_b)):
        breaks, rates = spec.arm_hazard(arm)
        t = _pw_invert(breaks, rates, rng.exponential(size=spec.n_per_arm))
        if bound is None:
            y, d = t, np.ones(spec.n_per_arm, dtype=np.int64)
        else:
            c = rng.uniform(0.0, bound, size=spec.n_per_arm)
            y = np.minimum(t, c)
            d = (t < c).astype(np.int64)
        out.append([
            SurvivalRecord(id=f"{prefix}{i:06d}", time=float(y[i]),
                           status=int(d[i]), group=arm)
            for i in range(spec.n_per_arm)
        ])
    return out[0], out[1]


def _true_crmst_arm(spec, arm, s, w):
    breaks, rates = spec.arm_hazard(arm)
    cum = _pw_cum_at_breaks(breaks, rates)
    j = np.searchsorted(breaks, s, side="right") - 1
    s_at = np.exp(-(cum[j] + rates[j] * (s - breaks[j])))
    return _pw_surv_integral(breaks, rates, s, s + w) / s_at


def true_crmstd(spec, s, w, method="monte_carlo", n_draws=1_000_000, seed=0):
    """Population cRMST difference (treatment minus control).

    ``monte_carlo`` averages min(T - s, w) over survivors at s from uncensored
    draws; ``closed_form`` integrates the piecewise-exponential survival
    functions exactly.
    """
    if method == "closed_form":
        return _true_crmst_arm(spec, 1, s, w) - _true_crmst_arm(spec, 0, s, w)
    if method != "monte_carlo":
        raise InvalidInput(f"unknown method {method!r}")
    rng = _rng_of(seed)
    mus = []
    for arm in (0, 1):
        breaks, rates = spec.arm_hazard(arm)
        t = _pw_invert(breaks, rates, rng.exponential(size=int(n_draws)))
        alive = t > s
        mus.append(float(np.mean(np.minimum(t[alive] - s, w))))
    return mus[1] - mus[0]


# ---------------------------------------------------------------------------
# longitudinal-survival joint model


@dataclass(frozen=True)
class JointModelSpec:
    """Weibull-baseline hazard linked to a per-subject biomarker trajectory.

    The trajectory is m_i(t) = (beta0 + b0) + (beta_t + b1) t [+ (beta_t2 +
    b2) t^2] + beta_x1 X1 + beta_x2 X2 with b ~ N(0, re_cov); the hazard is
    lam t^(lam-1) exp(eta + gamma1 X1 + gamma2 X2 + alpha m_i(t)).  Visits:
    one at t = 0 plus max_visits - 1 uniform on (0, max_followup), sorted and
    truncated at the observed time; measurements add N(0, error_sd^2) noise.
    """

    trajectory: str
    beta0: float
    beta_t: float
    beta_t2: float
    beta_x1: float
    beta_x2: float
    re_cov: tuple
    error_sd: float
    weibull_shape: float
    weibull_log_scale: float
    gamma1: float
    gamma2: float
    alpha: float
    x1_prob: float = 0.5
    x2_mean: float = 1.0
    x2_sd: float = 1.0
    max_visits: int = 10
    max_followup: float = 20.0
    censor_upper: float | None = None

    def __post_init__(self):
        if self.trajectory not in ("linear", "quadratic"):
            raise InvalidInput(f"unknown trajectory {self.trajectory!r}")
        d = np.array(self.re_cov, dtype=float)
        k = 3 if self.trajectory == "quadratic" else 2
        if d.shape != (k, k) or not np.allclose(d, d.T):
            raise InvalidInput(f"re_cov must be a symmetric {k}x{k} matrix")
        try:
            np.linalg.cholesky(d)
        except np.linalg.LinAlgError:
            raise InvalidInput("re_cov must be positive definite") from None
        object.__setattr__(self, "re_cov", tuple(map(tuple, d)))
        if self.weibull_shape <= 0 or self.error_sd <= 0:
            raise InvalidInput("weibull_shape and error_sd must be positive")
        if self.max_followup <= 0 or self.max_visits < 1:
            raise InvalidInput("max_followup/max_visits out of range")
        if self.censor_upper is not None and self.censor_upper <= 0:
            raise InvalidInput("censor_upper must be positive")


# off-diagonals of the random-effects covariances are correlations scaled by
# the marginal standard deviations (0.5 between intercept and slope in the
# linear model; 0.1 between every pair in the quadratic model)
_LINEAR_RE_COV = ((1.0, 0.1), (0.1, 0.04))
_QUADRATIC_RE_COV = (
    (1.0, 0.06, 0.005),
    (0.06, 0.36, 0.003),
    (0.005, 0.003, 0.0025),
)


def joint_spec(trajectory="linear", censor_upper=None, alpha=1.0):
    """Reference parameterization of the joint model (linear or quadratic
    trajectory); ``alpha`` scales the biomarker's effect on the hazard."""
    if trajectory == "linear":
        beta0, beta_t2, re_cov = 3.0, 0.0, _LINEAR_RE_COV
    elif trajectory == "quadratic":
        beta0, beta_t2, re_cov = 0.5, 0.1, _QUADRATIC_RE_COV
    else:
        raise InvalidInput(f"unknown trajectory {trajectory!r}")
    return JointModelSpec(
        trajectory=trajectory, beta0=beta0, beta_t=-0.2, beta_t2=beta_t2,
        beta_x1=1.0, beta_x2=-1.0, re_cov=re_cov, error_sd=float(np.sqrt(0.5)),
        weibull_shape=3.0, weibull_log_scale=-6.0, gamma1=1.0, gamma2=-1.0,
        alpha=float(alpha), censor_upper=censor_upper,
    )


@dataclass(frozen=True)
class JointTruth:
    """Per-subject hazard coefficients: h_i(t) = lam t^(lam-1)
    exp(c0 + c1 t + c2 t^2).  Everything the true conditional cRMST needs."""

    lam: float
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray

    def subset(self, idx):
        return JointTruth(self.lam, self.c0[idx], self.c1[idx], self.c2[idx])

    def _hazard(self, t):
        """Hazard values at shared times t (m,) for all subjects -> (n, m)."""
        base = self.lam * t ** (self.lam - 1.0)
        return base * np.exp(self.c0[:, None] + self.c1[:, None] * t
                             + self.c2[:, None] * t * t)

    def _cum_increments(self, edges):
        """Integral of the hazard over each [edges[j], edges[j+1]] -> (n, P)."""
        mid = (edges[:-1] + edges[1:]) / 2.0
        half = (edges[1:] - edges[:-1]) / 2.0
        t = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        wt = (half[:, None] * _GL_WEIGHTS).ravel()
        hv = self._hazard(t) * wt
        return hv.reshape(self.c0.size, edges.size - 1, _GL_NODES.size).sum(axis=2)

    def cumulative_hazard(self, t, panels=HAZARD_PANELS):
        """H_i(t_i) for per-subject times t (scalar broadcast allowed)."""
        t = np.broadcast_to(np.asarray(t, dtype=float), self.c0.shape)
        # map each [0, t_i] onto a shared composite rule on [0, 1]
        u_edges = np.linspace(0.0, 1.0, panels + 1)
        mid = (u_edges[:-1] + u_edges[1:]) / 2.0
        half = (u_edges[1] - u_edges[0]) / 2.0
        u = (mid[:, None] + half * _GL_NODES).ravel()
        wt = np.tile(half * _GL_WEIGHTS, panels)
        out = np.empty(self.c0.size)
        for lo, hi in _chunks(self.c0.size):
            tt = t[lo:hi, None] * u
            base = self.lam * np.where(tt > 0, tt, 1.0) ** (self.lam - 1.0)
            base[tt <= 0] = 0.0
            hv = base * np.exp(self.c0[lo:hi, None] + self.c1[lo:hi, None] * tt
                               + self.c2[lo:hi, None] * tt * tt)
            out[lo:hi] = (hv * wt).sum(axis=1) * t[lo:hi]
        return out

    def true_crmst(self, s, w, panels=SURVIVAL_PANELS):
        """E(min(T - s, w) | T > s) per subject: Simpson integration of
        exp(-(H(s+u) - H(s))) on a uniform grid over [0, w]."""
        edges = np.linspace(s, s + w, panels + 1)
        out = np.empty(self.c0.size)
        for lo, hi in _chunks(self.c0.size):
            sub = self.subset(slice(lo, hi))
            inc = sub._cum_increments(edges)
            dh = np.concatenate(
                [np.zeros((inc.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1
            )
            out[lo:hi] = integrate.simpson(np.exp(-dh), x=edges, axis=1)
        return out

    def true_rmst(self, tau, panels=SURVIVAL_PANELS):
        """E(min(T, tau)) per subject."""
        return self.true_crmst(0.0, tau, panels=panels)


def _chunks(n, size=8192):
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def _invert_event_times(truth, e, max_t, panels=HAZARD_PANELS):
    """Solve H_i(T) = e_i on [0, max_t] by bracketed Newton iteration.

    Returns (times, has_event); subjects with H_i(max_t) < e_i have no event
    inside follow-up.  Residual |H_i(T) - e_i| is driven below 1e-12.
    """
    n = truth.c0.size
    times = np.full(n, np.inf)
    has_event = np.zeros(n, dtype=bool)
    edges = np.linspace(0.0, max_t, panels + 1)
    for lo, hi in _chunks(n):
        sub = truth.subset(slice(lo, hi))
        inc = sub._cum_increments(edges)
        cum = np.concatenate([np.zeros((inc.shape[0], 1)),
                              np.cumsum(inc, axis=1)], axis=1)
        ev = cum[:, -1] >= e[lo:hi]
        has_event[lo:hi] = ev
        if not np.any(ev):
            continue
        sub = sub.subset(ev)
        ee = e[lo:hi][ev]
        k = np.clip(np.sum(cum[ev] <= ee[:, None], axis=1) - 1, 0, panels - 1)
        anchor = edges[k]
        h_anchor = cum[ev][np.arange(k.size), k]
        blo, bhi = edges[k], edges[k + 1]
        t = (blo + bhi) / 2.0
        lam = truth.lam

        def residual(tt):
            mid = (anchor + tt) / 2.0
            half = (tt - anchor) / 2.0
            nodes = mid[:, None] + half[:, None] * _GL_NODES
            base = lam * np.where(nodes > 0, nodes, 1.0) ** (lam - 1.0)
            base[nodes <= 0] = 0.0
            hv = base * np.exp(sub.c0[:, None] + sub.c1[:, None] * nodes
                               + sub.c2[:, None] * nodes * nodes)
            return h_anchor + half * (hv @ _GL_WEIGHTS) - ee

        f = residual(t)
        for _ in range(INVERSION_MAX_ITER):
            done = np.abs(f) <= INVERSION_TOL
            if np.all(done):
                break
            bhi = np.where(~done & (f > 0), t, bhi)
            blo = np.where(~done & (f <= 0), t, blo)
            # Newton step from the hazard at t, safeguarded by the bracket
            hz = lam * np.where(t > 0, t, 1.0) ** (lam - 1.0)
            hz = np.where(t > 0, hz, 0.0) * np.exp(sub.c0 + sub.c1 * t
                                                   + sub.c2 * t * t)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = t - f / hz
            bad = ~np.isfinite(cand) | (cand <= blo) | (cand >= bhi)
            cand = np.where(bad, (blo + bhi) / 2.0, cand)
            t = np.where(done, t, cand)
            f = np.where(done, f, residual(t))
        worst = float(np.max(np.abs(f)))
        if worst > 1e-8:
            raise NoConvergence(INVERSION_MAX_ITER, worst)
        full = np.where(ev)[0] + lo
        times[full] = t
    return times, has_event


@dataclass(frozen=True)
class JointSample:
    """Columnar joint-model draw: survival outcome, baseline covariates,
    NaN-padded visit matrices, and the truth handles for each subject."""

    spec: JointModelSpec
    ids: np.ndarray
    time: np.ndarray
    status: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    visit_times: np.ndarray
    visit_values: np.ndarray
    truth: JointTruth

    @property
    def n(self):
        return self.ids.size

    def subset(self, idx):
        return JointSample(self.spec, self.ids[idx], self.time[idx],
                           self.status[idx], self.x1[idx], self.x2[idx],
                           self.visit_times[idx], self.visit_values[idx],
                           self.truth.subset(idx))

    def marker_at(self, s):
        """Last observed biomarker value at or before s, per subject."""
        seen = np.nansum(self.visit_times <= s, axis=1).astype(np.int64)
        if np.any(seen == 0):
            raise InvalidInput(f"subject without a biomarker value by t={s}")
        return self.visit_values[np.arange(self.n), seen - 1]

    def to_records(self, marker_name="marker"):
        """(survival records, longitudinal records) for the list-based API."""
        surv = [
            SurvivalRecord(id=int(i), time=float(t), status=int(d),
                           covariates={"x1": float(a), "x2": float(b)})
            for i, t, d, a, b in zip(self.ids, self.time, self.status,
                                     self.x1, self.x2)
        ]
        long = []
        for row in range(self.n):
            for vt, vv in zip(self.visit_times[row], self.visit_values[row]):
                if np.isnan(vt):
                    break
                long.append(LongitudinalRecord(id=int(self.ids[row]),
                                               obs_time=float(vt),
                                               values={marker_name: float(vv)}))
        return surv, long


def simulate_joint(spec, n, seed):
    """Draw n subjects: covariates, random effects, event time by numerical
    inversion of the cumulative hazard, visit schedule and noisy biomarker
    measurements.  Returns a JointSample (see ``to_records``)."""
    rng = _rng_of(seed)
    n = int(n)
    x1 = (rng.random(n) < spec.x1_prob).astype(float)
    x2 = rng.normal(spec.x2_mean, spec.x2_sd, size=n)
    chol = np.linalg.cholesky(np.array(spec.re_cov))
    b = rng.standard_normal((n, chol.shape[0])) @ chol.T
    b2 = b[:, 2] if spec.trajectory == "quadratic" else np.zeros(n)

    # trajectory m_i(t) = traj0 + traj1 t + traj2 t^2
    traj0 = spec.beta0 + b[:, 0] + spec.beta_x1 * x1 + spec.beta_x2 * x2
    traj1 = spec.beta_t + b[:, 1]
    traj2 = spec.beta_t2 + b2
    truth = JointTruth(
        lam=float(spec.weibull_shape),
        c0=spec.weibull_log_scale + spec.gamma1 * x1 + spec.gamma2 * x2
        + spec.alpha * traj0,
        c1=spec.alpha * traj1,
        c2=spec.alpha * traj2,
    )

    e = rng.exponential(size=n)
    t_event, has_event = _invert_event_times(truth, e, spec.max_followup)

    vt = np.empty((n, spec.max_visits))
    vt[:, 0] = 0.0
    if spec.max_visits > 1:
        vt[:, 1:] = np.sort(rng.uniform(0.0, spec.max_followup,
                                        size=(n, spec.max_visits - 1)), axis=1)
    noise = rng.normal(0.0, spec.error_sd, size=vt.shape)

    if spec.censor_upper is not None:
        c = np.minimum(rng.uniform(0.0, spec.censor_upper, size=n),
                       spec.max_followup)
    else:
        c = np.full(n, spec.max_followup)
    y = np.where(has_event, np.minimum(t_event, c), c)
    d = (has_event & (t_event < c)).astype(np.int64)

    observed = vt <= y[:, None]
    values = (traj0[:, None] + traj1[:, None] * vt + traj2[:, None] * vt * vt
              + noise)
    vt = np.where(observed, vt, np.nan)
    values = np.where(observed, values, np.nan)

    return JointSample(spec=spec, ids=np.arange(n), time=y, status=d,
                       x1=x1, x2=x2, visit_times=vt, visit_values=values,
                       truth=truth)


def calibrate_joint_censoring(spec, target, pilot_n=100_000, seed=0):
    """U(0, a) upper bound whose expected censoring fraction (administrative
    censoring included) hits ``target``, from one pilot draw of event times."""
    if not 0.0 < target < 1.0:
        raise InvalidInput("target must be in (0, 1)")
    pilot = simulate_joint(replace(spec, censor_upper=None), pilot_n, seed)
    admin = pilot.status == 0
    t = pilot.time
    base = float(np.mean(admin))
    if base >= target:
        raise InvalidInput(
            f"administrative censoring alone is {base:.3f} >= target {target}"
        )

    def expected(a):
        # P(censored_i) = 1 for administratively censored pilots, min(T_i/a, 1)
        # otherwise (C < T with C ~ U(0, a))
        p = np.where(admin, 1.0, np.minimum(t / a, 1.0))
        return float(np.mean(p)) - target

    return float(optimize.brentq(expected, 1e-6, 1e9, xtol=1e-10))


# ---------------------------------------------------------------------------
# Monte Carlo metrics and harnesses


@dataclass(frozen=True)
class MetricsReport:
    """Replicate-level calibration summary for one scalar estimand."""

    n_reps: int
    truth: float
    mean_estimate: float
    bias: float
    rel_bias: float
    rmse: float
    empirical_se: float
    mean_model_se: float
    rel_se: float
    coverage: float
    rejection_rate: float
    alpha: float


def mc_metrics(estimates, variances, truth, alpha=0.05):
    """bias / relative bias / RMSE / Rel SE / CP / rejection rate over
    replicates; rel_bias is NaN when truth is exactly 0 (undefined ratio)."""
    est = np.asarray(estimates, dtype=float)
    var = np.asarray(variances, dtype=float)
    if est.shape != var.shape or est.ndim != 1 or est.size < 2:
        raise InvalidInput("need aligned 1-d estimate/variance arrays, >= 2 reps")
    if np.any(var < 0):
        raise InvalidInput("negative variance")
    se = np.sqrt(var)
    zq = float(stats.norm.ppf(1.0 - alpha / 2.0))
    mean_est = float(np.mean(est))
    bias = mean_est - truth
    emp_se = float(np.std(est, ddof=1))
    mean_se = float(np.mean(se))
    with np.errstate(divide="ignore", invalid="ignore"):
        reject = np.abs(est) / se > zq
    return MetricsReport(
        n_reps=est.size,
        truth=float(truth),
        mean_estimate=mean_est,
        bias=float(bias),
        rel_bias=float(bias / truth) if truth != 0.0 else float("nan"),
        rmse=float(np.sqrt(np.mean((est - truth) ** 2))),
        empirical_se=emp_se,
        mean_model_se=mean_se,
        rel_se=emp_se / mean_se if mean_se > 0 else float("nan"),
        coverage=float(np.mean(np.abs(est - truth) <= zq * se)),
        rejection_rate=float(np.mean(reject)),
        alpha=float(alpha),
    )


def _run_chunked(worker, payloads, workers):
    if workers <= 1:
        parts = [worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, payloads))
    return parts


def _chunk_ranges(reps, workers):
    size = max(1, -(-reps // max(1, workers * 4)))
    return [(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def _scenario_worker(payload):
    spec, s, w, seed, lo, hi = payload
    deltas = np.empty(hi - lo)
    variances = np.empty(hi - lo)
    for rep in range(lo, hi):
        rng = _rep_rng(seed, rep)
        g0, g1 = simulate_scenario(spec, rng)
        res = crmstd_test(g0, g1, s, w, extend_tail=True)
        deltas[rep - lo] = res.delta
        variances[rep - lo] = res.se**2
    return lo, deltas, variances


def scenario_mc(spec, s, w, reps, seed, alpha=0.05, workers=1):
    """Replicated cRMSTd tests on one design; truth from the closed form."""
    payloads = [(spec, s, w, seed, lo, hi) for lo, hi in _chunk_ranges(reps, workers)]
    parts = sorted(_run_chunked(_scenario_worker, payloads, workers))
    deltas = np.concatenate([p[1] for p in parts])
    variances = np.concatenate([p[2] for p in parts])
    truth = true_crmstd(spec, s, w, method="closed_form")
    return mc_metrics(deltas, variances, truth, alpha=alpha)


def _joint_super_arrays(sample, grid, w, layout):
    """Stacked design/response/cluster arrays for the joint design's fixed
    covariate order (x1, x2, current biomarker)."""
    from .basis import h_matrix  # local import to keep worker pickling light

    blocks_x, blocks_y, blocks_subj, blocks_lm = [], [], [], []
    for s_j in grid:
        mask = sample.time > s_j
        idx = np.where(mask)[0]
        if idx.size < 2:
            raise InvalidInput(f"risk set at s={s_j} has {idx.size} subject(s)")
        pv = _kernels.jackknife_pseudo(sample.time[idx], sample.status[idx],
                                       float(s_j), float(w))
        zstar = np.column_stack([np.ones(idx.size), sample.x1[idx],
                                 sample.x2[idx], sample.marker_at(s_j)[idx]])
        blocks_x.append(zstar @ h_matrix(layout, s_j))
        blocks_y.append(pv)
        blocks_subj.append(idx)
        blocks_lm.append(np.full(idx.size, s_j))
    x = np.concatenate(blocks_x)
    y = np.concatenate(blocks_y)
    subj = np.concatenate(blocks_subj)
    lm = np.concatenate(blocks_lm)
    order = np.lexsort((lm, subj))
    x, y, subj = x[order], y[order], subj[order]
    _, counts = np.unique(subj, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    return x, y, starts


def _coefficient_worker(payload):
    spec, grid, w, layout, n_subjects, seed, lo, hi = payload
    q = layout.q
    betas = np.empty((hi - lo, q))
    var_cl = np.empty((hi - lo, q))
    var_nv = np.empty((hi - lo, q))
    for rep in range(lo, hi):
        rng = _rep_rng(seed, rep)
        sample = simulate_joint(spec, n_subjects, rng)
        x, y, starts = _joint_super_arrays(sample, grid, w, layout)
        beta, cov_cl, _, _ = fit_arrays(x, y, starts, IDENTITY)
        rowwise = np.arange(y.size + 1, dtype=np.int64)
        cov_nv = sandwich_arrays(x, y, rowwise, IDENTITY, beta)
        betas[rep - lo] = beta
        var_cl[rep - lo] = np.diag(cov_cl)
        var_nv[rep - lo] = np.diag(cov_nv)
    return lo, betas, var_cl, var_nv


@dataclass(frozen=True)
class CoefficientMCResult:
    """Per-coefficient calibration of the clustered vs rowwise sandwich,
    against the large-population fit as truth."""

    beta_true: np.ndarray
    clustered: tuple  # MetricsReport per coefficient
    rowwise: tuple
    n_reps: int


def coefficient_mc(spec, grid, w, layout, n_subjects=500, reps=1000,
                   pop_size=100_000, seed=0, alpha=0.05, workers=1):
    """Sandwich-calibration experiment: fit the landmark super-model on
    ``reps`` fresh datasets of ``n_subjects``, and compare both sandwich
    modes against the coefficient vector of one ``pop_size``-subject fit."""
    grid = tuple(float(s) for s in grid)
    pop_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(0,))
    )
    population = simulate_joint(spec, pop_size, pop_rng)
    x, y, starts = _joint_super_arrays(population, grid, w, layout)
    beta_true, _, _, _ = fit_arrays(x, y, starts, IDENTITY)

    payloads = [(spec, grid, w, layout, n_subjects, seed, lo, hi)
                for lo, hi in _chunk_ranges(reps, workers)]
    parts = sorted(_run_chunked(_coefficient_worker, payloads, workers))
    betas = np.concatenate([p[1] for p in parts])
    var_cl = np.concatenate([p[2] for p in parts])
    var_nv = np.concatenate([p[3] for p in parts])

    clustered = tuple(mc_metrics(betas[:, j], var_cl[:, j], beta_true[j], alpha)
                      for j in range(layout.q))
    rowwise = tuple(mc_metrics(betas[:, j], var_nv[:, j], beta_true[j], alpha)
                    for j in range(layout.q))
    return CoefficientMCResult(beta_true=beta_true, clustered=clustered,
                               rowwise=rowwise, n_reps=reps)


def _c_index_arrays(preds, times, status, s, w):
    horizon = s + w
    tt = np.minimum(times, horizon)
    dd = np.where(times <= horizon, status, 0)
    usable, score = _kernels.concordance_stats(tt, dd, preds)
    return np.nan if usable == 0 else score / usable


def _prediction_worker(payload):
    from .basis import h_matrix

    spec, grid, w, layout, n_train, n_val, seed, lo, hi = payload
    n_lm = len(grid)
    m = hi - lo
    c_dyn = np.empty((m, n_lm))
    c_stat = np.empty((m, n_lm))
    pe_dyn = np.empty((m, n_lm))
    pe_stat = np.empty((m, n_lm))
    for rep in range(lo, hi):
        rng = _rep_rng(seed, rep)
        train = simulate_joint(spec, n_train, rng)
        val = simulate_joint(spec, n_val, rng)
        x, y, _ = _joint_super_arrays(train, grid, w, layout)
        beta = np.linalg.lstsq(x, y, rcond=None)[0]
        base_train = np.column_stack([np.ones(train.n), train.x1, train.x2,
                                      train.marker_at(0.0)])
        for j, s_j in enumerate(grid):
            mask = val.time > s_j
            zstar = np.column_stack([np.ones(int(mask.sum())), val.x1[mask],
                                     val.x2[mask], val.marker_at(s_j)[mask]])
            dyn_pred = zstar @ (h_matrix(layout, s_j) @ beta)
            dyn_true = val.truth.true_crmst(s_j, w)[mask]

            tau = s_j + w
            pv0 = _kernels.jackknife_pseudo(train.time, train.status, 0.0,
                                            float(tau))
            beta_s = np.linalg.lstsq(base_train, pv0, rcond=None)[0]
            base_val = np.column_stack([np.ones(int(mask.sum())), val.x1[mask],
                                        val.x2[mask], val.marker_at(0.0)[mask]])
            stat_pred = base_val @ beta_s
            stat_true = val.truth.true_rmst(tau)[mask]

            r = rep - lo
            c_dyn[r, j] = _c_index_arrays(dyn_pred, val.time[mask],
                                          val.status[mask], s_j, w)
            c_stat[r, j] = _c_index_arrays(stat_pred, val.time[mask],
                                           val.status[mask], s_j, w)
            pe_dyn[r, j] = float(np.mean(np.abs(dyn_pred - dyn_true)))
            pe_stat[r, j] = float(np.mean(np.abs(stat_pred - stat_true)))
    return lo, c_dyn, c_stat, pe_dyn, pe_stat


@dataclass(frozen=True)
class PredictionRow:
    """Mean out-of-sample performance at one landmark, dynamic vs static
    baseline; each model is scored against the truth of its own estimand."""

    landmark: float
    c_index_dynamic: float
    c_index_static: float
    pe_dynamic: float
    pe_static: float
    n_reps: int


def prediction_experiment(spec, grid, w, layout, n_train=500, n_val=300,
                          reps=200, seed=0, workers=1):
    """Train/validate replicates comparing the dynamic landmark model with a
    static baseline-covariate RMST regression refit at each horizon s_j + w."""
    grid = tuple(float(s) for s in grid)
    payloads = [(spec, grid, w, layout, n_train, n_val, seed, lo, hi)
                for lo, hi in _chunk_ranges(reps, workers)]
    parts = sorted(_run_chunked(_prediction_worker, payloads, workers))
    c_dyn = np.concatenate([p[1] for p in parts])
    c_stat = np.concatenate([p[2] for p in parts])
    pe_dyn = np.concatenate([p[3] for p in parts])
    pe_stat = np.concatenate([p[4] for p in parts])
    rows = []
    for j, s_j in enumerate(grid):
        rows.append(PredictionRow(
            landmark=s_j,
            c_index_dynamic=float(np.nanmean(c_dyn[:, j])),
            c_index_static=float(np.nanmean(c_stat[:, j])),
            pe_dynamic=float(np.mean(pe_dyn[:, j])),
            pe_static=float(np.mean(pe_stat[:, j])),
            n_reps=reps,
        ))
    return tuple(rows)

"""Landmark dataset construction: per-landmark rows with current covariate
values, and the stacked super prediction dataset clustered by subject.

Time-dependent covariates are resolved by last observation carried forward
(ties at the landmark inclusive); pseudo-values are computed per landmark on
that landmark's risk set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRiskSet, InvalidInput, MissingCovariate
from .surv import pseudo_observations

__all__ = [
    "LongitudinalRecord",
    "LandmarkRow",
    "SuperDataset",
    "build_landmark_dataset",
    "build_super_dataset",
]


@dataclass(frozen=True)
class LongitudinalRecord:
    """Biomarker measurements for one subject at one observation time."""

    id: object
    obs_time: float
    values: dict  # name -> measurement


@dataclass(frozen=True)
class LandmarkRow:
    id: object
    landmark: float
    pseudo_value: float
    covariates: tuple  # Z(s_l), fixed order across the dataset


class _History:
    """Per-subject, per-name sorted measurement history for LOCF lookups."""

    def __init__(self, longitudinal):
        store = {}
        for rec in longitudinal:
            if rec.obs_time < 0:
                raise InvalidInput(f"negative obs_time for subject {rec.id!r}")
            for name, value in rec.values.items():
                store.setdefault(rec.id, {}).setdefault(name, []).append(
                    (float(rec.obs_time), float(value))
                )
        self.names = sorted({n for per in store.values() for n in per})
        self._arr = {}
        for sid, per in store.items():
            self._arr[sid] = {}
            for name, pairs in per.items():
                pairs.sort()
                arr = np.array(pairs, dtype=float)
                self._arr[sid][name] = (arr[:, 0], arr[:, 1])

    def locf(self, sid, name, t):
        per = self._arr.get(sid)
        arr = per.get(name) if per else None
        if arr is None:
            raise MissingCovariate(sid, name, t)
        times, values = arr
        idx = np.searchsorted(times, t, side="right") - 1
        if idx < 0:
            raise MissingCovariate(sid, name, t)
        return float(values[idx])


def _resolve_names(survival, history, covariate_names):
    if covariate_names is not None:
        return list(covariate_names)
    baseline = list(survival[0].covariates) if survival else []
    return baseline + [n for n in history.names if n not in baseline]


def build_landmark_dataset(survival, longitudinal, s_l, w, covariate_names=None,
                           extend_tail=False):
    """One LandmarkRow per subject at risk at s_l, ordered by id.

    A covariate name is time-dependent when it appears in the longitudinal
    data (resolved by LOCF at s_l) and time-fixed otherwise (taken from the
    survival record).  Subjects lacking a required value raise
    MissingCovariate rather than being dropped.
    """
    history = longitudinal if isinstance(longitudinal, _History) else _History(longitudinal or [])
    names = _resolve_names(survival, history, covariate_names)
    pset = pseudo_observations(survival, s_l, w, extend_tail=extend_tail)
    baseline = {r.id: r.covariates for r in survival}
    td = set(history.names)

    rows = []
    for sid, pv in pset.entries:
        z = []
        for name in names:
            if name in td:
                z.append(history.locf(sid, name, s_l))
            else:
                try:
                    z.append(float(baseline[sid][name]))
                except KeyError:
                    raise MissingCovariate(sid, name, s_l) from None
        rows.append(LandmarkRow(id=sid, landmark=float(s_l), pseudo_value=float(pv),
                                covariates=tuple(z)))
    return rows


@dataclass(frozen=True)
class SuperDataset:
    """Stacked landmark datasets, rows ordered by (id, landmark)."""

    rows: tuple  # of LandmarkRow
    landmark_grid: tuple
    w: float
    subjects: tuple         # distinct ids, ascending
    cluster_sizes: tuple    # n_i aligned with subjects
    covariate_names: tuple

    @property
    def n_rows(self):
        return len(self.rows)

    @property
    def n_subjects(self):
        return len(self.subjects)

    def arrays(self):
        """(landmarks, pseudo_values, Z matrix, cluster_starts) as numpy arrays.

        cluster_starts has n_subjects + 1 entries; rows of subject i occupy
        [cluster_starts[i], cluster_starts[i+1]).
        """
        lm = np.array([r.landmark for r in self.rows])
        pv = np.array([r.pseudo_value for r in self.rows])
        z = np.array([r.covariates for r in self.rows], dtype=float)
        if z.size == 0:
            z = z.reshape(len(self.rows), 0)
        starts = np.concatenate(([0], np.cumsum(self.cluster_sizes))).astype(np.int64)
        return lm, pv, z, starts


def build_super_dataset(survival, longitudinal, grid, w, covariate_names=None,
                        extend_tail=False):
    """Concatenate per-landmark datasets over a strictly increasing grid."""
    grid = [float(s) for s in grid]
    if grid != sorted(grid) or len(set(grid)) != len(grid):
        raise InvalidInput("landmark grid must be strictly increasing")
    if not grid:
        raise InvalidInput("landmark grid is empty")
    history = _History(longitudinal or [])
    names = _resolve_names(survival, history, covariate_names)

    per_landmark = []
    for s_l in grid:
        try:
            per_landmark.append(
                build_landmark_dataset(survival, history, s_l, w,
                                       covariate_names=names, extend_tail=extend_tail)
            )
        except EmptyRiskSet as exc:
            raise EmptyRiskSet(f"landmark s={s_l}: {exc}") from None

    by_subject = {}
    for rows in per_landmark:
        for row in rows:
            by_subject.setdefault(row.id, []).append(row)
    subjects = sorted(by_subject)
    ordered = tuple(row for sid in subjects for row in by_subject[sid])
    sizes = tuple(len(by_subject[sid]) for sid in subjects)
    return SuperDataset(rows=ordered, landmark_grid=tuple(grid), w=float(w),
                        subjects=tuple(subjects), cluster_sizes=sizes,
                        covariate_names=tuple(names))

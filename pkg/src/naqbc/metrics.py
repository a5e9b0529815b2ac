"""Annotation burden, normalised efficiency, gamma sweeps and cross-problem transfer."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import UndefinedEfficiencyError

NOT_REACHED = None
DEFAULT_GAMMAS = (2, 4, 8, 16, 32, 64)
EXTENDED_GAMMAS = DEFAULT_GAMMAS + (128, 256)
UNPOOLED = ("random", "na_qbc")


def burden_from_log(step_log: Sequence, hits_required: int = 5) -> Optional[int]:
    """Train size at the step whose hit counter first reaches ``hits_required``."""
    for rec in step_log:
        if rec.cumulative_hits >= hits_required:
            return int(rec.train_size)
    return NOT_REACHED


def annotation_burden(run, hits_required: int = 5) -> Optional[int]:
    """Annotation burden of a finished run; ``None`` if the target was never met."""
    if run.status == "running":
        raise ValueError("run has not finished")
    if run.status != "stopped_at_target":
        return NOT_REACHED
    return burden_from_log(run.step_log, hits_required)


def _defined(values):
    return [float(v) for v in values if v is not None]


def efficiency(al_burdens: Iterable, rand_burdens: Iterable) -> List[float]:
    """All-pairs ratios ``T_al / T_rand`` in row-major (al, rand) order."""
    al_all, rand_all = list(al_burdens), list(rand_burdens)
    al, rand = _defined(al_all), _defined(rand_all)
    if not al or not rand:
        raise UndefinedEfficiencyError(
            "efficiency undefined: no reached burden on one side",
            n_al_excluded=len(al_all) - len(al), n_rand_excluded=len(rand_all) - len(rand))
    return [a / r for a in al for r in rand]


@dataclass(frozen=True)
class EtaSummary:
    n_runs: int
    n_excluded: int
    values: tuple
    mean: float
    median: float
    p25: float
    p75: float

    @classmethod
    def of(cls, etas: Sequence[float], n_runs: int, n_excluded: int) -> "EtaSummary":
        arr = np.asarray(etas, dtype=np.float64)
        if arr.size == 0:
            nan = float("nan")
            return cls(n_runs, n_excluded, (), nan, nan, nan, nan)
        p25, med, p75 = np.percentile(arr, [25, 50, 75])
        return cls(n_runs, n_excluded, tuple(arr.tolist()), float(arr.mean()),
                   float(med), float(p25), float(p75))

    @property
    def defined(self) -> bool:
        return len(self.values) > 0


def summarize(al_burdens, rand_burdens) -> EtaSummary:
    al, rand = list(al_burdens), list(rand_burdens)
    excluded = sum(v is None for v in al) + sum(v is None for v in rand)
    try:
        etas = efficiency(al, rand)
    except UndefinedEfficiencyError:
        etas = []
    return EtaSummary.of(etas, len(al), excluded)


Key = Tuple[str, str, Optional[int]]


class EfficiencyTable:
    """Burdens keyed by ``(problem, method, gamma, seed)``.

    ``gamma`` is ``None`` for the random baseline and query synthesis. A burden
    of ``None`` records a run that never reached the target.
    """

    def __init__(self):
        self._burdens: Dict[Key, Dict[int, Optional[int]]] = defaultdict(dict)

    def add(self, problem: str, method: str, gamma, seed: int, burden: Optional[int]) -> None:
        g = None if gamma is None else int(gamma)
        if burden is not None and burden <= 0:
            raise ValueError("burden must be positive")
        self._burdens[(problem, method, g)][int(seed)] = None if burden is None else int(burden)

    def add_run(self, run) -> None:
        self.add(run.problem.name, run.method, run.gamma, run.seed, annotation_burden(run))

    def burdens(self, problem: str, method: str, gamma=None) -> List[Optional[int]]:
        cell = self._burdens.get((problem, method, None if gamma is None else int(gamma)), {})
        return [cell[s] for s in sorted(cell)]

    def problems(self) -> List[str]:
        return sorted({k[0] for k in self._burdens})

    def methods(self, problem: str) -> List[str]:
        return sorted({k[1] for k in self._burdens if k[0] == problem})

    def gammas(self, problem: str, method: str) -> List[int]:
        return sorted(k[2] for k in self._burdens
                      if k[0] == problem and k[1] == method and k[2] is not None)

    def eta(self, problem: str, method: str, gamma=None) -> EtaSummary:
        return summarize(self.burdens(problem, method, gamma), self.burdens(problem, "random"))

    def rows(self) -> Iterable[tuple]:
        for (p, m, g) in sorted(self._burdens, key=lambda k: (k[0], k[1], -1 if k[2] is None else k[2])):
            for s, b in sorted(self._burdens[(p, m, g)].items()):
                yield p, m, g, s, b

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["problem", "method", "gamma", "seed", "burden"])
        for p, m, g, s, b in self.rows():
            w.writerow([p, m, "/" if g is None else g, s, "not_reached" if b is None else b])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EfficiencyTable":
        table = cls()
        for row in csv.DictReader(io.StringIO(text)):
            g = None if row["gamma"] in ("/", "") else int(row["gamma"])
            b = None if row["burden"] == "not_reached" else int(row["burden"])
            table.add(row["problem"], row["method"], g, int(row["seed"]), b)
        return table

    def merge(self, other: "EfficiencyTable") -> "EfficiencyTable":
        for p, m, g, s, b in other.rows():
            self.add(p, m, g, s, b)
        return self


def argmin_gamma(mean_by_gamma: Dict[int, float]) -> Optional[int]:
    """Smallest-mean gamma; equal means go to the smaller gamma. NaNs are ignored."""
    best = None
    for g in sorted(mean_by_gamma):
        v = mean_by_gamma[g]
        if v is None or np.isnan(v):
            continue
        if best is None or v < mean_by_gamma[best]:
            best = g
    return best


@dataclass
class SweepSummary:
    problem: str
    cells: Dict[Tuple[str, Optional[int]], EtaSummary]
    gamma_star: Dict[str, Optional[int]]
    empty_cells: List[Tuple[str, Optional[int]]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "gamma", "n_runs", "mean_eta", "median_eta", "p25", "p75", "n_excluded"])
        for (m, g), s in sorted(self.cells.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
            w.writerow([m, "/" if g is None else g, s.n_runs, _fmt(s.mean), _fmt(s.median),
                        _fmt(s.p25), _fmt(s.p75), s.n_excluded])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return "nan" if np.isnan(v) else repr(float(v))


def gamma_sweep_summary(table: EfficiencyTable, problem: str, statistic: str = "mean") -> SweepSummary:
    """Per-(method, gamma) eta statistics and the best gamma for each pool method.

    Cells with no defined eta are listed in ``empty_cells`` and take no part in
    the argmin.
    """
    if statistic not in ("mean", "median"):
        raise ValueError("statistic must be 'mean' or 'median'")
    cells, star, empty = {}, {}, []
    for m in table.methods(problem):
        if m == "random":
            continue
        gammas = table.gammas(problem, m) if m not in UNPOOLED else [None]
        by_gamma = {}
        for g in gammas:
            s = table.eta(problem, m, g)
            cells[(m, g)] = s
            if not s.defined:
                empty.append((m, g))
            elif g is not None:
                by_gamma[g] = getattr(s, statistic)
        if m not in UNPOOLED:
            star[m] = argmin_gamma(by_gamma)
    return SweepSummary(problem, cells, star, empty)


@dataclass
class CrossValResult:
    """``matrix[method][(source, target)]`` is the mean eta on ``target`` at ``gamma*(source)``."""

    problems: List[str]
    matrix: Dict[str, Dict[Tuple[str, str], float]]
    eta_cv: Dict[str, Dict[str, float]]
    skipped: List[Tuple[str, str, str]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "source", "target", "eta"])
        for m in sorted(self.matrix):
            for (src, tgt), v in sorted(self.matrix[m].items()):
                w.writerow([m, src, tgt, _fmt(v)])
        for m in sorted(self.eta_cv):
            for tgt, v in sorted(self.eta_cv[m].items()):
                w.writerow([m, "cv", tgt, _fmt(v)])
        return buf.getvalue()


def cross_validate(table: EfficiencyTable, problems: Sequence[str],
                   statistic: str = "mean") -> CrossValResult:
    """Average over other problems of the eta obtained with their best gamma.

    For a pool method and target ``j`` this is the mean over sources ``i != j``
    of the mean eta on ``j`` at ``gamma*(i)``. Methods without a pool ratio
    report their own mean eta on ``j``. Missing cells are skipped and listed.
    """
    problems = list(problems)
    if len(problems) < 2:
        raise ValueError("cross validation needs at least two problems")
    sweeps = {p: gamma_sweep_summary(table, p, statistic) for p in problems}
    methods = sorted({m for p in problems for m in table.methods(p)} - {"random"})
    matrix: Dict[str, Dict[Tuple[str, str], float]] = {}
    eta_cv: Dict[str, Dict[str, float]] = {}
    skipped = []
    for m in methods:
        matrix[m], eta_cv[m] = {}, {}
        for tgt in problems:
            if m in UNPOOLED:
                s = table.eta(tgt, m)
                if s.defined:
                    eta_cv[m][tgt] = s.mean
                else:
                    skipped.append((m, tgt, tgt))
                continue
            terms = []
            for src in problems:
                if src == tgt:
                    continue
                g = sweeps[src].gamma_star.get(m)
                s = table.eta(tgt, m, g) if g is not None else None
                if s is None or not s.defined:
                    skipped.append((m, src, tgt))
                    continue
                matrix[m][(src, tgt)] = s.mean
                terms.append(s.mean)
            if terms:
                eta_cv[m][tgt] = float(np.mean(terms))
    return CrossValResult(problems, matrix, eta_cv, skipped)

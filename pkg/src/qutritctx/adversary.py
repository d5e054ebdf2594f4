"""Noncontextual models that exploit outcome-dependent photon loss.

A strategy is a mixture over deterministic admissible assignments plus, for
each (assignment, stage), a probability of suppressing the click the
assignment would otherwise produce. Within a stage the clicked detector is
the one whose observable is -1; a completion slot clicks when every catalog
observable of the basis is +1; a catalog basis with all outcomes +1 gives no
click at all.

Feasibility for the search: every suppression probability lies in
``[0, 1 - eta]`` and, in every stage (including unrecorded ones), the overall
click rate is at least ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scipy.optimize import linprog

from . import engine
from .errors import ValidationError
from .harness import ExperimentPlan, ExperimentReport, analyze, base_index, default_plan
from .optics import ClickBatch

RATE_TOL = 1e-12


@dataclass(frozen=True)
class AdversarialStrategy:
    nchv: engine.NCHVStrategy
    suppression: np.ndarray  # (assignments, stages), ordered as plan.stages
    stages: tuple  # stage labels the columns refer to

    def to_json(self) -> dict:
        return {
            "assignments": [list(a) for a in self.nchv.assignments],
            "weights": [float(x) for x in self.nchv.weights],
            "suppression": [[float(x) for x in row] for row in self.suppression],
            "stages": list(self.stages),
        }

    @classmethod
    def from_json(cls, data: dict) -> "AdversarialStrategy":
        return cls(
            engine.NCHVStrategy(tuple(tuple(a) for a in data["assignments"]),
                                np.asarray(data["weights"], dtype=float)),
            np.asarray(data["suppression"], dtype=float),
            tuple(data["stages"]),
        )


def stage_response(assignment, stage) -> tuple[int, bool]:
    """(detector or 0, delayed) produced by a deterministic assignment."""
    slots = [base_index(lab) for lab in stage.basis]
    dly = base_index(stage.delayed) if stage.delayed else None
    for k, v in enumerate(slots, start=1):
        if v is not None and assignment[v - 1] == -1:
            return k, v == dly
    if None in slots:
        return slots.index(None) + 1, False
    return 0, False


def response_table(assignments, plan: ExperimentPlan) -> tuple[np.ndarray, np.ndarray]:
    det = np.zeros((len(assignments), len(plan.stages)), dtype=np.int64)
    dly = np.zeros_like(det, dtype=bool)
    for a, lam in enumerate(assignments):
        for s, stage in enumerate(plan.stages):
            det[a, s], dly[a, s] = stage_response(lam, stage)
    return det, dly


def validate(strategy: AdversarialStrategy, eta: float, plan: ExperimentPlan) -> None:
    q = np.asarray(strategy.suppression, dtype=float)
    if q.shape != (len(strategy.nchv.assignments), len(plan.stages)):
        raise ValidationError("suppression table must be (assignments, stages)")
    if tuple(strategy.stages) != tuple(s.label for s in plan.stages):
        raise ValidationError("suppression columns do not match the plan's stages")
    if np.any(q < 0) or np.any(q > 1.0 - eta + 1e-12):
        raise ValidationError(f"suppression probabilities must lie in [0, 1 - eta] = [0, {1 - eta:g}]")
    g = engine.catalog_graph()
    for lam in strategy.nchv.assignments:
        if not engine.is_admissible(g, lam):
            raise ValidationError(f"assignment {lam} violates exclusivity")


def click_rates(strategy: AdversarialStrategy, plan: ExperimentPlan) -> np.ndarray:
    det, _ = response_table(strategy.nchv.assignments, plan)
    p = np.asarray(strategy.nchv.weights)
    return p @ ((1.0 - strategy.suppression) * (det > 0))


def expected_report(strategy: AdversarialStrategy, eta: float, plan: ExperimentPlan) -> ExperimentReport:
    """Exact post-selected statistics of the strategy (no sampling)."""
    det, dly = response_table(strategy.nchv.assignments, plan)
    p = np.asarray(strategy.nchv.weights)
    batches, weights = {}, {}
    m = len(p)
    for s, stage in enumerate(plan.stages):
        batches[stage.label] = ClickBatch(stage.label, np.arange(m), np.ones(m, dtype=bool),
                                          det[:, s].copy(), dly[:, s].copy())
        weights[stage.label] = p * (1.0 - strategy.suppression[:, s])
    return analyze(plan, batches, eta, weights=weights)


def adversarial_run(strategy: AdversarialStrategy, eta: float, plan: ExperimentPlan, trials: int,
                    seed, force_empirical: bool = False) -> ExperimentReport:
    """Monte Carlo of the strategy through the normal post-selection and estimators."""
    validate(strategy, eta, plan)
    det, dly = response_table(strategy.nchv.assignments, plan)
    p = np.asarray(strategy.nchv.weights)
    cdf = np.cumsum(p)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    batches = {}
    for s, (stage, child) in enumerate(zip(plan.stages, root.spawn(len(plan.stages)))):
        rng = np.random.default_rng(child)
        u = rng.random((trials, 2))
        lam = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), len(p) - 1)
        survive = u[:, 1] >= strategy.suppression[lam, s]
        d = np.where(survive, det[lam, s], 0)
        batches[stage.label] = ClickBatch(stage.label, np.arange(trials, dtype=np.int64),
                                          np.ones(trials, dtype=bool), d, dly[lam, s] & (d > 0))
    return analyze(plan, batches, eta, force_empirical=force_empirical)


class _Objective:
    """Vectorized expected post-selected LHS for a fixed plan and assignment pool."""

    def __init__(self, assignments, plan: ExperimentPlan, eta: float):
        self.plan = plan
        self.eta = eta
        det, dly = response_table(assignments, plan)
        self.clicks = (det > 0).astype(float)
        self.const = 0.0
        terms = []  # (stage index, per-assignment value vector)
        for s, stage in enumerate(plan.stages):
            if not stage.pairs:
                continue
            if not stage.record_data:
                self.const -= 1.0
                continue
            vals = np.zeros(len(assignments))
            names = list(stage.pairs) + ([("9",)] if stage.label == plan.a9_stage else [])
            for name in names:
                prod = np.ones(len(assignments))
                for lab in name:
                    prod *= [_outcome(stage, lab, det[a, s], dly[a, s]) for a in range(len(assignments))]
                vals += prod
            terms.append((s, vals))
        self.terms = terms

    def rates(self, p, q):
        return p @ ((1.0 - q) * self.clicks)

    def value(self, p, q) -> float:
        total = self.const
        for s, vals in self.terms:
            w = p * (1.0 - q[:, s]) * self.clicks[:, s]
            z = w.sum()
            if z <= 0:
                return np.inf
            total += float(np.dot(w, vals) / z)
        return total

    def penalized(self, p, q, weight: float = 1e3) -> float:
        deficit = np.clip(self.eta - self.rates(p, q), 0.0, None).sum()
        return self.value(p, q) + weight * deficit


def _outcome(stage, label, det, dly) -> int:
    if label == stage.delayed:
        return -1 if dly else 1
    return -1 if det == stage.basis.index(label) + 1 else 1


@dataclass
class SearchResult:
    strategy: AdversarialStrategy
    expected_lhs: float
    eta: float
    evaluations: int
    rates: np.ndarray


def _repair(obj: _Objective, p, q):
    """Shrink suppression, then mix toward full-click assignments, until every rate >= eta."""
    def feasible(pp, qq):
        return np.all(obj.rates(pp, qq) >= obj.eta - RATE_TOL)

    if feasible(p, q):
        return p, q
    lo, hi = 0.0, 1.0
    if feasible(p, np.zeros_like(q)):
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if feasible(p, q * (1 - mid)):
                hi = mid
            else:
                lo = mid
        return p, q * (1 - hi)
    full = np.all(obj.clicks > 0, axis=1).astype(float)
    base = full / full.sum()
    q0 = np.zeros_like(q)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if feasible((1 - mid) * p + mid * base, q0):
            hi = mid
        else:
            lo = mid
    return (1 - hi) * p + hi * base, q0


def _lp_start(obj: _Objective, rate: float):
    """Optimal strategy when every recorded stage is forced to click at ``rate``.

    With the per-stage normalizers fixed the objective is linear in
    ``x[a, s] = p[a] (1 - q[a, s]) clicks[a, s]``.
    """
    m, ns = obj.clicks.shape
    eta = obj.eta
    nv = m + m * ns
    col = lambda a, s: m + a * ns + s  # noqa: E731
    c = np.zeros(nv)
    recorded = {s for s, _ in obj.terms}
    for s, vals in obj.terms:
        c[[col(a, s) for a in range(m)]] += vals / rate
    a_eq = [np.r_[np.ones(m), np.zeros(m * ns)]]
    b_eq = [1.0]
    a_ub, b_ub = [], []
    for s in range(ns):
        row = np.zeros(nv)
        row[[col(a, s) for a in range(m)]] = 1.0
        if s in recorded:
            a_eq.append(row)
            b_eq.append(rate)
        else:
            a_ub.append(-row)
            b_ub.append(-eta)
        for a in range(m):
            hi = np.zeros(nv)
            hi[col(a, s)], hi[a] = 1.0, -obj.clicks[a, s]
            lo = np.zeros(nv)
            lo[col(a, s)], lo[a] = -1.0, eta * obj.clicks[a, s]
            a_ub += [hi, lo]
            b_ub += [0.0, 0.0]
    res = linprog(c, A_ub=np.array(a_ub), b_ub=b_ub, A_eq=np.array(a_eq), b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if not res.success:
        return None
    p = np.clip(res.x[:m], 0.0, None)
    p /= p.sum()
    x = res.x[m:].reshape(m, ns)
    denom = p[:, None] * obj.clicks
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(denom > 1e-15, 1.0 - x / denom, 0.0)
    return p, np.clip(q, 0.0, 1.0 - eta)


def search_adversarial(eta: float, budget: int = 20_000, seed=0, plan: ExperimentPlan | None = None,
                       restarts: int = 8, lp_grid: int = 11) -> SearchResult:
    """Random-restart hill climb for the lowest expected post-selected LHS.

    Starts are the best pure assignment that clicks in every stage, the best
    of ``lp_grid`` fixed-click-rate linear programs (0 disables them), and
    random mixtures. The returned value is the best found, not a certified
    optimum.
    """
    if not 0 < eta <= 1:
        raise ValidationError("eta must lie in (0, 1]")
    plan = plan or default_plan()
    g = engine.catalog_graph()
    pool = engine.enumerate_nchv(g)
    obj = _Objective(pool, plan, eta)
    m, ns = obj.clicks.shape
    qmax = 1.0 - eta
    rng = np.random.default_rng(seed)
    evals = 0

    best_p, best_q, best_v = None, None, np.inf
    full = np.flatnonzero(np.all(obj.clicks > 0, axis=1))
    for a in full:
        p = np.zeros(m)
        p[a] = 1.0
        v = obj.penalized(p, np.zeros((m, ns)))
        evals += 1
        if v < best_v:
            best_p, best_q, best_v = p, np.zeros((m, ns)), v

    starts = [(best_p.copy(), best_q.copy())]
    lp_best = None
    for rate in np.linspace(eta, 1.0, lp_grid) if lp_grid > 0 else []:
        cand = _lp_start(obj, float(rate))
        if cand is None:
            continue
        cand = _repair(obj, *cand)
        v = obj.value(*cand)
        evals += 1
        if lp_best is None or v < lp_best[0]:
            lp_best = (v, cand)
    if lp_best is not None:
        starts.append(lp_best[1])
        if lp_best[0] < best_v:
            best_v, (best_p, best_q) = lp_best[0], lp_best[1]
    for _ in range(max(restarts - 1, 0)):
        p = rng.dirichlet(np.full(m, 0.3))
        starts.append((p, rng.uniform(0, qmax, (m, ns))))

    per_start = max(budget // max(len(starts), 1), 1)
    for p, q in starts:
        cur = obj.penalized(p, q)
        step = 0.2
        evals += 1
        for _ in range(per_start):
            cp, cq = p.copy(), q.copy()
            if rng.random() < 0.5 or qmax == 0:
                k = rng.integers(m, size=rng.integers(1, 4))
                cp[k] = np.clip(cp[k] + step * rng.standard_normal(len(k)), 0.0, None)
                if cp.sum() <= 0:
                    continue
                cp /= cp.sum()
            else:
                i, j = rng.integers(m), rng.integers(ns)
                cq[i, j] = np.clip(cq[i, j] + step * qmax * rng.standard_normal(), 0.0, qmax)
            val = obj.penalized(cp, cq)
            evals += 1
            if val < cur:
                p, q, cur = cp, cq, val
            else:
                step = max(step * 0.999, 1e-4)
        p, q = _repair(obj, p, q)
        v = obj.value(p, q)
        if v < best_v:
            best_p, best_q, best_v = p, q, v

    keep = best_p > 0
    p = best_p[keep] / best_p[keep].sum()
    strategy = AdversarialStrategy(
        engine.NCHVStrategy(tuple(pool[i] for i in np.flatnonzero(keep)), p),
        best_q[keep], tuple(s.label for s in plan.stages),
    )
    exact = expected_report(strategy, eta, plan).lhs
    return SearchResult(strategy, exact, eta, evals, click_rates(strategy, plan))

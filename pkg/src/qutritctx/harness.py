"""Measurement campaign: stage plan, correlation estimates, inequality evaluation.

A stage measures one orthonormal basis. Each detector slot carries an
observable label (``"5"``, ``"2'"``) or ``"x"`` for a completion ray outside
the catalog. Delay stages also carry a delay-type observable (``"2"``) whose
outcome is -1 exactly when the click arrives late.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core, engine
from .errors import ConfigurationError, InsufficientDataError, UsageError, ValidationError
from .optics import (
    ClickBatch, DelayTag, DetectorBank, OpticalCircuit, compile_basis, compile_orthogonal,
    circuit_unitary, jitter, run_batch,
)

COMPLETION = "x"
VERDICT_VIOLATION = "violation"
VERDICT_LOSSY = "inconclusive: below efficiency threshold"
VERDICT_NONE = "no violation"
# Significance (in standard errors) used for verdicts.
VERDICT_SIGMAS = 3.0


def base_index(label: str) -> int | None:
    """Catalog vertex behind an observable label, ``None`` for completion rays."""
    if label == COMPLETION:
        return None
    return int(label.rstrip("'"))


def _ray(label: str) -> np.ndarray:
    return core.RAYS[base_index(label) - 1].real


def completed_basis(labels) -> np.ndarray:
    """Rays for a 3-slot basis; a single ``"x"`` slot is filled by the cross product."""
    rows = [None if lab == COMPLETION else _ray(lab) for lab in labels]
    missing = [k for k, r in enumerate(rows) if r is None]
    if len(missing) > 1:
        raise ValidationError("at most one completion slot per basis")
    if missing:
        a, b = (rows[k] for k in range(3) if k != missing[0])
        c = np.cross(a, b)
        rows[missing[0]] = c / np.linalg.norm(c)
    t = np.array(rows)
    if np.max(np.abs(t @ t.T - np.eye(3))) > 1e-9:
        raise ValidationError(f"basis {labels} is not orthonormal")
    return t


@dataclass(frozen=True)
class StageConfig:
    label: str
    basis: tuple  # observable label per detector slot
    pairs: tuple = ()  # edge correlations feeding the main inequality
    aux_pairs: tuple = ()  # primed / calibration correlations
    delayed: str | None = None  # delay-type observable, e.g. "2"
    via: tuple | None = None  # basis in which the delayed mode is created
    record_data: bool = True
    setup: str | None = None  # stages sharing a setup share one (jittered) circuit

    @property
    def setup_key(self) -> str:
        return self.setup or self.label

    @property
    def rays(self) -> np.ndarray:
        return completed_basis(self.basis)

    def observable(self, label: str):
        if label == self.delayed:
            return ("delay",)
        if label in self.basis:
            return ("det", self.basis.index(label) + 1)
        raise ValidationError(f"stage {self.label} cannot measure {label}")

    def is_full_basis(self) -> bool:
        return COMPLETION not in self.basis and self.delayed is None

    def circuit(self, legal: bool = True) -> OpticalCircuit:
        target = self.rays
        if self.delayed is None:
            return compile_basis(target, legal=legal, label=self.label)
        via = completed_basis(self.via or ("1", "2", "3"))
        first = compile_basis(via, legal=legal, label=self.label)
        mode = [base_index(v) for v in (self.via or ("1", "2", "3"))].index(base_index(self.delayed)) + 1
        p1 = np.real(circuit_unitary(first))
        second = compile_orthogonal(target @ p1.T, legal=legal, label=self.label)
        return OpticalCircuit(
            first.elements + (DelayTag(mode),) + second.elements, self.label, legal
        )


def is_exclusive(a: str, b: str, g: engine.ExclusivityGraph | None = None) -> bool:
    ia, ib = base_index(a), base_index(b)
    if ia is None or ib is None or ia == ib:
        return False
    g = g or engine.catalog_graph()
    return g.has_edge(ia, ib)


@dataclass(frozen=True)
class ExperimentPlan:
    stages: tuple
    trials: int = 100_000
    a9_stage: str = "S6"

    def stage(self, label: str) -> StageConfig:
        for s in self.stages:
            if s.label == label:
                return s
        raise ConfigurationError(f"no stage {label!r} in plan")

    def edge_pairs(self) -> list[tuple[str, str]]:
        return [p for s in self.stages for p in s.pairs]

    def has_calibration(self) -> bool:
        return all(any(s.label == f"C{x}" for s in self.stages) for x in ("2", "8", "3"))

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "a9_stage": self.a9_stage,
            "stages": [
                {"label": s.label, "basis": list(s.basis), "pairs": [list(p) for p in s.pairs],
                 "aux_pairs": [list(p) for p in s.aux_pairs], "delayed": s.delayed,
                 "via": list(s.via) if s.via else None, "record_data": s.record_data,
                 "setup": s.setup}
                for s in self.stages
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentPlan":
        stages = tuple(
            StageConfig(
                d["label"], tuple(d["basis"]), tuple(tuple(p) for p in d["pairs"]),
                tuple(tuple(p) for p in d.get("aux_pairs", [])), d.get("delayed"),
                tuple(d["via"]) if d.get("via") else None, d.get("record_data", True),
                d.get("setup"),
            )
            for d in data["stages"]
        )
        return cls(stages, int(data["trials"]), data.get("a9_stage", "S6"))


def default_plan(trials: int = 100_000, a9_stage: str = "S6", calibration: bool = False,
                 record_all: bool = False) -> ExperimentPlan:
    """Nine stages covering every edge once; optional calibration stages C2, C8, C3."""
    stages = [
        StageConfig("S1", ("1", "2", "3"), (("1", "2"), ("1", "3"), ("2", "3")), record_data=record_all),
        StageConfig("S2", ("1", "4", "x"), (("1", "4"),)),
        StageConfig("S3", ("7", "4", "8"), (("7", "4"), ("4", "8"), ("7", "8")), record_data=record_all),
        StageConfig("S4", ("5", "7", "x"), (("5", "7"),)),
        StageConfig("S5", ("5", "2'", "x"), (("2", "5"),), (("5", "2'"),), delayed="2"),
        StageConfig("S6", ("9", "5", "x"), (("9", "5"),)),
        StageConfig("S7", ("9", "6", "x"), (("9", "6"),)),
        StageConfig("S8", ("6", "8'", "x"), (("8", "6"),), (("6", "8'"),), delayed="8",
                    via=("7", "4", "8")),
        StageConfig("S9", ("6", "3'", "x"), (("3", "6"),), (("6", "3'"),), delayed="3"),
    ]
    if calibration:
        for parent, x in (("S5", "2"), ("S8", "8"), ("S9", "3")):
            p = next(s for s in stages if s.label == parent)
            stages.append(StageConfig(f"C{x}", p.basis, (), ((x, f"{x}'"),), p.delayed, p.via,
                                      True, setup=parent))
    if a9_stage not in ("S6", "S7"):
        raise UsageError("<A9> must come from stage S6 or S7")
    return ExperimentPlan(tuple(stages), trials, a9_stage)


# --- estimation ----------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationEstimate:
    pair: tuple
    stage: str
    value: float
    n: float  # post-selected weight used (a count for sampled data)
    violations: float
    stderr: float
    minus_counts: tuple = (0.0, 0.0)

    def to_json(self) -> dict:
        return {"pair": list(self.pair), "stage": self.stage, "value": self.value, "n": self.n,
                "violations": self.violations, "stderr": self.stderr,
                "minus_counts": list(self.minus_counts)}


def _postselect(batch: ClickBatch, weights=None):
    keep = batch.heralded & (batch.detector > 0)
    w = np.ones(len(batch)) if weights is None else np.asarray(weights, dtype=float)
    return batch.detector[keep], batch.delayed[keep], w[keep]


def outcomes(stage: StageConfig, label: str, detector: np.ndarray, delayed: np.ndarray) -> np.ndarray:
    kind = stage.observable(label)
    if kind[0] == "delay":
        return np.where(delayed, -1, 1)
    return np.where(detector == kind[1], -1, 1)


def _binomial_se(value: float, n: float) -> float:
    return math.sqrt(max(1.0 - value * value, 0.0) / n) if n > 0 else math.inf


def estimate_correlation(batch: ClickBatch, stage: StageConfig, pair, weights=None,
                         g: engine.ExclusivityGraph | None = None) -> CorrelationEstimate:
    """Mean product of the two outcomes over post-selected trials.

    For an exclusive pair a trial where both outcomes are -1 is an
    exclusivity violation: it is counted and left out, so the value equals
    ``1 - 2 f_i - 2 f_j`` over the remaining trials.
    """
    det, dly, w = _postselect(batch, weights)
    if w.sum() <= 0:
        raise InsufficientDataError(f"stage {stage.label}: no post-selected trials for {pair}")
    a = outcomes(stage, pair[0], det, dly)
    b = outcomes(stage, pair[1], det, dly)
    both = (a == -1) & (b == -1)
    viol = both if is_exclusive(pair[0], pair[1], g) else np.zeros_like(both)
    wk = np.where(viol, 0.0, w)
    n = float(wk.sum())
    if n <= 0:
        raise InsufficientDataError(f"stage {stage.label}: every trial violates exclusivity for {pair}")
    value = float(np.dot(wk, a * b) / n)
    return CorrelationEstimate(
        tuple(pair), stage.label, value, n, float(w[viol].sum()), _binomial_se(value, n),
        (float(wk[a == -1].sum()), float(wk[b == -1].sum())),
    )


def estimate_mean(batch: ClickBatch, stage: StageConfig, label: str, weights=None) -> CorrelationEstimate:
    det, dly, w = _postselect(batch, weights)
    n = float(w.sum())
    if n <= 0:
        raise InsufficientDataError(f"stage {stage.label}: no post-selected trials for <A{label}>")
    a = outcomes(stage, label, det, dly)
    value = float(np.dot(w, a) / n)
    return CorrelationEstimate((label,), stage.label, value, n, 0.0, _binomial_se(value, n),
                               (float(w[a == -1].sum()), 0.0))


@dataclass(frozen=True)
class CompletenessCheck:
    value: float
    n: float
    anomalies: float  # trials without exactly one -1 among the three observables
    ok: bool

    @property
    def deviation(self) -> float:
        return self.value + 1.0


def completeness_from_outcomes(table, weights=None, tol: float = 1e-12) -> CompletenessCheck:
    """``sum_{pairs} (1 - 2 f_i - 2 f_j) = 3 - 4 (f_i + f_j + f_k)`` from a (trials, 3) +/-1 table."""
    table = np.asarray(table)
    w = np.ones(len(table)) if weights is None else np.asarray(weights, dtype=float)
    n = float(w.sum())
    if n <= 0:
        raise InsufficientDataError("no post-selected trials")
    # One division of the summed -1 weight keeps integer data exact.
    minus = float((w[:, None] * (table == -1)).sum())
    value = float(3.0 - 4.0 * (minus / n))
    anomalies = float(w[(table == -1).sum(axis=1) != 1].sum())
    return CompletenessCheck(value, n, anomalies, anomalies == 0 and abs(value + 1.0) <= tol)


def completeness_check(batch: ClickBatch, stage: StageConfig, weights=None) -> CompletenessCheck:
    if not stage.is_full_basis():
        raise ConfigurationError(f"stage {stage.label} does not measure a catalog basis")
    det, dly, w = _postselect(batch, weights)
    table = np.column_stack([outcomes(stage, lab, det, dly) for lab in stage.basis])
    return completeness_from_outcomes(table, w)


def renormalized_probability(counts: dict) -> dict:
    """Condition out the no-click outcome (key ``None``)."""
    if any(v < 0 for v in counts.values()):
        raise ValidationError("counts must be nonnegative")
    clicks = {k: v for k, v in counts.items() if k is not None}
    total = sum(clicks.values())
    if total <= 0:
        raise InsufficientDataError("no single-click trials")
    return {k: v / total for k, v in clicks.items()}


# --- report --------------------------------------------------------------------


@dataclass
class ExperimentReport:
    estimates: dict  # "i,j" -> CorrelationEstimate for every edge with data
    analytic: dict  # "i,j,k" -> -1 for each completeness-filled triple
    a9: CorrelationEstimate
    components: list  # (name, value) summed in order into lhs
    lhs: float
    lhs_stderr: float
    eta: float
    bound: float
    lossy_bound: float
    verdict: str
    violations: float
    aux: dict = field(default_factory=dict)  # primed / calibration correlations
    completeness: dict = field(default_factory=dict)
    a9_alternate: CorrelationEstimate | None = None
    config: dict = field(default_factory=dict)

    @property
    def sigmas_below_bound(self) -> float:
        return (self.bound - self.lhs) / self.lhs_stderr if self.lhs_stderr > 0 else math.inf

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "config": self.config,
            "lhs": self.lhs,
            "lhs_stderr": self.lhs_stderr,
            "eta": self.eta,
            "bound": self.bound,
            "lossy_bound": self.lossy_bound,
            "verdict": self.verdict,
            "sigmas_below_bound": self.sigmas_below_bound,
            "violations": self.violations,
            "components": [[k, v] for k, v in self.components],
            "estimates": {k: e.to_json() for k, e in self.estimates.items()},
            "analytic": self.analytic,
            "a9": self.a9.to_json(),
            "a9_alternate": self.a9_alternate.to_json() if self.a9_alternate else None,
            "aux": {k: e.to_json() for k, e in self.aux.items()},
            "completeness": {k: {"value": c.value, "n": c.n, "anomalies": c.anomalies, "ok": c.ok}
                             for k, c in self.completeness.items()},
        }

    def csv_rows(self) -> list[dict]:
        rows = []
        for key, e in list(self.estimates.items()) + [("A9", self.a9)] + list(self.aux.items()):
            rows.append({"pair": key, "stage": e.stage, "value": e.value, "stderr": e.stderr,
                         "n": e.n, "violations": e.violations})
        for key, v in self.analytic.items():
            rows.append({"pair": key, "stage": "analytic", "value": v, "stderr": 0.0, "n": 0,
                         "violations": 0})
        return rows


def _key(pair) -> str:
    return ",".join(pair)


def verdict(lhs: float, se: float, eta: float, bound: float = engine.CLASSICAL_BOUND) -> str:
    lossy = engine.lossy_bound(eta, bound) if eta > 0 else -math.inf
    if lhs + VERDICT_SIGMAS * se < min(bound, lossy):
        return VERDICT_VIOLATION
    if lhs + VERDICT_SIGMAS * se < bound:
        return VERDICT_LOSSY
    return VERDICT_NONE


def _stage_stderr(batch: ClickBatch, stage: StageConfig, names: list, weights=None) -> float:
    """Std. error of the stage's summed contribution, from per-trial totals."""
    det, dly, w = _postselect(batch, weights)
    total = np.zeros(len(det))
    keep = np.ones(len(det), dtype=bool)
    for name in names:
        if len(name) == 1:
            total += outcomes(stage, name[0], det, dly)
            continue
        a = outcomes(stage, name[0], det, dly)
        b = outcomes(stage, name[1], det, dly)
        if is_exclusive(*name):
            keep &= ~((a == -1) & (b == -1))
        total += a * b
    w = w[keep]
    total = total[keep]
    n = w.sum()
    if n <= 0:
        return math.inf
    mean = np.dot(w, total) / n
    var = np.dot(w, (total - mean) ** 2) / n
    return float(math.sqrt(var / n))


def analyze(plan: ExperimentPlan, batches: dict, eta: float, *, weights: dict | None = None,
            force_empirical: bool = False, config: dict | None = None) -> ExperimentReport:
    """Turn per-stage click data into an ExperimentReport.

    ``weights`` (stage -> per-row weights) lets the same code evaluate exact
    outcome distributions instead of sampled counts.
    """
    weights = weights or {}
    estimates: dict = {}
    analytic: dict = {}
    aux: dict = {}
    completeness: dict = {}
    components: list = []
    var = 0.0
    violations = 0.0
    a9 = a9_alt = None
    for stage in plan.stages:
        batch = batches[stage.label]
        w = weights.get(stage.label)
        if not stage.pairs:
            for p in stage.aux_pairs:
                aux[_key(p)] = estimate_correlation(batch, stage, p, w)
            continue
        use_data = stage.record_data or force_empirical
        if stage.is_full_basis() and use_data:
            completeness[stage.label] = completeness_check(batch, stage, w)
        if not use_data:
            triple = ",".join(stage.basis)
            analytic[triple] = -1.0
            components.append((triple, -1.0))
            continue
        names = []
        for p in stage.pairs:
            e = estimate_correlation(batch, stage, p, w)
            estimates[_key(p)] = e
            components.append((_key(p), e.value))
            violations += e.violations
            names.append(p)
        for p in stage.aux_pairs:
            aux[_key(p)] = estimate_correlation(batch, stage, p, w)
        if "9" in stage.basis:
            m = estimate_mean(batch, stage, "9", w)
            if stage.label == plan.a9_stage:
                a9 = m
                components.append(("9", m.value))
                names.append(("9",))
            else:
                a9_alt = m
        var += _stage_stderr(batch, stage, names, w) ** 2 if names else 0.0
    if a9 is None:
        raise ConfigurationError(f"<A9> source stage {plan.a9_stage} missing or not recorded")
    lhs = math.fsum(v for _, v in components)
    se = math.sqrt(var)
    bound = engine.CLASSICAL_BOUND
    return ExperimentReport(
        estimates, analytic, a9, components, lhs, se, eta, bound,
        engine.lossy_bound(eta, bound) if eta > 0 else -math.inf, verdict(lhs, se, eta, bound),
        violations, aux, completeness, a9_alt, config or {},
    )


def stage_streams(seed, n: int) -> list[tuple[np.random.SeedSequence, np.random.SeedSequence]]:
    """(jitter, trial) seed sequences per stage, fixed by the root seed."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [tuple(c.spawn(2)) for c in root.spawn(n)]


def simulate_plan(rho, plan: ExperimentPlan, bank: DetectorBank, seed, sigma: float = 0.0,
                  legal: bool = True) -> tuple[dict, dict]:
    """Run every stage; returns (batches, circuits) keyed by stage label."""
    rho = core.as_density(rho, 1e-9)
    streams = stage_streams(seed, len(plan.stages))
    circuits: dict = {}
    by_setup: dict = {}
    batches: dict = {}
    for stage, (js, ts) in zip(plan.stages, streams):
        key = stage.setup_key
        if key not in by_setup:
            by_setup[key] = jitter(stage.circuit(legal), sigma, np.random.default_rng(js))
        circuits[stage.label] = by_setup[key]
        batches[stage.label] = run_batch(rho, by_setup[key], bank, plan.trials,
                                         np.random.default_rng(ts), stage.label)
    return batches, circuits


def run_plan(rho, plan: ExperimentPlan, bank: DetectorBank, seed, sigma: float = 0.0,
             force_empirical: bool = False, config: dict | None = None) -> ExperimentReport:
    batches, _ = simulate_plan(rho, plan, bank, seed, sigma)
    return analyze(plan, batches, bank.eta_min, force_empirical=force_empirical, config=config)


@dataclass(frozen=True)
class ErrorFormResult:
    lhs: float
    rhs: float
    epsilons: dict  # "a", "b", "c" -> (value, stderr)

    @property
    def violated(self) -> bool:
        return self.lhs < self.rhs


_PRIMED = {("2", "5"): ("5", "2'"), ("8", "6"): ("6", "8'"), ("3", "6"): ("6", "3'")}
_EPS = {"a": "2,2'", "b": "8,8'", "c": "3,3'"}


def evaluate_error_form(report: ExperimentReport) -> ErrorFormResult:
    """Primed-correlation form of the inequality with reconstruction error terms.

    The three delay-based correlations are replaced by their detector-based
    primed counterparts and the bound is lowered by
    ``eps_x = 1 - <A_x A_x'>`` from the calibration stages.
    """
    missing = [k for k in _EPS.values() if k not in report.aux]
    if missing:
        raise ConfigurationError(f"calibration correlations missing: {missing}")
    parts = []
    for name, value in report.components:
        pair = tuple(name.split(","))
        if pair in _PRIMED:
            key = _key(_PRIMED[pair])
            if key not in report.aux:
                raise ConfigurationError(f"primed correlation {key} missing")
            value = report.aux[key].value
        parts.append(value)
    eps = {x: (1.0 - report.aux[k].value, report.aux[k].stderr) for x, k in _EPS.items()}
    return ErrorFormResult(math.fsum(parts), report.bound - sum(v for v, _ in eps.values()), eps)


@dataclass
class SweepRow:
    eta: float
    sigma: float
    lhs: float
    lhs_stderr: float
    lossy_bound: float
    quantum_target: float
    verdict: str
    eps_a: float | None = None


def eta_sweep(rho, etas, plan: ExperimentPlan, seed, sigma: float = 0.0, eta0: float = 1.0,
              m=None) -> list[SweepRow]:
    if not list(etas):
        raise UsageError("empty efficiency grid")
    m = engine.witness(engine.catalog_graph(), engine.main_functional()) if m is None else m
    target = engine.lhs(rho, m)
    rows = []
    for k, eta in enumerate(etas):
        child = np.random.SeedSequence(seed).spawn(len(etas))[k]
        rep = run_plan(rho, plan, DetectorBank.uniform(eta, eta0), child, sigma)
        eps = None
        if plan.has_calibration():
            eps = evaluate_error_form(rep).epsilons["a"][0]
        rows.append(SweepRow(float(eta), sigma, rep.lhs, rep.lhs_stderr, rep.lossy_bound, target,
                             rep.verdict, eps))
    return rows

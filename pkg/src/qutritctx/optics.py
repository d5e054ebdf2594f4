"""Linear-optical qutrit: three modes, plane rotations, delay tagging, lossy detectors.

Mode 1 is (path u, H), mode 2 is (path u, V), mode 3 is (path d, H). A
wave plate rotates the two polarization modes of path u; a recombiner swaps
two same-polarization modes between paths. Circuits are analyzers: a photon
in state ``t_k`` leaves in output mode ``k`` when the circuit was compiled for
targets ``t``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from . import core
from .errors import ConstructionError, ValidationError

TWO_PI = 2.0 * np.pi
MODES = {1: ("u", "H"), 2: ("u", "V"), 3: ("d", "H")}


def _norm_pair(pair) -> tuple[int, int]:
    i, j = (int(x) for x in pair)
    if i == j or not {i, j} <= {1, 2, 3}:
        raise ValidationError(f"invalid mode pair {pair!r}")
    return (min(i, j), max(i, j))


@dataclass(frozen=True)
class WavePlate:
    pair: tuple
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "pair", _norm_pair(self.pair))
        object.__setattr__(self, "angle", float(self.angle) % TWO_PI)

    @property
    def legal(self) -> bool:
        i, j = self.pair
        return MODES[i][0] == MODES[j][0]


@dataclass(frozen=True)
class Recombiner:
    pair: tuple

    def __post_init__(self):
        object.__setattr__(self, "pair", _norm_pair(self.pair))

    @property
    def legal(self) -> bool:
        i, j = self.pair
        return MODES[i][1] == MODES[j][1]


@dataclass(frozen=True)
class DelayTag:
    mode: int
    delay: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"invalid mode {self.mode!r}")
        if self.delay < 1:
            raise ValidationError("delay must be a positive number of units")

    legal = True


Element = Union[WavePlate, Recombiner, DelayTag]


@dataclass(frozen=True)
class OpticalCircuit:
    elements: tuple = ()
    label: str = ""
    enforce_legality: bool = True

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.enforce_legality:
            for e in self.elements:
                if not e.legal:
                    raise ConstructionError(f"{e!r} is not physically legal in this mode layout")

    def __add__(self, other: "OpticalCircuit") -> "OpticalCircuit":
        return OpticalCircuit(
            self.elements + other.elements, self.label or other.label,
            self.enforce_legality and other.enforce_legality,
        )

    @property
    def wave_plates(self) -> list[WavePlate]:
        return [e for e in self.elements if isinstance(e, WavePlate)]

    @property
    def max_delay(self) -> int:
        return sum(e.delay for e in self.elements if isinstance(e, DelayTag))


def rotation(pair, theta: float) -> np.ndarray:
    i, j = _norm_pair(pair)
    r = np.eye(3)
    c, s = np.cos(theta), np.sin(theta)
    r[i - 1, i - 1] = r[j - 1, j - 1] = c
    r[i - 1, j - 1] = -s
    r[j - 1, i - 1] = s
    return r


def wave_plate_matrix(e: WavePlate, enforce_legality: bool = True) -> np.ndarray:
    if enforce_legality and not e.legal:
        raise ConstructionError(f"wave plate on modes {e.pair} spans two paths")
    return rotation(e.pair, e.angle).astype(complex)


def element_matrix(e: Element) -> np.ndarray:
    if isinstance(e, WavePlate):
        return wave_plate_matrix(e, enforce_legality=False)
    if isinstance(e, Recombiner):
        i, j = e.pair
        p = np.eye(3, dtype=complex)
        p[[i - 1, j - 1]] = p[[j - 1, i - 1]]
        return p
    return np.eye(3, dtype=complex)


def circuit_unitary(c: OpticalCircuit) -> np.ndarray:
    """Product of element matrices, later elements on the left. Delays act as identity."""
    u = np.eye(3, dtype=complex)
    for e in c.elements:
        u = element_matrix(e) @ u
    return core.as_unitary(u, 1e-12)


def analyzer_targets(c: OpticalCircuit) -> np.ndarray:
    """Rays measured by output modes 1..3 (rows), i.e. the columns of ``U^dag``."""
    return circuit_unitary(c).conj()


# --- compilation ---------------------------------------------------------------


def _givens_angles(w: np.ndarray) -> list[tuple[tuple[int, int], float]]:
    """Rotations ``G1, G2, G3`` (in application order) with ``G3 G2 G1 = D w``, D = diag(+/-1)."""
    a = np.array(w, dtype=float).T.copy()
    steps = []
    for (p, q), col in (((1, 2), 0), ((1, 3), 0), ((2, 3), 1)):
        x, y = a[p - 1, col], a[q - 1, col]
        theta = float(np.arctan2(-y, x)) if abs(y) > 1e-15 else 0.0
        if theta != 0.0:
            a = rotation((p, q), theta) @ a
        steps.append(((p, q), theta))
    return steps


def legal_rotation(pair, theta: float) -> list[Element]:
    """A rotation on ``pair`` rewritten with path-u wave plates and H-mode recombiners."""
    pair = _norm_pair(pair)
    if pair == (1, 2):
        return [WavePlate((1, 2), theta)]
    if pair == (2, 3):
        return [Recombiner((1, 3)), WavePlate((1, 2), -theta), Recombiner((1, 3))]
    return (
        [WavePlate((1, 2), np.pi / 2)]
        + legal_rotation((2, 3), theta)
        + [WavePlate((1, 2), -np.pi / 2)]
    )


def compile_orthogonal(w, legal: bool = True, label: str = "") -> OpticalCircuit:
    """Circuit whose unitary equals the real orthogonal ``w`` up to row signs."""
    w = np.asarray(w)
    if np.max(np.abs(w.imag if np.iscomplexobj(w) else 0.0)) > 1e-9:
        raise ValidationError("only real orthogonal transforms can be compiled")
    w = np.real(w)
    if np.max(np.abs(w @ w.T - np.eye(3))) > 1e-9:
        raise ValidationError("transform is not orthogonal")
    elements: list[Element] = []
    for pair, theta in _givens_angles(w):
        if theta == 0.0:
            continue
        elements.extend(legal_rotation(pair, theta) if legal else [WavePlate(pair, theta)])
    return OpticalCircuit(tuple(elements), label, enforce_legality=legal)


def compile_basis(targets, legal: bool = True, label: str = "") -> OpticalCircuit:
    """Analyzer sending ray ``targets[k]`` to output mode ``k + 1`` (up to sign)."""
    t = np.asarray(targets, dtype=complex)
    if t.shape != (3, 3):
        raise ValidationError("need exactly three target rays")
    if np.max(np.abs(t.imag)) > 1e-9:
        raise ValidationError("targets must have real amplitudes")
    t = t.real
    if np.max(np.abs(t @ t.T - np.eye(3))) > 1e-9:
        raise ValidationError("targets are not orthonormal")
    return compile_orthogonal(t, legal=legal, label=label)


def basis_overlaps(c: OpticalCircuit, targets) -> np.ndarray:
    """``|<t_k | U^dag e_k>|`` for each output mode."""
    got = analyzer_targets(c)
    t = np.asarray(targets, dtype=complex)
    return np.abs(np.einsum("ki,ki->k", t.conj(), got))


def jitter(c: OpticalCircuit, sigma: float, rng: np.random.Generator) -> OpticalCircuit:
    """Perturb every wave-plate angle by an independent N(0, sigma^2) draw."""
    if sigma < 0:
        raise ValidationError("sigma must be nonnegative")
    if sigma == 0:
        return c
    out = []
    for e in c.elements:
        if isinstance(e, WavePlate):
            e = WavePlate(e.pair, e.angle + rng.normal(0.0, sigma))
        out.append(e)
    return replace(c, elements=tuple(out))


# --- detection -----------------------------------------------------------------


@dataclass(frozen=True)
class DetectorBank:
    eta0: float = 1.0
    eta: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        eta = tuple(float(x) for x in self.eta)
        if len(eta) != 3:
            raise ValidationError("need three detector efficiencies")
        object.__setattr__(self, "eta", eta)
        for x in (self.eta0, *eta):
            if not 0.0 <= x <= 1.0:
                raise ValidationError(f"efficiency {x!r} outside [0, 1]")

    @classmethod
    def uniform(cls, eta: float, eta0: float = 1.0) -> "DetectorBank":
        return cls(eta0, (eta, eta, eta))

    @property
    def eta_min(self) -> float:
        return min(self.eta)


@dataclass(frozen=True)
class ClickRecord:
    trial: int
    stage: str
    heralded: bool
    detector: int | None
    delayed: bool

    def __post_init__(self):
        if self.detector is None and self.delayed:
            raise ValidationError("a delayed record must name a detector")

    def to_json(self) -> dict:
        return {"trial": self.trial, "stage": self.stage, "heralded": self.heralded,
                "detector": self.detector, "delayed": self.delayed}


@dataclass
class ClickBatch:
    """Column-oriented trial outcomes; ``detector`` is 0 for no click."""

    stage: str
    trial: np.ndarray
    heralded: np.ndarray
    detector: np.ndarray
    delayed: np.ndarray

    def __len__(self) -> int:
        return len(self.trial)

    def records(self) -> list[ClickRecord]:
        return [
            ClickRecord(int(t), self.stage, bool(h), int(d) if d else None, bool(dl))
            for t, h, d, dl in zip(self.trial, self.heralded, self.detector, self.delayed)
        ]

    @classmethod
    def from_records(cls, records, stage: str | None = None) -> "ClickBatch":
        records = list(records)
        label = stage if stage is not None else (records[0].stage if records else "")
        return cls(
            label,
            np.array([r.trial for r in records], dtype=np.int64),
            np.array([r.heralded for r in records], dtype=bool),
            np.array([r.detector or 0 for r in records], dtype=np.int64),
            np.array([r.delayed for r in records], dtype=bool),
        )

    def concat(self, other: "ClickBatch") -> "ClickBatch":
        return ClickBatch(
            self.stage,
            np.concatenate([self.trial, other.trial]),
            np.concatenate([self.heralded, other.heralded]),
            np.concatenate([self.detector, other.detector]),
            np.concatenate([self.delayed, other.delayed]),
        )


def propagate(psi, c: OpticalCircuit) -> np.ndarray:
    """Amplitudes per (delay bin, mode) after the circuit; shape ``(max_delay + 1, 3)``."""
    bins = np.zeros((c.max_delay + 1, 3), dtype=complex)
    bins[0] = psi
    for e in c.elements:
        if isinstance(e, DelayTag):
            m = e.mode - 1
            moved = bins[:, m].copy()
            bins[:, m] = 0.0
            bins[e.delay:, m] += moved[: len(moved) - e.delay]
        else:
            bins = bins @ element_matrix(e).T
    return bins


def outcome_table(rho, c: OpticalCircuit) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-branch weights and per-branch (delay bin, mode) probabilities."""
    w, v = core.eigh3(rho, 1e-10)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    table = np.array([np.abs(propagate(v[:, k], c)) ** 2 for k in range(3)])
    return w, table


def output_probabilities(rho, c: OpticalCircuit) -> np.ndarray:
    """Exact (delay bin, mode) distribution of the photon for a mixed input."""
    w, table = outcome_table(rho, c)
    return np.einsum("k,kbm->bm", w, table)


def run_batch(rho, c: OpticalCircuit, bank: DetectorBank, n: int, rng: np.random.Generator,
              stage: str | None = None, first_trial: int = 0) -> ClickBatch:
    """Simulate ``n`` heralded single-photon trials.

    Per trial, four uniforms are drawn in a fixed order: herald, eigen-branch,
    output (bin, mode), detector efficiency.
    """
    w, table = outcome_table(rho, c)
    nb = table.shape[1]
    flat = table.reshape(3, -1)
    flat = flat / flat.sum(axis=1, keepdims=True)
    u = rng.random((n, 4))
    heralded = u[:, 0] < bank.eta0
    branch = np.minimum(np.searchsorted(np.cumsum(w), u[:, 1], side="right"), 2)
    cdf = np.cumsum(flat, axis=1)
    idx = np.array([np.searchsorted(cdf[b], x, side="right") for b, x in zip(branch, u[:, 2])],
                   dtype=np.int64) if n < 64 else _vector_pick(cdf, branch, u[:, 2])
    idx = np.minimum(idx, 3 * nb - 1)
    delay_bin, mode = np.divmod(idx, 3)
    eta = np.asarray(bank.eta)[mode]
    clicked = heralded & (u[:, 3] < eta)
    detector = np.where(clicked, mode + 1, 0)
    delayed = clicked & (delay_bin > 0)
    return ClickBatch(stage if stage is not None else c.label,
                      np.arange(first_trial, first_trial + n, dtype=np.int64),
                      heralded, detector.astype(np.int64), delayed)


def _vector_pick(cdf: np.ndarray, branch: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.sum(cdf[branch] <= x[:, None], axis=1)


def run_trial(rho, c: OpticalCircuit, bank: DetectorBank, rng: np.random.Generator,
              trial: int = 0, stage: str | None = None) -> ClickRecord:
    return run_batch(rho, c, bank, 1, rng, stage, trial).records()[0]


# --- published plate settings --------------------------------------------------

_A3 = float(np.arccos(1 / np.sqrt(3)))
_A5 = float(np.arccos(1 / 3))

PAPER_STAGE_ANGLES = {
    "A1A2,A1A3,A2A3": {},
    "A1A4": {"WP1": 3 * np.pi / 4},
    "A7A8,A8A4,A7A4": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4},
    "A5A7": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4, "WP3": _A3},
    "A2'A5": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4, "WP3": _A3, "WP4": np.pi / 3},
    "A9A5": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4, "WP3": _A3, "WP4": 13 * np.pi / 12},
    "A9A6": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4, "WP3": _A3, "WP4": 13 * np.pi / 12,
             "WP5": _A5},
    "A8'A6": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4, "WP3": _A3, "WP4": 13 * np.pi / 12,
              "WP5": _A5, "WP6": -np.pi / 3},
    "A3'A6": {"WP1": 3 * np.pi / 4, "WP2": np.pi / 4, "WP3": _A3, "WP4": 13 * np.pi / 12,
              "WP5": _A5, "WP6": np.pi / 3},
}


def paper_stage_angles() -> dict:
    """Published rotation angles per measured correlation; absent plates are omitted."""
    return {k: dict(v) for k, v in PAPER_STAGE_ANGLES.items()}


# Rays each published row is meant to expose (unprimed catalog indices).
_ROW_RAYS = {
    "A1A2,A1A3,A2A3": (1, 2, 3), "A1A4": (1, 4), "A7A8,A8A4,A7A4": (7, 4, 8), "A5A7": (5, 7),
    "A2'A5": (5,), "A9A5": (9, 5), "A9A6": (9, 6), "A8'A6": (6,), "A3'A6": (6,),
}


@dataclass
class AngleDiagnostic:
    plate_pairs: dict
    per_stage: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return min(min(v.values()) for v in self.per_stage.values() if v)


def _frame_for(angles: dict, pairs: dict) -> np.ndarray:
    f = np.eye(3)
    for name in ("WP1", "WP2", "WP3", "WP4", "WP5", "WP6"):
        if name in angles:
            f = f @ rotation(pairs[name], angles[name]).T
    return f


def angle_cross_check() -> AngleDiagnostic:
    """Best consistent reading of the published angles as frame rotations.

    Each plate is assigned one mode pair (shared by all rows); the frame after
    a row's plates is ``R1^T R2^T ...`` and its columns are the rays the
    detectors see. For every assignment the worst overlap between a row's
    intended rays and the closest frame column is computed; the assignment
    maximizing that is reported with per-row, per-ray overlaps. This is a
    diagnostic only: the published angles depend on an unstated convention.
    """
    names = ("WP1", "WP2", "WP3", "WP4", "WP5", "WP6")
    best_score, best = -1.0, None
    for combo in itertools.product([(1, 2), (1, 3), (2, 3)], repeat=len(names)):
        pairs = dict(zip(names, combo))
        score = 1.0
        for row, angles in PAPER_STAGE_ANGLES.items():
            frame = _frame_for(angles, pairs)
            for r in _ROW_RAYS[row]:
                score = min(score, float(np.max(np.abs(core.RAYS[r - 1].real @ frame))))
        if score > best_score:
            best_score, best = score, pairs
    diag = AngleDiagnostic(best)
    for row, angles in PAPER_STAGE_ANGLES.items():
        frame = _frame_for(angles, best)
        diag.per_stage[row] = {
            r: float(np.max(np.abs(core.RAYS[r - 1].real @ frame))) for r in _ROW_RAYS[row]
        }
    return diag

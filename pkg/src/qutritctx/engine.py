"""Exclusivity graphs, noncontextual bounds and quantum witnesses."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import CapacityError, ConstructionError, DomainError, UsageError, ValidationError

MAX_VERTICES = 25
CLASSICAL_BOUND = -4.0
# Census counts a violation only below bound - CENSUS_SLACK.
CENSUS_SLACK = 1e-12


@dataclass(frozen=True)
class ExclusivityGraph:
    rays: np.ndarray  # (n, 3), row i is vertex i + 1
    edges: frozenset  # of (i, j) with 1 <= i < j <= n
    tol: float

    @property
    def n(self) -> int:
        return len(self.rays)

    def degree(self, v: int) -> int:
        return sum(v in e for e in self.edges)

    def degrees(self) -> list[int]:
        return [self.degree(v) for v in range(1, self.n + 1)]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def triangles(self) -> list[tuple[int, int, int]]:
        return [
            t for t in itertools.combinations(range(1, self.n + 1), 3)
            if self.has_edge(t[0], t[1]) and self.has_edge(t[0], t[2]) and self.has_edge(t[1], t[2])
        ]


def build_graph(rays, tol: float = 1e-9) -> ExclusivityGraph:
    """Connect every pair of rays whose overlap is below ``tol``."""
    if not 0 < tol <= 1e-6:
        raise UsageError(f"orthogonality tolerance must lie in (0, 1e-6], got {tol!r}")
    kets = [core.as_ket(r) for r in rays]
    arr = np.array(kets)
    arr.setflags(write=False)
    edges = frozenset(
        (i + 1, j + 1)
        for i, j in itertools.combinations(range(len(kets)), 2)
        if abs(np.vdot(kets[i], kets[j])) < tol
    )
    return ExclusivityGraph(arr, edges, tol)


def catalog_graph() -> ExclusivityGraph:
    return build_graph(core.RAYS)


def kcbs_rays() -> np.ndarray:
    """Pentagram rays: vertex i at azimuth 4*pi*(i-1)/5, adjacent vertices orthogonal."""
    cos2 = 1.0 / np.sqrt(5.0)
    c, s = np.sqrt(cos2), np.sqrt(1.0 - cos2)
    phi = 4.0 * np.pi * np.arange(5) / 5.0
    return np.column_stack([np.full(5, c), s * np.cos(phi), s * np.sin(phi)]).astype(complex)


def kcbs_graph() -> ExclusivityGraph:
    return build_graph(kcbs_rays())


@dataclass(frozen=True)
class InequalityFunctional:
    """``sum_e c_e A_i A_j + sum_v c_v A_v``, bounded below by ``bound`` classically."""

    edge_terms: dict = field(default_factory=dict)
    vertex_terms: dict = field(default_factory=dict)
    bound: float | None = None
    name: str = "custom"

    def value(self, outcomes) -> float:
        a = outcomes
        total = sum(c * a[i - 1] * a[j - 1] for (i, j), c in self.edge_terms.items())
        return float(total + sum(c * a[v - 1] for v, c in self.vertex_terms.items()))


def main_functional(g: ExclusivityGraph | None = None) -> InequalityFunctional:
    """All edges plus the single vertex term on vertex 9."""
    g = g or catalog_graph()
    return InequalityFunctional(
        {e: 1.0 for e in g.sorted_edges()}, {9: 1.0}, CLASSICAL_BOUND, "nine-ray"
    )


def edge_sum_functional(g: ExclusivityGraph, bound: float | None = None, name: str = "edge-sum"):
    return InequalityFunctional({e: 1.0 for e in g.sorted_edges()}, {}, bound, name)


def vertex_functional(v: int, bound: float | None = None) -> InequalityFunctional:
    return InequalityFunctional({}, {v: 1.0}, bound, f"vertex-only-{v}")


# --- noncontextual assignments -------------------------------------------------


def is_admissible(g: ExclusivityGraph, outcomes) -> bool:
    return all(not (outcomes[i - 1] == -1 and outcomes[j - 1] == -1) for i, j in g.edges)


def enumerate_nchv(g: ExclusivityGraph, strict_bases: bool = False) -> list[tuple[int, ...]]:
    """All exclusivity-respecting +/-1 assignments.

    Order is binary counting with vertex ``i`` on bit ``i - 1`` and bit 0
    meaning +1. With ``strict_bases`` each triangle (a complete basis of the
    qutrit) must carry exactly one -1 instead of at most one.
    """
    n = g.n
    if n > MAX_VERTICES:
        raise CapacityError(f"{n} vertices exceeds exhaustive limit {MAX_VERTICES}")
    masks = [(1 << (i - 1)) | (1 << (j - 1)) for i, j in g.edges]
    bases = [sum(1 << (v - 1) for v in t) for t in g.triangles()] if strict_bases else []
    out = []
    for code in range(1 << n):
        if any(code & m == m for m in masks):
            continue
        if any(code & b == 0 for b in bases):
            continue
        out.append(tuple(-1 if code >> k & 1 else 1 for k in range(n)))
    return out


def classical_min(g: ExclusivityGraph, f: InequalityFunctional, strict_bases: bool = False):
    """Minimum of ``f`` over deterministic noncontextual assignments, and its argmin.

    Mixtures are convex combinations, so this is also the bound over all
    noncontextual hidden-variable models.
    """
    best, arg = np.inf, None
    for a in enumerate_nchv(g, strict_bases):
        v = f.value(a)
        if v < best:
            best, arg = v, a
    return float(best), arg


@dataclass(frozen=True)
class NCHVStrategy:
    assignments: tuple  # of outcome tuples
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.assignments):
            raise ValidationError("one weight per assignment required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must be nonnegative and sum to 1")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def value(self, f: InequalityFunctional) -> float:
        return float(sum(p * f.value(a) for a, p in zip(self.assignments, self.weights)))


# --- quantum side --------------------------------------------------------------


def projector_sum(g: ExclusivityGraph) -> np.ndarray:
    return sum(np.outer(r, r.conj()) for r in g.rays)


def witness(g: ExclusivityGraph, f: InequalityFunctional) -> np.ndarray:
    """Operator whose expectation is the left-hand side of ``f``."""
    obs = [core.dichotomous(r) for r in g.rays]
    m = np.zeros((core.DIM, core.DIM), dtype=complex)
    for (i, j), c in f.edge_terms.items():
        if abs(np.vdot(g.rays[i - 1], g.rays[j - 1])) >= g.tol:
            raise ConstructionError(f"edge ({i}, {j}) joins non-orthogonal rays")
        ai, aj = obs[i - 1], obs[j - 1]
        if np.max(np.abs(ai @ aj - aj @ ai)) > 1e-12:
            raise ConstructionError(f"observables {i} and {j} do not commute")
        m += c * (ai @ aj)
    for v, c in f.vertex_terms.items():
        m += c * obs[v - 1]
    return core.as_hermitian(m, 1e-12)


def projector_form(g: ExclusivityGraph, f: InequalityFunctional) -> np.ndarray:
    """``f``'s witness rewritten through projectors, valid when edges join orthogonal rays.

    With ``A = I - 2P`` and ``P_i P_j = 0`` on edges, every product collapses to
    ``I - 2P_i - 2P_j``, so the witness is ``c0 I - 2 sum_v w_v P_v``.
    """
    c0 = sum(f.edge_terms.values()) + sum(f.vertex_terms.values())
    w = np.zeros(g.n)
    for (i, j), c in f.edge_terms.items():
        w[i - 1] += c
        w[j - 1] += c
    for v, c in f.vertex_terms.items():
        w[v - 1] += c
    out = c0 * np.eye(core.DIM, dtype=complex)
    for r, wv in zip(g.rays, w):
        out -= 2.0 * wv * np.outer(r, r.conj())
    return out


def identity_residual(g: ExclusivityGraph, f: InequalityFunctional) -> float:
    return float(np.linalg.norm(witness(g, f) - projector_form(g, f)))


def lhs(rho, m) -> float:
    return core.expectation(rho, m)


def _plane_rotation(p: int, q: int, theta: float) -> np.ndarray:
    r = np.eye(core.DIM)
    c, s = np.cos(theta), np.sin(theta)
    r[p, p] = r[q, q] = c
    r[p, q], r[q, p] = -s, s
    return r


def optimize_basis(rho, g: ExclusivityGraph | None = None, f: InequalityFunctional | None = None,
                   *, m=None, refine: bool = True):
    """Best measurement frame for ``rho`` built from its eigenbasis.

    Returns ``(u, value)`` where ``value = Tr(u rho u^dag M)`` is minimal over
    the six assignments of eigenvectors to axes, optionally lowered further by
    coordinate descent over real plane rotations applied after ``u``.
    """
    if m is None:
        g = g or catalog_graph()
        m = witness(g, f or main_functional(g))
    _, vecs = core.eigh3(rho, 1e-10)
    base = vecs.conj().T  # eigenvector k -> axis k
    best_u, best = None, np.inf
    for perm in itertools.permutations(range(core.DIM)):
        u = np.eye(core.DIM)[list(perm)] @ base
        val = lhs(u @ rho @ u.conj().T, m)
        if val < best - 1e-15:
            best_u, best = u, val
    if refine:
        best_u, best = _refine(rho, m, best_u, best)
    return core.as_unitary(best_u, 1e-10), best


def _refine(rho, m, u, val, step: float = 0.1, min_step: float = 1e-9):
    while step > min_step:
        improved = False
        for p, q in ((0, 1), (0, 2), (1, 2)):
            for sgn in (1.0, -1.0):
                cand = _plane_rotation(p, q, sgn * step) @ u
                cval = lhs(cand @ rho @ cand.conj().T, m)
                if cval < val - 1e-12:
                    u, val, improved = cand, cval, True
        if not improved:
            step *= 0.5
    return u, val


def efficiency_threshold(m, bound: float = CLASSICAL_BOUND) -> float:
    """Efficiency where the lossy bound ``bound / eta^2`` meets lambda_min(m)."""
    lam = core.eigh3(m)[0][0]
    if lam >= bound:
        raise DomainError(f"lambda_min = {lam!r} does not beat the bound {bound!r}")
    return threshold_from_lambda(lam, bound)


def threshold_from_lambda(lam: float, bound: float = CLASSICAL_BOUND) -> float:
    if lam >= bound:
        raise DomainError(f"lambda_min = {lam!r} does not beat the bound {bound!r}")
    return float(np.sqrt(bound / lam))


def lossy_bound(eta: float, bound: float = CLASSICAL_BOUND) -> float:
    return bound / eta**2


# --- census --------------------------------------------------------------------


@dataclass
class CensusResult:
    fraction: float
    stderr: float
    n: int
    violations: int
    seed: int | None
    mode: str
    workers: int
    lambda_min: float
    eta_star: float
    bound: float = CLASSICAL_BOUND
    functional: str = "nine-ray"
    failures: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "functional": self.functional,
            "bound": self.bound,
            "lambda_min": self.lambda_min,
            "eta_star": self.eta_star,
            "fraction": self.fraction,
            "stderr": self.stderr,
            "n": self.n,
            "seed": self.seed,
            "mode": self.mode,
            "workers": self.workers,
            "violations": self.violations,
            "failures": self.failures,
        }


def _spectral_gap(w) -> float:
    w = np.sort(np.asarray(w))
    return float(min(w[1] - w[0], w[2] - w[1]))


def _census_fixed_shard(seed_seq, n: int, m: np.ndarray, bound: float, chunk: int) -> int:
    rng = np.random.default_rng(seed_seq)
    count, done = 0, 0
    while done < n:
        k = min(chunk, n - done)
        rho = core.random_hs_states(rng, k)
        vals = np.einsum("nij,ji->n", rho, m).real
        count += int(np.count_nonzero(vals < bound - CENSUS_SLACK))
        done += k
    return count


def _census_optimized_shard(seed_seq, n: int, m: np.ndarray, bound: float, min_gap: float,
                            refine: bool, offset: int):
    rng = np.random.default_rng(seed_seq)
    count, accepted, drawn = 0, 0, 0
    failures = []
    while accepted < n:
        rho = core.random_hs_state(rng)
        drawn += 1
        if min_gap > 0 and _spectral_gap(np.linalg.eigvalsh(rho)) < min_gap:
            continue
        _, val = optimize_basis(rho, m=m, refine=refine)
        if val < bound - CENSUS_SLACK:
            count += 1
        else:
            failures.append({
                "index": offset + accepted,
                "spectrum": [float(x) for x in np.linalg.eigvalsh(rho)],
                "lhs_min": float(val),
            })
        accepted += 1
    return count, failures


def _shards(n: int, workers: int) -> list[int]:
    base, extra = divmod(n, workers)
    return [base + (1 if k < extra else 0) for k in range(workers)]


def census(n: int, seed: int, basis_mode: str = "fixed", *, workers: int = 1,
           g: ExclusivityGraph | None = None, f: InequalityFunctional | None = None,
           min_gap: float = 0.0, refine: bool = True, chunk: int = 100_000) -> CensusResult:
    """Fraction of Hilbert-Schmidt random states violating the inequality.

    Worker ``k`` draws from ``SeedSequence(seed).spawn(workers)[k]``, so the
    result is fixed by ``(seed, workers)``.
    """
    if n < 1:
        raise UsageError("census needs n >= 1")
    if basis_mode not in ("fixed", "optimized"):
        raise UsageError(f"unknown basis mode {basis_mode!r}")
    g = g or catalog_graph()
    f = f or main_functional(g)
    bound = CLASSICAL_BOUND if f.bound is None else f.bound
    m = np.array(witness(g, f))
    lam = float(core.eigh3(m)[0][0])
    streams = np.random.SeedSequence(seed).spawn(workers)
    sizes = _shards(n, workers)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    failures: list = []
    if basis_mode == "fixed":
        args = [(s, k, m, bound, chunk) for s, k in zip(streams, sizes)]
        fn = _census_fixed_shard
    else:
        args = [(s, k, m, bound, min_gap, refine, int(o)) for s, k, o in zip(streams, sizes, offsets)]
        fn = _census_optimized_shard
    if workers == 1:
        results = [fn(*args[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, *zip(*args)))
    if basis_mode == "fixed":
        count = sum(results)
    else:
        count = sum(r[0] for r in results)
        for r in results:
            failures.extend(r[1])
    p = count / n
    try:
        eta_star = threshold_from_lambda(lam, bound)
    except DomainError:
        eta_star = float("nan")
    return CensusResult(
        fraction=p, stderr=float(np.sqrt(p * (1 - p) / n)), n=n, violations=count, seed=seed,
        mode=basis_mode, workers=workers, lambda_min=lam, eta_star=eta_star, bound=bound,
        functional=f.name, failures=failures,
    )

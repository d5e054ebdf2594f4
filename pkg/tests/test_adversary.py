from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qutritctx import adversary, engine
from qutritctx.adversary import AdversarialStrategy
from qutritctx.errors import InsufficientDataError, ValidationError
from qutritctx.harness import default_plan

PLAN = default_plan(100_000)
ASSIGNMENTS = tuple(engine.enumerate_nchv(engine.catalog_graph()))
LAMBDA_MIN = -6.0


def _strategy(weights, q, assignments=ASSIGNMENTS, plan=PLAN):
    return AdversarialStrategy(
        engine.NCHVStrategy(tuple(assignments), np.asarray(weights) / np.sum(weights)),
        np.asarray(q, dtype=float), tuple(s.label for s in plan.stages),
    )


@pytest.fixture(scope="module")
def found():
    return {eta: adversary.search_adversarial(eta, 20_000, 1) for eta in (1.0, 0.82, 0.7, 0.5)}


# --- model semantics -----------------------------------------------------------


def test_stage_response():
    s2 = PLAN.stage("S2")  # basis (1, 4, x)
    assert adversary.stage_response((1,) * 9, s2) == (3, False)
    lam = (-1, 1, 1, 1, 1, 1, 1, 1, 1)
    assert adversary.stage_response(lam, s2) == (1, False)
    # Catalog basis with all outcomes +1: no click.
    assert adversary.stage_response((1,) * 9, PLAN.stage("S1")) == (0, False)
    # Delay stage: ray 2 at -1 clicks the 2' slot late.
    lam = (1, -1, 1, 1, 1, 1, 1, 1, 1)
    assert adversary.stage_response(lam, PLAN.stage("S5")) == (2, True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ideal_detectors_respect_nchv_bound(seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(len(ASSIGNMENTS)) * 0.3)
    s = _strategy(w, np.zeros((len(ASSIGNMENTS), len(PLAN.stages))))
    # Stages where no assignment clicks are excluded by construction of the mixture.
    rates = adversary.click_rates(s, PLAN)
    if np.any(rates[[k for k, st_ in enumerate(PLAN.stages) if st_.record_data]] <= 0):
        return
    assert adversary.expected_report(s, 1.0, PLAN).lhs >= -4 - 1e-12


def test_ideal_detectors_monte_carlo(rng):
    w = rng.dirichlet(np.ones(len(ASSIGNMENTS)))
    s = _strategy(w, np.zeros((len(ASSIGNMENTS), len(PLAN.stages))))
    rep = adversary.adversarial_run(s, 1.0, PLAN, 100_000, 3)
    assert rep.lhs >= -4 - 3 * rep.lhs_stderr


def test_silent_first_basis_is_insufficient_data():
    only = [a for a in ASSIGNMENTS if a[:3] == (1, 1, 1)]
    s = _strategy(np.ones(len(only)), np.zeros((len(only), len(PLAN.stages))), only)
    with pytest.raises(InsufficientDataError):
        adversary.adversarial_run(s, 1.0, PLAN, 1_000, 4, force_empirical=True)


def test_validate_rejects_excess_suppression():
    q = np.full((len(ASSIGNMENTS), len(PLAN.stages)), 0.4)
    s = _strategy(np.ones(len(ASSIGNMENTS)), q)
    adversary.validate(s, 0.6, PLAN)
    with pytest.raises(ValidationError):
        adversary.validate(s, 0.7, PLAN)
    with pytest.raises(ValidationError):
        adversary.validate(_strategy([1.0], np.zeros((1, 3)), [ASSIGNMENTS[0]]), 0.7, PLAN)


def test_validate_rejects_inadmissible_assignment():
    bad = (-1, -1, 1, 1, 1, 1, 1, 1, 1)
    s = _strategy([1.0], np.zeros((1, len(PLAN.stages))), [bad])
    with pytest.raises(ValidationError):
        adversary.validate(s, 1.0, PLAN)


# --- search --------------------------------------------------------------------


def test_search_unit_efficiency(found):
    assert found[1.0].expected_lhs == pytest.approx(-4.0, abs=1e-9)
    assert found[1.0].expected_lhs >= -4 - 1e-9


def test_search_at_threshold(found):
    assert found[0.82].expected_lhs >= LAMBDA_MIN - 0.02


def test_search_low_efficiency(found):
    r = found[0.5]
    assert r.expected_lhs < -4
    assert r.expected_lhs >= engine.lossy_bound(0.5) - 1e-9


@pytest.mark.parametrize("eta", [1.0, 0.82, 0.7, 0.5])
def test_search_results_are_feasible(found, eta):
    r = found[eta]
    q = r.strategy.suppression
    assert np.all(q >= 0) and np.all(q <= 1 - eta + 1e-12)
    assert np.all(r.rates >= eta - 1e-9)
    adversary.validate(r.strategy, eta, PLAN)
    exact = adversary.expected_report(r.strategy, eta, PLAN).lhs
    assert exact == pytest.approx(r.expected_lhs, abs=1e-9)


def test_fake_violation_at_seventy_percent(found):
    r = found[0.7]
    rep = adversary.adversarial_run(r.strategy, 0.7, PLAN, 100_000, 5)
    assert (-4 - rep.lhs) / rep.lhs_stderr >= 5
    assert rep.lhs >= engine.lossy_bound(0.7) - 3 * rep.lhs_stderr
    assert abs(rep.lhs - r.expected_lhs) <= 3 * rep.lhs_stderr


def test_strategy_file_round_trip(found):
    r = found[0.7]
    s = AdversarialStrategy.from_json(r.strategy.to_json())
    assert np.array_equal(s.suppression, r.strategy.suppression)
    rep = adversary.adversarial_run(s, 0.7, PLAN, 100_000, 6)
    assert abs(rep.lhs - r.expected_lhs) <= 3 * rep.lhs_stderr


def test_model_threshold_brackets_published_value():
    # The loss model lets a noncontextual mixture reach the quantum optimum
    # just below 0.82 and not at 0.82 itself.
    assert adversary.search_adversarial(0.80, 5_000, 3).expected_lhs < LAMBDA_MIN
    assert adversary.search_adversarial(0.82, 5_000, 3).expected_lhs > LAMBDA_MIN


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 0.75), st.integers(0, 2**32 - 1))
def test_lossy_cap_holds_at_low_efficiency(eta, seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(len(ASSIGNMENTS)) * 0.2)
    q = rng.uniform(0, 1 - eta, (len(ASSIGNMENTS), len(PLAN.stages)))
    s = _strategy(w, q)
    try:
        v = adversary.expected_report(s, eta, PLAN).lhs
    except InsufficientDataError:
        return
    assert v >= engine.lossy_bound(eta) - 1e-9


@pytest.mark.xfail(strict=True, reason=(
    "outcome-dependent suppression bounded by 1 - eta with click rate >= eta per stage "
    "reaches below -4/eta^2 close to eta = 1; see notes/decisions.md"))
@pytest.mark.parametrize("eta", [0.95, 0.9])
def test_lossy_cap_near_unit_efficiency(eta):
    r = adversary.search_adversarial(eta, 5_000, 1)
    assert r.expected_lhs >= engine.lossy_bound(eta) - 1e-9

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ToyDomain, event_tree_value
from decsearch.fsa import FsaPolicy, Grid
from decsearch.simcore import DomainContractError, evaluate, rollout, simulate, summarize

GRID = Grid([[0.0, 1.0]], 2)


def fixed(n_robots=1, ma=0):
    return [FsaPolicy.deterministic([ma], [0, 0], GRID, 2) for _ in range(n_robots)]


def test_undiscounted_reward_at_time_zero():
    rec = rollout(ToyDomain(reward_at=0), fixed(), horizon=1, seed=0)
    assert rec.discounted_return == 1.0


def test_reward_at_time_three_is_discounted():
    rec = rollout(ToyDomain(reward_at=3), fixed(), horizon=10, seed=0)
    assert rec.discounted_return == pytest.approx(0.9**3)
    assert rec.discounted_return == pytest.approx(0.729)


def test_horizon_cuts_off_rewards():
    assert rollout(ToyDomain(reward_at=3), fixed(), horizon=3, seed=0).discounted_return == 0.0


def test_deterministic_policy_has_zero_stderr():
    mean, err = evaluate(ToyDomain(reward_at=2), fixed(), 50, 5, seed=0)
    assert err == 0.0
    assert mean == pytest.approx(0.81)


def test_bernoulli_reward_mean():
    mean, err = evaluate(ToyDomain(reward_prob=0.5), fixed(), 10_000, 1, seed=3)
    assert abs(mean - 0.5) < 0.02
    assert err == pytest.approx(0.005, rel=0.05)


def test_evaluate_is_bitwise_reproducible(tiny):
    pol = [FsaPolicy.uniform(3, 2, GRID)]
    a = evaluate(tiny, pol, 500, 6, seed=11)
    b = evaluate(tiny, pol, 500, 6, seed=11)
    assert a == b


def test_summarize_single_value():
    assert summarize([3.0]) == (3.0, 0.0)


def test_tiny_rollouts_match_event_tree(tiny):
    ma, tr = [0, 1], [[0, 1], [0, 1]]
    exact = event_tree_value(tiny, ma, tr, 6)
    pol = [FsaPolicy.deterministic(ma, tr, GRID, 2)]
    mean, err = evaluate(tiny, pol, 40_000, 6, seed=5)
    assert abs(mean - exact) < 4 * err
    assert tiny.exact_value(pol[0], 6) == pytest.approx(exact, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4))
def test_record_bookkeeping(seed, d0, d1):
    dom = ToyDomain(num_robots=2, duration=[d0, d1], reward_at=0)
    pol = [FsaPolicy.uniform(3, 2, GRID) for _ in range(2)]
    rec = rollout(dom, pol, 15, seed)
    for i, dur in enumerate((d0, d1)):
        ep = rec.epochs[i]
        # robots re-decide at their own completion times
        assert [e.time for e in ep] == list(range(dur, 16, dur))
        assert all(a.next_node == b.node for a, b in zip(ep, ep[1:]))
        if ep:
            assert ep[0].node == 0
    assert rec.discounted_return <= 1.0
    assert rec == rollout(dom, pol, 15, seed)


def test_discounted_return_bounded_by_reward_count(tiny):
    pol = [FsaPolicy.uniform(2, 2, GRID)]
    returns, records = simulate(tiny, pol, 200, 6, np.random.default_rng(0), record=True)
    # at most one unit of reward per step in the tiny domain
    assert np.all(returns <= 6)
    assert np.array_equal(returns, [r.discounted_return for r in records])


def test_out_of_bounds_observation_is_a_contract_error():
    with pytest.raises(DomainContractError):
        rollout(ToyDomain(bad_obs=True), fixed(), 2, 0)


def test_argument_checks():
    with pytest.raises(ValueError):
        simulate(ToyDomain(), fixed(), 1, -1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        simulate(ToyDomain(), fixed(2), 1, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        evaluate(ToyDomain(), fixed(), 0, 1, 0)

import numpy as np
import pytest

from aoisched.env import GeneralHarq, ModelConfig, StandardArq, build_tabular
from aoisched.env.spaces import StateSpace
from aoisched.errors import NotUnichain
from aoisched.index import GreedyPolicy, RoundRobinPolicy, WhittlePolicy, single_user_closed_forms
from aoisched.index.closed_forms import ArqArmParams
from aoisched.planning import (
    DeterministicPolicy,
    MixturePolicy,
    bellman_residual,
    build_mixture,
    eta_search,
    evaluate_policy_exact,
    evaluate_policy_mc,
    policy_from_text,
    policy_iteration,
    policy_to_text,
    rvi_solve,
    solve_constrained,
    stationary_distribution,
)


def threshold_policy(N, gamma, p=0.0):
    cfg = ModelConfig(1, N)
    proto = StandardArq((p,))
    space = StateSpace(cfg, proto)
    rx = space.components()[0][:, 0]
    return DeterministicPolicy(space, np.where(rx >= gamma, 1, 0)), cfg, proto


# --------------------------------------------------------------------- RVI

def test_rvi_single_user_perfect_channel():
    cfg, proto = ModelConfig(1, 10), StandardArq((0.0,))
    pol, vt = rvi_solve(cfg, proto, eta=0.0)
    assert vt.avg_cost == pytest.approx(1.0, abs=1e-8)
    assert np.all(pol.actions == 1)


def test_rvi_threshold_two_at_eta_two():
    cfg, proto = ModelConfig(1, 20), StandardArq((0.0,))
    pol, vt = rvi_solve(cfg, proto, eta=2.0)
    assert vt.avg_cost == pytest.approx(2.5, abs=1e-8)
    rx = pol.space.components()[0][:, 0]
    assert np.all((pol.actions == 1) == (rx >= 2))


def test_rvi_bellman_residual_small():
    cfg = ModelConfig(2, 6, 2)
    model = build_tabular(cfg, GeneralHarq.geometric([0.5, 0.2], 2))
    pol, vt = rvi_solve(model, eta=1.5, epsilon=1e-9)
    assert bellman_residual(model, vt) <= 1e-7


def test_rvi_agrees_with_policy_iteration():
    cfg = ModelConfig(2, 7)
    model = build_tabular(cfg, StandardArq((0.4, 0.1)))
    for eta in (0.0, 3.0, 9.0):
        _, vt = rvi_solve(model, eta=eta)
        _, pt = policy_iteration(model, eta=eta)
        assert vt.avg_cost == pytest.approx(pt.avg_cost, abs=1e-7)


def test_rvi_input_validation():
    cfg, proto = ModelConfig(1, 5), StandardArq((0.0,))
    with pytest.raises(ValueError):
        rvi_solve(cfg, proto, eta=-1.0)
    with pytest.raises(ValueError):
        rvi_solve(cfg, proto, epsilon=0.0)


def test_symmetric_greedy_matches_whittle_actions():
    cfg = ModelConfig(2, 6)
    proto = StandardArq((0.3, 0.3))
    space = StateSpace(cfg, proto)
    g = GreedyPolicy().tabulate(space)
    w = WhittlePolicy(cfg, proto, 0.0).tabulate(space)
    assert np.array_equal(g.actions, w.actions)


# -------------------------------------------------------------- evaluation

def test_always_transmit_perfect_channel():
    pol, cfg, proto = threshold_policy(10, 1)
    ev = evaluate_policy_exact(pol, cfg, proto)
    assert (ev.J, ev.C) == (pytest.approx(1.0, abs=1e-12), pytest.approx(1.0, abs=1e-12))


@pytest.mark.parametrize("gamma,p", [(1, 0.0), (3, 0.0), (1, 0.5), (4, 0.3), (6, 0.8)])
def test_threshold_matches_closed_forms(gamma, p):
    pol, cfg, proto = threshold_policy(max(50 * gamma, 200), gamma, p)
    ev = evaluate_policy_exact(pol, cfg, proto)
    J, C = single_user_closed_forms(gamma, ArqArmParams(1.0, p))
    assert ev.J == pytest.approx(J, abs=1e-6)
    assert ev.C == pytest.approx(C, abs=1e-6)


def test_round_robin_two_users():
    cfg, proto = ModelConfig(2, 6), StandardArq((0.0, 0.0))
    ev = evaluate_policy_exact(RoundRobinPolicy(cfg), cfg, proto)
    assert ev.J == pytest.approx(3.0, abs=1e-12)
    assert ev.C == pytest.approx(1.0, abs=1e-12)


def test_multichain_chain_rejected():
    from scipy import sparse

    # from state 0 the chain is absorbed in either 1 or 2
    P = sparse.csr_matrix(np.array([[0.0, 0.5, 0.5], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(NotUnichain) as exc:
        stationary_distribution(P, 0)
    assert sorted(exc.value.classes) == [[1], [2]]


def test_transient_states_get_zero_mass():
    cfg, proto = ModelConfig(1, 5), StandardArq((0.0,))
    space = StateSpace(cfg, proto)
    acts = np.zeros(space.size, dtype=np.int64)
    acts[0] = 1  # transmit at age 1 only: absorbed at age 1
    ev = evaluate_policy_exact(DeterministicPolicy(space, acts), cfg, proto)
    assert ev.J == 1.0 and ev.stationary[0] == 1.0


def test_stationary_distribution_two_state():
    from scipy import sparse

    P = sparse.csr_matrix(np.array([[0.9, 0.1], [0.5, 0.5]]))
    pi, resid = stationary_distribution(P, 0)
    assert pi == pytest.approx(np.array([5 / 6, 1 / 6]), abs=1e-12)
    assert resid <= 1e-12


def test_mc_deterministic_channel_zero_width_ci():
    pol, cfg, proto = threshold_policy(10, 2)
    ev = evaluate_policy_mc(pol, cfg, proto, 1000, [0, 1, 2])
    assert ev.ci_J == 0.0 and ev.ci_C == 0.0


def test_mc_single_user_matches_exact():
    pol, cfg, proto = threshold_policy(60, 1, 0.5)
    ev = evaluate_policy_mc(pol, cfg, proto, 100_000, list(range(100)))
    assert abs(ev.J - 2.0) <= max(ev.ci_J, 1e-3)
    assert 0.0 <= ev.C <= 1.0


# ------------------------------------------------------- multiplier search

def test_eta_zero_when_unconstrained():
    res = eta_search(ModelConfig(2, 6), StandardArq((0.3, 0.1)), lam=1.0)
    assert res.eta == 0.0 and not res.needs_mixing


def test_eta_search_single_user_third():
    res = eta_search(ModelConfig(1, 30), StandardArq((0.0,)), lam=1 / 3)
    pol = res.bracket[1].policy if res.needs_mixing else res.policy
    rx = pol.space.components()[0][:, 0]
    assert np.all((pol.actions == 1) == (rx >= 3))
    assert res.C == pytest.approx(1 / 3, abs=1e-4)


def test_rate_monotone_in_eta():
    model = build_tabular(ModelConfig(2, 8), StandardArq((0.5, 0.2)))
    rates = []
    for eta in np.linspace(0, 40, 21):
        pol, _ = rvi_solve(model, eta=eta)
        rates.append(evaluate_policy_exact(pol, model).C)
    assert all(b <= a + 1e-12 for a, b in zip(rates, rates[1:]))


def test_single_state_mixture_example():
    low, cfg, proto = threshold_policy(20, 2)
    high, _, _ = threshold_policy(20, 3)
    mix = build_mixture(low, high, cfg, proto, lam=0.4)
    assert mix.construction == "single-state"
    assert mix.mu == pytest.approx(0.5, abs=1e-9)
    assert mix.C == pytest.approx(0.4, abs=1e-9)
    assert low.space.state(mix.state).rx == (2,)


def test_mixture_cost_between_endpoints():
    low, cfg, proto = threshold_policy(20, 2)
    high, _, _ = threshold_policy(20, 3)
    j_low = evaluate_policy_exact(low, cfg, proto).J
    j_high = evaluate_policy_exact(high, cfg, proto).J
    s = 1  # age 2
    for mu in (0.0, 0.25, 0.5, 0.75, 1.0):
        ev = evaluate_policy_exact(MixturePolicy(low, s, 0, mu), cfg, proto)
        assert min(j_low, j_high) - 1e-12 <= ev.J <= max(j_low, j_high) + 1e-12


def test_identical_policies_mix_trivially():
    low, cfg, proto = threshold_policy(20, 2)
    mix = build_mixture(low, low, cfg, proto, lam=0.5)
    assert mix.construction == "deterministic"
    assert mix.C == pytest.approx(0.5)


def test_solve_constrained_meets_budget():
    sol = solve_constrained(ModelConfig(2, 10), StandardArq((0.5, 0.1)), lam=0.5)
    assert abs(sol.C - 0.5) <= 0.01


# ----------------------------------------------------------- serialization

def test_policy_text_roundtrip():
    cfg, proto = ModelConfig(2, 5, 1), GeneralHarq.geometric([0.5, 0.2], 1)
    pol, _ = rvi_solve(cfg, proto, eta=1.0)
    text = policy_to_text(pol, proto)
    back = policy_from_text(text, pol.space, proto)
    assert back == pol
    mix = MixturePolicy(pol, 3, 0, 0.25)
    back = policy_from_text(policy_to_text(mix, proto), pol.space, proto)
    assert isinstance(back, MixturePolicy) and back.mu == 0.25 and back.state == 3


def test_policy_text_rejects_other_model():
    cfg, proto = ModelConfig(1, 5), StandardArq((0.1,))
    pol, _ = rvi_solve(cfg, proto)
    with pytest.raises(ValueError):
        policy_from_text(policy_to_text(pol, proto), pol.space, StandardArq((0.2,)))

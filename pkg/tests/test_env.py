import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoisched.env import (
    Action,
    Env,
    FrHarq,
    GeneralHarq,
    ModelConfig,
    StandardArq,
    SystemState,
    fr_block_step,
    simulate,
    step,
    transition_distribution,
    valid_actions,
)
from aoisched.env.kernel import local_next
from aoisched.env.spaces import StateSpace, enumerate_states
from aoisched.env.tabular import build_tabular
from aoisched.errors import ActionMasked
from aoisched.numerics import make_rng


def _harq(g_rows):
    return GeneralHarq(tuple(tuple(r) for r in g_rows))


# ----------------------------------------------------------------- actions

def test_action_index_roundtrip():
    M = 3
    for i in range(2 * M + 1):
        a = Action.from_index(i, M)
        assert a.index(M) == i
        assert Action.parse(str(a)) == a
    assert Action.idle().index(M) == 0
    assert Action.new(2).index(M) == 2
    assert Action.retx(1).index(M) == 4


def test_valid_actions_arq_any_state():
    proto = StandardArq((0.1, 0.2))
    s = SystemState((3, 1), (2, 1), (0, 0))
    assert valid_actions(s, proto) == [Action.idle(), Action.new(1), Action.new(2)]


def test_valid_actions_harq_single_user_no_pending():
    proto = _harq([[0.5, 0.25]])
    s = SystemState((2,), (1,), (0,))
    assert valid_actions(s, proto) == [Action.idle(), Action.new(1)]


def test_valid_actions_harq_pending_failure():
    proto = _harq([[0.5, 0.25], [0.5, 0.25]])
    s = SystemState((3, 2), (2, 1), (1, 0))
    assert set(valid_actions(s, proto)) == {Action.idle(), Action.new(1), Action.new(2), Action.retx(1)}


def test_masked_action_raises():
    proto = _harq([[0.5, 0.25]])
    cfg = ModelConfig(1, 5, 1)
    with pytest.raises(ActionMasked):
        transition_distribution(SystemState((2,), (1,), (0,)), Action.retx(1), cfg, proto)


# -------------------------------------------------------------- transitions

def test_idle_transition():
    cfg = ModelConfig(1, 5, 0)
    out = transition_distribution(SystemState((2,), (1,), (0,)), Action.idle(), cfg, StandardArq((0.3,)))
    assert out == [(SystemState((3,), (2,), (0,)), 1.0)]


def test_new_on_perfect_channel():
    cfg = ModelConfig(1, 5, 0)
    out = transition_distribution(SystemState((4,), (2,), (0,)), Action.new(1), cfg, StandardArq((0.0,)))
    assert out == [(SystemState((1,), (1,), (0,)), 1.0)]


def test_retx_transition_example():
    cfg = ModelConfig(1, 5, 2)
    proto = _harq([[0.5, 0.25, 0.125]])
    out = dict(transition_distribution(SystemState((4,), (2,), (1,)), Action.retx(1), cfg, proto))
    assert out == {SystemState((3,), (3,), (0,)): 0.75, SystemState((5,), (3,), (2,)): 0.25}


def test_ages_saturate_at_N():
    assert local_next(5, 5, 0, 0, True, 5, 0) == (5, 5, 0)


def test_retx_count_saturates_at_r_max():
    cfg = ModelConfig(1, 8, 1)
    proto = _harq([[0.5, 0.25]])
    out = dict(transition_distribution(SystemState((4,), (2,), (1,)), Action.retx(1), cfg, proto))
    assert SystemState((5,), (3,), (1,)) in out


@st.composite
def _instances(draw):
    kind = draw(st.sampled_from(["arq", "harq", "fr"]))
    M = draw(st.integers(1, 2))
    N = draw(st.integers(2, 5))
    probs = [draw(st.floats(0.0, 0.9)) for _ in range(M)]
    if kind == "arq":
        proto = StandardArq(tuple(probs))
    elif kind == "harq":
        proto = GeneralHarq.geometric(probs, 2)
    else:
        proto = FrHarq(3, 2, tuple(probs))
        N = max(N, 4)
    return ModelConfig.for_protocol(proto, N), proto


@settings(max_examples=40, deadline=None)
@given(_instances())
def test_distributions_sum_to_one(inst):
    cfg, proto = inst
    space = StateSpace(cfg, proto)
    for s in space.states():
        for a in valid_actions(s, proto):
            dist = transition_distribution(s, a, cfg, proto)
            assert abs(sum(p for _, p in dist) - 1.0) <= 1e-12
            for nxt, p in dist:
                assert p > 0
                nxt.check(cfg.N, cfg.r_max)


def test_step_deterministic_for_seed():
    cfg = ModelConfig(2, 6, 2)
    proto = GeneralHarq.geometric([0.5, 0.3], 2)
    s = cfg.initial_state

    def run(seed):
        rng = make_rng(seed)
        state, out = s, []
        for t in range(50):
            a = valid_actions(state, proto)[t % len(valid_actions(state, proto))]
            state, fb, cost = step(state, a, cfg, proto, rng)
            out.append((state, fb, cost))
        return out

    assert run(7) == run(7)


def test_retx_nack_frequency_binomial():
    cfg = ModelConfig(1, 10, 1)
    proto = _harq([[0.5, 0.25]])
    rng = make_rng(3)
    s = SystemState((4,), (2,), (1,))
    n = 100_000
    nacks = sum(not step(s, Action.retx(1), cfg, proto, rng)[1].ack for _ in range(n))
    sigma = math.sqrt(n * 0.25 * 0.75)
    assert abs(nacks - 0.25 * n) <= 3 * sigma


def test_idle_cost_sample():
    cfg = ModelConfig(1, 10, 0)
    _, fb, cost = step(SystemState((3,), (1,), (0,)), Action.idle(), cfg, StandardArq((0.2,)), make_rng(0))
    assert (cost.aoi_cost, cost.tx_cost) == (3, 0)
    assert fb.outcome is None


# ------------------------------------------------------------------ FR-HARQ

def test_fr_11_block_equals_arq_step():
    cfg = ModelConfig(2, 8)
    fr = FrHarq(1, 1, (0.3, 0.6))
    arq = StandardArq((0.3, 0.6))
    r1, r2 = make_rng(11), make_rng(11)
    s1 = s2 = cfg.initial_state
    for t in range(200):
        a = Action.from_index(t % 3, 2)
        s1, fb1, c1 = step(s1, a, cfg, fr, r1)
        s2, fb2, c2 = step(s2, a, cfg, arq, r2)
        assert s1 == s2 and fb1 == fb2 and c1 == c2


def test_fr_perfect_pull_delivers_after_block():
    cfg = ModelConfig(1, 20)
    proto = FrHarq(5, 3, (0.0,))
    nxt, accruals, slots = fr_block_step(SystemState((7,), (1,), (0,)), Action.new(1), cfg, proto, make_rng(0))
    assert nxt.rx == (5,) and slots == 5
    assert accruals == [7, 8, 9, 10, 11]


def test_fr_block_failure_frequency():
    proto = FrHarq(5, 3, (0.1,))
    assert proto.p_block[0] == pytest.approx(0.00856, abs=1e-12)
    cfg = ModelConfig(1, 20)
    env = Env(cfg, proto, make_rng(5))
    n = 200_000
    fails = 0
    for _ in range(n):
        env.reset()
        ack, *_ = env.step_index(1)
        fails += not ack
    sigma = math.sqrt(n * 0.00856 * (1 - 0.00856))
    assert abs(fails - 0.00856 * n) <= 3 * sigma


# ------------------------------------------------------------ state spaces

def test_state_counts():
    assert StateSpace(ModelConfig(1, 3), StandardArq((0.2,))).size == 3
    assert StateSpace(ModelConfig(2, 4), StandardArq((0.2, 0.1))).size == 16


def test_harq_raw_and_reachable_counts():
    cfg = ModelConfig(1, 3, 1)
    proto = _harq([[0.5, 0.25]])
    raw = StateSpace(cfg, proto)
    assert raw.size == 18
    reach = StateSpace(cfg, proto, reachable=True)
    # independent BFS oracle over transition_distribution
    seen, frontier = {cfg.initial_state}, [cfg.initial_state]
    while frontier:
        s = frontier.pop()
        for a in valid_actions(s, proto):
            for nxt, _ in transition_distribution(s, a, cfg, proto):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
    assert set(reach.states()) == seen


def test_space_index_roundtrip():
    cfg = ModelConfig(2, 4, 1)
    space = StateSpace(cfg, GeneralHarq.geometric([0.5, 0.2], 1))
    for i, s in enumerate(space.states()):
        assert space.index(s) == i
    states, index = enumerate_states(cfg, GeneralHarq.geometric([0.5, 0.2], 1))
    assert index[states[3]] == 3


def test_tabular_matches_kernel():
    cfg = ModelConfig(2, 4, 2)
    proto = GeneralHarq.geometric([0.6, 0.3], 2)
    model = build_tabular(cfg, proto)
    space = model.space
    for i, s in enumerate(space.states()):
        for a in range(model.n_actions):
            act = Action.from_index(a, 2)
            valid = act in valid_actions(s, proto)
            assert model.valid[i, a] == valid
            if not valid:
                continue
            dist = dict(transition_distribution(s, act, cfg, proto))
            tab = {}
            for j, p in ((model.succ_ok[i, a], 1 - model.p_fail[i, a]), (model.succ_fail[i, a], model.p_fail[i, a])):
                if p > 0:
                    tab[space.state(j)] = tab.get(space.state(j), 0.0) + p
            assert tab.keys() == dist.keys()
            for k in tab:
                assert tab[k] == pytest.approx(dist[k], abs=1e-15)


# --------------------------------------------------------------- simulator

def test_simulate_reproducible_and_cost_bounds():
    cfg = ModelConfig(2, 10, 3)
    proto = GeneralHarq.geometric([0.5, 0.2], 3)

    class Cycle:
        def reset(self, rng):
            self.rng = rng

        def act(self, env):
            valid = np.flatnonzero(env.valid_mask())
            return int(self.rng.choice(valid))

    t1 = simulate(cfg, proto, Cycle(), 2000, 9)
    t2 = simulate(cfg, proto, Cycle(), 2000, 9)
    assert np.array_equal(t1.actions, t2.actions) and np.array_equal(t1.aoi, t2.aoi)
    assert 0.0 <= t1.C <= 1.0
    assert t1.J >= 1.0


def test_env_step_matches_kernel_step():
    cfg = ModelConfig(2, 6, 2)
    proto = GeneralHarq.geometric([0.5, 0.3], 2)
    env = Env(cfg, proto, make_rng(4))
    rng = make_rng(4)
    s = cfg.initial_state
    for t in range(300):
        acts = valid_actions(s, proto)
        a = acts[(7 * t) % len(acts)]
        ack, aoi, tx, slots = env.step_index(a.index(2))
        s, fb, cost = step(s, a, cfg, proto, rng)
        assert env.state == s
        assert (aoi, tx) == (cost.aoi_cost, cost.tx_cost)

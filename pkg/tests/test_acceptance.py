"""Acceptance criteria 1-10. Each test records its key numbers; the terminal
summary prints one PASS/FAIL line per criterion (see conftest.py)."""

import math
from functools import lru_cache

import numpy as np
import pytest

from aoisched.bounds import lower_bound, lower_bound_arq, lower_bound_fr
from aoisched.env import FrHarq, GeneralHarq, ModelConfig, StandardArq, simulate, step, transition_distribution
from aoisched.env import valid_actions
from aoisched.env.spaces import StateSpace
from aoisched.env.tabular import build_tabular
from aoisched.harness.presets import preset
from aoisched.harness.runner import run_scenario
from aoisched.harness.scenario import scenario_from_dict
from aoisched.index import (
    ArqArmParams,
    FrArmParams,
    GreedyPolicy,
    RoundRobinPolicy,
    WhittlePolicy,
    indifference_subsidy_numeric,
    single_user_closed_forms,
    whittle_eta,
    whittle_index_arq,
    whittle_index_fr,
)
from aoisched.learners import (
    DqnConfig,
    MlpParams,
    dqn_train,
    gradient_check,
    sarsa_lfa_run,
    ucrl2_vi_run,
    ucrl2_whittle_run,
)
from aoisched.numerics import make_rng, mean_ci, spawn_rngs
from aoisched.planning import DeterministicPolicy, evaluate_policy_exact, rvi_solve, solve_constrained

P_GRID = (0.0, 0.1, 0.5, 0.8)
FIG3_P = (0.5, 0.2, 0.1)


@lru_cache(maxsize=None)
def fig3_model():
    (sc,) = preset("fig3")
    return build_tabular(sc.config(), sc.build_protocol())


@lru_cache(maxsize=None)
def fig3_solution(lam):
    return solve_constrained(fig3_model(), lam=lam)


@lru_cache(maxsize=None)
def fig3_optimum(lam):
    if lam >= 1.0:
        return rvi_solve(fig3_model(), eta=0.0)[1].avg_cost
    return fig3_solution(lam).J


# ---------------------------------------------------------------- 1 kernel

def _kernel_instances():
    return [
        (ModelConfig(2, 10), StandardArq((0.3, 0.6))),
        (ModelConfig(2, 3, 1), GeneralHarq.geometric([0.5, 0.3], 1)),
        (ModelConfig(1, 8, 3), GeneralHarq.geometric([0.6], 3)),
        (ModelConfig(2, 8), FrHarq(3, 2, (0.2, 0.4))),
    ]


def test_criterion_01_kernel_soundness(record_property):
    worst, pairs, checked, outside = 0.0, 0, 0, 0
    for k, (cfg, proto) in enumerate(_kernel_instances()):
        space = StateSpace(cfg, proto)
        assert space.size <= 1000
        random_pairs = []
        for s in space.states():
            for a in valid_actions(s, proto):
                dist = transition_distribution(s, a, cfg, proto)
                worst = max(worst, abs(sum(p for _, p in dist) - 1.0))
                pairs += 1
                if len(dist) > 1:
                    random_pairs.append((s, a, dist))
        # empirical check on a spread of stochastic pairs, each with its own stream
        pick_rng = make_rng(k)
        n = 100_000
        pick = pick_rng.choice(len(random_pairs), size=min(4, len(random_pairs)), replace=False)
        for i, rng in zip(pick, spawn_rngs(100 + k, len(pick))):
            s, a, dist = random_pairs[i]
            counts = {}
            for _ in range(n):
                nxt = step(s, a, cfg, proto, rng)[0]
                counts[nxt] = counts.get(nxt, 0) + 1
            assert set(counts) <= {t for t, _ in dist}
            z = max(abs(counts.get(t, 0) - n * p) / math.sqrt(n * p * (1 - p)) for t, p in dist)
            checked += 1
            outside += z > 3.0
    record_property("pairs", pairs)
    record_property("max_sum_err", f"{worst:.1e}")
    record_property("freq_outside_3sigma", f"{outside}/{checked}")
    assert worst <= 1e-12
    assert outside == 0


# ---------------------------------------------------------- 2 closed forms

def _truncation(gamma, p):
    # 50*Gamma, extended until the mass beyond the age cap is below 1e-12
    N = 50 * gamma
    if p > 0:
        N = max(N, gamma + math.ceil(math.log(1e-12) / math.log(p)))
    return N


def test_criterion_02_closed_form_match(record_property):
    worst = 0.0
    for p in P_GRID:
        for gamma in range(1, 11):
            N = _truncation(gamma, p)
            cfg, proto = ModelConfig(1, N), StandardArq((p,))
            space = StateSpace(cfg, proto)
            rx = space.components()[0][:, 0]
            ev = evaluate_policy_exact(DeterministicPolicy(space, np.where(rx >= gamma, 1, 0)), cfg, proto)
            J, C = single_user_closed_forms(gamma, ArqArmParams(1.0, p))
            worst = max(worst, abs(ev.J - J), abs(ev.C - C))
    record_property("max_abs_err", f"{worst:.2e}")
    assert worst <= 1e-6


# ------------------------------------------------------------- 3 indices

def test_criterion_03_whittle_indifference(record_property):
    worst_arq = worst_fr = 0.0
    for p in P_GRID:
        arm = ArqArmParams(1.0, p)
        for d in range(1, 11):
            worst_arq = max(worst_arq, abs(whittle_index_arq(d, arm) - indifference_subsidy_numeric(d, arm)))
        fr = FrArmParams.from_symbol_error(1.0, 5, 3, p)
        # ages below n_s cannot occur after a block, so FR starts at delta = n_s
        for d in range(5, 11):
            worst_fr = max(worst_fr, abs(whittle_index_fr(d, fr) - indifference_subsidy_numeric(d, fr)))
        one = FrArmParams(1.0, 1, 1, p)
        for d in range(1, 11):
            assert whittle_index_fr(d, one) == whittle_index_arq(d, arm)
    record_property("arq_max_err", f"{worst_arq:.2e}")
    record_property("fr53_max_err", f"{worst_fr:.2e}")
    assert worst_arq <= 1e-2 and worst_fr <= 1e-2


# --------------------------------------------------- 4 symmetric optimality

def test_criterion_04_symmetric_whittle_optimal(record_property):
    worst = 0.0
    for M in (2, 3):
        for p in (0.1, 0.3):
            cfg, proto = ModelConfig(M, 8), StandardArq((p,) * M)
            model = build_tabular(cfg, proto)
            _, vt = rvi_solve(model, eta=0.0, epsilon=1e-11)
            opt = evaluate_policy_exact(rvi_solve(model, eta=0.0, epsilon=1e-11)[0], model).J
            wi = evaluate_policy_exact(WhittlePolicy(cfg, proto, 0.0), model).J
            worst = max(worst, abs(wi - opt), abs(vt.avg_cost - opt))
    record_property("max_gap", f"{worst:.2e}")
    assert worst <= 1e-6


# ------------------------------------------------ 5 constraint satisfaction

def test_criterion_05_constraint_satisfaction(record_property):
    for lam in (0.4, 0.6, 0.8):
        sol = fig3_solution(lam)
        record_property(f"lam{lam}", f"C={sol.C:.4f} J={sol.J:.4f} {sol.construction}")
        assert abs(sol.C - lam) <= 0.01
        assert sol.construction in ("deterministic", "single-state", "time-sharing")


# ------------------------------------------------------- 6 bound dominance

def test_criterion_06_bound_dominance(record_property):
    checks = []
    model = fig3_model()
    cfg, proto = model.space.config, StandardArq(FIG3_P)
    for lam in (0.4, 0.6, 0.8, 1.0):
        lb = lower_bound(cfg.with_lam(lam), proto)
        checks.append(("optimal", lam, fig3_optimum(lam), 0.0, lb))
        eta, _ = whittle_eta(cfg, proto, lam)
        checks.append(("whittle", lam, evaluate_policy_exact(WhittlePolicy(cfg, proto, eta), model).J, 0.0, lb))
    lb1 = lower_bound(cfg, proto)
    for pol in (GreedyPolicy(), RoundRobinPolicy(cfg)):
        checks.append((pol.name, 1.0, evaluate_policy_exact(pol, model).J, 0.0, lb1))
    # FR: simulated Whittle policy with a confidence interval
    for M in (2, 4):
        fr = FrHarq(5, 3, tuple(j / (2 * M) for j in range(M)))
        for lam in (0.6, 1.0):
            c = ModelConfig(M, 100, 0, None, lam)
            eta, _ = whittle_eta(c, fr, lam, horizon=20_000)
            Js = [simulate(c, fr, WhittlePolicy(c, fr, eta), 20_000, s, record_states=False).J for s in range(5)]
            J, ci = mean_ci(Js)
            checks.append((f"fr-whittle-M{M}", lam, J, ci, lower_bound(c, fr)))
    bad = [ch for ch in checks if ch[2] < ch[4] - ch[3]]
    record_property("policies_checked", len(checks))
    record_property("violations", len(bad))

    # tightness witnesses
    one = ModelConfig(1, 200)
    opt1 = rvi_solve(one, StandardArq((0.5,)), eta=0.0)[1].avg_cost
    b1 = lower_bound_arq([1.0], [0.5], 1.0)
    two, perfect = ModelConfig(2, 10), StandardArq((0.0, 0.0))
    rr = evaluate_policy_exact(RoundRobinPolicy(two), two, perfect).J
    b2 = lower_bound(two, perfect)
    grid = [(w, p, lam) for w in (0.5, 1.0, 3.0) for p in P_GRID for lam in (0.2, 0.5, 1.0)]
    fr_eq = all(lower_bound_fr([w, 1.0], [p, 0.2], lam, 1) == lower_bound_arq([w, 1.0], [p, 0.2], lam)
                for w, p, lam in grid)
    record_property("witness_M1", f"bound={b1:.6f} opt={opt1:.6f}")
    record_property("witness_M2", f"bound={b2:.6f} rr={rr:.6f}")
    assert not bad, bad
    assert b1 == pytest.approx(2.0, abs=1e-12) and opt1 == pytest.approx(2.0, abs=1e-8)
    assert b2 == pytest.approx(3.0, abs=1e-12) and rr == pytest.approx(3.0, abs=1e-12)
    assert fr_eq


# ------------------------------------------------------------ 7 learning

def test_criterion_07_ucrl2_convergence(record_property):
    cfg, proto = ModelConfig(3, 15), StandardArq(FIG3_P)
    ratios = {}
    Js = [ucrl2_whittle_run(cfg, proto, 1.0, horizon=10_000, seed=s).J for s in range(100)]
    ratios["whittle_lam1"] = np.mean(Js) / fig3_optimum(1.0)
    for lam in (0.6, 1.0):
        c = cfg.with_lam(lam)
        Js = [ucrl2_vi_run(c, proto, lam, horizon=10_000, seed=s).J for s in range(100)]
        ratios[f"vi_lam{lam}"] = np.mean(Js) / fig3_optimum(lam)
    for k, v in ratios.items():
        record_property(k, f"{v:.4f}")
    assert all(v <= 1.05 for v in ratios.values())


# --------------------------------------------------------------- 8 SARSA

def test_criterion_08_sarsa_sanity(record_property):
    fracs = []
    for s in range(5):
        tr = sarsa_lfa_run(ModelConfig(1, 10), StandardArq((0.0,)), 1.0, horizon=10_000, seed=s)
        fracs.append(float(np.mean(tr.actions[-1000:] != 0)))
    (sc,) = preset("fig6")
    cfg, proto = sc.config(), sc.build_protocol()
    opt = rvi_solve(build_tabular(cfg, proto), eta=0.0)[1].avg_cost
    H, window = 20_000, 10_000
    Js = [sarsa_lfa_run(cfg, proto, 1.0, horizon=H, seed=s).window(H - window)[0] for s in range(20)]
    ratio = float(np.mean(Js)) / opt
    record_property("min_tx_fraction", f"{min(fracs):.3f}")
    record_property("harq_ratio", f"{ratio:.4f}")
    assert min(fracs) >= 0.99
    assert ratio <= 1.2


# ----------------------------------------------------------------- 9 DQN

def test_criterion_09_dqn_fig8(record_property):
    (sc,) = preset("fig8")
    res = dqn_train(sc.config(), sc.build_protocol(), DqnConfig(), episodes=300, seed=0)
    J = res.episode_J
    best = int(np.argmin(J)) + 1
    gain = 1.0 - J.min() / J[0]
    record_property("best_episode", best)
    record_property("improvement", f"{gain:.3f}")
    assert 100 <= best <= 300
    assert gain >= 0.30


# ------------------------------------------------------------ 10 numerics

def test_criterion_10_numerics(record_property, tmp_path):
    errs = []
    for seed in range(10):
        rng = make_rng(seed)
        p = MlpParams.init(4, 5, 3, rng)
        p.b1[:] = rng.normal(size=5) * 0.1
        errs.append(gradient_check(p, rng.normal(size=(6, 4)), rng.normal(size=(6, 3))))
    record_property("max_grad_rel_err", f"{max(errs):.2e}")
    assert max(errs) <= 1e-4

    cfg, proto = ModelConfig(2, 6, 2), GeneralHarq.geometric([0.5, 0.2], 2)
    arq = StandardArq((0.4, 0.1))
    runs = [
        lambda: ucrl2_vi_run(ModelConfig(2, 6), arq, 0.7, horizon=800, seed=3),
        lambda: ucrl2_whittle_run(ModelConfig(2, 6), arq, 0.7, horizon=800, seed=3),
        lambda: sarsa_lfa_run(cfg, proto, 1.0, horizon=800, seed=3),
        lambda: simulate(cfg, proto, GreedyPolicy(), 800, 3),
    ]
    for fn in runs:
        a, b = fn(), fn()
        assert np.array_equal(a.actions, b.actions) and np.array_equal(a.aoi, b.aoi) and a.J == b.J
    d1 = dqn_train(cfg, proto, DqnConfig(episode_len=200), episodes=2, seed=3)
    d2 = dqn_train(cfg, proto, DqnConfig(episode_len=200), episodes=2, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(d1.params.arrays().values(), d2.params.arrays().values()))

    spec = {"name": "repro", "M": 2, "N": 6, "protocol": {"variant": "arq", "p": [0.4, 0.1]}, "lam": [0.7],
            "policies": ["whittle", "ucrl2-whittle", "sarsa-lfa"], "horizon": 500, "seeds": 2}
    sc = scenario_from_dict(spec)
    run_scenario(sc, out_dir=str(tmp_path / "a"))
    run_scenario(sc, out_dir=str(tmp_path / "b"))
    same = (tmp_path / "a" / "repro.csv").read_bytes() == (tmp_path / "b" / "repro.csv").read_bytes()
    record_property("csv_bitwise_identical", same)
    assert same

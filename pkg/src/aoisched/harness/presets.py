"""Built-in scenarios for the evaluation figures (fig3 .. fig8).

Each preset expands to a list of scenarios; sweeps over the number of users
become one scenario per M. Age caps are chosen so that exact planning stays
tractable where it is used and is otherwise far above typical ages.
"""

from __future__ import annotations

from ..errors import ScenarioError
from .scenario import Scenario


def _ones(M):
    return (1.0,) * M


def fig3():
    """3-user ARQ, lambda sweep: optimum vs the UCRL2 learners and the WI policy."""
    return [Scenario("fig3", 3, 15, _ones(3), {"variant": "arq", "p": [0.5, 0.2, 0.1]},
                     lams=(0.4, 0.6, 0.8, 1.0), policies=("optimal", "whittle", "ucrl2-vi", "ucrl2-whittle"),
                     horizon=100_000, seeds=tuple(range(100)), out="results/fig3")]


def fig4(sizes=range(2, 7)):
    """ARQ with p_j = (j-1)/M at lambda = 1 for growing M."""
    out = []
    for M in sizes:
        p = [j / M for j in range(M)]
        out.append(Scenario(f"fig4-M{M}", M, 100, _ones(M), {"variant": "arq", "p": p},
                            policies=("ucrl2-whittle", "whittle", "greedy", "round-robin"),
                            horizon=10_000, seeds=tuple(range(100)), out="results/fig4"))
    return out


def fig5():
    """3-user ARQ learning comparison at lambda = 1."""
    return [Scenario("fig5", 3, 15, _ones(3), {"variant": "arq", "p": [0.5, 0.2, 0.1]},
                     policies=("optimal", "ucrl2-vi", "ucrl2-whittle", "sarsa-lfa", "dqn"),
                     horizon=10_000, seeds=tuple(range(100)), episodes=500, out="results/fig5")]


def fig6():
    """2-user HARQ with g_1(r) = 0.5 2^-r and g_2(r) = 0.2 2^-r."""
    return [Scenario("fig6", 2, 10, _ones(2), {"variant": "harq", "base": [0.5, 0.2], "r_max": 3},
                     policies=("optimal", "ucrl2-vi", "sarsa-lfa", "dqn"),
                     horizon=10_000, seeds=tuple(range(100)), episodes=500, out="results/fig6")]


def fig7(sizes=(2, 4, 6, 8, 10)):
    """FR-HARQ (5, 3) with symbol errors (j-1)/2M, WI policy at lambda 0.6 and 1."""
    out = []
    for M in sizes:
        ps = [j / (2 * M) for j in range(M)]
        out.append(Scenario(f"fig7-M{M}", M, 100, _ones(M), {"variant": "fr", "n_s": 5, "k_s": 3, "p_symbol": ps},
                            lams=(0.6, 1.0), policies=("whittle",), horizon=10_000, seeds=tuple(range(100)),
                            out="results/fig7"))
    return out


def fig8():
    """10-user HARQ with g_j(r) = (j-1)/M 2^-r, r_max = 3: DQN training curve."""
    M = 10
    return [Scenario("fig8", M, 50, _ones(M), {"variant": "harq", "base": [j / M for j in range(M)], "r_max": 3},
                     policies=("dqn",), horizon=10_000, seeds=(0,), episodes=300, out="results/fig8")]


PRESETS = {"fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7, "fig8": fig8}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None

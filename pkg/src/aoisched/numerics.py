"""Small numeric helpers shared by the model and the closed forms."""

import numpy as np
from scipy import stats


def make_rng(seed):
    """Seeded PCG64 generator; every stochastic path in the package uses this."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rngs(seed, n):
    """`n` independent PCG64 streams derived from one 64-bit seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def block_error_prob(n_s, k_s, p_symbol):
    """P(fewer than k_s of n_s symbols arrive) with i.i.d. symbol erasures."""
    if not 1 <= k_s <= n_s:
        raise ValueError(f"need 1 <= k_s <= n_s, got ({n_s}, {k_s})")
    if not 0.0 <= p_symbol < 1.0:
        raise ValueError(f"symbol error probability must be in [0, 1), got {p_symbol}")
    # received symbols ~ Binomial(n_s, 1 - p_symbol)
    return float(stats.binom.cdf(k_s - 1, n_s, 1.0 - p_symbol))


def mean_ci(values, level=0.95):
    """Sample mean and half-width of a Student-t confidence interval."""
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, float("inf")
    sd = float(values.std(ddof=1))
    if sd == 0.0:
        return mean, 0.0
    q = stats.t.ppf(0.5 + level / 2.0, n - 1)
    return mean, float(q * sd / np.sqrt(n))

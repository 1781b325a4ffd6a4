"""Shared fixtures and independent oracles used across the test suite."""
import numpy as np
import pytest

import oligosched as og


@pytest.fixture(scope="session")
def ss2():
    return og.build_state_space(2)


@pytest.fixture(scope="session")
def ss3():
    return og.build_state_space(3)


@pytest.fixture(scope="session")
def ss5():
    return og.build_state_space(5)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the simulation kernels once so timed tests are not charged."""
    p = og.MarketParamsL2(0.5, 0.5, 0, 0, 1, 1)
    og.simulate_l2(og.coop_strategy(p), p, og.SimConfig(horizon=64))
    ss = og.build_state_space(2)
    og.simulate_general(
        np.eye(3), ss, og.ArrivalSpec(q=(0.5, 0.5)), og.SimConfig(horizon=64)
    )


def expected_two_period_cost(u, x, d2, profile, p, gamma=0.0):
    """Literal expected two-period cost of the current flexible agent.

    Independent oracle: the realized cost is written straight from the
    market rules (marginal-cost price, deadline consumption, optional fee
    share gamma of other agents' demand) and the expectation over the next
    period is taken by enumerating arrivals and Gauss-Hermite quadrature
    over the Gaussian loads (exact, the integrand is quadratic).
    """
    nodes, wts = np.polynomial.hermite_e.hermegauss(7)
    wts = wts / wts.sum()
    a, b, g = profile.a, profile.b, profile.g
    total = (x + u) * (u + gamma * x)
    for h1, ph1 in ((1, p.q1), (0, 1.0 - p.q1)):
        for h2, ph2 in ((1, p.q2), (0, 1.0 - p.q2)):
            if ph1 == 0.0 or ph2 == 0.0:
                continue
            for z1, w1 in zip(nodes, wts):
                for z2, w2 in zip(nodes, wts):
                    d1n = p.mu1 + p.sigma1 * z1
                    d2n = p.mu2 + p.sigma2 * z2
                    xn = (d2 - u) + h1 * d1n
                    un = h2 * (-a * xn + b * d2n + g)
                    price = xn + un
                    own = (d2 - u) + gamma * (h1 * d1n + h2 * un)
                    total += ph1 * ph2 * w1 * w2 * price * own
    return total


def best_response_oracle(x, d2, profile, p, gamma=0.0):
    """Argmin over u of the expected two-period cost (exact quadratic fit)."""
    vals = [
        expected_two_period_cost(u, x, d2, profile, p, gamma)
        for u in (-1.0, 0.0, 1.0)
    ]
    c2 = (vals[2] + vals[0]) / 2.0 - vals[1]
    c1 = (vals[2] - vals[0]) / 2.0
    assert c2 > 0.0, "two-period cost is not strictly convex in u"
    return -c1 / (2.0 * c2)


def random_stable_gain(ss, rng, scale=0.08):
    """Even-split gain plus a perturbation, rescaled until stable."""
    base = og.even_split_gain(ss)
    for _ in range(40):
        F = base + scale * rng.standard_normal((ss.D_c, ss.D_c))
        if og.FeedbackGain(F, ss).spectral_radius < 0.95:
            return F
        scale *= 0.5
    return base

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distbell.dist import CategoricalDistribution, CategoricalSupport, make_discrete, point_mass
from distbell.mdp import ValueDistributionTable
from distbell.metrics import (
    cross_entropy,
    kolmogorov,
    kolmogorov_to_cdf,
    max_wasserstein,
    total_variation,
    wasserstein,
)
from oracles import lp_wasserstein1, northwest_corner_cost

P_VALUES = [1, 2, math.inf]


@st.composite
def rational_law(draw, max_atoms=4):
    k = draw(st.integers(1, max_atoms))
    atoms = draw(st.lists(st.integers(-20, 20), min_size=k, max_size=k, unique=True))
    weights = draw(st.lists(st.integers(1, 12), min_size=k, max_size=k))
    total = sum(weights)
    return [float(a) / 4 for a in atoms], [Fraction(w, total) for w in weights]


@pytest.mark.parametrize("p", P_VALUES + [3.5])
def test_point_masses(p):
    assert wasserstein(point_mass(1.5), point_mass(-2.0), p) == pytest.approx(3.5)


def test_noncontraction_distances():
    f = make_discrete([-1.1, 0.9], [0.5, 0.5])
    g = make_discrete([-0.9, 1.1], [0.5, 0.5])
    assert wasserstein(f, g, 1) == pytest.approx(0.2, abs=1e-12)
    assert wasserstein(point_mass(0.0), g, 1) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("q", [0.0, 0.1, 0.3, 0.5, 0.77, 1.0])
def test_bernoulli_distance(q):
    f = make_discrete([0, 1], [q, 1 - q]) if 0 < q < 1 else point_mass(float(q == 0))
    g = make_discrete([0, 1], [0.5, 0.5])
    assert wasserstein(f, g, 1) == pytest.approx(abs(q - 0.5), abs=1e-12)


def test_rejects_p_below_one():
    with pytest.raises(ValueError):
        wasserstein(point_mass(0), point_mass(1), 0.5)


@settings(max_examples=300, deadline=None)
@given(rational_law(), rational_law())
def test_matches_northwest_corner_oracle(f, g):
    fd = make_discrete(f[0], [float(w) for w in f[1]])
    gd = make_discrete(g[0], [float(w) for w in g[1]])
    for p in P_VALUES:
        assert wasserstein(fd, gd, p) == pytest.approx(northwest_corner_cost(*f, *g, p=p), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(rational_law(), rational_law())
def test_matches_transport_lp(f, g):
    fd = make_discrete(f[0], [float(w) for w in f[1]])
    gd = make_discrete(g[0], [float(w) for w in g[1]])
    assert wasserstein(fd, gd, 1) == pytest.approx(lp_wasserstein1(*f, *g), abs=1e-9)


def _random_law(rng, k=None, scale=5.0):
    k = k or int(rng.integers(1, 6))
    return make_discrete(rng.uniform(-scale, scale, k), rng.dirichlet(np.ones(k)))


def test_metric_axioms(rng):
    for _ in range(300):
        u, v, w = (_random_law(rng) for _ in range(3))
        for p in P_VALUES:
            d_uv = wasserstein(u, v, p)
            assert d_uv >= 0
            assert wasserstein(u, u, p) == 0
            assert abs(d_uv - wasserstein(v, u, p)) <= 1e-12
            assert d_uv <= wasserstein(u, w, p) + wasserstein(w, v, p) + 1e-9


def test_monotone_in_p(rng):
    for _ in range(300):
        u, v = _random_law(rng), _random_law(rng)
        d1, d2, dinf = (wasserstein(u, v, p) for p in P_VALUES)
        assert d1 <= d2 + 1e-12 and d2 <= dinf + 1e-12


def test_max_wasserstein():
    coin = make_discrete([-0.9, 1.1], [0.5, 0.5])
    zstar = ValueDistributionTable([[coin, coin], [point_mass(0.0), coin]])
    z = zstar.replace({(1, 1): make_discrete([-1.1, 0.9], [0.5, 0.5])})
    assert max_wasserstein(zstar, zstar) == 0
    assert max_wasserstein(z, zstar, 1) == pytest.approx(0.2, abs=1e-12)
    single = ValueDistributionTable([[coin]])
    other = ValueDistributionTable([[point_mass(0.3)]])
    assert max_wasserstein(single, other, 2) == wasserstein(coin, point_mass(0.3), 2)
    with pytest.raises(ValueError):
        max_wasserstein(single, zstar)


def test_kolmogorov_and_tv():
    f = make_discrete([0.0, 1.0, 2.0], [0.2, 0.5, 0.3])
    assert kolmogorov(f, f) == 0 and total_variation(f, f) == 0
    assert kolmogorov(point_mass(0), point_mass(1)) == 1
    assert total_variation(point_mass(0), point_mass(1)) == 1
    g = make_discrete([0.0, 1.0, 2.0], [0.4, 0.1, 0.5])
    assert kolmogorov(f, g) == pytest.approx(0.2)
    assert total_variation(f, g) == pytest.approx(0.4)


def test_kolmogorov_against_continuous_cdf():
    f = make_discrete([0.5, 1.5], [0.5, 0.5])
    k = kolmogorov_to_cdf(f, lambda y: np.clip(y / 2.0, 0, 1))
    assert k == pytest.approx(0.25)


def test_cross_entropy():
    s = CategoricalSupport(0, 1, 2)
    m = CategoricalDistribution(s, [1.0, 0.0])
    p = CategoricalDistribution(s, [0.5, 0.5])
    assert cross_entropy(m, p) == pytest.approx(math.log(2))
    q = CategoricalDistribution(s, [0.3, 0.7])
    entropy = -(0.3 * math.log(0.3) + 0.7 * math.log(0.7))
    assert cross_entropy(q, q) == pytest.approx(entropy)
    # a zero-probability prediction under positive target mass saturates
    sat = cross_entropy(CategoricalDistribution(s, [0.0, 1.0]), m)
    assert math.isfinite(sat) and sat == pytest.approx(-math.log(1e-300))
    with pytest.raises(ValueError):
        cross_entropy(m, CategoricalDistribution(CategoricalSupport(0, 2, 2), [0.5, 0.5]))

import numpy as np
import pytest

from wdnfdi.errors import ConfigError
from wdnfdi.hydraulics import Solver
from wdnfdi.netgen import GenSpec, base_daily_curve, generate_network, generate_profiles, hanoi_network
from wdnfdi.network import dumps_native, hop_distances


@pytest.mark.parametrize("n, m", [(1, 1), (10, 10), (30, 45), (60, 90)])
def test_generated_network_shape(n, m):
    net = generate_network(GenSpec(n, m, seed=3))
    assert net.n_junctions == n and net.n_pipes == m and net.n_tanks == 1
    assert np.isfinite(hop_distances(net)).all()


def test_generation_is_deterministic():
    a = dumps_native(generate_network(GenSpec(40, 55, seed=9)))
    b = dumps_native(generate_network(GenSpec(40, 55, seed=9)))
    c = dumps_native(generate_network(GenSpec(40, 55, seed=10)))
    assert a == b and a != c


def test_too_few_pipes():
    with pytest.raises(ConfigError, match="n_pipes"):
        generate_network(GenSpec(10, 9))


def test_generated_network_solves():
    net = generate_network(GenSpec(50, 70, seed=1))
    st = Solver(net).solve(net.base_demands)
    assert st.converged and np.all(st.heads > 0)


def test_base_curve_has_flat_night_window():
    curve = base_daily_curve(96)
    assert curve.shape == (96,) and np.all(curve > 0)
    night = curve[12:19]
    assert night.max() - night.min() < 0.05 * night.mean()
    assert night.mean() < curve.mean()


def test_profiles():
    bank = generate_profiles(10, 0.025, seed=1)
    assert bank.profiles.shape == (10, 96)
    np.testing.assert_allclose(bank.profiles[0], base_daily_curve(96))
    ratio = bank.profiles[1:] / bank.profiles[0]
    assert np.all(np.abs(ratio - 1) <= 0.025 + 1e-12)
    same = generate_profiles(4, 0.0, seed=1)
    assert np.all(same.profiles == same.profiles[0])
    np.testing.assert_array_equal(generate_profiles(10, 0.025, 1).profiles, bank.profiles)


def test_hanoi_benchmark():
    net = hanoi_network()
    assert (net.n_junctions, net.n_tanks, net.n_pipes) == (31, 1, 34)
    assert net.base_demands.sum() == pytest.approx(19940 / 3600)
    st = Solver(net).solve(net.base_demands)
    assert st.converged and st.heads.min() > 25

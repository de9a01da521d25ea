import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal, expm

from morilab.chain import (AmplitudeState, CorrelationSeries, LanczosChain,
                           PropagationError, dense_correlation,
                           dense_generator, propagate, spectral_function,
                           spectral_width_sum)


def antisymmetric_generator(b):
    """Independent oracle: the real antisymmetric matrix driving phi."""
    d = len(b) + 1
    A = np.zeros((d, d))
    idx = np.arange(d - 1)
    A[idx + 1, idx] = b
    A[idx, idx + 1] = -np.asarray(b)
    return A


class TestLanczosChain:
    def test_validation(self):
        with pytest.raises(ValueError):
            LanczosChain(np.array([1.0, -0.5]))
        with pytest.raises(ValueError):
            LanczosChain(np.array([0.0]))
        with pytest.raises(ValueError):
            LanczosChain(np.array([[1.0]]))

    def test_dimension(self):
        assert LanczosChain(np.array([])).d == 1
        assert LanczosChain(np.array([1.0, 2.0])).d == 3

    def test_immutable(self):
        ch = LanczosChain(np.array([1.0]))
        with pytest.raises(ValueError):
            ch.b[0] = 2.0

    def test_csv_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        ch = LanczosChain(rng.uniform(0.1, 3.0, 57), label="rt")
        path = tmp_path / "chain.csv"
        ch.to_csv(path)
        back = LanczosChain.from_csv(path, label="rt")
        assert np.array_equal(back.b, ch.b)

    def test_json_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        ch = LanczosChain(rng.uniform(0.1, 3.0, 33), label="j")
        path = tmp_path / "chain.json"
        ch.to_json(path)
        back = LanczosChain.from_json(path)
        assert np.array_equal(back.b, ch.b)
        assert back.label == "j"


class TestDenseGenerator:
    def test_single_bond(self):
        L = dense_generator(LanczosChain(np.array([2.0])))
        assert np.array_equal(L, [[0.0, 2.0], [2.0, 0.0]])

    def test_two_bonds(self):
        L = dense_generator(LanczosChain(np.array([1.0, np.sqrt(2)])))
        expected = np.array([[0, 1, 0], [1, 0, np.sqrt(2)], [0, np.sqrt(2), 0]])
        assert np.array_equal(L, expected)

    def test_spectrum_symmetric_pairs(self):
        # zero diagonal -> bipartite chain -> eigenvalues in +/- pairs
        ch = LanczosChain(np.sqrt(np.arange(1, 50)))
        lam = np.linalg.eigvalsh(dense_generator(ch))
        assert np.allclose(np.sort(lam), -np.sort(-lam)[::-1], atol=1e-10)


class TestSpectralWidthSum:
    def test_single(self):
        ch = LanczosChain(np.array([2.0]))
        assert spectral_width_sum(ch) == 4.0
        L = dense_generator(ch)
        assert spectral_width_sum(ch) == 0.5 * np.trace(L @ L)

    def test_ones(self):
        assert spectral_width_sum(LanczosChain(np.ones(3))) == 3.0

    def test_random_matches_dense_trace(self):
        rng = np.random.default_rng(11)
        ch = LanczosChain(rng.uniform(0.2, 4.0, 99))
        L = dense_generator(ch)
        assert abs(spectral_width_sum(ch) - 0.5 * np.trace(L @ L)) < 1e-12


class TestPropagate:
    def test_trivial_single_site(self):
        series = propagate(LanczosChain(np.array([])), dt=0.1, t_max=5.0)
        assert np.array_equal(series.values, np.ones(51))

    @pytest.mark.parametrize("method", ["chebyshev", "rk4"])
    def test_two_site_cosine(self, method):
        b1 = 1.3
        series = propagate(LanczosChain(np.array([b1])), dt=0.05, t_max=50.0,
                           method=method)
        assert np.abs(series.values - np.cos(b1 * series.t)).max() < 1e-8

    def test_sqrt_chain_gaussian(self):
        # sqrt(n) coefficients generate exp(-t^2/2) before any boundary effect
        ch = LanczosChain(np.sqrt(np.arange(1, 600)))
        series = propagate(ch, dt=0.05, t_max=8.0)
        assert np.abs(series.values - np.exp(-series.t**2 / 2)).max() < 1e-6

    @pytest.mark.parametrize("method", ["chebyshev", "rk4"])
    def test_matches_expm_oracle(self, method):
        rng = np.random.default_rng(21)
        b = rng.uniform(0.5, 2.0, 39)
        A = antisymmetric_generator(b)
        times = np.arange(0, 41) * 0.25
        oracle = np.array([expm(t * A)[0, 0] for t in times])
        series = propagate(LanczosChain(b), dt=0.25, t_max=10.0, method=method)
        assert np.abs(series.values - oracle).max() < 1e-8

    def test_methods_cross_agree(self):
        rng = np.random.default_rng(22)
        b = rng.uniform(0.5, 2.0, 15)
        ch = LanczosChain(b)
        a = propagate(ch, dt=0.1, t_max=12.0, method="chebyshev")
        r = propagate(ch, dt=0.1, t_max=12.0, method="rk4")
        assert np.abs(a.values - r.values).max() < 1e-8

    def test_time_symmetry_dense(self):
        # even correlation function: expm(+tA) and expm(-tA) share the 00 entry
        rng = np.random.default_rng(23)
        b = rng.uniform(0.5, 2.0, 10)
        A = antisymmetric_generator(b)
        for t in (0.3, 1.7, 4.0):
            assert abs(expm(t * A)[0, 0] - expm(-t * A)[0, 0]) < 1e-12
        fwd = propagate(LanczosChain(b), dt=0.5, t_max=4.0)
        times = fwd.t
        dense = dense_correlation(LanczosChain(b), -times)
        assert np.abs(fwd.values - dense).max() < 1e-9

    def test_norm_conserved_with_snapshots(self):
        ch = LanczosChain(np.sqrt(np.arange(1, 80)))
        series = propagate(ch, dt=0.1, t_max=6.0, snapshots=True)
        assert series.norm_drift_max <= 1e-9
        assert isinstance(series.snapshots[0], AmplitudeState)
        assert np.array_equal(series.snapshots[0].phi,
                              np.eye(1, 80).ravel())
        assert all(s.norm_error() <= 1e-9 for s in series.snapshots)

    def test_bounded_values(self):
        ch = LanczosChain(np.sqrt(np.arange(1, 120)))
        series = propagate(ch, dt=0.05, t_max=10.0)
        assert np.abs(series.values).max() <= 1.0 + 1e-9

    def test_boundary_guard_flags_long_horizon(self):
        # linear tail: front reaches the end well inside this horizon
        n = np.arange(1, 120)
        ch = LanczosChain(0.5 * n + 1.0)
        flagged = propagate(ch, dt=0.05, t_max=12.0)
        assert flagged.tail_flagged
        clean = propagate(ch, dt=0.05, t_max=0.5)
        assert not clean.tail_flagged

    def test_rk4_instability_reported(self):
        ch = LanczosChain(np.sqrt(np.arange(1, 60)))
        with pytest.raises(PropagationError, match="chebyshev"):
            propagate(ch, dt=1.0, t_max=30.0, method="rk4", rk4_tol=1e9)

    def test_input_validation(self):
        ch = LanczosChain(np.array([1.0]))
        with pytest.raises(ValueError):
            propagate(ch, dt=-0.1, t_max=1.0)
        with pytest.raises(ValueError):
            propagate(ch, dt=0.1, t_max=-1.0)
        with pytest.raises(ValueError):
            propagate(ch, dt=0.1, t_max=1.0, method="euler")


class TestDenseCorrelation:
    def test_matches_expm(self):
        rng = np.random.default_rng(31)
        b = rng.uniform(0.3, 2.5, 25)
        A = antisymmetric_generator(b)
        times = np.array([0.0, 0.7, 2.2, 5.1])
        oracle = np.array([expm(t * A)[0, 0] for t in times])
        got = dense_correlation(LanczosChain(b), times)
        assert np.abs(got - oracle).max() < 1e-11

    def test_single_site(self):
        got = dense_correlation(LanczosChain(np.array([])), np.array([0.0, 3.0]))
        assert np.array_equal(got, [1.0, 1.0])


class TestCorrelationSeries:
    def test_csv_roundtrip(self, tmp_path):
        ch = LanczosChain(np.sqrt(np.arange(1, 40)))
        series = propagate(ch, dt=0.04, t_max=3.0)
        path = tmp_path / "series.csv"
        series.to_csv(path)
        back = CorrelationSeries.from_csv(path)
        assert back.dt == series.dt
        assert np.array_equal(back.values, series.values)

    def test_normalized_start_enforced(self):
        with pytest.raises(ValueError):
            CorrelationSeries(0.1, np.array([0.9, 0.8]), normalized=True)

    def test_first_passage(self):
        t = np.arange(0, 500) * 0.01
        series = CorrelationSeries(0.01, np.exp(-t))
        assert abs(series.first_passage(1 / np.e) - 1.0) < 0.011


class TestSpectralFunction:
    def test_eta_zero_rejected(self):
        with pytest.raises(ValueError):
            spectral_function(LanczosChain(np.array([1.0])), np.linspace(-2, 2, 9), 0.0)

    def test_default_broadening_positive(self):
        from morilab.chain import default_broadening
        ch = LanczosChain(np.ones(99))
        assert default_broadening(ch, 0.01) == pytest.approx(4 * np.pi / 1.0)
        assert default_broadening(ch) > 0

    def test_matches_dense_lorentzian_oracle(self):
        # smeared transform of C(t) = sum w_k cos(lambda_k t), exact identity
        rng = np.random.default_rng(3)
        b = rng.uniform(0.5, 2.0, 11)
        omega = np.linspace(-6, 6, 401)
        eta = 0.07
        got = spectral_function(LanczosChain(b), omega, eta)
        lam, V = eigh_tridiagonal(np.zeros(12), b)
        oracle = np.zeros_like(omega)
        for ev, w in zip(lam, V[0] ** 2):
            oracle += w * 2 * eta / (eta**2 + (omega - ev) ** 2)
        assert np.abs(got.values - oracle).max() < 1e-10

    def test_two_site_lorentzian_peaks(self):
        b1 = 1.3
        omega = np.linspace(-3, 3, 2401)
        sf = spectral_function(LanczosChain(np.array([b1])), omega, 1e-3)
        peak = omega[np.argmax(sf.values * (omega > 0))]
        assert abs(peak - b1) < 2.5e-3
        assert abs(sf.values.max() * 1e-3 - 1.0) < 1e-3  # half-weight Lorentzian: 1/eta

    def test_sqrt_chain_gaussian_shape(self):
        # Richardson in eta removes the O(eta) smearing of the broadened fraction
        ch = LanczosChain(np.sqrt(np.arange(1, 5000)))
        omega = np.linspace(-4, 4, 161)
        f_eta = spectral_function(ch, omega, 0.1).values
        f_2eta = spectral_function(ch, omega, 0.2).values
        target = np.sqrt(2 * np.pi) * np.exp(-(omega**2) / 2)
        assert np.abs(f_eta - target).max() < 0.25       # measured 0.188
        assert np.abs(2 * f_eta - f_2eta - target).max() < 0.05  # measured 0.021

    def test_normalization_integral(self):
        ch = LanczosChain(np.sqrt(np.arange(1, 300)))
        omega = np.linspace(-40, 40, 4001)
        sf = spectral_function(ch, omega, 0.05)
        assert abs(sf.integral() - 1.0) < 5e-3
        assert sf.values.min() >= 0.0

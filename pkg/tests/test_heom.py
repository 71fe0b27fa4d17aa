import numpy as np
import pytest

from qfluor.model import ModelConfig, bath_correlation_heom
from qfluor import heom as hm

from oracles import two_level_pz


@pytest.fixture(scope="module")
def cfg_strong():
    return ModelConfig(alpha=0.1, Omega=0.0, omega_x=1.0, initial_qubit="excited",
                       omega_c=5.0, dt=0.01, t_final=30.0)


@pytest.fixture(scope="module")
def fit_strong(cfg_strong):
    return hm.fit_correlation(cfg_strong)


class TestFit:
    def test_zero_coupling_zero_fit(self):
        cfg = ModelConfig(alpha=0.0)
        fit = hm.fit_correlation(cfg)
        assert fit.residual == 0.0
        assert np.all(fit.a_r == 0) and np.all(fit.a_i == 0)
        assert np.all(fit.gamma_r > 0) and np.all(fit.gamma_i > 0)

    def test_reconstruction_at_origin(self, cfg_strong, fit_strong):
        # C_R(0) = sum of cosine amplitudes = alpha*omega_c^2 within residual
        target = cfg_strong.alpha * cfg_strong.omega_c**2
        cos_sum = fit_strong.a_r[0::2].sum()
        assert abs(cos_sum - target) / target < 3 * fit_strong.residual_r
        assert fit_strong.reconstruct(0.0).real == pytest.approx(cos_sum)

    def test_declared_residual_matches(self, cfg_strong, fit_strong):
        t = np.linspace(0, fit_strong.t_fit, 1200)
        target = bath_correlation_heom(t, cfg_strong)
        rec = fit_strong.reconstruct(t)
        res_r = np.linalg.norm(rec.real - target.real) / np.linalg.norm(target.real)
        res_i = np.linalg.norm(rec.imag - target.imag) / np.linalg.norm(target.imag)
        assert res_r == pytest.approx(fit_strong.residual_r, rel=1e-6)
        assert res_i == pytest.approx(fit_strong.residual_i, rel=1e-6)

    def test_rates_positive(self, fit_strong):
        assert np.all(fit_strong.gamma_r > 0)
        assert np.all(fit_strong.gamma_i > 0)

    @pytest.mark.slow
    def test_monotone_refit(self, cfg_strong):
        small = hm.fit_correlation(cfg_strong, n_r=2, n_i=2, threshold=1.0)
        large = hm.fit_correlation(cfg_strong, n_r=4, n_i=4, threshold=1.0)
        assert large.residual_r <= small.residual_r + 1e-12
        assert large.residual_i <= small.residual_i + 1e-12

    def test_unreachable_threshold_raises(self, cfg_strong):
        with pytest.raises(hm.FitError):
            hm.fit_correlation(cfg_strong, n_r=1, n_i=1, n_starts=2, threshold=1e-9)

    def test_text_export(self, fit_strong, tmp_path):
        text = fit_strong.to_text()
        assert "residual_r" in text and "gamma_i" in text


class TestHierarchy:
    def test_depth_zero_single_vector(self, fit_strong):
        h = hm.build_hierarchy(fit_strong, 0)
        assert h.size == 1
        assert np.all(h.indices == 0)

    def test_counting_example(self):
        fit = hm.OedfFit(np.zeros(2), np.ones(1), np.ones(1),
                         np.zeros(2), np.ones(1), np.ones(1), 0.0, 0.0, 30.0)
        h = hm.build_hierarchy(fit, 1)
        assert h.size == 5   # 1 + (two j slots + two k slots)

    def test_combinatorial_count(self, fit_strong):
        from math import comb
        h = hm.build_hierarchy(fit_strong, 3)
        slots = 2 * fit_strong.n_r + 2 * fit_strong.n_i
        assert h.size == comb(slots + 3, slots)

    def test_raise_lower_inverse(self, fit_strong):
        h = hm.build_hierarchy(fit_strong, 2)
        for i in range(h.size):
            for s in range(h.indices.shape[1]):
                j = h.raise_map[i, s]
                if j >= 0:
                    assert h.lower_map[j, s] == i
                j = h.lower_map[i, s]
                if j >= 0:
                    assert h.raise_map[j, s] == i

    def test_negative_depth(self, fit_strong):
        with pytest.raises(ValueError):
            hm.build_hierarchy(fit_strong, -1)


class TestEvolve:
    def test_zero_coupling_matches_oracle(self):
        cfg = ModelConfig(alpha=0.0, Omega=0.5, omega_x=1.0, initial_qubit="excited",
                          dt=0.005, t_final=10.0)
        fit = hm.fit_correlation(cfg)
        traj = hm.evolve_heom(cfg, fit, n_trun=2, sample_stride=5)
        np.testing.assert_allclose(traj.pz, two_level_pz(cfg, traj.times), atol=1e-6)
        assert traj.trace_error() < 1e-8
        assert traj.hermiticity_error() < 1e-8

    def test_weak_coupling_decay_and_depth_delta(self):
        cfg = ModelConfig(alpha=0.01, Omega=0.0, omega_x=1.0, initial_qubit="excited",
                          dt=0.01, t_final=10.0)
        fit = hm.fit_correlation(cfg, n_r=2, n_i=2, threshold=0.2)
        t2 = hm.evolve_heom(cfg, fit, n_trun=2, sample_stride=10)
        t3 = hm.evolve_heom(cfg, fit, n_trun=3, sample_stride=10)
        assert t2.pz[-1] < t2.pz[0]                      # spontaneous decay
        assert np.abs(t3.pz - t2.pz).max() < 1e-3        # depth converged
        assert t2.trace_error() < 1e-8

    def test_divergence_detector(self):
        cfg = ModelConfig(alpha=0.1, Omega=0.0, omega_x=1.0, initial_qubit="excited",
                          dt=2.5, t_final=500.0)
        fit = hm.OedfFit(np.array([2.0, 0.0]), np.array([5.0]), np.array([3.0]),
                         np.array([1.0, 0.0]), np.array([5.0]), np.array([3.0]),
                         0.0, 0.0, 30.0)
        with pytest.raises(hm.HierarchyDivergenceError):
            hm.evolve_heom(cfg, fit, n_trun=3, t_final=500.0, dt=2.5)

    def test_csv_export(self, tmp_path):
        cfg = ModelConfig(alpha=0.0, Omega=0.0, t_final=1.0, dt=0.01)
        fit = hm.fit_correlation(cfg)
        traj = hm.evolve_heom(cfg, fit, n_trun=0, sample_stride=10)
        path = tmp_path / "pz.csv"
        traj.to_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_allclose(data[:, 1], traj.pz)

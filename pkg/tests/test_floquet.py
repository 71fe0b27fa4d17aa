import numpy as np
import pytest
from scipy.integrate import quad

from qfluor.model import ModelConfig, SIGMA_X, SIGMA_Z, bath_correlation_tlme
from qfluor.floquet import (
    GammaKernel,
    compute_floquet_basis,
    dump_elements_csv,
    fold_quasienergy,
    gamma,
    operator_elements,
    sigma_x_elements,
)

from oracles import two_level_propagator

DRIVES = [
    (0.5, 1.0),     # resonant moderate drive
    (1.0, 0.56),    # off-resonant strong drive
    (1.5, 1.0),     # strong resonant drive
    (0.01, 1.0),    # weak drive near the zone edge
]


def make_cfg(Omega, omega_x, **kw):
    return ModelConfig(Omega=Omega, omega_x=omega_x, alpha=kw.pop("alpha", 0.1), **kw)


class TestFloquetBasis:
    def test_undriven_limit(self):
        cfg = make_cfg(0.0, 0.8)
        basis = compute_floquet_basis(cfg)
        folded = sorted(fold_quasienergy(np.array([-0.5, 0.5]), 0.8))
        np.testing.assert_allclose(sorted(basis.quasienergies), folded, atol=1e-12)
        # states are the sigma_z eigenstates, time independent up to phase
        ref = np.abs(basis.state_matrix(0.0))
        for t in (0.0, 0.37, 4.0):
            u = basis.state_matrix(t)
            np.testing.assert_allclose(np.abs(u), ref, atol=1e-10)
            np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-10)
        # each state is a pure sigma_z eigenvector
        assert ref.max(axis=0).min() > 1 - 1e-10

    @pytest.mark.parametrize("Omega,omega_x", DRIVES)
    def test_monodromy_oracle(self, Omega, omega_x):
        cfg = make_cfg(Omega, omega_x)
        basis = compute_floquet_basis(cfg)
        period = 2 * np.pi / omega_x
        u_t = two_level_propagator(cfg, period)
        evals, evecs = np.linalg.eig(u_t)
        eps_oracle = np.sort(fold_quasienergy(-np.angle(evals) / period, omega_x))
        np.testing.assert_allclose(np.sort(basis.quasienergies), eps_oracle,
                                   atol=1e-8)
        # Floquet states at t=0 diagonalize the monodromy matrix
        u0 = basis.state_matrix(0.0)
        off = u0.conj().T @ u_t @ u0
        assert abs(off[0, 1]) < 1e-7 and abs(off[1, 0]) < 1e-7

    @pytest.mark.parametrize("Omega,omega_x", DRIVES)
    def test_orthonormal_on_grid(self, Omega, omega_x):
        basis = compute_floquet_basis(make_cfg(Omega, omega_x))
        for t in np.linspace(0, 2 * np.pi / omega_x, 20, endpoint=False):
            u = basis.state_matrix(t)
            np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-8)

    def test_labels_sorted(self):
        basis = compute_floquet_basis(make_cfg(0.5, 1.0))
        assert basis.quasienergies[0] <= basis.quasienergies[1]

    def test_folding_idempotent(self):
        rng = np.random.default_rng(3)
        eps = rng.uniform(-10, 10, 64)
        once = fold_quasienergy(eps, 1.3)
        twice = fold_quasienergy(once, 1.3)
        np.testing.assert_allclose(once, twice, atol=1e-12)
        assert np.all(once >= -0.65 - 1e-12) and np.all(once < 0.65)

    def test_nmax_validation(self):
        with pytest.raises(ValueError):
            compute_floquet_basis(make_cfg(0.5, 1.0), n_max=0)

    def test_overlap_tracking_through_sweep(self):
        # sweeping the drive amplitude (starting off the degenerate Omega=0
        # resonance point, where labels are ill-defined), tracked labels stay
        # continuous: successive same-label states overlap strongly even
        # though plain energy ordering swaps where quasienergies fold
        prev = None
        swaps = 0
        for Om in np.arange(0.05, 1.61, 0.025):
            basis = compute_floquet_basis(make_cfg(float(Om), 1.0), reference=prev)
            if prev is not None:
                ov = np.abs(np.einsum("gns,gns->g",
                                      prev.fourier_states.conj(),
                                      basis.fourier_states))
                assert ov.min() > 0.9, f"label continuity lost at Omega={Om}"
                if basis.quasienergies[0] > basis.quasienergies[1]:
                    swaps += 1
            prev = basis
        assert swaps > 0   # tracking really did override energy ordering

    def test_reference_nmax_mismatch(self):
        a = compute_floquet_basis(make_cfg(0.5, 1.0), n_max=30)
        with pytest.raises(ValueError):
            compute_floquet_basis(make_cfg(0.6, 1.0), n_max=40, reference=a)


class TestSigmaXElements:
    @pytest.mark.parametrize("Omega,omega_x", DRIVES[:3])
    def test_fourier_reconstruction(self, Omega, omega_x):
        basis = compute_floquet_basis(make_cfg(Omega, omega_x))
        el = sigma_x_elements(basis)
        for t in (0.0, 0.21, 1.9, 7.3):
            u = basis.state_matrix(t)
            direct = u.conj().T @ SIGMA_X @ u
            np.testing.assert_allclose(el.at(t), direct, atol=1e-8)

    def test_undriven_elements(self):
        basis = compute_floquet_basis(make_cfg(0.0, 0.8))
        el = sigma_x_elements(basis)
        x0 = el.at(0.0)
        np.testing.assert_allclose(np.abs(x0), [[0, 1], [1, 0]], atol=1e-10)

    def test_hermiticity_symmetry(self):
        basis = compute_floquet_basis(make_cfg(1.5, 1.0))
        el = sigma_x_elements(basis)
        f = el.fourier
        np.testing.assert_allclose(f, f.conj().transpose(1, 0, 2)[:, :, ::-1],
                                   atol=1e-12)

    def test_hermitian_at_time(self):
        basis = compute_floquet_basis(make_cfg(1.0, 0.56))
        el = sigma_x_elements(basis)
        for t in (0.0, 0.77, 3.1):
            x = el.at(t)
            np.testing.assert_allclose(x, x.conj().T, atol=1e-10)

    def test_generic_operator_elements(self):
        basis = compute_floquet_basis(make_cfg(0.5, 1.0))
        el = operator_elements(basis, SIGMA_Z)
        u = basis.state_matrix(0.4)
        np.testing.assert_allclose(el.at(0.4), u.conj().T @ SIGMA_Z @ u, atol=1e-8)

    def test_dump_csv(self, tmp_path):
        basis = compute_floquet_basis(make_cfg(0.5, 1.0))
        el = sigma_x_elements(basis)
        path = tmp_path / "elements.csv"
        dump_elements_csv(basis, el, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# quasienergies = ")
        assert lines[1].split(",")[0] == "n"
        assert len(lines) == 2 + basis.n_values.size


class TestGamma:
    def test_zero_interval(self):
        cfg = make_cfg(0.5, 1.0)
        assert gamma(0.7, 3.0, 3.0, cfg) == 0.0

    def test_zero_coupling(self):
        cfg = make_cfg(0.5, 1.0, alpha=0.0)
        assert gamma(0.7, 5.0, 1.0, cfg) == pytest.approx(0.0)

    def test_order_validation(self):
        cfg = make_cfg(0.5, 1.0)
        with pytest.raises(ValueError):
            gamma(0.7, 1.0, 2.0, cfg)

    @pytest.mark.parametrize("omega", [0.0, 0.7, -1.3, 4.0])
    def test_against_adaptive_quadrature(self, omega):
        cfg = ModelConfig(alpha=0.1, omega_c=5.0)
        t_end = 10.0
        val = gamma(omega, t_end, 0.0, cfg)
        re, _ = quad(lambda x: (bath_correlation_tlme(x, cfg) * np.exp(-1j * omega * x)).real,
                     0, t_end, limit=600)
        im, _ = quad(lambda x: (bath_correlation_tlme(x, cfg) * np.exp(-1j * omega * x)).imag,
                     0, t_end, limit=600)
        oracle = re + 1j * im
        assert abs(val - oracle) / abs(oracle) < 1e-6

    def test_kernel_additivity_exact(self):
        cfg = ModelConfig(alpha=0.1, omega_c=5.0)
        kern = GammaKernel(cfg, [0.9], tau_max=10.0, dtau=0.005)
        a = kern.value(0.9, 4.0, 0.0)
        b = kern.value(0.9, 7.5, 4.0)
        whole = kern.value(0.9, 7.5, 0.0)
        assert abs((a + b) - whole) < 1e-14 * max(abs(whole), 1.0)

    def test_kernel_off_grid_raises(self):
        cfg = ModelConfig(alpha=0.1, omega_c=5.0)
        kern = GammaKernel(cfg, [0.9], tau_max=1.0, dtau=0.01)
        with pytest.raises(ValueError):
            kern.value(0.9, 0.0153, 0.0)

import numpy as np
import pytest

from steernet import harmonics, steer
from steernet.errors import ConfigError
from steernet.steer import (
    FilterBank,
    SteerableWeights,
    phase_table,
    synthesis_backward,
    synthesize_group_bank,
    synthesize_input_bank,
)


def random_weights(basis, kind, co, ci, lam=None, seed=0):
    rng = np.random.default_rng(seed)
    shape = (co, ci, basis.num_atoms) if kind == "input" else (co, ci, lam, basis.num_atoms)
    return SteerableWeights(
        kind=kind,
        re=rng.standard_normal(shape),
        im=rng.standard_normal(shape),
        basis_key=basis.key(),
    )


class TestPhaseTable:
    def test_known_entries(self, basis9):
        ks = basis9.frequencies
        pt = phase_table(4, basis9)
        q_k1 = int(np.argmax(ks == 1))
        assert pt.entries[1, q_k1] == pytest.approx(-1j)

    def test_dc_columns_ones(self, basis9):
        pt = phase_table(7, basis9)
        dc = basis9.frequencies == 0
        assert np.allclose(pt.entries[:, dc], 1.0)

    def test_row_zero_ones(self, basis9):
        pt = phase_table(5, basis9)
        assert np.allclose(pt.entries[0], 1.0)

    def test_full_period(self, basis9):
        pt = phase_table(16, basis9)
        q_k2 = int(np.argmax(basis9.frequencies == 2))
        assert pt.entries[8, q_k2] == pytest.approx(1.0)

    def test_unit_modulus(self, basis9):
        pt = phase_table(12, basis9)
        np.testing.assert_allclose(np.abs(pt.entries), 1.0, atol=1e-14)

    def test_invalid_lambda(self, basis9):
        with pytest.raises(ConfigError):
            phase_table(0, basis9)


class TestInputBank:
    def test_dc_one_hot_is_isotropic(self, basis9):
        w = random_weights(basis9, "input", 2, 1)
        w.re[:] = 0.0
        w.im[:] = 0.0
        q_dc = int(np.argmax(basis9.frequencies == 0))
        w.re[0, 0, q_dc] = 1.0
        bank = synthesize_input_bank(w, basis9, phase_table(6, basis9))
        for lam in range(1, 6):
            np.testing.assert_allclose(bank.kernels[lam], bank.kernels[0], atol=1e-14)

    def test_lambda_one_is_plain_real_part(self, basis9):
        w = random_weights(basis9, "input", 3, 2, seed=5)
        bank = synthesize_input_bank(w, basis9, phase_table(1, basis9))
        expect = np.real(
            np.einsum("ocq,qxy->ocxy", w.re + 1j * w.im, basis9.atoms)
        )
        assert bank.kernels.shape == (1, 3, 2, 9, 9)
        np.testing.assert_allclose(bank.kernels[0], expect, atol=1e-12)

    @pytest.mark.parametrize("lam", [4, 8, 16])
    def test_quarter_turn_equals_grid_rotation(self, basis9, lam):
        w = random_weights(basis9, "input", 2, 3, seed=lam)
        bank = synthesize_input_bank(w, basis9, phase_table(lam, basis9))
        for l0 in range(lam):
            l1 = (l0 + lam // 4) % lam
            rotated = np.rot90(bank.kernels[l0], axes=(-2, -1))
            np.testing.assert_allclose(bank.kernels[l1], rotated, atol=1e-12)

    def test_steering_exactness(self, basis9):
        # synthesizing at index l equals phase-shifting the coefficients by l
        # and synthesizing at index 0
        lam = 8
        pt = phase_table(lam, basis9)
        w = random_weights(basis9, "input", 2, 2, seed=9)
        bank = synthesize_input_bank(w, basis9, pt)
        for l in range(lam):
            shifted = (w.re + 1j * w.im) * pt.entries[l]
            w2 = SteerableWeights("input", shifted.real, shifted.imag, basis9.key())
            bank0 = synthesize_input_bank(w2, basis9, phase_table(1, basis9))
            np.testing.assert_allclose(bank.kernels[l], bank0.kernels[0], atol=1e-12)

    def test_linearity(self, basis9):
        pt = phase_table(4, basis9)
        w1 = random_weights(basis9, "input", 2, 2, seed=1)
        w2 = random_weights(basis9, "input", 2, 2, seed=2)
        alpha = 0.37
        combo = SteerableWeights(
            "input", alpha * w1.re + w2.re, alpha * w1.im + w2.im, basis9.key()
        )
        k_combo = synthesize_input_bank(combo, basis9, pt).kernels
        k1 = synthesize_input_bank(w1, basis9, pt).kernels
        k2 = synthesize_input_bank(w2, basis9, pt).kernels
        np.testing.assert_allclose(k_combo, alpha * k1 + k2, atol=1e-12)

    def test_disk_support(self, basis9):
        w = random_weights(basis9, "input", 2, 2, seed=3)
        bank = synthesize_input_bank(w, basis9, phase_table(4, basis9))
        outside = ~basis9.grid.mask
        assert np.all(bank.kernels[..., outside] == 0.0)

    def test_basis_mismatch_rejected(self, basis9, basis5):
        w = random_weights(basis9, "input", 2, 2)
        with pytest.raises(ConfigError):
            synthesize_input_bank(w, basis5, phase_table(4, basis5))


class TestGroupBank:
    def test_zero_offset_kernel(self, basis9):
        lam = 4
        w = random_weights(basis9, "group", 2, 3, lam=lam, seed=11)
        bank = synthesize_group_bank(w, basis9, phase_table(lam, basis9))
        expect = np.real(
            np.einsum("ocq,qxy->ocxy", w.re[:, :, 0] + 1j * w.im[:, :, 0], basis9.atoms)
        )
        np.testing.assert_allclose(bank.kernels[0, :, 0], expect, atol=1e-12)

    def test_joint_shift_is_grid_rotation(self, basis9):
        lam = 4
        w = random_weights(basis9, "group", 2, 2, lam=lam, seed=12)
        bank = synthesize_group_bank(w, basis9, phase_table(lam, basis9))
        for lo in range(lam):
            for li in range(lam):
                rotated = np.rot90(bank.kernels[lo, :, li], axes=(-2, -1))
                np.testing.assert_allclose(
                    bank.kernels[(lo + 1) % lam, :, (li + 1) % lam],
                    rotated,
                    atol=1e-12,
                )

    def test_dc_depends_on_offset_only(self, basis9):
        lam = 4
        w = random_weights(basis9, "group", 1, 1, lam=lam, seed=13)
        w.re[:] = 0.0
        w.im[:] = 0.0
        q_dc = int(np.argmax((basis9.frequencies == 0)))
        w.re[0, 0, 2, q_dc] = 1.0  # theta-slice 2, isotropic atom
        bank = synthesize_group_bank(w, basis9, phase_table(lam, basis9))
        for lo in range(lam):
            for li in range(lam):
                ref = bank.kernels[(lo - li) % lam, :, 0]
                np.testing.assert_allclose(bank.kernels[lo, :, li], ref, atol=1e-13)

    def test_shapes(self, basis5):
        lam = 3
        w = random_weights(basis5, "group", 4, 2, lam=lam)
        bank = synthesize_group_bank(w, basis5, phase_table(lam, basis5))
        assert bank.kernels.shape == (3, 4, 3, 2, 5, 5)


class TestBackward:
    def test_zero_grad(self, basis5):
        w = random_weights(basis5, "input", 2, 2)
        bank = synthesize_input_bank(w, basis5, phase_table(4, basis5))
        gre, gim = synthesis_backward(np.zeros_like(bank.kernels), basis5, phase_table(4, basis5))
        assert not gre.any() and not gim.any()

    def test_single_pixel_grad(self, basis5):
        # gradient w.r.t. one coefficient is the phase-weighted atom value at
        # the nonzero pixel; cross-check with a central difference
        pt = phase_table(4, basis5)
        w = random_weights(basis5, "input", 1, 1, seed=4)
        g = np.zeros((4, 1, 1, 5, 5))
        g[2, 0, 0, 1, 3] = 1.0
        gre, gim = synthesis_backward(g, basis5, pt)
        h = 1e-6

        def kernel_value(wre, wim):
            ww = SteerableWeights("input", wre, wim, basis5.key())
            return synthesize_input_bank(ww, basis5, pt).kernels[2, 0, 0, 1, 3]

        q = 3
        wp = w.re.copy()
        wp[0, 0, q] += h
        wm = w.re.copy()
        wm[0, 0, q] -= h
        fd = (kernel_value(wp, w.im) - kernel_value(wm, w.im)) / (2 * h)
        assert gre[0, 0, q] == pytest.approx(fd, rel=1e-6)

    @pytest.mark.parametrize("kind,lam", [("input", 4), ("input", 7), ("group", 4), ("group", 5)])
    def test_adjoint_identity(self, basis5, kind, lam):
        rng = np.random.default_rng(lam)
        pt = phase_table(lam, basis5)
        w = random_weights(basis5, kind, 3, 2, lam=lam, seed=lam + 1)
        if kind == "input":
            bank = synthesize_input_bank(w, basis5, pt)
        else:
            bank = synthesize_group_bank(w, basis5, pt)
        g = rng.standard_normal(bank.kernels.shape)
        gre, gim = synthesis_backward(g, basis5, pt)
        lhs = float(np.sum(bank.kernels * g))
        rhs = float(np.sum(w.re * gre) + np.sum(w.im * gim))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_bad_rank(self, basis5):
        with pytest.raises(ConfigError):
            synthesis_backward(np.zeros((2, 2, 5, 5)), basis5, phase_table(2, basis5))


class TestWeightValidation:
    def test_kind_checked(self, basis5):
        with pytest.raises(ConfigError):
            SteerableWeights("bogus", np.zeros((1, 1, 5)), np.zeros((1, 1, 5)), basis5.key())

    def test_plane_shape_mismatch(self, basis5):
        with pytest.raises(ConfigError):
            SteerableWeights("input", np.zeros((1, 1, 5)), np.zeros((1, 2, 5)), basis5.key())

    def test_group_lambda_mismatch(self, basis5):
        w = random_weights(basis5, "group", 2, 2, lam=4)
        with pytest.raises(ConfigError):
            synthesize_group_bank(w, basis5, phase_table(6, basis5))

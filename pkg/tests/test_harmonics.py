import math

import numpy as np
import pytest

from steernet import harmonics
from steernet.errors import BasisError, ConfigError
from steernet.harmonics import AtomSpec, build_basis, build_grid, frequency_cutoff, normalize_atom, sample_atom


class TestGrid:
    def test_center_radius_zero(self):
        g = build_grid(3)
        assert g.radius[1, 1] == 0.0

    def test_corner_inside_mask_size3(self):
        # corner r = sqrt(2) ~ 1.414 <= 1.5, so the 3x3 disk covers the square
        g = build_grid(3)
        assert g.mask[0, 0]
        assert np.isclose(g.radius[0, 0], math.sqrt(2.0))

    def test_size9_mask_radius(self):
        g = build_grid(9)
        assert g.radius[g.mask].max() <= 4.5

    def test_polar_convention(self):
        # pixel one step in +x from center: phi = 0, r = 1
        g = build_grid(9)
        assert g.radius[4, 5] == 1.0
        assert g.angle[4, 5] == 0.0
        # +y (one row up) is phi = pi/2
        assert np.isclose(g.angle[3, 4], math.pi / 2)

    def test_mask_quarter_turn_invariant(self):
        for size in (3, 5, 9, 13):
            g = build_grid(size)
            assert np.array_equal(np.rot90(g.mask), g.mask)

    @pytest.mark.parametrize("size", [2, 4, 1, 0, -3])
    def test_bad_size_rejected(self, size):
        with pytest.raises(ConfigError):
            build_grid(size)


class TestCutoff:
    def test_dc_shell(self):
        assert frequency_cutoff(0) == 0

    def test_ring_nyquist(self):
        assert frequency_cutoff(1) == 4
        assert frequency_cutoff(2) == 7
        assert frequency_cutoff(3) == 10

    def test_k_max_clip(self):
        assert frequency_cutoff(3, k_max=5) == 5
        assert frequency_cutoff(1, k_max=99) == 4

    def test_negative_j(self):
        with pytest.raises(ConfigError):
            frequency_cutoff(-1)


class TestSampling:
    def test_dc_center_value(self):
        g = build_grid(9)
        atom = sample_atom(AtomSpec(0, 0), g, sigma=0.6)
        assert atom[4, 4] == pytest.approx(1.0)
        assert np.all(atom.imag == 0)

    def test_ring_peak_on_axis(self):
        g = build_grid(9)
        atom = sample_atom(AtomSpec(1, 1), g, sigma=0.6)
        # at offset (+1, 0): r = 1 = mu_1 and phi = 0
        assert atom[4, 5] == pytest.approx(1.0 + 0.0j)

    def test_k2_at_plus_y(self):
        g = build_grid(9)
        atom = sample_atom(AtomSpec(1, 2), g, sigma=0.6)
        # offset (0, +1) in (x, y): phi = pi/2, so e^{i pi} = -1 times tau(1) = 1
        assert atom[3, 4] == pytest.approx(-1.0 + 0.0j, abs=1e-12)

    def test_center_zero_for_nonzero_k(self):
        g = build_grid(9)
        for k in (1, 2, 3):
            atom = sample_atom(AtomSpec(1, k), g, sigma=0.6)
            assert atom[4, 4] == 0.0

    def test_vanishes_outside_mask(self):
        g = build_grid(9)
        atom = sample_atom(AtomSpec(4, 3), g, sigma=0.6)
        assert np.all(atom[~g.mask] == 0.0)

    def test_conjugacy_in_k(self):
        # atom(j, -k) equals the complex conjugate of atom(j, k)
        g = build_grid(9)
        for j, k in [(1, 1), (2, 3), (3, 5)]:
            plus = sample_atom(AtomSpec(j, k), g, sigma=0.6)
            minus = sample_atom(AtomSpec(j, -k), g, sigma=0.6)
            np.testing.assert_allclose(minus, np.conj(plus), atol=1e-14)

    def test_bad_sigma(self):
        with pytest.raises(ConfigError):
            sample_atom(AtomSpec(1, 1), build_grid(5), sigma=0.0)


class TestNormalization:
    def test_targets(self, basis9):
        for q, spec in enumerate(basis9.specs):
            norm = np.sqrt(np.sum(np.abs(basis9.atoms[q]) ** 2))
            target = 1.0 if spec.k == 0 else math.sqrt(2.0)
            assert abs(norm - target) < 1e-12, spec

    def test_idempotent(self, basis9):
        atom = basis9.atoms[7]
        again = normalize_atom(atom, basis9.specs[7].k)
        np.testing.assert_allclose(again, atom, atol=1e-15)

    def test_same_scale_both_parts(self):
        g = build_grid(9)
        raw = sample_atom(AtomSpec(2, 1), g, sigma=0.6)
        normed = normalize_atom(raw, 1)
        ratio = normed[raw != 0] / raw[raw != 0]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_zero_atom_rejected(self):
        with pytest.raises(BasisError):
            normalize_atom(np.zeros((5, 5), dtype=complex), k=2)


class TestBuildBasis:
    def test_size9_counts(self, basis9):
        assert basis9.num_atoms == 39  # 1 + 5 + 8 + 11 + 14
        assert max(s.j for s in basis9.specs) == 4
        assert basis9.real_dof == 5 + 2 * 34

    def test_size3_spec_list(self):
        basis = build_basis(3, sigma=0.6)
        got = [(s.j, s.k) for s in basis.specs]
        assert got == [(0, 0), (1, 0), (1, 1), (1, 2), (1, 3), (1, 4)]

    def test_specs_sorted(self, basis9):
        pairs = [(s.j, s.k) for s in basis9.specs]
        assert pairs == sorted(pairs)

    def test_k_max_limits_q(self):
        basis = build_basis(9, sigma=0.6, k_max=2)
        assert all(s.k <= 2 for s in basis.specs)
        assert basis.num_atoms == 1 + 3 + 3 + 3 + 3

    def test_dc_atoms_real(self, basis9):
        for q, spec in enumerate(basis9.specs):
            if spec.k == 0:
                assert np.all(basis9.atoms[q].imag == 0.0)

    def test_part_norms_consistent(self, basis9):
        re = np.sqrt(np.sum(basis9.atoms.real**2, axis=(1, 2)))
        np.testing.assert_allclose(basis9.part_norms[:, 0], re, rtol=1e-12)
        # complex norm splits into the two part norms
        total = np.sqrt(np.sum(basis9.part_norms**2, axis=1))
        np.testing.assert_allclose(total, basis9.atom_norms, rtol=1e-12)


class TestBasisProperties:
    def test_near_orthogonality_size9(self, basis9):
        q = basis9.num_atoms
        flat = basis9.atoms.reshape(q, -1)
        gram = flat @ flat.conj().T
        norms = np.sqrt(np.real(np.diag(gram)))
        coherence = np.abs(gram) / np.outer(norms, norms)
        np.fill_diagonal(coherence, 0.0)
        assert coherence.max() < 0.35

    @pytest.mark.parametrize("size", [5, 9])
    def test_quarter_turn_steering_identity(self, size):
        # rotating the sample grid by 90 degrees equals the phase factor
        # e^{-i k pi / 2}, pixel by pixel
        basis = build_basis(size, sigma=0.6)
        for q, spec in enumerate(basis.specs):
            rotated = np.rot90(basis.atoms[q])
            phase = np.exp(-1j * spec.k * math.pi / 2.0)
            np.testing.assert_allclose(rotated, phase * basis.atoms[q], atol=1e-12)


class TestDump:
    def test_csv_round_trip(self, tmp_path, basis5):
        path = tmp_path / "basis.csv"
        harmonics.dump_basis_csv(basis5, path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "j,k,row,col,re,im"
        assert len(rows) == 1 + basis5.num_atoms * 25
        # reparse one atom and compare
        import csv as csvmod

        with path.open() as fh:
            table = list(csvmod.DictReader(fh))
        first = [r for r in table if r["j"] == "1" and r["k"] == "1"]
        rebuilt = np.zeros((5, 5), dtype=complex)
        for r in first:
            rebuilt[int(r["row"]), int(r["col"])] = float(r["re"]) + 1j * float(r["im"])
        q = [i for i, s in enumerate(basis5.specs) if (s.j, s.k) == (1, 1)][0]
        np.testing.assert_allclose(rebuilt, basis5.atoms[q], rtol=1e-9, atol=1e-12)

    def test_pgm_files(self, tmp_path, basis5):
        paths = harmonics.dump_basis_pgm(basis5, tmp_path)
        n_dc = sum(1 for s in basis5.specs if s.k == 0)
        assert len(paths) == n_dc + 2 * (basis5.num_atoms - n_dc)
        blob = paths[0].read_bytes()
        assert blob.startswith(b"P5\n5 5\n255\n")
        assert len(blob) == len(b"P5\n5 5\n255\n") + 25

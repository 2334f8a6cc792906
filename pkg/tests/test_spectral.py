"""Block spectra, matrix elements, reduced tables, and the binary cache."""

import math
import threading

import numpy as np
import pytest

from eth_lab.coupled_basis import multiplicity, sector_basis, spin_sectors
from eth_lab.model_ops import (ModelSpec, build_hamiltonian,
                               builtin_tensor_family, builtin_tensor_op)
from eth_lab.spectral import (BlockSpectrum, SpectrumCache, block_matrix,
                              compute_block_spectrum, diagonalize_block,
                              matrix_element, reduced_elements)
from eth_lab.spin_algebra import HalfInt

from conftest import dense_heisenberg


def all_spectra(N, spec=None, H=None):
    spec = spec or ModelSpec(N=N)
    H = H or build_hamiltonian(spec)
    return spec, {s.twice: compute_block_spectrum(spec, s, H=H)
                  for s in spin_sectors(N)}


class TestBlockMatrix:
    def test_two_qubit_singlet_block(self):
        H = build_hamiltonian(ModelSpec(N=2))
        B = block_matrix(H, 0, 0)
        assert B.shape == (1, 1)
        assert B[0, 0] == pytest.approx(-3.0, abs=1e-12)

    def test_three_qubit_doublet_block(self):
        H = build_hamiltonian(ModelSpec(N=3))
        for tm in (-1, 1):
            B = block_matrix(H, 0.5, HalfInt.from_twice(tm))
            assert B.shape == (2, 2)
            assert np.allclose(np.linalg.eigvalsh(B), [-3.0, -3.0], atol=1e-10)

    @pytest.mark.parametrize("N", [4, 6, 8])
    def test_m_independence(self, N):
        H = build_hamiltonian(ModelSpec(N=N))
        for s in spin_sectors(N):
            blocks = [block_matrix(H, s, HalfInt.from_twice(tm))
                      for tm in range(-s.twice, s.twice + 1, 2)]
            for B in blocks[1:]:
                assert np.abs(B - blocks[0]).max() <= 1e-10


class TestDiagonalize:
    def test_one_by_one(self):
        sp = diagonalize_block(np.array([[-3.0]]), N=2, s=0)
        assert sp.eigenvalues[0] == -3.0
        assert sp.eigenvectors[0, 0] == 1.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            diagonalize_block(np.array([[np.nan]]))

    def test_sign_convention(self):
        B = np.array([[1.0, 0.2], [0.2, 2.0]])
        sp = diagonalize_block(B)
        for c in range(2):
            i = np.argmax(np.abs(sp.eigenvectors[:, c]))
            assert sp.eigenvectors[i, c] > 0

    @pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
    def test_block_union_matches_dense(self, N):
        # oracle: full dense diagonalization of the materialized Hamiltonian
        _, spectra = all_spectra(N)
        union = np.sort(np.concatenate(
            [np.repeat(sp.eigenvalues, ts + 1) for ts, sp in spectra.items()]))
        dense = np.sort(np.linalg.eigvalsh(dense_heisenberg(N)))
        assert np.abs(union - dense).max() <= 1e-9

    def test_residuals(self):
        H = build_hamiltonian(ModelSpec(N=8))
        B = block_matrix(H, 1, 1)
        sp = diagonalize_block(B)
        R = B @ sp.eigenvectors - sp.eigenvectors * sp.eigenvalues
        assert np.abs(R).max() <= 1e-9 * np.abs(B).max()

    @pytest.mark.parametrize("N", [8, 10, 12])
    def test_trace_consistency(self, N):
        _, spectra = all_spectra(N)
        total = sum((ts + 1) * sp.eigenvalues.sum() for ts, sp in spectra.items())
        assert abs(total) <= 1e-8


class TestMatrixElement:
    def test_two_qubit_flip(self):
        spec, spectra = all_spectra(2)
        T10 = builtin_tensor_op("T10", 2)
        val = matrix_element(T10, (spectra[2], 0, 0), (spectra[0], 0, 0))
        assert val == pytest.approx(0.5, abs=1e-12)

    def test_two_qubit_diagonal(self):
        spec, spectra = all_spectra(2)
        T10 = builtin_tensor_op("T10", 2)
        val = matrix_element(T10, (spectra[2], 0, 1), (spectra[2], 0, 1))
        assert val == pytest.approx(0.5, abs=1e-12)

    def test_magnetic_selection_rule(self):
        spec, spectra = all_spectra(2)
        T10 = builtin_tensor_op("T10", 2)
        assert matrix_element(T10, (spectra[2], 0, 0), (spectra[2], 0, 1)) == 0.0

    @pytest.mark.parametrize("N", [4, 6])
    def test_sum_rule(self, N):
        # Frobenius norm of the sector-restricted operator equals the total
        # squared matrix element over the full coupled eigenbasis
        spec, spectra = all_spectra(N)
        T = builtin_tensor_op("T11", N)
        tq = T.q.twice
        for tmp in (0, 2):
            tm = tmp + tq
            total = 0.0
            for ts_r, spr in spectra.items():
                if abs(tm) > ts_r:
                    continue
                br = sector_basis(N, spr.s, HalfInt.from_twice(tm))
                for ts_c, spc in spectra.items():
                    if abs(tmp) > ts_c:
                        continue
                    bc = sector_basis(N, spc.s, HalfInt.from_twice(tmp))
                    M = T.op.materialize(br.codes, bc.codes)
                    mid = br.matrix.T @ (M @ bc.matrix)
                    E = spr.eigenvectors.T @ mid @ spc.eigenvectors
                    total += float(np.sum(np.asarray(E) ** 2))
            from eth_lab.coupled_basis import sector_codes
            rows = sector_codes(N, (N - tm) // 2)
            cols = sector_codes(N, (N - tmp) // 2)
            ref = T.op.materialize(rows, cols)
            frob2 = float(abs(ref).power(2).sum())
            assert total == pytest.approx(frob2, rel=1e-8)


class TestReducedElements:
    def test_two_qubit_cross_sector(self):
        spec, spectra = all_spectra(2)
        T10 = builtin_tensor_op("T10", 2)
        tab = reduced_elements(T10, spectra[2], spectra[0])
        assert tab.elements[0, 0] == pytest.approx(0.5, abs=1e-12)
        assert tuple(h.twice for h in tab.m_choice) == (0, 0, 0)

    def test_two_qubit_same_sector_fallback(self):
        # <1,0|1,0;1,0> vanishes, so the scan settles on m = m' = 1
        spec, spectra = all_spectra(2)
        T10 = builtin_tensor_op("T10", 2)
        tab = reduced_elements(T10, spectra[2], spectra[2])
        assert tab.elements[0, 0] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert tuple(h.twice for h in tab.m_choice) == (2, 2, 0)

    def test_triangle_absent(self):
        spec, spectra = all_spectra(2)
        T10 = builtin_tensor_op("T10", 2)
        tab = reduced_elements(T10, spectra[0], spectra[0])
        assert tab.absent

    @pytest.mark.parametrize("N", [4, 6])
    def test_choice_independence(self, N):
        # recomputing the table at every admissible (m, m', q) agrees
        from eth_lab.spectral import _eigenbasis_sector_matrix
        from eth_lab.spin_algebra import cg_or_zero
        spec, spectra = all_spectra(N)
        fam = builtin_tensor_family("T1", N)
        for ts_r in (2, 4):
            for ts_c in (2, 4):
                ref = None
                for comp in fam:
                    tq = comp.q.twice
                    for tmp in range(-ts_c, ts_c + 1, 2):
                        tm = tmp + tq
                        if abs(tm) > ts_r:
                            continue
                        cgv = cg_or_zero(ts_c, tmp, 2, tq, ts_r, tm)
                        if cgv == 0.0:
                            continue
                        tab = _eigenbasis_sector_matrix(
                            comp, spectra[ts_r], tm, spectra[ts_c], tmp) / cgv
                        if ref is None:
                            ref = tab
                        else:
                            dev = np.abs(tab - ref)
                            scale = np.maximum(np.abs(ref), 1e-10)
                            assert float((dev / scale).max()) <= 1e-8 or \
                                float(dev.max()) <= 1e-10

    def test_q_independence_t1_family(self):
        spec, spectra = all_spectra(6)
        t0 = reduced_elements(builtin_tensor_op("T10", 6), spectra[2], spectra[4])
        t1 = reduced_elements(builtin_tensor_op("T11", 6), spectra[2], spectra[4])
        assert np.abs(t0.elements - t1.elements).max() <= 1e-8


class TestCache:
    def test_round_trip_bit_identical(self, tmp_path):
        spec = ModelSpec(N=4)
        cache = SpectrumCache(tmp_path)
        sp = compute_block_spectrum(spec, 1)
        cache.store_spectrum(spec, sp)
        back = cache.load_spectrum(spec, HalfInt(1))
        assert np.array_equal(back.eigenvalues, sp.eigenvalues)
        assert np.array_equal(back.eigenvectors, sp.eigenvectors)

    def test_model_change_misses(self, tmp_path):
        cache = SpectrumCache(tmp_path)
        spec = ModelSpec(N=4)
        cache.store_spectrum(spec, compute_block_spectrum(spec, 1))
        other = ModelSpec(N=4, offset=0.4)
        assert cache.load_spectrum(other, HalfInt(1)) is None

    def test_table_round_trip(self, tmp_path):
        spec, spectra = all_spectra(4)
        cache = SpectrumCache(tmp_path)
        T10 = builtin_tensor_op("T10", 4)
        tab = reduced_elements(T10, spectra[2], spectra[2])
        cache.store_table(spec, tab)
        back = cache.load_table(
            spec, tab.operator_fingerprint, 2, 2,
            [h.twice for h in tab.m_choice])
        assert np.array_equal(back.elements, tab.elements)
        assert back.m_choice == tab.m_choice

    def test_concurrent_duplicate_store(self, tmp_path):
        spec = ModelSpec(N=4)
        sp = compute_block_spectrum(spec, 1)
        cache = SpectrumCache(tmp_path)
        errors = []

        def store():
            try:
                cache.store_spectrum(spec, sp)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=store) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        files = list(tmp_path.glob("spectrum-*.ethlab"))
        assert len(files) == 1
        assert cache.load_spectrum(spec, HalfInt(1)) is not None

    def test_corrupt_file_is_miss(self, tmp_path):
        spec = ModelSpec(N=4)
        cache = SpectrumCache(tmp_path)
        path = cache.store_spectrum(spec, compute_block_spectrum(spec, 1))
        path.write_bytes(b"garbage")
        assert cache.load_spectrum(spec, HalfInt(1)) is None

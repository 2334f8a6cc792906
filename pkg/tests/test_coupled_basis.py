"""Coupled basis: multiplicities, path enumeration, vector construction,
and the eigen-relations against dense Kronecker-product oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eth_lab.coupled_basis import (CouplingPath, SectorLayout,
                                   build_basis_vector, enumerate_paths,
                                   multiplicity, sector_basis, sector_codes,
                                   spin_sectors)
from eth_lab.spin_algebra import HalfInt, SpinDomainError

from conftest import dense_total_spin


def dense_vec(v, N):
    out = np.zeros(2**N)
    for b, a in v.amplitudes.items():
        out[b] = a
    return out


class TestMultiplicity:
    def test_two_qubits(self):
        assert multiplicity(2, 0) == 1
        assert multiplicity(2, 1) == 1

    def test_four_qubits_spin1_oracle(self):
        # oracle: diagonalize total S^2 on the full 16-dim space and count
        # spin-1 multiplets from the eigenvalue degeneracy
        _, _, _, S2 = dense_total_spin(4)
        evals = np.linalg.eigvalsh(S2.real)
        n_spin1_states = int(np.sum(np.isclose(evals, 2.0)))
        assert n_spin1_states % 3 == 0
        assert multiplicity(4, 1) == n_spin1_states // 3 == 3

    def test_dimension_identity(self):
        for N in range(1, 15):
            total = sum((s.twice + 1) * multiplicity(N, s) for s in spin_sectors(N))
            assert total == 2**N

    def test_parity_mismatch(self):
        assert multiplicity(4, 0.5) == 0
        assert multiplicity(4, 3) == 0
        assert multiplicity(3, 2.5) == 0

    def test_layout(self):
        layout = SectorLayout(N=8)
        layout.check()
        assert dict(layout.sectors())[HalfInt(4)] == 1


class TestEnumeratePaths:
    def test_two_qubit_triplet(self):
        assert [p.twice_spins for p in enumerate_paths(2, 1)] == [(1, 2)]

    def test_three_qubit_doublets(self):
        got = [p.twice_spins for p in enumerate_paths(3, 0.5)]
        assert got == [(1, 0, 1), (1, 2, 1)]

    def test_fully_stretched(self):
        got = enumerate_paths(4, 2)
        assert len(got) == 1
        assert got[0].twice_spins == (1, 2, 3, 4)

    def test_counts_and_order(self):
        for N in range(2, 11):
            for s in spin_sectors(N):
                paths = enumerate_paths(N, s)
                assert len(paths) == multiplicity(N, s)
                seqs = [p.twice_spins for p in paths]
                assert seqs == sorted(seqs)

    def test_invalid_path_rejected(self):
        with pytest.raises(SpinDomainError):
            CouplingPath((1, 3))
        with pytest.raises(SpinDomainError):
            CouplingPath((2, 1))


class TestBuildBasisVector:
    def test_single_qubit(self):
        p = CouplingPath((1,))
        v = build_basis_vector(p, 0.5)
        assert v.amplitudes == {0: 1.0}

    def test_two_qubit_singlet(self):
        # bit i set = site i down; string "01" is code 2, "10" is code 1
        p = enumerate_paths(2, 0)[0]
        v = build_basis_vector(p, 0)
        assert v.amplitudes[2] == pytest.approx(+1 / math.sqrt(2))
        assert v.amplitudes[1] == pytest.approx(-1 / math.sqrt(2))

    def test_two_qubit_triplet_m0(self):
        p = enumerate_paths(2, 1)[0]
        v = build_basis_vector(p, 0)
        assert v.amplitudes[1] == pytest.approx(1 / math.sqrt(2))
        assert v.amplitudes[2] == pytest.approx(1 / math.sqrt(2))

    def test_singlet_matches_diagonalization_up_to_phase(self):
        _, _, Szd, S2d = dense_total_spin(2)
        evals, evecs = np.linalg.eigh(S2d.real + 10 * Szd.real @ Szd.real)
        oracle = evecs[:, np.argmin(evals)]  # unique S^2 = 0 state
        v = dense_vec(build_basis_vector(enumerate_paths(2, 0)[0], 0), 2)
        assert min(np.linalg.norm(v - oracle), np.linalg.norm(v + oracle)) < 1e-12

    def test_m_out_of_range(self):
        with pytest.raises(SpinDomainError):
            build_basis_vector(enumerate_paths(2, 0)[0], 1)

    def test_hamming_weight_support(self):
        for N in (3, 5, 6):
            for s in spin_sectors(N):
                p = enumerate_paths(N, s)[0]
                for tm in range(-s.twice, s.twice + 1, 2):
                    v = build_basis_vector(p, HalfInt.from_twice(tm))
                    w = (N - tm) // 2
                    assert all(bin(b).count("1") == w for b in v.amplitudes)

    def test_unit_norm(self):
        for N in (4, 7):
            for s in spin_sectors(N):
                for p in enumerate_paths(N, s):
                    assert build_basis_vector(p, s).norm() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("N", [2, 4, 6, 8, 10])
class TestEigenRelations:
    def test_orthonormality_and_joint_eigenbasis(self, N):
        Sx, Sy, Szd, S2d = dense_total_spin(N)
        S2d, Szd = S2d.real, Szd.real
        for s in spin_sectors(N):
            for tm in {-s.twice, 0 if s.twice % 2 == 0 else 1, s.twice}:
                b = sector_basis(N, s, HalfInt.from_twice(tm))
                V = np.zeros((2**N, b.matrix.shape[1]))
                V[b.codes, :] = b.matrix
                G = V.T @ V
                assert np.abs(G - np.eye(G.shape[0])).max() < 1e-10
                sval = s.twice / 2.0
                assert np.abs(S2d @ V - sval * (sval + 1) * V).max() < 1e-10
                assert np.abs(Szd @ V - (tm / 2.0) * V).max() < 1e-10

    def test_ladder_consistency(self, N):
        Sx, Sy, _, _ = dense_total_spin(N)
        Sm = (Sx - 1j * Sy).real
        for s in spin_sectors(N):
            paths = enumerate_paths(N, s)
            p = paths[len(paths) // 2]
            for tm in range(s.twice, -s.twice + 1, -2):
                hi = dense_vec(build_basis_vector(p, HalfInt.from_twice(tm)), N)
                lo = dense_vec(build_basis_vector(p, HalfInt.from_twice(tm - 2)), N)
                sval, mval = s.twice / 2.0, tm / 2.0
                coef = math.sqrt(sval * (sval + 1) - mval * (mval - 1))
                assert np.abs(Sm @ hi - coef * lo).max() < 1e-10


class TestSectorBasis:
    def test_matches_per_path_construction(self):
        for N, ts, tm in ((4, 2, 0), (6, 2, 2), (7, 3, 1), (8, 0, 0)):
            b = sector_basis(N, HalfInt.from_twice(ts), HalfInt.from_twice(tm))
            lookup = {int(c): i for i, c in enumerate(b.codes)}
            for n, p in enumerate(b.paths):
                v = build_basis_vector(p, HalfInt.from_twice(tm))
                col = np.zeros(len(b.codes))
                for code, a in v.amplitudes.items():
                    col[lookup[code]] = a
                assert np.abs(col - b.matrix[:, n]).max() < 1e-12

    def test_lexmin_amplitude_positive(self):
        # the documented sign normalization; the raw coupling chain already
        # satisfies it, which keeps ladder relations intact
        for N in range(2, 9):
            for s in spin_sectors(N):
                for tm in range(-s.twice, s.twice + 1, 2):
                    b = sector_basis(N, s, HalfInt.from_twice(tm))
                    for col in b.matrix.T:
                        nz = np.nonzero(np.abs(col) > 1e-12)[0]
                        strings = [format(int(b.codes[i]), f"0{N}b")[::-1] for i in nz]
                        assert col[nz[np.argmin(np.array(strings, dtype=object))]] > 0

    def test_codes_are_fixed_weight(self):
        b = sector_basis(6, 1, 0)
        assert all(bin(int(c)).count("1") == 3 for c in b.codes)
        assert len(b.codes) == math.comb(6, 3)

    @settings(max_examples=20, deadline=None)
    @given(N=st.integers(2, 8), data=st.data())
    def test_path_count_matches(self, N, data):
        s = data.draw(st.sampled_from(spin_sectors(N)))
        tm = data.draw(st.sampled_from(range(-s.twice, s.twice + 1, 2)))
        b = sector_basis(N, s, HalfInt.from_twice(tm))
        assert b.matrix.shape == (len(sector_codes(N, (N - tm) // 2)),
                                  multiplicity(N, s))

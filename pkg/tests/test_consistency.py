"""Exact-identity suite: composition of reduced tables, recoupling-weight
properties, and asymptotic coupling-coefficient scans."""

import numpy as np
import pytest

from eth_lab.consistency import (cg_asymptotic_scan, check_composition_identity,
                                 check_upsilon_independence, check_wigner_eckart)
from eth_lab.model_ops import (ModelSpec, build_hamiltonian,
                               builtin_tensor_family, compose_tensor,
                               spin_vector_family)
from eth_lab.spectral import compute_block_spectrum, reduced_elements
from eth_lab.coupled_basis import spin_sectors
from eth_lab.spin_algebra import HalfInt, SpinDomainError, upsilon


def spectra_for(N):
    spec = ModelSpec(N=N)
    H = build_hamiltonian(spec)
    return spec, {s.twice: compute_block_spectrum(spec, s, H=H)
                  for s in spin_sectors(N)}


class TestCompositionIdentity:
    def test_n4_rank2(self):
        spec, spectra = spectra_for(4)
        A = spin_vector_family(4, 0).component(0)
        B = spin_vector_family(4, 2).component(0)
        rep = check_composition_identity(A, B, 2, 0, spec, spectra=spectra)
        assert rep.max_abs_dev <= 1e-8

    def test_n2_minimal(self):
        spec, spectra = spectra_for(2)
        A = spin_vector_family(2, 0).component(0)
        B = spin_vector_family(2, 1).component(0)
        rep = check_composition_identity(A, B, 1, 0, spec, spectra=spectra)
        assert rep.max_abs_dev <= 1e-10

    def test_many_instances_n4_n6(self):
        for N in (4, 6):
            spec, spectra = spectra_for(N)
            A = spin_vector_family(N, 0).component(0)
            B = spin_vector_family(N, min(2, N - 1)).component(0)
            for k, q in ((0, 0), (1, 0), (2, 0), (1, 1), (2, 1)):
                rep = check_composition_identity(A, B, k, q, spec, spectra=spectra)
                assert rep.max_abs_dev <= 1e-8, (N, k, q)

    def test_same_site_factors(self):
        spec, spectra = spectra_for(4)
        fam = spin_vector_family(4, 1)
        rep = check_composition_identity(
            fam.component(0), fam.component(0), 2, 0, spec, spectra=spectra)
        assert rep.max_abs_dev <= 1e-8

    def test_triangle_violation_raises(self):
        fam = spin_vector_family(4, 0)
        with pytest.raises(SpinDomainError):
            compose_tensor(fam.component(0), fam.component(0), 3, 0)

    def test_upsilon_against_lstsq_extraction(self):
        # independent oracle: extract the recoupling weights per intermediate
        # sector from spectra by least squares on the composition identity
        N = 4
        spec, spectra = spectra_for(N)
        A = spin_vector_family(N, 0).component(0)
        B = spin_vector_family(N, 2).component(0)
        tk = 4  # rank 2
        T = compose_tensor(A, B, 2, 0)
        ts_r = ts_c = 2  # sector pair (s=1, s=1)
        lhs = reduced_elements(T, spectra[ts_r], spectra[ts_c]).elements
        mats, keys = [], []
        for ts_pp in sorted(spectra):
            tabA = reduced_elements(A, spectra[ts_r], spectra[ts_pp])
            tabB = reduced_elements(B, spectra[ts_pp], spectra[ts_c])
            if tabA.absent or tabB.absent:
                continue
            mats.append((tabA.elements @ tabB.elements).ravel())
            keys.append(ts_pp)
        coef, *_ = np.linalg.lstsq(np.array(mats).T, lhs.ravel(), rcond=None)
        for ts_pp, fitted in zip(keys, coef):
            direct = upsilon(HalfInt.from_twice(ts_r), HalfInt.from_twice(ts_c),
                             HalfInt.from_twice(ts_pp), 2, 1, 1)
            assert fitted == pytest.approx(direct, abs=1e-8)
            if ts_pp == 2:
                # the (1, 1, 1) weight also matches at the (m=1, q=0) point
                at_point = upsilon(1, 1, 1, 2, 1, 1, m=1, q=0)
                assert fitted == pytest.approx(at_point, abs=1e-8)


class TestUpsilonIndependence:
    def test_spin2_instance(self):
        rep = check_upsilon_independence(
            2, 2, 2, 2, 1, 1, points=[(2, 0), (1, 0), (0, 0)])
        assert rep.max_abs_dev <= 1e-10

    def test_single_admissible_pair_raises(self):
        with pytest.raises(ValueError):
            check_upsilon_independence(1, 1, 1, 1, 1, 1, points=[(1, 1)])

    def test_asymptotic_agreement_slope(self):
        from eth_lab.spin_algebra import upsilon_asymptotic
        svals, errs = [], []
        for s in (40, 80, 160):
            errs.append(abs(upsilon(s, s - 1, s, 2, 1, 1)
                            - upsilon_asymptotic(s, s - 1, s, 2, 1, 1)))
            svals.append(s)
        slope = np.polyfit(np.log(svals), np.log(errs), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.3)


class TestCgAsymptoticScan:
    def test_slope(self):
        rep = cg_asymptotic_scan(1, 1, 1, 2)
        assert rep.extras["slope"] == pytest.approx(-1.0, abs=0.2)
        assert not rep.extras["excluded"]

    def test_equal_shift_error_small(self):
        rep = cg_asymptotic_scan(1, 1, 1, 2, s_grid=(640,))
        assert rep.extras["errors"][0] <= 0.01

    def test_selection_violating_points_excluded(self):
        # s - m = 0 with nu < q: exact coefficient vanishes on every grid point
        rep = cg_asymptotic_scan(1, 1, 0, 0, s_grid=(20, 40))
        assert rep.extras["excluded"] == [20, 40]
        assert rep.extras["errors"] == []

    def test_multiple_combinations(self):
        for combo in ((1, 1, 1, 2), (1, 0, 1, 1), (1, 1, 0, 1), (2, 1, 2, 2)):
            rep = cg_asymptotic_scan(*combo)
            assert rep.extras["slope"] == pytest.approx(-1.0, abs=0.2), combo


class TestWignerEckart:
    def test_rank1_family_n6(self):
        spec, spectra = spectra_for(6)
        rep = check_wigner_eckart(builtin_tensor_family("T1", 6), spec,
                                  spectra=spectra)
        assert rep.max_abs_dev <= 1e-8
        assert rep.instance["tables_compared"] > 10

    def test_rank2_family_n4(self):
        spec, spectra = spectra_for(4)
        rep = check_wigner_eckart(builtin_tensor_family("T2", 4), spec,
                                  spectra=spectra)
        assert rep.max_abs_dev <= 1e-8

    def test_rank0_off_sector_tables_absent(self):
        # a rank-0 operator cannot connect different total spins
        N = 4
        spec, spectra = spectra_for(N)
        fam = spin_vector_family(N, 1)
        T00 = compose_tensor(fam.component(0), fam.component(0), 0, 0)
        tab = reduced_elements(T00, spectra[2], spectra[0])
        assert tab.absent
        tab = reduced_elements(T00, spectra[4], spectra[2])
        assert tab.absent

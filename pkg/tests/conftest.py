"""Shared fixtures and independent oracle builders.

The oracles here deliberately avoid the package's own operator machinery:
dense operators come from plain numpy Kronecker products, and coupled states
come from full-space diagonalization of J^2 and J_z with ladder-based phase
fixing. They are the reference implementations the package is tested against.
"""

import math

import numpy as np
import pytest

from eth_lab import HalfInt, ModelSpec, build_hamiltonian, compute_block_spectrum
from eth_lab.coupled_basis import spin_sectors

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ, "i": ID2}


def kron_site_op(op: str, site: int, N: int) -> np.ndarray:
    """Dense sigma_op at one site; basis index bit i = state of site i
    (bit set = spin down), so site 0 is the fastest index."""
    out = np.eye(1, dtype=complex)
    for i in range(N - 1, -1, -1):
        out = np.kron(out, PAULI[op] if i == site else ID2)
    return out


def dense_total_spin(N: int):
    """Total S_a = sum_i sigma_a^(i)/2 and S^2, dense."""
    Sx = sum(kron_site_op("x", i, N) for i in range(N)) / 2.0
    Sy = sum(kron_site_op("y", i, N) for i in range(N)) / 2.0
    Sz = sum(kron_site_op("z", i, N) for i in range(N)) / 2.0
    S2 = Sx @ Sx + Sy @ Sy + Sz @ Sz
    return Sx, Sy, Sz, S2


def dense_heisenberg(N: int, offset: float = 0.3, offset_site: int = 3,
                     periodic: bool = False) -> np.ndarray:
    """Reference Hamiltonian by direct Kronecker products."""
    H = np.zeros((2**N, 2**N), dtype=complex)
    bonds = []
    if periodic:
        for j in range(1, N + 1):
            bonds.append((j, (j - 1) % N, j % N))
        for j in range(1, N + 1):
            bonds.append((j, (j - 1) % N, (j + 1) % N))
    else:
        for j in range(1, N):
            bonds.append((j, j - 1, j))
        for j in range(1, N - 1):
            bonds.append((j, j - 1, j + 1))
    for j, a, b in bonds:
        J = 1.0 + (offset if j == offset_site else 0.0)
        for ax in "xyz":
            H += J * kron_site_op(ax, a, N) @ kron_site_op(ax, b, N)
    assert np.abs(H.imag).max() < 1e-12
    return H.real


def oracle_coupled_states(tj1: int, tj2: int):
    """Coupled |J, M> states on the product space of two spins, built by
    diagonalizing J^2/J_z: stretched states fixed to the Condon-Shortley
    phase, lower M generated with the lowering operator.

    Returns {(tJ, tM): vector}, product index i1 * (tj2+1) + i2 with
    i = (tj - tm) / 2.
    """

    def single_ops(tj):
        d = tj + 1
        mvals = np.array([tj - 2 * i for i in range(d)], dtype=float) / 2.0
        Szo = np.diag(mvals)
        Spo = np.zeros((d, d))
        j = tj / 2.0
        for i in range(1, d):
            m = mvals[i]
            Spo[i - 1, i] = math.sqrt(j * (j + 1) - m * (m + 1))
        return Szo, Spo, Spo.T

    Sz1, Sp1, Sm1 = single_ops(tj1)
    Sz2, Sp2, Sm2 = single_ops(tj2)
    d1, d2 = tj1 + 1, tj2 + 1
    I1, I2 = np.eye(d1), np.eye(d2)
    Jz = np.kron(Sz1, I2) + np.kron(I1, Sz2)
    Jp = np.kron(Sp1, I2) + np.kron(I1, Sp2)
    Jm = Jp.T
    states = {}
    for tJ in range(tj1 + tj2, abs(tj1 - tj2) - 2, -2):
        Mval = tJ / 2.0
        idx = np.where(np.isclose(np.diag(Jz), Mval))[0]
        A = Jp[:, idx]
        _, sv, Vt = np.linalg.svd(A, full_matrices=True)
        null_mask = np.zeros(len(idx), dtype=bool)
        null_mask[sv.size:] = True
        null_mask[: sv.size] = sv < 1e-9
        null = Vt[null_mask].T
        prev = [states[(tJp, tJp)] for tJp in range(tj1 + tj2, tJ, -2)]
        cand = None
        for c in range(null.shape[1]):
            v = np.zeros(Jz.shape[0])
            v[idx] = null[:, c]
            for p in prev:
                v -= p * (p @ v)
            if np.linalg.norm(v) > 1e-8:
                cand = v / np.linalg.norm(v)
                break
        assert cand is not None
        for i1 in range(d1):
            tm1 = tj1 - 2 * i1
            tm2 = tJ - tm1
            if abs(tm2) <= tj2:
                i2 = (tj2 - tm2) // 2
                a = cand[i1 * d2 + i2]
                if abs(a) > 1e-12:
                    if a < 0:
                        cand = -cand
                    break
        states[(tJ, tJ)] = cand
        v = cand
        tM = tJ
        while tM > -tJ:
            jv, mv = tJ / 2.0, tM / 2.0
            v = Jm @ v / math.sqrt(jv * (jv + 1) - mv * (mv - 1))
            tM -= 2
            states[(tJ, tM)] = v
    return states


def oracle_cg(tj1, tm1, tj2, tm2, tJ, tM) -> float:
    """Clebsch-Gordan coefficient from the diagonalization oracle."""
    states = oracle_coupled_states(tj1, tj2)
    if (tJ, tM) not in states:
        return 0.0
    i1 = (tj1 - tm1) // 2
    i2 = (tj2 - tm2) // 2
    d2 = tj2 + 1
    if not (0 <= i1 <= tj1 and 0 <= i2 <= tj2):
        return 0.0
    return float(states[(tJ, tM)][i1 * d2 + i2])


@pytest.fixture(scope="session")
def spectra_n14():
    """Block spectra of the default 14-qubit chain for s = 0..4 (shared by
    the acceptance tests; a couple of seconds per sector)."""
    spec = ModelSpec(N=14)
    H = build_hamiltonian(spec)
    out = {}
    for s in spin_sectors(14):
        if s.twice > 8:
            continue
        out[s.twice] = compute_block_spectrum(spec, s, H=H)
    return spec, out


@pytest.fixture(scope="session")
def spectra_n12():
    spec = ModelSpec(N=12)
    H = build_hamiltonian(spec)
    out = {}
    for s in spin_sectors(12):
        out[s.twice] = compute_block_spectrum(spec, s, H=H)
    return spec, out

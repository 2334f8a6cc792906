"""Spin-sector blocks of the Hamiltonian, their spectra, and matrix elements.

A spin-s block is the Hamiltonian sandwiched between the coupled-basis
vectors of one (s, m) sector. The block matrix is provably independent of m
(the Hamiltonian commutes with the ladder operators), so each block is
assembled and diagonalized once in the m = s sector, which lives in the
smallest ambient fixed-weight subspace; the eigenvector coefficients over
the path index n are then reused at every m.

Reduced matrix elements of a rank-k tensor component are plain sector matrix
elements divided by the angular-momentum conversion coefficient at one
recorded (m, m', q) choice.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .coupled_basis import SectorBasis, multiplicity, sector_basis
from .model_ops import ModelSpec, PauliStringOperator, TensorOpSpec, build_hamiltonian
from .spin_algebra import HalfInt, SpinDomainError, SpinLike, _twice, cg_or_zero

__all__ = [
    "BlockSpectrum",
    "ReducedElementTable",
    "block_matrix",
    "diagonalize_block",
    "compute_block_spectrum",
    "matrix_element",
    "reduced_elements",
    "SpectrumCache",
]


@dataclass
class BlockSpectrum:
    """Eigenstructure of one spin-s Hamiltonian block."""

    N: int
    s: HalfInt
    eigenvalues: np.ndarray        # ascending
    eigenvectors: np.ndarray       # columns over the path index n
    model_fingerprint: str
    m_used: HalfInt

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def block_matrix(H: PauliStringOperator, s: SpinLike, m: SpinLike,
                 basis: Optional[SectorBasis] = None) -> np.ndarray:
    """Dense symmetric block <s, m, n| H |s, m, n'>."""
    N = H.N
    ts, tm = _twice(s), _twice(m)
    if multiplicity(N, HalfInt.from_twice(ts)) < 1:
        raise SpinDomainError(f"no spin-{ts}/2 multiplets for N={N}")
    if basis is None:
        basis = sector_basis(N, HalfInt.from_twice(ts), HalfInt.from_twice(tm))
    Hsec = H.materialize(basis.codes, basis.codes)
    B = basis.matrix.T @ (Hsec @ basis.matrix)
    if np.iscomplexobj(B):
        if np.abs(B.imag).max() > 1e-12:
            raise AssertionError("Hamiltonian block has imaginary part")
        B = B.real
    return (B + B.T) / 2.0


def diagonalize_block(block: np.ndarray, *, N: int = 0, s: SpinLike = 0,
                      model_fingerprint: str = "", m_used: SpinLike = None
                      ) -> BlockSpectrum:
    """Full eigensystem of a symmetric block, ascending, signs fixed.

    Each eigenvector's largest-magnitude coefficient is made positive (first
    occurrence on ties) so cached spectra are reproducible bit for bit.
    """
    block = np.asarray(block, dtype=float)
    if not np.all(np.isfinite(block)):
        raise ValueError("block matrix contains non-finite entries")
    evals, evecs = scipy.linalg.eigh(block)
    for c in range(evecs.shape[1]):
        i = int(np.argmax(np.abs(evecs[:, c])))
        if evecs[i, c] < 0:
            evecs[:, c] = -evecs[:, c]
    return BlockSpectrum(
        N=N,
        s=HalfInt(s),
        eigenvalues=evals,
        eigenvectors=evecs,
        model_fingerprint=model_fingerprint,
        m_used=HalfInt(s if m_used is None else m_used),
    )


def compute_block_spectrum(spec: ModelSpec, s: SpinLike,
                           H: Optional[PauliStringOperator] = None,
                           cache: Optional["SpectrumCache"] = None
                           ) -> BlockSpectrum:
    """Assemble and diagonalize the spin-s block at m = s, with caching."""
    ts = _twice(s)
    if cache is not None:
        hit = cache.load_spectrum(spec, HalfInt.from_twice(ts))
        if hit is not None:
            return hit
    if H is None:
        H = build_hamiltonian(spec)
    B = block_matrix(H, HalfInt.from_twice(ts), HalfInt.from_twice(ts))
    out = diagonalize_block(
        B, N=spec.N, s=HalfInt.from_twice(ts),
        model_fingerprint=spec.fingerprint(), m_used=HalfInt.from_twice(ts),
    )
    if cache is not None:
        cache.store_spectrum(spec, out)
    return out


def _eigenbasis_sector_matrix(T: TensorOpSpec, row: BlockSpectrum, tm_row: int,
                              col: BlockSpectrum, tm_col: int) -> np.ndarray:
    """<alpha, m| T |alpha', m'> for all (alpha, alpha') at fixed (m, m')."""
    br = sector_basis(row.N, row.s, HalfInt.from_twice(tm_row))
    bc = sector_basis(col.N, col.s, HalfInt.from_twice(tm_col))
    M = T.op.materialize(br.codes, bc.codes)
    mid = br.matrix.T @ (M @ bc.matrix)
    out = row.eigenvectors.T @ mid @ col.eigenvectors
    if np.iscomplexobj(out):
        if np.abs(out.imag).max() > 1e-10:
            raise AssertionError("tensor component has unexpected imaginary part")
        out = out.real
    return out


def matrix_element(T: TensorOpSpec, bra: Tuple[BlockSpectrum, int, SpinLike],
                   ket: Tuple[BlockSpectrum, int, SpinLike]) -> float:
    """Single sandwich <alpha, m| T^(k)_q |alpha', m'>.

    Returns exact 0.0 unless m = m' + q (magnetic selection rule).
    """
    row, i, m = bra
    col, j, mp = ket
    tm, tmp = _twice(m), _twice(mp)
    if tm != tmp + T.q.twice:
        return 0.0
    if abs(tm) > row.s.twice or abs(tmp) > col.s.twice:
        raise SpinDomainError("magnetic number outside sector")
    M = _eigenbasis_sector_matrix(T, row, tm, col, tmp)
    return float(M[i, j])


@dataclass
class ReducedElementTable:
    """Reduced matrix elements <alpha || T^(k) || alpha'> for a sector pair.

    ``elements`` is None when the triangle rule (|s_row - s_col| <= k <=
    s_row + s_col) makes every element vanish identically; then the table is
    "absent". The (m, m', q) evaluation choice is recorded.
    """

    s_row: HalfInt
    s_col: HalfInt
    k: HalfInt
    elements: Optional[np.ndarray]
    operator_fingerprint: str
    m_choice: Optional[Tuple[HalfInt, HalfInt, HalfInt]]  # (m, m', q)

    @property
    def absent(self) -> bool:
        return self.elements is None


def _triangle_ok(ts_row: int, ts_col: int, tk: int) -> bool:
    return abs(ts_row - ts_col) <= tk <= ts_row + ts_col and (ts_row + ts_col + tk) % 2 == 0


def choose_m_for_reduction(ts_row: int, ts_col: int, tk: int, tq: int):
    """Deterministic (m, m', q) with a provably nonzero conversion coefficient.

    Prefers m' = 0 (or the smallest |m'| the sector parity allows), walking
    outward in |m'| with the positive value first; the first nonzero
    coefficient wins. Exists whenever the triangle rule holds.
    """
    candidates = []
    for tmp in range(ts_col % 2, ts_col + 1, 2):
        candidates.append(tmp)
        if tmp:
            candidates.append(-tmp)
    for tmp in candidates:
        tmr = tmp + tq
        if abs(tmr) > ts_row:
            continue
        cgv = cg_or_zero(ts_col, tmp, tk, tq, ts_row, tmr)
        if cgv != 0.0:
            return tmr, tmp, cgv
    return None


def reduced_elements(T: TensorOpSpec, spec_row: BlockSpectrum,
                     spec_col: BlockSpectrum) -> ReducedElementTable:
    """Table of <alpha || T^(k) || alpha'> over one (s_row, s_col) pair.

    element = <alpha, m| T^(k)_q |alpha', m'> / <s_row m | s_col m' ; k q>
    at the recorded (m, m', q); q is the component carried by T.
    """
    ts_r, ts_c, tk, tq = spec_row.s.twice, spec_col.s.twice, T.k.twice, T.q.twice
    if not _triangle_ok(ts_r, ts_c, tk):
        return ReducedElementTable(
            s_row=spec_row.s, s_col=spec_col.s, k=T.k, elements=None,
            operator_fingerprint=T.fingerprint(), m_choice=None,
        )
    choice = choose_m_for_reduction(ts_r, ts_c, tk, tq)
    if choice is None:
        raise AssertionError(
            "no admissible (m, m', q) with nonzero conversion coefficient; "
            "cannot occur when the triangle rule holds"
        )
    tmr, tmp, cgv = choice
    M = _eigenbasis_sector_matrix(T, spec_row, tmr, spec_col, tmp)
    return ReducedElementTable(
        s_row=spec_row.s,
        s_col=spec_col.s,
        k=T.k,
        elements=M / cgv,
        operator_fingerprint=T.fingerprint(),
        m_choice=(
            HalfInt.from_twice(tmr),
            HalfInt.from_twice(tmp),
            HalfInt.from_twice(tq),
        ),
    )


# ---------------------------------------------------------------------------
# on-disk cache
# ---------------------------------------------------------------------------

_MAGIC = b"ETHLAB01"
_FORMAT_VERSION = 1


class SpectrumCache:
    """Content-addressed binary cache for block spectra and element tables.

    File layout (all integers little-endian):
      bytes 0..7    magic "ETHLAB01"
      bytes 8..15   uint64 header length H
      bytes 16..16+H-1  UTF-8 JSON header
      then raw float64 little-endian arrays at the byte offsets listed in
      the header: eigenvalues, then eigenvectors in column-major order (for
      spectra); the element matrix in column-major order (for tables).

    Writers create a temporary file in the cache directory and atomically
    rename it into place, so concurrent duplicate stores leave one valid
    file and readers never observe partial writes.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    # -- keys --

    @staticmethod
    def spectrum_key(spec: ModelSpec, s: HalfInt) -> str:
        blob = json.dumps(
            {
                "kind": "spectrum",
                "version": _FORMAT_VERSION,
                "model": spec.fingerprint(),
                "N": spec.N,
                "twice_s": s.twice,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:24]

    @staticmethod
    def table_key(spec: ModelSpec, op_fingerprint: str, ts_row: int,
                  ts_col: int, m_choice) -> str:
        blob = json.dumps(
            {
                "kind": "table",
                "version": _FORMAT_VERSION,
                "model": spec.fingerprint(),
                "op": op_fingerprint,
                "N": spec.N,
                "rc": [ts_row, ts_col],
                "m_choice": m_choice,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:24]

    # -- low-level container --

    def _write(self, name: str, header: dict, arrays) -> Path:
        payload_parts = []
        offset = 0
        arr_meta = []
        for arr_name, arr in arrays:
            raw = np.asarray(arr, dtype="<f8", order="F").tobytes(order="F")
            arr_meta.append(
                {
                    "name": arr_name,
                    "dtype": "<f8",
                    "order": "F",
                    "shape": list(np.asarray(arr).shape),
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            payload_parts.append(raw)
            offset += len(raw)
        header = dict(header)
        header["format_version"] = _FORMAT_VERSION
        header["arrays"] = arr_meta
        hbytes = json.dumps(header, sort_keys=True).encode()
        path = self.directory / name
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(_MAGIC)
                fh.write(len(hbytes).to_bytes(8, "little"))
                fh.write(hbytes)
                for part in payload_parts:
                    fh.write(part)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return path

    def _read(self, name: str):
        path = self.directory / name
        if not path.exists():
            return None
        try:
            blob = path.read_bytes()
            if blob[:8] != _MAGIC:
                return None
            hlen = int.from_bytes(blob[8:16], "little")
            header = json.loads(blob[16:16 + hlen].decode())
            if header.get("format_version") != _FORMAT_VERSION:
                return None
            base = 16 + hlen
            arrays = {}
            for meta in header["arrays"]:
                start = base + meta["offset"]
                raw = blob[start:start + meta["nbytes"]]
                arr = np.frombuffer(raw, dtype="<f8").copy()
                arrays[meta["name"]] = arr.reshape(meta["shape"], order="F")
            return header, arrays
        except (ValueError, KeyError, json.JSONDecodeError):
            return None  # treat corruption as a miss

    # -- spectra --

    def store_spectrum(self, spec: ModelSpec, spectrum: BlockSpectrum) -> Path:
        key = self.spectrum_key(spec, spectrum.s)
        header = {
            "kind": "spectrum",
            "N": spec.N,
            "twice_s": spectrum.s.twice,
            "twice_m_used": spectrum.m_used.twice,
            "model": spec.fingerprint(),
            "dim": spectrum.dim,
        }
        return self._write(
            f"spectrum-{key}.ethlab",
            header,
            [("eigenvalues", spectrum.eigenvalues),
             ("eigenvectors", spectrum.eigenvectors)],
        )

    def load_spectrum(self, spec: ModelSpec, s: HalfInt) -> Optional[BlockSpectrum]:
        key = self.spectrum_key(spec, s)
        got = self._read(f"spectrum-{key}.ethlab")
        if got is None:
            return None
        header, arrays = got
        if header.get("model") != spec.fingerprint() or header.get("N") != spec.N \
                or header.get("twice_s") != s.twice:
            return None
        return BlockSpectrum(
            N=spec.N,
            s=HalfInt.from_twice(header["twice_s"]),
            eigenvalues=arrays["eigenvalues"].ravel(),
            eigenvectors=arrays["eigenvectors"],
            model_fingerprint=header["model"],
            m_used=HalfInt.from_twice(header["twice_m_used"]),
        )

    # -- reduced element tables --

    def store_table(self, spec: ModelSpec, table: ReducedElementTable) -> Path:
        if table.absent:
            raise ValueError("refusing to cache an absent table")
        m_choice = [h.twice for h in table.m_choice]
        key = self.table_key(
            spec, table.operator_fingerprint, table.s_row.twice,
            table.s_col.twice, m_choice,
        )
        header = {
            "kind": "table",
            "N": spec.N,
            "twice_s_row": table.s_row.twice,
            "twice_s_col": table.s_col.twice,
            "twice_k": table.k.twice,
            "model": spec.fingerprint(),
            "op": table.operator_fingerprint,
            "m_choice": m_choice,
            "dims": list(table.elements.shape),
        }
        return self._write(f"table-{key}.ethlab", header,
                           [("elements", table.elements)])

    def load_table(self, spec: ModelSpec, op_fingerprint: str, ts_row: int,
                   ts_col: int, m_choice) -> Optional[ReducedElementTable]:
        key = self.table_key(spec, op_fingerprint, ts_row, ts_col, list(m_choice))
        got = self._read(f"table-{key}.ethlab")
        if got is None:
            return None
        header, arrays = got
        if header.get("op") != op_fingerprint or header.get("model") != spec.fingerprint():
            return None
        return ReducedElementTable(
            s_row=HalfInt.from_twice(header["twice_s_row"]),
            s_col=HalfInt.from_twice(header["twice_s_col"]),
            k=HalfInt.from_twice(header["twice_k"]),
            elements=arrays["elements"],
            operator_fingerprint=op_fingerprint,
            m_choice=tuple(HalfInt.from_twice(t) for t in header["m_choice"]),
        )

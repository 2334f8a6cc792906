"""Hamiltonians and spherical tensor operators as sparse Pauli strings.

Operators are weighted strings over the on-site alphabet x, y, z, +, -, u, d
(u and d are the up/down projectors; they appear when operator products are
taken on a shared site). Sites are 0-indexed internally; formulas quoted in
1-indexed site language are translated at the builder boundary.

Units: Hamiltonians are written in Pauli units (sigma matrices), while all
angular-momentum algebra uses spin units S = sigma / 2. Tensor operators mix
the two exactly as their defining strings are written.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .spin_algebra import HalfInt, SpinDomainError, SpinLike, _twice, cg_or_zero

__all__ = [
    "PauliStringOperator",
    "ModelSpec",
    "TensorOpSpec",
    "TensorFamily",
    "build_hamiltonian",
    "builtin_tensor_op",
    "builtin_tensor_family",
    "compose_tensor",
    "total_spin_operators",
    "commutator",
    "max_abs",
]

_SITE_OPS = ("x", "y", "z", "+", "-", "u", "d")

# on-site expansion into matrix units u = |0><0|, d = |1><1|, + = |0><1|, - = |1><0|
_UNIT_EXPANSION = {
    "x": ((1.0, "+"), (1.0, "-")),
    "y": ((-1.0j, "+"), (1.0j, "-")),
    "z": ((1.0, "u"), (-1.0, "d")),
    "+": ((1.0, "+"),),
    "-": ((1.0, "-"),),
    "u": ((1.0, "u"),),
    "d": ((1.0, "d"),),
}

# products of matrix units, a @ b; missing pairs vanish
_UNIT_PRODUCT = {
    ("u", "u"): "u", ("u", "+"): "+",
    ("d", "d"): "d", ("d", "-"): "-",
    ("+", "d"): "+", ("+", "-"): "u",
    ("-", "u"): "-", ("-", "+"): "d",
}

_DAGGER = {"x": "x", "y": "y", "z": "z", "+": "-", "-": "+", "u": "u", "d": "d"}


def _string_key(string: Dict[int, str]) -> Tuple[Tuple[int, str], ...]:
    return tuple(sorted(string.items()))


@dataclass(frozen=True)
class PauliStringOperator:
    """Sparse operator: sum of coefficient-weighted on-site operator strings."""

    N: int
    terms: Tuple[Tuple[complex, Tuple[Tuple[int, str], ...]], ...]
    hermitian: bool = False

    @classmethod
    def from_terms(cls, N: int, terms: Sequence[Tuple[complex, Dict[int, str]]],
                   hermitian: bool = False) -> "PauliStringOperator":
        acc: Dict[Tuple[Tuple[int, str], ...], complex] = {}
        for coeff, string in terms:
            for site, op in string.items():
                if not 0 <= site < N:
                    raise ValueError(f"site {site} outside chain of {N} qubits")
                if op not in _SITE_OPS:
                    raise ValueError(f"unknown site operator {op!r}")
            key = _string_key(string)
            acc[key] = acc.get(key, 0.0) + complex(coeff)
        kept = tuple(
            (c, k) for k, c in sorted(acc.items(), key=lambda kv: kv[0])
            if abs(c) > 1e-15
        )
        return cls(N=N, terms=kept, hermitian=hermitian)

    @classmethod
    def zero(cls, N: int) -> "PauliStringOperator":
        return cls(N=N, terms=(), hermitian=True)

    def scaled(self, factor: complex) -> "PauliStringOperator":
        return PauliStringOperator.from_terms(
            self.N, [(factor * c, dict(s)) for c, s in self.terms],
            hermitian=self.hermitian and abs(complex(factor).imag) < 1e-15,
        )

    def __add__(self, other: "PauliStringOperator") -> "PauliStringOperator":
        if self.N != other.N:
            raise ValueError("operator size mismatch")
        return PauliStringOperator.from_terms(
            self.N,
            [(c, dict(s)) for c, s in self.terms]
            + [(c, dict(s)) for c, s in other.terms],
            hermitian=self.hermitian and other.hermitian,
        )

    def __sub__(self, other: "PauliStringOperator") -> "PauliStringOperator":
        return self + other.scaled(-1.0)

    def __matmul__(self, other: "PauliStringOperator") -> "PauliStringOperator":
        """Operator product; shared sites are multiplied via matrix units."""
        if self.N != other.N:
            raise ValueError("operator size mismatch")
        out: List[Tuple[complex, Dict[int, str]]] = []
        for c1, s1 in self.terms:
            d1 = dict(s1)
            for c2, s2 in other.terms:
                d2 = dict(s2)
                shared = set(d1) & set(d2)
                pieces = [(c1 * c2, {**d1, **d2})]
                dead = False
                for site in shared:
                    nxt = []
                    for cc, st in pieces:
                        for ca, ua in _UNIT_EXPANSION[d1[site]]:
                            for cb, ub in _UNIT_EXPANSION[d2[site]]:
                                unit = _UNIT_PRODUCT.get((ua, ub))
                                if unit is None:
                                    continue
                                st2 = dict(st)
                                st2[site] = unit
                                nxt.append((cc * ca * cb, st2))
                    pieces = nxt
                    if not pieces:
                        dead = True
                        break
                if not dead:
                    out.extend(pieces)
        return PauliStringOperator.from_terms(self.N, out)

    def dagger(self) -> "PauliStringOperator":
        return PauliStringOperator.from_terms(
            self.N,
            [
                (complex(c).conjugate(), {site: _DAGGER[op] for site, op in s})
                for c, s in self.terms
            ],
            hermitian=self.hermitian,
        )

    def fingerprint(self) -> str:
        payload = [
            [self.N],
            [[c.real, c.imag, list(map(list, s))] for c, s in self.terms],
        ]
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # ---- materialization ----

    def _term_action(self, coeff, string, codes_in, codes_out):
        """(rows, cols, vals) of one term restricted to given code sets."""
        flip = zmask = ymask = plus = minus = umask = dmask = 0
        ny = 0
        for site, op in string:
            b = 1 << site
            if op == "x":
                flip |= b
            elif op == "y":
                flip |= b
                ymask |= b
                ny += 1
            elif op == "z":
                zmask |= b
            elif op == "+":
                flip |= b
                plus |= b
            elif op == "-":
                flip |= b
                minus |= b
            elif op == "u":
                umask |= b
            elif op == "d":
                dmask |= b
        c = codes_in
        ok = ((c & plus) == plus) & ((c & minus) == 0)
        ok &= ((c & umask) == 0) & ((c & dmask) == dmask)
        src = np.nonzero(ok)[0]
        if len(src) == 0:
            return src, src, np.zeros(0, dtype=complex)
        c = c[src]
        tgt = c ^ flip
        signbits = zmask | ymask
        par = np.zeros(len(c), dtype=np.int64)
        site = 0
        bits = signbits
        while bits:
            if bits & 1:
                par += (c >> site) & 1
            bits >>= 1
            site += 1
        phase = np.where(par % 2 == 0, 1.0, -1.0) * (1j ** ny)
        pos = np.searchsorted(codes_out, tgt)
        valid = pos < len(codes_out)
        pos = np.minimum(pos, len(codes_out) - 1)
        valid &= codes_out[pos] == tgt
        return pos[valid], src[valid], coeff * phase[valid]

    def materialize(self, codes_out: Optional[np.ndarray] = None,
                    codes_in: Optional[np.ndarray] = None) -> sp.csr_matrix:
        """Sparse matrix over computational bitstrings.

        With no arguments, the full 2^N space (ascending code order). With
        code sets, the rectangular restriction rows=codes_out, cols=codes_in.
        Real output whenever the imaginary part vanishes; a declared-Hermitian
        operator on a square restriction is verified against its adjoint.
        """
        if codes_in is None:
            codes_in = np.arange(2**self.N, dtype=np.int64)
        if codes_out is None:
            codes_out = codes_in
        rows, cols, vals = [], [], []
        for coeff, string in self.terms:
            r, c, v = self._term_action(coeff, string, codes_in, codes_out)
            rows.append(r)
            cols.append(c)
            vals.append(v)
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        else:
            rows = np.zeros(0, dtype=np.int64)
            cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0, dtype=complex)
        M = sp.csr_matrix((vals, (rows, cols)), shape=(len(codes_out), len(codes_in)))
        if M.nnz == 0 or np.abs(M.data.imag).max() < 1e-14:
            M = sp.csr_matrix((M.data.real, M.indices, M.indptr), shape=M.shape)
        if self.hermitian and M.shape[0] == M.shape[1]:
            dev = abs(M - M.getH()).max() if M.nnz else 0.0
            if dev > 1e-12:
                raise AssertionError(
                    f"operator declared Hermitian but adjoint deviates by {dev}"
                )
        return M


def commutator(A: PauliStringOperator, B: PauliStringOperator) -> PauliStringOperator:
    return (A @ B) - (B @ A)


def max_abs(op: PauliStringOperator) -> float:
    """Largest matrix-element magnitude of the fully materialized operator."""
    M = op.materialize()
    return abs(M).max() if M.nnz else 0.0


# ---------------------------------------------------------------------------
# model Hamiltonians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Heisenberg chain with nearest and next-nearest neighbor couplings.

    Site indices in this description are 1-based (``offset_site=3`` bumps the
    bond coupling J_3). Open boundary: NN bonds j = 1..N-1 and NNN bonds
    j = 1..N-2; periodic: both families run j = 1..N with wraparound. The
    default profile is J_j = 1 + offset * delta(j, offset_site) for open
    chains and uniform J_j = 1 for periodic ones. Explicit coupling arrays
    override the profile.
    """

    N: int
    boundary: str = "open"
    offset: Optional[float] = None
    offset_site: int = 3
    nn_couplings: Optional[Tuple[float, ...]] = None
    nnn_couplings: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.N < 2:
            raise ValueError("need at least 2 qubits")
        if self.offset is None:
            object.__setattr__(
                self, "offset", 0.3 if self.boundary == "open" else 0.0
            )
        if self.nn_couplings is not None:
            object.__setattr__(self, "nn_couplings", tuple(self.nn_couplings))
            if len(self.nn_couplings) != self._n_bonds(1):
                raise ValueError("nn_couplings length mismatch")
        if self.nnn_couplings is not None:
            object.__setattr__(self, "nnn_couplings", tuple(self.nnn_couplings))
            if len(self.nnn_couplings) != self._n_bonds(2):
                raise ValueError("nnn_couplings length mismatch")

    def _n_bonds(self, dist: int) -> int:
        if self.boundary == "periodic":
            return self.N
        return max(0, self.N - dist)

    def _profile(self, dist: int) -> Tuple[float, ...]:
        explicit = self.nn_couplings if dist == 1 else self.nnn_couplings
        if explicit is not None:
            return explicit
        return tuple(
            1.0 + (self.offset if j == self.offset_site else 0.0)
            for j in range(1, self._n_bonds(dist) + 1)
        )

    def bonds(self) -> List[Tuple[int, int, float]]:
        """(site_i, site_j, J) with 0-indexed sites, NN then NNN."""
        out = []
        for dist in (1, 2):
            prof = self._profile(dist)
            for j, J in enumerate(prof, start=1):
                a = j - 1
                b = (j - 1 + dist) % self.N if self.boundary == "periodic" else j - 1 + dist
                out.append((a, b, float(J)))
        return out

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "boundary": self.boundary,
            "offset": self.offset,
            "offset_site": self.offset_site,
            "nn_couplings": list(self.nn_couplings) if self.nn_couplings else None,
            "nnn_couplings": list(self.nnn_couplings) if self.nnn_couplings else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            N=int(d["N"]),
            boundary=d.get("boundary", "open"),
            offset=d.get("offset"),
            offset_site=int(d.get("offset_site", 3)),
            nn_couplings=d.get("nn_couplings"),
            nnn_couplings=d.get("nnn_couplings"),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_hamiltonian(spec: ModelSpec) -> PauliStringOperator:
    """H = sum_j J_j sigma_j . sigma_j+1 + sum_j J_j sigma_j . sigma_j+2."""
    terms = []
    for a, b, J in spec.bonds():
        for ax in "xyz":
            terms.append((J, {a: ax, b: ax}))
    return PauliStringOperator.from_terms(spec.N, terms, hermitian=True)


def total_spin_operators(N: int) -> Dict[str, PauliStringOperator]:
    """Global spin operators in spin units plus Pauli-unit total charges.

    Returns S_z, S_plus, S_minus, S2 (total spin squared) and the conserved
    charges sigma_x_tot, sigma_y_tot, sigma_z_tot.
    """
    Sz = PauliStringOperator.from_terms(
        N, [(0.5, {i: "z"}) for i in range(N)], hermitian=True
    )
    Sp = PauliStringOperator.from_terms(N, [(1.0, {i: "+"}) for i in range(N)])
    Sm = PauliStringOperator.from_terms(N, [(1.0, {i: "-"}) for i in range(N)])
    # S^2 = Sz^2 + (S+S- + S-S+)/2
    S2 = (Sz @ Sz) + ((Sp @ Sm) + (Sm @ Sp)).scaled(0.5)
    S2 = PauliStringOperator.from_terms(
        N, [(c, dict(s)) for c, s in S2.terms], hermitian=True
    )
    charges = {
        f"sigma_{ax}_tot": PauliStringOperator.from_terms(
            N, [(1.0, {i: ax}) for i in range(N)], hermitian=ax != "y"
        )
        for ax in "xyz"
    }
    return {"S_z": Sz, "S_plus": Sp, "S_minus": Sm, "S2": S2, **charges}


# ---------------------------------------------------------------------------
# spherical tensor operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TensorOpSpec:
    """One component T^(k)_q of a spherical tensor family."""

    k: HalfInt
    q: HalfInt
    op: PauliStringOperator
    anchor: Tuple[int, ...]
    name: str
    family: Optional["TensorFamily"] = field(default=None, compare=False, repr=False)

    def fingerprint(self) -> str:
        blob = json.dumps(
            [self.k.twice, self.q.twice, self.op.fingerprint(), self.name],
            separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def component(self, q: SpinLike) -> "TensorOpSpec":
        if self.family is None:
            raise ValueError(f"{self.name} carries no family information")
        return self.family.component(q)


@dataclass(frozen=True)
class TensorFamily:
    """All 2k+1 components of a spherical tensor operator."""

    k: HalfInt
    name: str
    components: Tuple[TensorOpSpec, ...]  # ordered q = -k .. k

    def component(self, q: SpinLike) -> TensorOpSpec:
        tq = _twice(q)
        if abs(tq) > self.k.twice or (self.k.twice - tq) % 2:
            raise SpinDomainError(f"invalid component q={tq}/2 for rank {self.k}")
        return self.components[(tq + self.k.twice) // 2]

    def __iter__(self):
        return iter(self.components)


def _attach_family(k: HalfInt, name: str, anchor: Tuple[int, ...],
                   ops: Dict[int, PauliStringOperator]) -> TensorFamily:
    comps = tuple(
        TensorOpSpec(
            k=k,
            q=HalfInt.from_twice(tq),
            op=ops[tq],
            anchor=anchor,
            name=f"{name}[q={tq/2:g}]",
        )
        for tq in range(-k.twice, k.twice + 1, 2)
    )
    fam = TensorFamily(k=k, name=name, components=comps)
    # rebuild components with the family backreference
    comps = tuple(
        TensorOpSpec(
            k=c.k, q=c.q, op=c.op, anchor=c.anchor, name=c.name, family=fam
        )
        for c in comps
    )
    object.__setattr__(fam, "components", comps)
    return fam


def spin_vector_family(N: int, site: int) -> TensorFamily:
    """Rank-1 tensor built from one site's spin components.

    q = -1, 0, +1 map to +sigma_-/sqrt2, sigma_z/2, -sigma_+/sqrt2; these are
    the spin-unit components S_z and -+ S_+- / sqrt2.
    """
    if not 0 <= site < N:
        raise ValueError(f"site {site} out of range")
    r = 1.0 / math.sqrt(2.0)
    ops = {
        -2: PauliStringOperator.from_terms(N, [(+r, {site: "-"})]),
        0: PauliStringOperator.from_terms(N, [(0.5, {site: "z"})], hermitian=True),
        2: PauliStringOperator.from_terms(N, [(-r, {site: "+"})]),
    }
    return _attach_family(HalfInt(1), f"spin1@{site}", (site,), ops)


def compose_tensor(A: TensorOpSpec, B: TensorOpSpec, k: SpinLike,
                   q: SpinLike) -> TensorOpSpec:
    """Irreducible rank-k combination of two tensor families.

    T^(k)_q = sum_q' < k q | k1 q' ; k2 q-q' > A_q' B_(q-q'). A and B must
    carry family information so every needed component is available. The
    returned component carries the full composed family.
    """
    tk, tq = _twice(k), _twice(q)
    if A.family is None or B.family is None:
        raise ValueError("compose_tensor needs components with family information")
    tk1, tk2 = A.k.twice, B.k.twice
    if not abs(tk1 - tk2) <= tk <= tk1 + tk2 or (tk1 + tk2 + tk) % 2:
        raise SpinDomainError(
            f"rank {tk}/2 outside triangle range of ({tk1}/2, {tk2}/2)"
        )
    if abs(tq) > tk or (tk - tq) % 2:
        raise SpinDomainError(f"invalid component q={tq}/2 for rank {tk}/2")
    N = A.op.N
    ops: Dict[int, PauliStringOperator] = {}
    for tqq in range(-tk, tk + 1, 2):
        total = PauliStringOperator.zero(N)
        for tqa in range(-tk1, tk1 + 1, 2):
            tqb = tqq - tqa
            if abs(tqb) > tk2:
                continue
            c = cg_or_zero(tk1, tqa, tk2, tqb, tk, tqq)
            if c == 0.0:
                continue
            total = total + (A.family.component(HalfInt.from_twice(tqa)).op
                             @ B.family.component(HalfInt.from_twice(tqb)).op).scaled(c)
        ops[tqq] = total
    name = f"[{A.family.name}*{B.family.name}]k={tk/2:g}"
    anchor = tuple(sorted(set(A.anchor) | set(B.anchor)))
    fam = _attach_family(HalfInt.from_twice(tk), name, anchor, ops)
    return fam.component(HalfInt.from_twice(tq))


_BUILTIN_NAMES = ("T10", "T11", "T20", "T22")


def builtin_tensor_family(kind: str, N: int) -> TensorFamily:
    """The rank-1 and rank-2 families anchored at the chain center.

    kind "T1": the single-site spin vector at site ceil(N/2) (1-indexed).
    kind "T2": the rank-2 combination of the spin vectors at the central
    site and its right neighbor.
    """
    center = math.ceil(N / 2)  # 1-indexed
    if kind == "T1":
        return spin_vector_family(N, center - 1)
    if kind == "T2":
        if N < 2:
            raise ValueError("two-site operators need N >= 2")
        A = spin_vector_family(N, center - 1).component(0)
        B = spin_vector_family(N, center).component(0)
        return compose_tensor(A, B, 2, 0).family
    raise ValueError(f"unknown tensor family {kind!r}")


def builtin_tensor_op(name: str, N: int) -> TensorOpSpec:
    """Named operators: T10 = sigma_z/2 at the center, T11 = -sigma_+/sqrt2,
    T20 = (sigma_z sigma_z - sigma_+ sigma_- - sigma_- sigma_+)/sqrt24 on the
    central bond, T22 = sigma_+ sigma_+ / 2 on the central bond."""
    if name not in _BUILTIN_NAMES:
        raise ValueError(f"unknown tensor operator {name!r}; choose from {_BUILTIN_NAMES}")
    if name == "T10":
        return builtin_tensor_family("T1", N).component(0)
    if name == "T11":
        return builtin_tensor_family("T1", N).component(1)
    if name == "T20":
        return builtin_tensor_family("T2", N).component(0)
    return builtin_tensor_family("T2", N).component(2)

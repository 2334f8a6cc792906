"""Exact numerical identities behind the recoupling analysis.

These checks hold to rounding error whenever the coupling layer, the basis
construction and the reduced-element extraction are all correct, so they are
wired into the command-line ``validate`` gate: a systematic deviation means
an implementation bug, not physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coupled_basis import spin_sectors
from .model_ops import (ModelSpec, TensorOpSpec, build_hamiltonian,
                        compose_tensor)
from .spectral import (BlockSpectrum, compute_block_spectrum, reduced_elements,
                       _triangle_ok)
from .spin_algebra import (HalfInt, SpinLike, UpsilonUndefinedError, _twice,
                           cg, cg_asymptotic, cg_or_zero, upsilon,
                           upsilon_any_point, upsilon_asymptotic)

__all__ = [
    "IdentityReport",
    "check_composition_identity",
    "check_upsilon_independence",
    "cg_asymptotic_scan",
    "check_wigner_eckart",
]


@dataclass
class IdentityReport:
    """Outcome of one exact-identity check."""

    name: str
    max_abs_dev: float
    max_rel_dev: float
    instance: Dict
    extras: Dict = field(default_factory=dict)

    def passed(self, abs_tol: float, rel_tol: Optional[float] = None) -> bool:
        if self.max_abs_dev <= abs_tol:
            return True
        return rel_tol is not None and self.max_rel_dev <= rel_tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_abs_dev": self.max_abs_dev,
            "max_rel_dev": self.max_rel_dev,
            "instance": self.instance,
            "extras": self.extras,
        }


def _spectra_for(model: ModelSpec, H=None) -> Dict[int, BlockSpectrum]:
    if H is None:
        H = build_hamiltonian(model)
    return {
        s.twice: compute_block_spectrum(model, s, H=H)
        for s in spin_sectors(model.N)
    }


def check_composition_identity(A: TensorOpSpec, B: TensorOpSpec, k: SpinLike,
                               q: SpinLike, model: ModelSpec,
                               spectra: Optional[Dict[int, BlockSpectrum]] = None
                               ) -> IdentityReport:
    """Reduced elements of the rank-k combination of A and B must equal the
    recoupling-weighted sum over intermediate eigenstates of the factor
    tables:  <a||T||a'> = sum_{a''} Upsilon(s_a, s_a', s_a'') <a||A||a''>
    <a''||B||a'>.

    The left side composes the operators first and reduces once; the right
    side reduces the factors and sums over every intermediate sector
    (sectors outside the triangle ranges contribute exact zeros). The
    recoupling weight is evaluated at its default point with automatic
    fallback; any fallback is recorded.
    """
    tk, tq = _twice(k), _twice(q)
    if spectra is None:
        spectra = _spectra_for(model)
    T = compose_tensor(A, B, HalfInt.from_twice(tk), HalfInt.from_twice(tq))
    tk1, tk2 = A.k.twice, B.k.twice
    sector_ts = sorted(spectra)
    max_abs = 0.0
    max_rel = 0.0
    fallbacks = []
    n_pairs = 0
    for ts_r in sector_ts:
        for ts_c in sector_ts:
            lhs_table = reduced_elements(T, spectra[ts_r], spectra[ts_c])
            if lhs_table.absent:
                continue
            lhs = lhs_table.elements
            rhs = np.zeros_like(lhs)
            for ts_pp in sector_ts:
                if not (_triangle_ok(ts_r, ts_pp, tk1)
                        and _triangle_ok(ts_pp, ts_c, tk2)):
                    continue
                tabA = reduced_elements(A, spectra[ts_r], spectra[ts_pp])
                tabB = reduced_elements(B, spectra[ts_pp], spectra[ts_c])
                ups, point = upsilon_any_point(
                    HalfInt.from_twice(ts_r), HalfInt.from_twice(ts_c),
                    HalfInt.from_twice(ts_pp), HalfInt.from_twice(tk),
                    HalfInt.from_twice(tk1), HalfInt.from_twice(tk2),
                )
                if point[0].twice != ts_r or point[1].twice != ts_r - ts_c:
                    fallbacks.append(
                        {"sectors": [ts_r, ts_c, ts_pp],
                         "point": [point[0].twice, point[1].twice]}
                    )
                rhs += ups * (tabA.elements @ tabB.elements)
            dev = np.abs(lhs - rhs)
            scale = np.maximum(np.abs(lhs), np.abs(rhs))
            max_abs = max(max_abs, float(dev.max()))
            with np.errstate(invalid="ignore", divide="ignore"):
                rel = np.where(scale > 1e-12, dev / scale, 0.0)
            max_rel = max(max_rel, float(rel.max()))
            n_pairs += 1
    return IdentityReport(
        name="composition_identity",
        max_abs_dev=max_abs,
        max_rel_dev=max_rel,
        instance={
            "N": model.N, "A": A.name, "B": B.name,
            "k": tk / 2, "q": tq / 2, "sector_pairs": n_pairs,
        },
        extras={"upsilon_fallbacks": fallbacks},
    )


def check_upsilon_independence(s_a: SpinLike, s_ap: SpinLike, s_app: SpinLike,
                               k: SpinLike, k1: SpinLike, k2: SpinLike,
                               points: Sequence[Tuple[SpinLike, SpinLike]]
                               ) -> IdentityReport:
    """The recoupling weight must agree across admissible (m, q) points."""
    values = []
    used = []
    for m, q in points:
        try:
            values.append(upsilon(s_a, s_ap, s_app, k, k1, k2, m, q))
            used.append((float(_twice(m)) / 2, float(_twice(q)) / 2))
        except UpsilonUndefinedError:
            continue
    if len(values) < 2:
        raise ValueError("need at least 2 admissible (m, q) points")
    values = np.asarray(values)
    dev = float(values.max() - values.min())
    scale = float(np.abs(values).max())
    return IdentityReport(
        name="upsilon_independence",
        max_abs_dev=dev,
        max_rel_dev=dev / scale if scale > 0 else 0.0,
        instance={
            "spins": [float(_twice(s_a)) / 2, float(_twice(s_ap)) / 2,
                      float(_twice(s_app)) / 2],
            "ranks": [float(_twice(k)) / 2, float(_twice(k1)) / 2,
                      float(_twice(k2)) / 2],
            "points": used,
        },
        extras={"values": values.tolist()},
    )


def cg_asymptotic_scan(k: SpinLike, q: SpinLike, nu: SpinLike,
                       s_minus_m: SpinLike,
                       s_grid: Sequence[int] = (20, 40, 80, 160, 320, 640)
                       ) -> IdentityReport:
    """Relative error of the large-spin coefficient formula against the exact
    value along a geometric grid in s, with the fitted log-log slope.

    Grid points where the exact coefficient vanishes are excluded and
    recorded.
    """
    tk, tq, tnu, tsm = _twice(k), _twice(q), _twice(nu), _twice(s_minus_m)
    errs, svals, excluded = [], [], []
    for s in s_grid:
        ts = 2 * s
        tm = ts - tsm
        exact = cg_or_zero(ts, tm, tk, tq, ts + tnu, tm + tq)
        if exact == 0.0:
            excluded.append(s)
            continue
        approx = cg_asymptotic(HalfInt.from_twice(ts), HalfInt.from_twice(tm),
                               HalfInt.from_twice(tk), HalfInt.from_twice(tq),
                               HalfInt.from_twice(tnu))
        errs.append(abs(approx - exact) / abs(exact))
        svals.append(s)
    if len(svals) >= 2:
        slope = float(np.polyfit(np.log(svals), np.log(errs), 1)[0])
    else:
        slope = float("nan")
    max_err = max(errs) if errs else 0.0
    return IdentityReport(
        name="cg_asymptotic_scan",
        max_abs_dev=max_err,
        max_rel_dev=max_err,
        instance={"k": tk / 2, "q": tq / 2, "nu": tnu / 2, "s_minus_m": tsm / 2,
                  "s_grid": list(s_grid)},
        extras={"slope": slope, "errors": errs, "s_used": svals,
                "excluded": excluded},
    )


def check_wigner_eckart(family, model: ModelSpec,
                        spectra: Optional[Dict[int, BlockSpectrum]] = None
                        ) -> IdentityReport:
    """Reduced tables inferred from every component q and from several
    admissible (m, m') pairs must coincide.

    For each sector pair this compares, across all 2k+1 components and a
    scan of alternative (m, m') evaluations, the tables obtained by dividing
    the plain matrix elements by the conversion coefficient.
    """
    if spectra is None:
        spectra = _spectra_for(model)
    from .spectral import _eigenbasis_sector_matrix  # local import, private helper

    tk = family.k.twice
    sector_ts = sorted(spectra)
    max_abs = 0.0
    max_rel = 0.0
    n_tables = 0
    for ts_r in sector_ts:
        for ts_c in sector_ts:
            if not _triangle_ok(ts_r, ts_c, tk):
                continue
            reference = None
            for comp in family:
                tq = comp.q.twice
                # every admissible (m, m') for this component
                for tmp in range(-ts_c, ts_c + 1, 2):
                    tmr = tmp + tq
                    if abs(tmr) > ts_r:
                        continue
                    cgv = cg_or_zero(ts_c, tmp, tk, tq, ts_r, tmr)
                    if cgv == 0.0:
                        continue
                    M = _eigenbasis_sector_matrix(
                        comp, spectra[ts_r], tmr, spectra[ts_c], tmp)
                    tab = M / cgv
                    if reference is None:
                        reference = tab
                        continue
                    dev = np.abs(tab - reference)
                    scale = np.maximum(np.abs(reference), np.abs(tab))
                    max_abs = max(max_abs, float(dev.max()))
                    with np.errstate(invalid="ignore", divide="ignore"):
                        rel = np.where(scale > 1e-10, dev / scale, 0.0)
                    max_rel = max(max_rel, float(rel.max()))
                    n_tables += 1
    return IdentityReport(
        name="wigner_eckart",
        max_abs_dev=max_abs,
        max_rel_dev=max_rel,
        instance={"N": model.N, "family": family.name, "k": tk / 2,
                  "tables_compared": n_tables},
    )

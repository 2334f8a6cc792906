"""Spectral and matrix-element statistics for the thermalization analysis.

Conventions used throughout (and recorded in every emitted sidecar):

* Energy windows are specified in energy-density units E/N; widths too.
* The density of states of a spin sector counts levels at a single magnetic
  quantum number per unit *absolute* energy: D = count / (width * N). Its
  logarithm is the sector entropy.
* For sector pairs with different spins, the density of states at the mean
  spin is the geometric mean of the two sectors' densities.
* Gap-ratio histograms are compared against the orthogonal-ensemble surmise
  with the 27/4 prefactor, which integrates to one on [0, 1] and is
  therefore already the properly normalized density of the minimal ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from .spectral import BlockSpectrum, ReducedElementTable
from .spin_algebra import HalfInt, SpinLike, _twice

__all__ = [
    "EnergyWindow",
    "DosTable",
    "GapRatioResult",
    "p_goe",
    "gap_ratios",
    "sample_goe",
    "band_data",
    "WindowStats",
    "diag_residual_stats",
    "offdiag_window_stats",
    "FScanCell",
    "FScanResult",
    "f_magnitude",
    "VarianceSweep",
    "SectorVarianceRatio",
    "VarianceRatioResult",
    "variance_ratio_sector",
    "variance_ratio",
]


@dataclass(frozen=True)
class EnergyWindow:
    """Energy-density window, optionally with bounds on omega = E - E'."""

    center: float
    width: float
    omega_center: Optional[float] = None   # absolute energy units
    omega_width: Optional[float] = None

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("window width must be positive")

    def contains(self, densities: np.ndarray) -> np.ndarray:
        return np.abs(densities - self.center) <= self.width / 2.0


class DosTable:
    """Sorted per-sector eigenvalues with windowed density-of-states queries."""

    def __init__(self, N: int, sector_eigenvalues: Dict):
        self.N = N
        self._evals: Dict[int, np.ndarray] = {}
        for s, ev in sector_eigenvalues.items():
            self._evals[_twice(s)] = np.sort(np.asarray(ev, dtype=float))

    @classmethod
    def from_spectra(cls, spectra: Sequence[BlockSpectrum]) -> "DosTable":
        if not spectra:
            raise ValueError("no spectra given")
        return cls(spectra[0].N, {sp.s: sp.eigenvalues for sp in spectra})

    def sectors(self) -> List[HalfInt]:
        return [HalfInt.from_twice(t) for t in sorted(self._evals)]

    def eigenvalues(self, s: SpinLike) -> np.ndarray:
        return self._evals[_twice(s)]

    def count(self, s: SpinLike, window: EnergyWindow) -> int:
        # half-open [lo, hi) so a grid of windows partitions the spectrum
        ev = self._evals[_twice(s)]
        half = window.width / 2.0
        lo = (window.center - half) * self.N
        hi = (window.center + half) * self.N
        return int(np.searchsorted(ev, hi, "left") - np.searchsorted(ev, lo, "left"))

    def dos(self, s: SpinLike, window: EnergyWindow) -> float:
        """Levels per unit absolute energy at one magnetic quantum number."""
        return self.count(s, window) / (window.width * self.N)

    def entropy(self, s: SpinLike, window: EnergyWindow) -> float:
        d = self.dos(s, window)
        return math.log(d) if d > 0 else float("-inf")

    def dos_mean_spin(self, s_row: SpinLike, s_col: SpinLike,
                      window: EnergyWindow) -> float:
        """DOS at the mean spin of a sector pair (geometric mean across
        sectors when the spins differ)."""
        tr, tc = _twice(s_row), _twice(s_col)
        if tr == tc:
            return self.dos(HalfInt.from_twice(tr), window)
        a = self.dos(HalfInt.from_twice(tr), window)
        b = self.dos(HalfInt.from_twice(tc), window)
        return math.sqrt(a * b)

    def peak_center(self, s: SpinLike, coarse_width: float = 0.5) -> float:
        """Density at which the sector's DOS peaks: center of the fullest
        bin of a coarse fixed-width histogram."""
        ev = self._evals[_twice(s)] / self.N
        lo, hi = ev[0], ev[-1]
        nbins = max(1, int(math.ceil((hi - lo) / coarse_width)))
        counts, edges = np.histogram(ev, bins=nbins, range=(lo, lo + nbins * coarse_width))
        i = int(np.argmax(counts))
        return float((edges[i] + edges[i + 1]) / 2.0)

    def window_grid(self, s: SpinLike, width: float) -> List[EnergyWindow]:
        """Contiguous windows of the given width covering the sector."""
        ev = self._evals[_twice(s)] / self.N
        lo, hi = ev[0], ev[-1]
        n = max(1, int(math.ceil((hi - lo) / width)))
        return [
            EnergyWindow(center=lo + (i + 0.5) * width, width=width)
            for i in range(n)
        ]


# ---------------------------------------------------------------------------
# gap-ratio statistics
# ---------------------------------------------------------------------------


def p_goe(r) -> np.ndarray:
    """Orthogonal-ensemble surmise (27/4) r (1+r) / (1 + r + r^2)^(5/2).

    With this prefactor the curve integrates to one over [0, 1]: it is the
    density of the *minimal* spacing ratio. (The surmise for the
    unrestricted ratio on [0, inf) carries 27/8 instead.)
    """
    r = np.asarray(r, dtype=float)
    return (27.0 / 4.0) * r * (1.0 + r) / (1.0 + r + r * r) ** 2.5


@dataclass
class GapRatioResult:
    r: np.ndarray
    n_dropped: int
    bin_edges: np.ndarray
    density: np.ndarray
    mean_r: float
    r2: float                  # regression with intercept against p_goe
    r2_direct: float           # fixed-curve fit quality against p_goe
    r2_direct_halved: float    # fixed-curve fit against p_goe/2 (the
                               # unrestricted-ratio normalization)


def _r2_regression(y: np.ndarray, x: np.ndarray) -> float:
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        return 1.0 if np.allclose(resid, 0) else 0.0
    return 1.0 - np.sum(resid**2) / ss_tot


def _r2_direct(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        return 1.0 if np.allclose(y, yhat) else 0.0
    return 1.0 - np.sum((y - yhat) ** 2) / ss_tot


def gap_ratios(eigenvalues: np.ndarray, bins: int = 25) -> GapRatioResult:
    """Minimal consecutive-spacing ratios and their distribution.

    Numerically degenerate levels (gap below 1e-12 of the bandwidth) are
    collapsed before forming ratios; the number of dropped levels is
    reported. Requires at least 3 surviving levels.
    """
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    if len(ev) < 3:
        raise ValueError("need at least 3 eigenvalues")
    bandwidth = ev[-1] - ev[0]
    tol = 1e-12 * bandwidth
    keep = np.concatenate([[True], np.diff(ev) > tol])
    dropped = int(len(ev) - keep.sum())
    ev = ev[keep]
    if len(ev) < 3:
        raise ValueError("fewer than 3 levels after degeneracy filtering")
    gaps = np.diff(ev)
    r = np.minimum(gaps[1:], gaps[:-1]) / np.maximum(gaps[1:], gaps[:-1])
    density, edges = np.histogram(r, bins=bins, range=(0.0, 1.0), density=True)
    centers = (edges[:-1] + edges[1:]) / 2.0
    curve = p_goe(centers)
    return GapRatioResult(
        r=r,
        n_dropped=dropped,
        bin_edges=edges,
        density=density,
        mean_r=float(np.mean(r)),
        r2=_r2_regression(density, curve),
        r2_direct=_r2_direct(density, curve),
        r2_direct_halved=_r2_direct(density, curve / 2.0),
    )


def sample_goe(dim: int, rng: np.random.Generator) -> np.ndarray:
    """One orthogonal-ensemble sample: (A + A^T)/2 with standard normal A,
    so diagonal variance 1 and off-diagonal variance 1/2."""
    A = rng.standard_normal((dim, dim))
    return (A + A.T) / 2.0


# ---------------------------------------------------------------------------
# band data and window statistics
# ---------------------------------------------------------------------------


def band_data(table: ReducedElementTable, spectrum: BlockSpectrum
              ) -> Tuple[np.ndarray, np.ndarray]:
    """(energy densities ascending, diagonal reduced elements) for one sector."""
    if table.absent:
        raise ValueError("table is absent (triangle rule)")
    if table.s_row != table.s_col:
        raise ValueError("band data needs a square same-sector table")
    diag = np.diag(table.elements)
    dens = spectrum.eigenvalues / spectrum.N
    order = np.argsort(dens, kind="stable")
    return dens[order], diag[order]


@dataclass
class WindowStats:
    """Gaussianity summary of matrix-element samples in one window."""

    n: int
    mean: float
    variance: float
    ks_stat: float
    ks_crit_5pct: float
    gauss_r2: float
    samples: np.ndarray
    low_stats: bool
    bin_edges: np.ndarray = field(default=None, repr=False)
    density: np.ndarray = field(default=None, repr=False)


def _gaussian_window_stats(samples: np.ndarray, center_model: float,
                           bins, low_stats_threshold: int) -> WindowStats:
    # variance about the model center (0 for residuals and for off-diagonal
    # elements, whose mean vanishes); this keeps every statistic exactly
    # invariant under eigenvector sign flips
    n = len(samples)
    mean = float(np.mean(samples))
    var = float(np.sum((samples - center_model) ** 2) / (n - 1)) if n > 1 else 0.0
    sigma = math.sqrt(var) if var > 0 else 0.0
    if sigma > 0:
        ks = float(sps.kstest(samples, "norm", args=(center_model, sigma)).statistic)
        nbins = bins if bins is not None else int(np.ceil(np.log2(n) + 1))
        density, edges = np.histogram(samples, bins=nbins, density=True)
        centers = (edges[:-1] + edges[1:]) / 2.0
        pdf = sps.norm.pdf(centers, loc=center_model, scale=sigma)
        r2 = _r2_direct(density, pdf)
    else:
        ks = 0.0
        edges = np.array([samples.min() if n else 0.0, samples.max() if n else 0.0])
        density = np.zeros(0)
        r2 = 1.0
    crit = float(sps.kstwo.ppf(0.95, n)) if n > 0 else float("nan")
    return WindowStats(
        n=n, mean=mean, variance=var, ks_stat=ks, ks_crit_5pct=crit,
        gauss_r2=r2, samples=samples, low_stats=n < low_stats_threshold,
        bin_edges=edges, density=density,
    )


def diag_residual_stats(table: ReducedElementTable, spectrum: BlockSpectrum,
                        window: EnergyWindow, bins: Optional[int] = None,
                        min_count: int = 30) -> WindowStats:
    """Residuals of the diagonal reduced elements about their window mean.

    The window mean estimates the smooth diagonal profile; residuals are
    modeled as centered Gaussian fluctuations. Flags low statistics below
    ``min_count`` samples; an empty window raises.
    """
    if table.absent:
        raise ValueError("table is absent (triangle rule)")
    if table.s_row != table.s_col:
        raise ValueError("diagonal statistics need a same-sector table")
    dens = spectrum.eigenvalues / spectrum.N
    mask = window.contains(dens)
    vals = np.diag(table.elements)[mask]
    if len(vals) == 0:
        raise ValueError("no diagonal elements in window")
    residuals = vals - vals.mean()
    return _gaussian_window_stats(residuals, 0.0, bins, min_count)


def offdiag_window_stats(table: ReducedElementTable, spec_row: BlockSpectrum,
                         spec_col: BlockSpectrum, window: EnergyWindow,
                         bins: Optional[int] = None,
                         min_count: int = 30) -> WindowStats:
    """Off-diagonal reduced elements with both level densities in the window
    and omega inside the window's omega bounds (when given).

    Elements on the diagonal of a same-sector table are excluded. Gaussian
    comparison is against a zero-mean normal with the sample deviation.
    """
    if table.absent:
        raise ValueError("table is absent (triangle rule)")
    dr = spec_row.eigenvalues / spec_row.N
    dc = spec_col.eigenvalues / spec_col.N
    mr = window.contains(dr)
    mc = window.contains(dc)
    sub = table.elements[np.ix_(mr, mc)]
    ii, jj = np.meshgrid(np.nonzero(mr)[0], np.nonzero(mc)[0], indexing="ij")
    same_sector = table.s_row == table.s_col
    keep = np.ones(sub.shape, dtype=bool)
    if same_sector:
        keep &= ii != jj
    if window.omega_center is not None or window.omega_width is not None:
        oc = window.omega_center or 0.0
        ow = window.omega_width
        omega = spec_row.eigenvalues[ii] - spec_col.eigenvalues[jj]
        if ow is not None:
            keep &= np.abs(omega - oc) <= ow / 2.0
    samples = sub[keep]
    if len(samples) == 0:
        raise ValueError("no off-diagonal elements in window")
    return _gaussian_window_stats(samples, 0.0, bins, min_count)


# ---------------------------------------------------------------------------
# fluctuation envelope |f|
# ---------------------------------------------------------------------------


@dataclass
class FScanCell:
    e_center: float          # mean energy density
    omega_center: float      # absolute energy difference
    twice_s_row: int
    twice_s_col: int
    count: int
    dos: float
    f_abs: float
    reliable: bool

    @property
    def mean_spin(self) -> float:
        return (self.twice_s_row + self.twice_s_col) / 4.0

    @property
    def nu(self) -> float:
        return (self.twice_s_row - self.twice_s_col) / 2.0


@dataclass
class FScanResult:
    cells: List[FScanCell]
    width: float
    min_count: int
    convention: Dict[str, str]

    def cell(self, e_center: float, omega_center: float, s_row: SpinLike,
             s_col: SpinLike) -> Optional[FScanCell]:
        tr, tc = _twice(s_row), _twice(s_col)
        for c in self.cells:
            if (c.twice_s_row == tr and c.twice_s_col == tc
                    and abs(c.e_center - e_center) < 1e-12
                    and abs(c.omega_center - omega_center) < 1e-12):
                return c
        return None


_F_CONVENTION = {
    "dos": "levels at one magnetic quantum number per unit absolute energy",
    "mixed_spin_dos": "geometric mean of the two sector densities",
    "cell": "|E_row/N - (E + w/2)/N| <= width/2 and "
            "|E_col/N - (E - w/2)/N| <= width/2",
    "estimator": "f = sqrt(sample variance within cell * dos at (E, S))",
}


def f_magnitude(table: ReducedElementTable, spec_row: BlockSpectrum,
                spec_col: BlockSpectrum, dos: DosTable,
                e_centers: Sequence[float], omega_centers: Sequence[float],
                width: float = 0.1, min_count: int = 30) -> FScanResult:
    """Windowed fluctuation envelope of off-(block-)diagonal elements.

    Each (E, omega) cell selects element pairs whose row level sits in a
    width-``width`` density window centered at E + omega/2N and whose column
    level sits in one centered at E - omega/2N; the envelope is the square
    root of the cell's sample variance times the density of states at
    (E, mean spin). Cells below ``min_count`` samples are flagged; empty
    cells are flagged with value NaN rather than fabricated.
    """
    if table.absent:
        raise ValueError("table is absent (triangle rule)")
    N = spec_row.N
    dr = spec_row.eigenvalues / N
    dc = spec_col.eigenvalues / N
    same = table.s_row == table.s_col
    cells: List[FScanCell] = []
    for ec in e_centers:
        win = EnergyWindow(center=ec, width=width)
        dval = dos.dos_mean_spin(table.s_row, table.s_col, win)
        for oc in omega_centers:
            mr = np.abs(dr - (ec + oc / (2.0 * N))) <= width / 2.0
            mc = np.abs(dc - (ec - oc / (2.0 * N))) <= width / 2.0
            sub = table.elements[np.ix_(mr, mc)]
            if same:
                ii, jj = np.meshgrid(np.nonzero(mr)[0], np.nonzero(mc)[0],
                                     indexing="ij")
                sub = sub[ii != jj]
            else:
                sub = sub.ravel()
            n = sub.size
            if n >= 2 and dval > 0:
                # variance about zero: sign-convention invariant
                f = math.sqrt(float(np.sum(np.square(sub)) / (n - 1)) * dval)
            else:
                f = float("nan")
            cells.append(FScanCell(
                e_center=float(ec), omega_center=float(oc),
                twice_s_row=table.s_row.twice, twice_s_col=table.s_col.twice,
                count=int(n), dos=float(dval), f_abs=f,
                reliable=n >= min_count and dval > 0,
            ))
    return FScanResult(cells=cells, width=width, min_count=min_count,
                       convention=dict(_F_CONVENTION))


# ---------------------------------------------------------------------------
# variance-ratio test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceSweep:
    narrow_width: float = 0.1
    encompassing_width: float = 0.5
    min_diag: int = 30
    min_off: int = 100
    center: Optional[float] = None   # default: sector DOS peak


@dataclass
class SectorVarianceRatio:
    twice_s: int
    ratios: np.ndarray
    mean: float
    std: float
    stderr: float
    n_windows: int
    n_skipped: int


@dataclass
class VarianceRatioResult:
    per_sector: Dict[int, SectorVarianceRatio]

    def sector(self, s: SpinLike) -> SectorVarianceRatio:
        return self.per_sector[_twice(s)]


def variance_ratio_sector(table: ReducedElementTable, spectrum: BlockSpectrum,
                          dos: DosTable, sweep: VarianceSweep = VarianceSweep()
                          ) -> SectorVarianceRatio:
    """Mean of (diagonal variance)/(off-diagonal variance) across narrow
    windows inside one encompassing window centered near the DOS peak.

    Windows with fewer than ``min_diag`` diagonal or ``min_off`` off-diagonal
    samples are skipped and counted; if every window is skipped this raises.
    """
    if table.absent or table.s_row != table.s_col:
        raise ValueError("variance ratio needs a same-sector table")
    center = sweep.center
    if center is None:
        center = dos.peak_center(table.s_row, coarse_width=sweep.encompassing_width)
    nwin = max(1, int(round(sweep.encompassing_width / sweep.narrow_width)))
    offsets = (np.arange(nwin) - (nwin - 1) / 2.0) * sweep.narrow_width
    dens = spectrum.eigenvalues / spectrum.N
    diag = np.diag(table.elements)
    ratios = []
    skipped = 0
    for off in offsets:
        win = EnergyWindow(center=center + off, width=sweep.narrow_width)
        mask = win.contains(dens)
        dvals = diag[mask]
        idx = np.nonzero(mask)[0]
        sub = table.elements[np.ix_(idx, idx)]
        offvals = sub[~np.eye(len(idx), dtype=bool)]
        if len(dvals) < sweep.min_diag or len(offvals) < sweep.min_off:
            skipped += 1
            continue
        # diagonal variance about the window mean (removes the smooth
        # profile); off-diagonal variance about zero (sign invariant)
        vd = float(np.var(dvals, ddof=1))
        vo = float(np.sum(np.square(offvals)) / (len(offvals) - 1))
        if vo <= 0:
            skipped += 1
            continue
        ratios.append(vd / vo)
    if not ratios:
        raise ValueError("all windows skipped (insufficient statistics)")
    ratios = np.asarray(ratios)
    return SectorVarianceRatio(
        twice_s=table.s_row.twice,
        ratios=ratios,
        mean=float(ratios.mean()),
        std=float(ratios.std(ddof=1)) if len(ratios) > 1 else 0.0,
        stderr=float(ratios.std(ddof=1) / math.sqrt(len(ratios)))
        if len(ratios) > 1 else 0.0,
        n_windows=len(ratios),
        n_skipped=skipped,
    )


def variance_ratio(tables_and_spectra: Dict, dos: DosTable,
                   sweep: VarianceSweep = VarianceSweep()) -> VarianceRatioResult:
    """Per-sector variance-ratio sweep; keys of the input map are spins,
    values are (table, spectrum) pairs."""
    out = {}
    for s, (table, spectrum) in tables_and_spectra.items():
        out[_twice(s)] = variance_ratio_sector(table, spectrum, dos, sweep)
    return VarianceRatioResult(per_sector=out)

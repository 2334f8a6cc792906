"""Batch command-line pipeline: spectra, statistics, and validation gates.

Every subcommand reads one JSON config (or the built-in defaults via
``--paper-defaults``), writes plot-ready CSV files plus a JSON sidecar
recording the conventions, and stamps each output with the config content
hash so files from different runs cannot be mixed silently.

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import consistency, eth_stats
from .coupled_basis import multiplicity, spin_sectors
from .eth_stats import (DosTable, EnergyWindow, VarianceSweep, f_magnitude,
                        gap_ratios, p_goe)
from .model_ops import (ModelSpec, build_hamiltonian, builtin_tensor_family,
                        builtin_tensor_op, spin_vector_family)
from .spectral import (BlockSpectrum, SpectrumCache, compute_block_spectrum,
                       reduced_elements)
from .spin_algebra import HalfInt, cg

__all__ = ["PipelineConfig", "main"]


class ConfigError(Exception):
    pass


_DEF_VALIDATE_THRESHOLDS = {
    "block_vs_dense": 1e-9,
    "orthogonality": 1e-12,
    "composition_identity": 1e-8,
    "wigner_eckart": 1e-8,
    "upsilon_independence": 1e-10,
    "cg_slope_dev": 0.2,
}


@dataclass
class PipelineConfig:
    """Everything a batch run needs; defaults reproduce the reference
    parameter set (coupling offset 0.3 at bond 3, windows 0.1 and 0.5)."""

    model: ModelSpec = field(default_factory=lambda: ModelSpec(N=10))
    operators: Tuple[str, ...] = ("T10",)
    window_width: float = 0.1
    encompassing_width: float = 0.5
    histogram_bins: Optional[int] = None      # None -> Sturges
    goe_bins: int = 25
    gap_min_levels: int = 300
    stats_min_levels: int = 200
    fscan_omega_max: float = 8.0
    fscan_omega_step: float = 1.0
    fscan_min_count: int = 30
    cache_dir: str = ".eth-lab-cache"
    out_dir: str = "out"
    threads: int = 1
    seed: int = 0
    validate_n: int = 6
    validate_thresholds: Dict[str, float] = field(
        default_factory=lambda: dict(_DEF_VALIDATE_THRESHOLDS))

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "operators": list(self.operators),
            "window_width": self.window_width,
            "encompassing_width": self.encompassing_width,
            "histogram_bins": self.histogram_bins,
            "goe_bins": self.goe_bins,
            "gap_min_levels": self.gap_min_levels,
            "stats_min_levels": self.stats_min_levels,
            "fscan_omega_max": self.fscan_omega_max,
            "fscan_omega_step": self.fscan_omega_step,
            "fscan_min_count": self.fscan_min_count,
            "cache_dir": self.cache_dir,
            "out_dir": self.out_dir,
            "threads": self.threads,
            "seed": self.seed,
            "validate_n": self.validate_n,
            "validate_thresholds": self.validate_thresholds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "model" in kwargs:
            kwargs["model"] = ModelSpec.from_dict(kwargs["model"])
        if "operators" in kwargs:
            kwargs["operators"] = tuple(kwargs["operators"])
        if "validate_thresholds" in kwargs:
            merged = dict(_DEF_VALIDATE_THRESHOLDS)
            merged.update(kwargs["validate_thresholds"])
            kwargs["validate_thresholds"] = merged
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def content_hash(self) -> str:
        """Hash of the scientific parameters only: execution details
        (threads, directories) cannot change any result byte."""
        d = self.to_dict()
        for key in ("threads", "cache_dir", "out_dir"):
            d.pop(key, None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: Path, cfg: PipelineConfig, columns: Sequence[str],
               rows: Sequence[Sequence]) -> None:
    lines = [f"# config_hash={cfg.content_hash()} format=1"]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _write_sidecar(path: Path, cfg: PipelineConfig, payload: dict) -> None:
    payload = dict(payload)
    payload["config_hash"] = cfg.content_hash()
    payload["config"] = cfg.to_dict()
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _available_memory_bytes() -> Optional[int]:
    try:
        pages = os.sysconf("SC_AVPHYS_PAGES")
        page_size = os.sysconf("SC_PAGE_SIZE")
        return pages * page_size
    except (ValueError, OSError, AttributeError):
        return None


def _spectrum_memory_estimate(N: int) -> int:
    """Rough peak bytes for assembling and diagonalizing the worst sector."""
    worst = 0
    for ts in range(N % 2, N + 1, 2):
        d = multiplicity(N, HalfInt.from_twice(ts))
        amb = math.comb(N, (N - ts) // 2)
        worst = max(worst, 8 * (4 * amb * d + 3 * d * d))
    return worst


def _operator_for(name: str, N: int):
    try:
        return builtin_tensor_op(name, N)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _sectors_with_levels(N: int, min_levels: int) -> List[HalfInt]:
    out = [s for s in spin_sectors(N) if multiplicity(N, s) >= min_levels]
    if not out:
        # fall back to the largest sector so small systems still produce output
        out = [max(spin_sectors(N), key=lambda s: multiplicity(N, s))]
    return out


class Runner:
    """Holds shared state (cache, spectra) across subcommand bodies."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.cache = SpectrumCache(cfg.cache_dir)
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self._H = None
        self._spectra: Dict[int, BlockSpectrum] = {}
        self.diagonalizations = 0
        self.cache_hits = 0

    @property
    def H(self):
        if self._H is None:
            self._H = build_hamiltonian(self.cfg.model)
        return self._H

    def spectrum(self, s: HalfInt) -> BlockSpectrum:
        ts = s.twice
        if ts not in self._spectra:
            hit = self.cache.load_spectrum(self.cfg.model, s)
            if hit is not None:
                self.cache_hits += 1
                self._spectra[ts] = hit
            else:
                sp = compute_block_spectrum(self.cfg.model, s, H=self.H)
                self.cache.store_spectrum(self.cfg.model, sp)
                self.diagonalizations += 1
                self._spectra[ts] = sp
        return self._spectra[ts]

    def all_spectra(self) -> Dict[int, BlockSpectrum]:
        sectors = spin_sectors(self.cfg.model.N)
        if self.cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as pool:
                list(pool.map(self.spectrum, sectors))
        else:
            for s in sectors:
                self.spectrum(s)
        return {s.twice: self._spectra[s.twice] for s in sectors}

    def dos_table(self) -> DosTable:
        spectra = self.all_spectra()
        return DosTable(self.cfg.model.N,
                        {HalfInt.from_twice(t): sp.eigenvalues
                         for t, sp in spectra.items()})


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_spectrum(runner: Runner) -> int:
    cfg = runner.cfg
    est = _spectrum_memory_estimate(cfg.model.N)
    avail = _available_memory_bytes()
    if avail is not None and est > 0.8 * avail:
        print(
            f"refusing: estimated peak memory {est / 1e9:.2f} GB exceeds "
            f"80% of available {avail / 1e9:.2f} GB for N={cfg.model.N}",
            file=sys.stderr,
        )
        return 2
    spectra = runner.all_spectra()
    rows = []
    for ts in sorted(spectra):
        sp = spectra[ts]
        rows.append([ts, ts / 2.0, sp.dim,
                     float(sp.eigenvalues[0]), float(sp.eigenvalues[-1])])
    _write_csv(runner.out / "spectrum_summary.csv", cfg,
               ["twice_s", "s", "dim", "e_min", "e_max"], rows)
    _write_sidecar(runner.out / "spectrum_summary.json", cfg, {
        "diagonalizations": runner.diagonalizations,
        "cache_hits": runner.cache_hits,
        "bandwidth": float(max(sp.eigenvalues[-1] for sp in spectra.values())
                           - min(sp.eigenvalues[0] for sp in spectra.values())),
    })
    print(f"spectrum: {runner.diagonalizations} diagonalized, "
          f"{runner.cache_hits} cache hits")
    return 0


def cmd_dos(runner: Runner) -> int:
    cfg = runner.cfg
    dos = runner.dos_table()
    rows = []
    for s in dos.sectors():
        for win in dos.window_grid(s, cfg.window_width):
            count = dos.count(s, win)
            d = dos.dos(s, win)
            rows.append([s.twice, win.center, count, d,
                         math.log(d) if d > 0 else float("-inf")])
    _write_csv(runner.out / "dos.csv", cfg,
               ["twice_s", "window_center", "count", "dos", "entropy"], rows)
    _write_sidecar(runner.out / "dos.json", cfg, {
        "convention": "levels at a single magnetic quantum number per unit "
                      "absolute energy; window centers in energy density",
    })
    return 0


def cmd_gapstats(runner: Runner) -> int:
    cfg = runner.cfg
    sectors = _sectors_with_levels(cfg.model.N, cfg.gap_min_levels)
    rows = []
    summaries = {}
    for s in sectors:
        sp = runner.spectrum(s)
        res = gap_ratios(sp.eigenvalues, bins=cfg.goe_bins)
        centers = (res.bin_edges[:-1] + res.bin_edges[1:]) / 2.0
        curve = p_goe(centers)
        for c, d, g in zip(centers, res.density, curve):
            rows.append([s.twice, float(c), float(d), float(g),
                         res.r2, res.r2_direct])
        summaries[str(s.twice)] = {
            "mean_r": res.mean_r, "r2": res.r2,
            "r2_direct": res.r2_direct,
            "r2_direct_halved": res.r2_direct_halved,
            "n_ratios": int(len(res.r)), "n_dropped": res.n_dropped,
        }
    _write_csv(runner.out / "gapstats.csv", cfg,
               ["twice_s", "bin_center", "density", "p_goe", "r2",
                "r2_direct"], rows)
    _write_sidecar(runner.out / "gapstats.json", cfg, {
        "sectors": summaries,
        "convention": "minimal consecutive-spacing ratio on [0,1]; r2 is a "
                      "least-squares fit with intercept of the histogram "
                      "density against the orthogonal-ensemble surmise, whose "
                      "27/4 prefactor already normalizes it on [0,1]",
    })
    return 0


def _diag_tables(runner: Runner, op_name: str, sectors: Sequence[HalfInt]):
    out = {}
    for s in sectors:
        sp = runner.spectrum(s)
        T = _operator_for(op_name, runner.cfg.model.N)
        table = reduced_elements(T, sp, sp)
        if not table.absent:
            out[s.twice] = (table, sp)
    return out


def cmd_bands(runner: Runner) -> int:
    cfg = runner.cfg
    rows = []
    for op_name in cfg.operators:
        tables = _diag_tables(runner, op_name, spin_sectors(cfg.model.N))
        for ts in sorted(tables):
            table, sp = tables[ts]
            dens, elems = eth_stats.band_data(table, sp)
            for x, y in zip(dens, elems):
                rows.append([op_name, ts, float(x), float(y)])
    _write_csv(runner.out / "bands.csv", cfg,
               ["operator", "twice_s", "energy_density", "element"], rows)
    _write_sidecar(runner.out / "bands.json", cfg, {
        "convention": "diagonal reduced elements against energy density, "
                      "ascending within each sector",
    })
    return 0


def cmd_hist(runner: Runner) -> int:
    cfg = runner.cfg
    dos = runner.dos_table()
    sectors = _sectors_with_levels(cfg.model.N, cfg.stats_min_levels)
    diag_rows, off_rows = [], []
    summary = {}
    for op_name in cfg.operators:
        tables = _diag_tables(runner, op_name, sectors)
        for ts in sorted(tables):
            table, sp = tables[ts]
            s = HalfInt.from_twice(ts)
            win = EnergyWindow(center=dos.peak_center(s), width=cfg.window_width)
            try:
                dstats = eth_stats.diag_residual_stats(
                    table, sp, win, bins=cfg.histogram_bins)
                ostats = eth_stats.offdiag_window_stats(
                    table, sp, sp, win, bins=cfg.histogram_bins)
            except ValueError as exc:
                print(f"hist: skipping {op_name} sector 2s={ts}: {exc}",
                      file=sys.stderr)
                continue
            for stats_obj, rows in ((dstats, diag_rows), (ostats, off_rows)):
                centers = (stats_obj.bin_edges[:-1] + stats_obj.bin_edges[1:]) / 2.0
                sigma = math.sqrt(stats_obj.variance) if stats_obj.variance > 0 else 0.0
                for c, d in zip(centers, stats_obj.density):
                    pdf = (math.exp(-0.5 * (c / sigma) ** 2)
                           / (sigma * math.sqrt(2 * math.pi))) if sigma > 0 else 0.0
                    rows.append([op_name, ts, float(c), float(d), pdf])
            summary[f"{op_name}/s={ts / 2:g}"] = {
                "window_center": win.center,
                "diag": {"n": dstats.n, "variance": dstats.variance,
                         "ks": dstats.ks_stat, "ks_crit_5pct": dstats.ks_crit_5pct,
                         "gauss_r2": dstats.gauss_r2, "low_stats": dstats.low_stats},
                "offdiag": {"n": ostats.n, "variance": ostats.variance,
                            "ks": ostats.ks_stat, "ks_crit_5pct": ostats.ks_crit_5pct,
                            "gauss_r2": ostats.gauss_r2, "low_stats": ostats.low_stats},
            }
    _write_csv(runner.out / "hist_diag.csv", cfg,
               ["operator", "twice_s", "bin_center", "density", "gauss_pdf"],
               diag_rows)
    _write_csv(runner.out / "hist_offdiag.csv", cfg,
               ["operator", "twice_s", "bin_center", "density", "gauss_pdf"],
               off_rows)
    _write_sidecar(runner.out / "hist.json", cfg, {
        "sectors": summary,
        "convention": "width-0.1 energy-density window at the sector DOS "
                      "peak; diagonal residuals about the window mean; "
                      "off-diagonal elements with both levels in the window",
    })
    return 0


def cmd_fscan(runner: Runner) -> int:
    cfg = runner.cfg
    dos = runner.dos_table()
    N = cfg.model.N
    sectors = _sectors_with_levels(N, cfg.stats_min_levels)
    pairs: List[Tuple[HalfInt, HalfInt]] = [(s, s) for s in sectors]
    for s in sectors:
        s_up = HalfInt.from_twice(s.twice + 2)
        if any(t.twice == s_up.twice for t in sectors):
            pairs.append((s_up, s))
    omegas = np.arange(-cfg.fscan_omega_max, cfg.fscan_omega_max + 1e-9,
                       cfg.fscan_omega_step)
    rows = []
    for op_name in cfg.operators:
        T = _operator_for(op_name, N)
        for s_row, s_col in pairs:
            if not abs(s_row.twice - s_col.twice) <= T.k.twice:
                continue
            spr, spc = runner.spectrum(s_row), runner.spectrum(s_col)
            table = reduced_elements(T, spr, spc)
            if table.absent:
                continue
            e_center = dos.peak_center(s_row)
            res = f_magnitude(table, spr, spc, dos, [e_center], omegas,
                              width=cfg.window_width,
                              min_count=cfg.fscan_min_count)
            for cell in res.cells:
                rows.append([op_name, cell.twice_s_row, cell.twice_s_col,
                             cell.e_center, cell.omega_center, cell.count,
                             cell.dos, cell.f_abs, int(cell.reliable)])
    _write_csv(runner.out / "fscan.csv", cfg,
               ["operator", "twice_s_row", "twice_s_col", "e_center", "omega",
                "count", "dos", "f_abs", "reliable"], rows)
    _write_sidecar(runner.out / "fscan.json", cfg,
                   {"convention": eth_stats._F_CONVENTION})
    return 0


def cmd_varratio(runner: Runner) -> int:
    cfg = runner.cfg
    dos = runner.dos_table()
    sectors = _sectors_with_levels(cfg.model.N, cfg.stats_min_levels)
    sweep = VarianceSweep(narrow_width=cfg.window_width,
                          encompassing_width=cfg.encompassing_width)
    rows = []
    for op_name in cfg.operators:
        tables = _diag_tables(runner, op_name, sectors)
        for ts in sorted(tables):
            table, spectrum = tables[ts]
            try:
                r = eth_stats.variance_ratio_sector(table, spectrum, dos, sweep)
            except ValueError:
                print(
                    f"varratio: skipping {op_name} sector 2s={ts}: every "
                    f"window fell below the {sweep.min_diag}-diagonal / "
                    f"{sweep.min_off}-off-diagonal sample thresholds",
                    file=sys.stderr,
                )
                continue
            rows.append([op_name, ts, r.mean, r.std, r.stderr,
                         r.n_windows, r.n_skipped])
    _write_csv(runner.out / "varratio.csv", cfg,
               ["operator", "twice_s", "mean", "std", "stderr", "n_windows",
                "n_skipped"], rows)
    _write_sidecar(runner.out / "varratio.json", cfg, {
        "convention": "variance of diagonal elements over variance of "
                      "off-diagonal elements, averaged over narrow windows "
                      "inside one encompassing window at the DOS peak",
    })
    return 0


def _validate_reports(cfg: PipelineConfig) -> Tuple[List[dict], List[str]]:
    n = cfg.validate_n
    if n > 8:
        print(f"validate: clamping N={n} to 8", file=sys.stderr)
        n = 8
    if n < 2:
        raise ConfigError("validate needs N >= 2")
    model = ModelSpec(
        N=n, boundary=cfg.model.boundary, offset=cfg.model.offset,
        offset_site=cfg.model.offset_site,
    )
    thresholds = cfg.validate_thresholds
    reports: List[dict] = []
    failures: List[str] = []

    def record(report, abs_tol, rel_tol=None):
        ok = report.passed(abs_tol, rel_tol)
        d = report.to_dict()
        d["passed"] = bool(ok)
        d["threshold"] = abs_tol
        reports.append(d)
        if not ok:
            failures.append(
                f"{report.name} {report.instance}: dev={report.max_abs_dev:.3e} "
                f"> {abs_tol:.1e}")

    # block union equals the dense spectrum
    H = build_hamiltonian(model)
    spectra = consistency._spectra_for(model, H=H)
    union = np.sort(np.concatenate(
        [np.repeat(sp.eigenvalues, ts + 1) for ts, sp in spectra.items()]))
    dense = np.sort(np.linalg.eigvalsh(H.materialize().toarray()))
    dev = float(np.abs(union - dense).max())
    rep = consistency.IdentityReport(
        name="block_vs_dense", max_abs_dev=dev, max_rel_dev=dev,
        instance={"N": n})
    record(rep, thresholds["block_vs_dense"])

    # coupling-coefficient orthogonality spot checks
    worst = 0.0
    for tj1, tj2 in ((1, 1), (2, 2), (3, 2), (4, 3)):
        for tJ in range(abs(tj1 - tj2), tj1 + tj2 + 1, 2):
            for tM in range(-tJ, tJ + 1, 2):
                total = sum(
                    cg(HalfInt.from_twice(tj1), HalfInt.from_twice(tm1),
                       HalfInt.from_twice(tj2), HalfInt.from_twice(tM - tm1),
                       HalfInt.from_twice(tJ), HalfInt.from_twice(tM)) ** 2
                    for tm1 in range(-tj1, tj1 + 1, 2)
                    if abs(tM - tm1) <= tj2 and (tj2 - (tM - tm1)) % 2 == 0
                )
                worst = max(worst, abs(total - 1.0))
    rep = consistency.IdentityReport(
        name="orthogonality", max_abs_dev=worst, max_rel_dev=worst,
        instance={"pairs": "(1/2,1/2),(1,1),(3/2,1),(2,3/2)"})
    record(rep, thresholds["orthogonality"])

    # recoupling-weight argument independence
    rep = consistency.check_upsilon_independence(
        2, 2, 2, 2, 1, 1, points=[(2, 0), (1, 0), (0, 0), (2, 1)])
    record(rep, thresholds["upsilon_independence"])

    # composition identity for several operator pairs
    famA = spin_vector_family(n, 0)
    famB = spin_vector_family(n, min(1, n - 1))
    for k, q in ((2, 0), (1, 0), (0, 0), (2, 1), (1, 1)):
        rep = consistency.check_composition_identity(
            famA.component(0), famB.component(0), k, q, model, spectra=spectra)
        record(rep, thresholds["composition_identity"])

    # component and magnetic-number independence of reduced tables
    for kind in ("T1", "T2"):
        fam = builtin_tensor_family(kind, n)
        rep = consistency.check_wigner_eckart(fam, model, spectra=spectra)
        record(rep, thresholds["wigner_eckart"])

    # asymptotic coupling-coefficient error slopes
    for combo in ((1, 1, 1, 2), (1, 0, 1, 1), (1, 1, 0, 1), (2, 1, 2, 2)):
        rep = consistency.cg_asymptotic_scan(*combo)
        slope = rep.extras["slope"]
        ok = abs(slope + 1.0) <= thresholds["cg_slope_dev"]
        d = rep.to_dict()
        d["passed"] = bool(ok)
        d["threshold"] = thresholds["cg_slope_dev"]
        reports.append(d)
        if not ok:
            failures.append(
                f"cg_asymptotic_scan {rep.instance}: slope={slope:+.3f} "
                f"not within -1 +/- {thresholds['cg_slope_dev']}")
    return reports, failures


def cmd_validate(runner: Runner) -> int:
    cfg = runner.cfg
    reports, failures = _validate_reports(cfg)
    payload = {"reports": reports, "failures": failures,
               "passed": not failures}
    _write_sidecar(runner.out / "validate.json", cfg, payload)
    if failures:
        print("validate: FAIL", file=sys.stderr)
        for f in failures:
            print(f"  worst offender: {f}", file=sys.stderr)
        return 1
    print(f"validate: PASS ({len(reports)} identity checks)")
    return 0


_SUBCOMMANDS = {
    "spectrum": (cmd_spectrum, "block spectra per spin sector + summary CSV"),
    "dos": (cmd_dos, "windowed density of states per sector"),
    "gapstats": (cmd_gapstats, "minimal gap-ratio histograms vs the "
                               "orthogonal-ensemble surmise"),
    "bands": (cmd_bands, "diagonal reduced elements vs energy density"),
    "hist": (cmd_hist, "Gaussian fits of diagonal residuals and "
                       "off-diagonal elements"),
    "fscan": (cmd_fscan, "fluctuation envelope |f| over (E, omega) cells"),
    "varratio": (cmd_varratio, "diagonal/off-diagonal variance ratio sweep"),
    "validate": (cmd_validate, "exact identity suite; nonzero exit on failure"),
}

_CSV_DOC = """
output columns:
  spectrum_summary.csv: twice_s,s,dim,e_min,e_max
  dos.csv:       twice_s,window_center,count,dos,entropy
  gapstats.csv:  twice_s,bin_center,density,p_goe,r2,r2_direct
  bands.csv:     operator,twice_s,energy_density,element
  hist_*.csv:    operator,twice_s,bin_center,density,gauss_pdf
  fscan.csv:     operator,twice_s_row,twice_s_col,e_center,omega,count,dos,f_abs,reliable
  varratio.csv:  operator,twice_s,mean,std,stderr,n_windows,n_skipped
All CSVs start with '# config_hash=... format=1'; JSON sidecars carry the
full config and the statistical conventions.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eth-lab",
        description=__doc__,
        epilog=_CSV_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=list(_SUBCOMMANDS) + ["all"],
                        help="subcommand to run")
    parser.add_argument("--config", type=str, default=None,
                        help="JSON config file")
    parser.add_argument("--paper-defaults", action="store_true",
                        help="use the built-in default parameter set")
    parser.add_argument("--n", type=int, default=None,
                        help="override chain length")
    parser.add_argument("--cache", type=str, default=None,
                        help="override cache directory")
    parser.add_argument("--out", type=str, default=None,
                        help="override output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="parallelism degree for independent blocks")
    return parser


def load_config(args) -> PipelineConfig:
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = PipelineConfig.from_dict(raw)
    elif args.paper_defaults:
        cfg = PipelineConfig()
    else:
        raise ConfigError("need --config FILE or --paper-defaults")
    if args.n is not None:
        try:
            model = ModelSpec(
                N=args.n, boundary=cfg.model.boundary, offset=cfg.model.offset,
                offset_site=cfg.model.offset_site)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.model = model
    if args.cache is not None:
        cfg.cache_dir = args.cache
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = max(1, args.threads)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    runner = Runner(cfg)
    try:
        if args.command == "all":
            for name in ("spectrum", "dos", "gapstats", "bands", "hist",
                         "fscan", "varratio"):
                rc = _SUBCOMMANDS[name][0](runner)
                if rc != 0:
                    return rc
            return 0
        return _SUBCOMMANDS[args.command][0](runner)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

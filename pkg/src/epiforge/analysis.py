"""Post-processing: reproductive ratio, epidemic-curve features, attack
rates, epidemic synchrony, seeding scans, and choropleth data export.

Synchrony conventions: a region's epidemic peak is the argmax of its daily
incidence after a 7-day centered moving average (raw argmax available by
flag); synchrony of a set of peaks is the reciprocal of their sample
(n-1 denominator) variance, with a "fully synchronous" sentinel when the
variance is zero.  Regions with no infections carry no peak and are
excluded (and counted separately).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as _sstats

from .census import RegionHierarchy, haversine_km
from .disease import DiseaseModel
from .engine import SeedingConfig, SimConfig, SimOutput, Simulation
from .popgen import Population
from .rng import stream

FULL_SCALE_POPULATION = 19_800_000
REFERENCE_THRESHOLDS = (1_000, 10_000, 100_000, 1_000_000)
CHOROPLETH_SCALE_BOUNDS = (5e-3, 8e-2)


# ----------------------------------------------------------------------
# Reproductive ratio
# ----------------------------------------------------------------------

@dataclass
class R0Estimate:
    kappa: float
    r0: float
    histogram: dict           # secondary-case count -> frequency
    n_samples: int

    def __post_init__(self):
        total = sum(self.histogram.values())
        if total != self.n_samples:
            raise ValueError("histogram mass must equal the sample count")

    @staticmethod
    def from_counts(kappa: float, counts: Sequence[int]) -> "R0Estimate":
        hist: dict[int, int] = {}
        for c in counts:
            hist[int(c)] = hist.get(int(c), 0) + 1
        mean = sum(k * v for k, v in hist.items()) / max(1, len(counts))
        return R0Estimate(kappa=float(kappa), r0=float(mean), histogram=hist,
                          n_samples=len(counts))


def estimate_r0(population: Population, model: DiseaseModel, kappa: float,
                n_samples: int, master_seed: int, threads: int | None = None) -> R0Estimate:
    """Seed one random agent in a fully susceptible population, run until
    it recovers, and count the infections attributed to it; repeat."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    nh = model.natural_history
    max_steps = int(max(s for s in nh.latent_steps_choices()[0]) + nh.infectious_steps)
    config = SimConfig(duration_days=max_steps // 2 + 2, seed=master_seed, kappa=kappa,
                       seeding=SeedingConfig(mode="none"), threads=threads)
    sim = Simulation(population, model, config)
    pick_rng = stream(master_seed, "r0-pick")
    seed_rng = stream(master_seed, "r0-sample-seeds")
    counts = np.zeros(n_samples, dtype=np.int64)
    for s in range(n_samples):
        sim.reseed(int(seed_rng.integers(0, 2**62)))
        agent = int(pick_rng.integers(population.n_agents))
        sim._inject(agent, 0)
        recovery = int(sim.latent[agent] + sim.dur[agent])
        for step in range(1, recovery):
            sim.step_once(step)
        counts[s] = int((sim.infector == agent).sum())
    return R0Estimate.from_counts(kappa, counts.tolist())


@dataclass
class R0Curve:
    estimates: list
    slope: float
    intercept: float
    r_squared: float

    def kappa_for(self, target_r0: float) -> float:
        return (target_r0 - self.intercept) / self.slope


def r0_curve(population: Population, model: DiseaseModel,
             kappas: Sequence[float], n_samples: int, master_seed: int,
             threads: int | None = None) -> R0Curve:
    estimates = [estimate_r0(population, model, k, n_samples, master_seed, threads)
                 for k in kappas]
    xs = np.array([e.kappa for e in estimates])
    ys = np.array([e.r0 for e in estimates])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r_sq = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return R0Curve(estimates, float(slope), float(intercept), float(r_sq))


# ----------------------------------------------------------------------
# Peaks and synchrony
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SynchronyValue:
    value: float | None           # None when fully synchronous
    fully_synchronous: bool
    n: int

    def as_float(self, fully: float = math.inf) -> float:
        return fully if self.fully_synchronous else float(self.value)

    def to_json(self):
        return {"value": self.value, "fully_synchronous": self.fully_synchronous,
                "n": self.n}


def synchrony(peak_days: Sequence[float]) -> SynchronyValue:
    """Reciprocal of the sample variance of peak days."""
    peaks = [float(p) for p in peak_days]
    if len(peaks) < 2:
        raise ValueError("synchrony requires at least two peak days")
    var = float(np.var(peaks, ddof=1))
    if var == 0.0:
        return SynchronyValue(value=None, fully_synchronous=True, n=len(peaks))
    return SynchronyValue(value=1.0 / var, fully_synchronous=False, n=len(peaks))


def smoothed_series(series: np.ndarray, window: int = 7) -> np.ndarray:
    """Centered moving average with edge truncation."""
    if window <= 1 or len(series) == 0:
        return series.astype(float)
    kernel = np.ones(window)
    sums = np.convolve(series.astype(float), kernel, mode="same")
    counts = np.convolve(np.ones(len(series)), kernel, mode="same")
    return sums / counts


def peak_days(output: SimOutput, smoothing: int = 7, raw: bool = False) -> np.ndarray:
    """Per-SLA epidemic peak day; NaN for SLAs with no infections."""
    n_slas = output.incidence_sla.shape[1]
    peaks = np.full(n_slas, np.nan)
    for s in range(n_slas):
        series = output.incidence_sla[:, s]
        if series.sum() == 0:
            continue
        curve = series.astype(float) if raw else smoothed_series(series, smoothing)
        peaks[s] = int(np.argmax(curve))
    return peaks


# ----------------------------------------------------------------------
# Curve features
# ----------------------------------------------------------------------

@dataclass
class CurveFeatures:
    thresholds: dict                 # cumulative-ill threshold -> first day (None if never)
    peak_day: int | None
    peak_incidence: int
    days_above: tuple                # (prevalence threshold, day count)
    cumulative_ill: int
    peak_synchrony: SynchronyValue | None
    n_slas_with_peak: int

    def to_json(self) -> dict:
        return {
            "days_to_cumulative": {str(k): v for k, v in self.thresholds.items()},
            "peak_day": self.peak_day,
            "peak_incidence": self.peak_incidence,
            "days_above_threshold": {"threshold": self.days_above[0],
                                     "days": self.days_above[1]},
            "cumulative_ill": self.cumulative_ill,
            "peak_synchrony": None if self.peak_synchrony is None
                              else self.peak_synchrony.to_json(),
            "n_slas_with_peak": self.n_slas_with_peak,
        }


def scaled_thresholds(n_agents: int) -> list[int]:
    """Reference cumulative-ill thresholds scaled by population size."""
    scale = n_agents / FULL_SCALE_POPULATION
    return [max(1, int(round(t * scale))) for t in REFERENCE_THRESHOLDS]


def curve_features(output: SimOutput, thresholds: Sequence[int] | None = None,
                   smoothing: int = 7) -> CurveFeatures:
    if thresholds is None:
        thresholds = scaled_thresholds(output.n_agents)
    cum = output.cumulative
    reached: dict[int, int | None] = {}
    for t in thresholds:
        idx = np.nonzero(cum >= t)[0]
        reached[int(t)] = int(idx[0]) if len(idx) else None
    if len(output.incidence) and output.incidence.max() > 0:
        peak_day = int(np.argmax(output.incidence))
        peak_inc = int(output.incidence.max())
    else:
        peak_day, peak_inc = None, 0
    big = max(thresholds) if thresholds else 1
    prev_threshold = int(thresholds[-2]) if len(thresholds) >= 2 else int(big)
    days_above = int((output.prevalence > prev_threshold).sum()) if len(output.prevalence) else 0
    peaks = peak_days(output, smoothing)
    with_peak = peaks[~np.isnan(peaks)]
    sync = synchrony(with_peak) if len(with_peak) >= 2 else None
    return CurveFeatures(
        thresholds=reached,
        peak_day=peak_day,
        peak_incidence=peak_inc,
        days_above=(prev_threshold, days_above),
        cumulative_ill=int(cum[-1]) if len(cum) else 0,
        peak_synchrony=sync,
        n_slas_with_peak=int(len(with_peak)),
    )


# ----------------------------------------------------------------------
# Attack rates
# ----------------------------------------------------------------------

@dataclass
class AttackRates:
    national: dict               # band -> cumulative ill per 10k of that band
    community: dict              # band -> unweighted mean over SLAs, per 10k
    national_overall: float
    community_overall: float
    excluded: list               # (sla_id, band) pairs with zero band population

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("measure,age_band,rate_per_10k\n")
            for band, rate in self.community.items():
                fh.write(f"community,{band},{rate!r}\n")
            fh.write(f"community,overall,{self.community_overall!r}\n")
            for band, rate in self.national.items():
                fh.write(f"national,{band},{rate!r}\n")
            fh.write(f"national,overall,{self.national_overall!r}\n")


def attack_rate_tables(output: SimOutput, population: Population | None = None) -> AttackRates:
    """Per-band attack rates; community = unweighted mean across SLAs."""
    from .census import AGE_BANDS

    ill = output.cum_ill_by_sla_band
    pop = (population.band_populations() if population is not None
           else output.pop_by_sla_band)
    national = {}
    for b, band in enumerate(AGE_BANDS):
        band_pop = pop[:, b].sum()
        national[band] = float(ill[:, b].sum() / band_pop * 1e4) if band_pop else 0.0
    community = {}
    excluded = []
    for b, band in enumerate(AGE_BANDS):
        rates = []
        for s in range(pop.shape[0]):
            if pop[s, b] == 0:
                excluded.append((output.sla_ids[s], band))
                continue
            rates.append(ill[s, b] / pop[s, b] * 1e4)
        community[band] = float(np.mean(rates)) if rates else 0.0
    total_pop = pop.sum()
    national_overall = float(ill.sum() / total_pop * 1e4) if total_pop else 0.0
    sla_pop = pop.sum(axis=1)
    ok = sla_pop > 0
    community_overall = float(np.mean(ill.sum(axis=1)[ok] / sla_pop[ok] * 1e4)) if ok.any() else 0.0
    return AttackRates(national=national, community=community,
                       national_overall=national_overall,
                       community_overall=community_overall, excluded=excluded)


# ----------------------------------------------------------------------
# Synchrony reports
# ----------------------------------------------------------------------

@dataclass
class SynchronyBin:
    label: str
    n_members: int
    synchrony_mean: float | None
    n_fully_synchronous: int
    detail: dict = field(default_factory=dict)


@dataclass
class SynchronyReport:
    mode: str                    # "size" | "distance"
    bins: list

    def to_csv(self, path: Path | str) -> None:
        keys = sorted({k for b in self.bins for k in b.detail})
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin,n_members,synchrony_mean,n_fully_synchronous")
            for k in keys:
                fh.write(f",{k}")
            fh.write("\n")
            for b in self.bins:
                val = "" if b.synchrony_mean is None else repr(b.synchrony_mean)
                fh.write(f"{b.label},{b.n_members},{val},{b.n_fully_synchronous}")
                fh.write("".join(f",{b.detail.get(k, '')}" for k in keys))
                fh.write("\n")


def _as_outputs(outputs) -> list[SimOutput]:
    return list(outputs) if isinstance(outputs, (list, tuple)) else [outputs]


def synchrony_by_size(outputs, n_bins: int = 10, smoothing: int = 7) -> SynchronyReport:
    """Equal-count SLA-size bins; synchrony of peak days within each bin."""
    runs = _as_outputs(outputs)
    first = runs[0]
    sla_pop = first.pop_by_sla_band.sum(axis=1)
    n_slas = len(sla_pop)
    if n_slas < n_bins:
        raise ValueError(f"need at least {n_bins} SLAs, got {n_slas}")
    order = np.argsort(sla_pop, kind="stable")
    partitions = np.array_split(order, n_bins)
    all_peaks = [peak_days(out, smoothing) for out in runs]
    bins = []
    for bi, members in enumerate(partitions):
        values = []
        fully = 0
        for peaks in all_peaks:
            p = peaks[members]
            p = p[~np.isnan(p)]
            if len(p) < 2:
                continue
            s = synchrony(p)
            if s.fully_synchronous:
                fully += 1
            else:
                values.append(s.value)
        bins.append(SynchronyBin(
            label=f"size_bin_{bi}",
            n_members=len(members),
            synchrony_mean=float(np.mean(values)) if values else None,
            n_fully_synchronous=fully,
            detail={"mean_population": float(sla_pop[members].mean()),
                    "min_population": int(sla_pop[members].min()),
                    "max_population": int(sla_pop[members].max())},
        ))
    return SynchronyReport(mode="size", bins=bins)


def _sla_coords(regions, sla_ids: list) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(regions, Population):
        idx = {s: i for i, s in enumerate(regions.sla_ids)}
        lat = np.array([regions.sla_lat[idx[s]] for s in sla_ids])
        lon = np.array([regions.sla_lon[idx[s]] for s in sla_ids])
        return lat, lon
    if isinstance(regions, RegionHierarchy):
        lat = np.array([regions.sla_by_id[s].lat for s in sla_ids])
        lon = np.array([regions.sla_by_id[s].lon for s in sla_ids])
        return lat, lon
    raise TypeError("regions must be a Population or RegionHierarchy")


def pairwise_synchrony_by_distance(outputs, regions, n_bins: int = 10,
                                   smoothing: int = 7) -> SynchronyReport:
    """Mean pairwise synchrony (2 / peak-day-difference^2) per distance bin.

    Pairs with identical peaks are excluded from bin means and counted
    separately; pairs where either SLA has no peak are dropped.
    """
    runs = _as_outputs(outputs)
    first = runs[0]
    sla_ids = first.sla_ids
    if len(sla_ids) < 2:
        raise ValueError("need at least two SLAs")
    lat, lon = _sla_coords(regions, sla_ids)
    pairs = [(a, b) for a in range(len(sla_ids)) for b in range(a + 1, len(sla_ids))]
    dist = np.array([haversine_km((lat[a], lon[a]), (lat[b], lon[b])) for a, b in pairs])
    order = np.argsort(dist, kind="stable")
    partitions = np.array_split(order, min(n_bins, len(pairs)))
    all_peaks = [peak_days(out, smoothing) for out in runs]
    bins = []
    for bi, members in enumerate(partitions):
        values = []
        fully = 0
        for peaks in all_peaks:
            for pi in members:
                a, b = pairs[pi]
                pa, pb = peaks[a], peaks[b]
                if np.isnan(pa) or np.isnan(pb):
                    continue
                if pa == pb:
                    fully += 1
                    continue
                values.append(2.0 / (pa - pb) ** 2)
        bins.append(SynchronyBin(
            label=f"distance_bin_{bi}",
            n_members=len(members),
            synchrony_mean=float(np.mean(values)) if values else None,
            n_fully_synchronous=fully,
            detail={"min_km": float(dist[members].min()),
                    "max_km": float(dist[members].max()),
                    "mean_km": float(dist[members].mean()),
                    "n_pairs_used": len(values)},
        ))
    return SynchronyReport(mode="distance", bins=bins)


def slope_confidence_interval(x: Sequence[float], y: Sequence[float],
                              alpha: float = 0.05) -> tuple[float, float, float]:
    """(slope, ci_low, ci_high) of the least-squares line."""
    res = _sstats.linregress(x, y)
    n = len(x)
    t = _sstats.t.ppf(1.0 - alpha / 2.0, n - 2)
    return float(res.slope), float(res.slope - t * res.stderr), float(res.slope + t * res.stderr)


# ----------------------------------------------------------------------
# Seeding scan
# ----------------------------------------------------------------------

@dataclass
class ScanCell:
    sla_count: int
    proportion: float
    synchrony_mean: float | None
    n_defined: int
    n_runs: int


@dataclass
class ScanResult:
    cells: list

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("sla_count,proportion,synchrony_mean,n_defined,n_runs\n")
            for c in self.cells:
                val = "" if c.synchrony_mean is None else repr(c.synchrony_mean)
                fh.write(f"{c.sla_count},{c.proportion!r},{val},{c.n_defined},{c.n_runs}\n")

    def cell(self, sla_count: int, proportion: float) -> "ScanCell":
        for c in self.cells:
            if c.sla_count == sla_count and math.isclose(c.proportion, proportion):
                return c
        raise KeyError((sla_count, proportion))


def log_spaced_proportions(n: int = 7, lo: float = 1e-5, hi: float = 1.0) -> list[float]:
    return [float(p) for p in np.geomspace(lo, hi, n)]


def seeding_scan(population: Population, model: DiseaseModel,
                 sla_counts: Sequence[int], proportions: Sequence[float],
                 runs_per_cell: int, master_seed: int, duration_days: int = 150,
                 kappa: float | None = None, threads: int | None = None,
                 smoothing: int = 7) -> ScanResult:
    """Community-peak synchrony over a (seeded-SLA count, proportion) grid.

    Cell synchrony is the mean over runs that produced at least two SLA
    peaks; cells where no run did are reported with ``None``.
    """
    if not sla_counts or not len(proportions):
        raise ValueError("scan grid must be non-empty")
    n_slas = len(population.sla_ids)
    cells = []
    for ci, count in enumerate(sla_counts):
        count = int(min(count, n_slas))
        for pi, proportion in enumerate(proportions):
            values = []
            defined = 0
            for r in range(runs_per_cell):
                pick = stream(master_seed, "scan-slas", ci, pi, r)
                chosen = sorted(pick.choice(n_slas, size=count, replace=False).tolist())
                run_seed = int(stream(master_seed, "scan-run", ci, pi, r).integers(0, 2**62))
                config = SimConfig(
                    duration_days=duration_days, seed=run_seed, kappa=kappa,
                    seeding=SeedingConfig(
                        mode="explicit",
                        sla_ids=tuple(population.sla_ids[k] for k in chosen),
                        proportion=float(proportion)),
                    threads=threads)
                out = Simulation(population, model, config).run()
                peaks = peak_days(out, smoothing)
                peaks = peaks[~np.isnan(peaks)]
                if len(peaks) >= 2:
                    s = synchrony(peaks)
                    defined += 1
                    if not s.fully_synchronous:
                        values.append(s.value)
            cells.append(ScanCell(
                sla_count=count, proportion=float(proportion),
                synchrony_mean=float(np.mean(values)) if values else None,
                n_defined=defined, n_runs=runs_per_cell))
    return ScanResult(cells)


# ----------------------------------------------------------------------
# Choropleth export
# ----------------------------------------------------------------------

@dataclass
class ChoroplethExport:
    rows: list                    # (day, sla_id, prevalence_proportion)
    scale_bounds: tuple = CHOROPLETH_SCALE_BOUNDS

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("day,sla_id,prevalence_proportion\n")
            for day, sla_id, prop in self.rows:
                fh.write(f"{day},{sla_id},{prop!r}\n")

    def write_metadata(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps({
            "scale_min": self.scale_bounds[0],
            "scale_max": self.scale_bounds[1],
        }, indent=2) + "\n")


def export_choropleth(output: SimOutput, days: Sequence[int]) -> ChoroplethExport:
    """Per-SLA symptomatic prevalence proportions for the requested days."""
    rows = []
    sla_pop = output.pop_by_sla_band.sum(axis=1)
    for day in days:
        if not 0 <= day < output.duration_days:
            raise ValueError(f"day {day} outside simulated range [0, {output.duration_days})")
        for s, sla_id in enumerate(output.sla_ids):
            prop = float(output.prevalence_sla[day, s] / sla_pop[s]) if sla_pop[s] else 0.0
            rows.append((int(day), sla_id, prop))
    return ChoroplethExport(rows=rows)


# ----------------------------------------------------------------------
# Multi-run aggregation
# ----------------------------------------------------------------------

def aggregate_incidence(outputs: Sequence[SimOutput]) -> dict:
    """Per-day mean and standard deviation of incidence across runs."""
    inc = np.stack([o.incidence for o in outputs])
    return {"mean": inc.mean(axis=0), "sd": inc.std(axis=0, ddof=1) if len(outputs) > 1
            else np.zeros(inc.shape[1])}


def write_aggregate_csv(outputs: Sequence[SimOutput], path: Path | str) -> None:
    agg = aggregate_incidence(outputs)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("day,incidence_mean,incidence_sd\n")
        for d in range(len(agg["mean"])):
            fh.write(f"{d},{agg['mean'][d]!r},{agg['sd'][d]!r}\n")

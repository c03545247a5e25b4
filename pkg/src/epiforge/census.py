"""Census-style tabular inputs: parsing, validation, and serialization.

The canonical interchange is a directory of seven UTF-8 CSV files with
header rows:

* ``regions.csv``        level(STE|SLA|CD|DZN), id, parent_id, centroid_lat, centroid_lon
* ``cd_households.csv``  cd_id, hh_size, count                       (hh_size 1..8, 8 = open "8+" bin)
* ``cd_family_types.csv`` cd_id, hh_size, family_type, probability   (LONE|GROUP|CWC|CWOC|SPF|SINGLE)
* ``cd_age_sex.csv``     cd_id, age_band, sex(M|F), count
* ``worker_flow.csv``    cd_id, dzn_id, workers
* ``school_sizes.csv``   state, bin_low, bin_high, school_count      (open top bin: low=1001, high empty)
* ``airports.csv``       code, sla_id, daily_passengers, seed_radius_km

All validation failures raise :class:`BundleValidationError` naming the
file, row number, and violated constraint.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

AGE_BANDS = ("0-4", "5-18", "19-34", "35-64", "65+")
FAMILY_TYPES = ("LONE", "GROUP", "CWC", "CWOC", "SPF", "SINGLE")
SEXES = ("M", "F")
HH_SIZES = tuple(range(1, 9))  # 8 is the open "8+" bin

# Enrolment-size bins for the state school tables.  The open top bin is
# encoded as (1001, None) so bins stay disjoint.
SCHOOL_BINS = (
    (0, 35), (36, 100), (101, 200), (201, 300), (301, 400),
    (401, 600), (601, 800), (801, 1000), (1001, None),
)

BUNDLE_FILES = (
    "regions.csv", "cd_households.csv", "cd_family_types.csv",
    "cd_age_sex.csv", "worker_flow.csv", "school_sizes.csv", "airports.csv",
)

EARTH_RADIUS_KM = 6371.0088


class BundleValidationError(ValueError):
    """A census bundle failed validation.

    Carries the offending file and row so callers can point at the exact
    line of input.
    """

    def __init__(self, file: str, row: int | None, message: str):
        self.file = file
        self.row = row
        where = f"{file}:{row}" if row is not None else file
        super().__init__(f"{where}: {message}")


# ----------------------------------------------------------------------
# Domain types
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Sla:
    sla_id: str
    state: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Cd:
    cd_id: str
    sla_id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Dzn:
    dzn_id: str
    sla_id: str
    lat: float
    lon: float


@dataclass
class RegionHierarchy:
    """STE / SLA / CD / DZN partition with centroids."""

    states: list[str]
    slas: list[Sla]
    cds: list[Cd]
    dzns: list[Dzn]

    def __post_init__(self):
        self.sla_by_id = {s.sla_id: s for s in self.slas}
        self.cd_by_id = {c.cd_id: c for c in self.cds}
        self.dzn_by_id = {d.dzn_id: d for d in self.dzns}

    def state_of_sla(self, sla_id: str) -> str:
        return self.sla_by_id[sla_id].state

    def cds_of_sla(self, sla_id: str) -> list[Cd]:
        return [c for c in self.cds if c.sla_id == sla_id]


@dataclass
class CdDemographics:
    """Per-CD household-size counts, family-type conditionals, age/sex counts."""

    cd_id: str
    household_sizes: dict[int, int]                      # size -> count
    family_type_conditional: dict[int, dict[str, float]]  # size -> type -> prob
    age_sex_counts: dict[tuple[str, str], int]            # (band, sex) -> count

    def population(self) -> int:
        return sum(self.age_sex_counts.values())

    def band_count(self, band: str) -> int:
        return sum(n for (b, _), n in self.age_sex_counts.items() if b == band)


@dataclass
class WorkerFlow:
    entries: list[tuple[str, str, int]]  # (cd_id, dzn_id, workers)


@dataclass
class SchoolSizeDistribution:
    # state -> {(bin_low, bin_high | None) -> count}
    by_state: dict[str, dict[tuple[int, int | None], int]]

    def total_schools(self, state: str) -> int:
        return sum(self.by_state.get(state, {}).values())


@dataclass(frozen=True)
class Airport:
    code: str
    sla_id: str
    daily_passengers: int
    seed_radius_km: float


@dataclass
class AirportTable:
    rows: list[Airport]


@dataclass
class CensusBundle:
    hierarchy: RegionHierarchy
    demographics: dict[str, CdDemographics]
    worker_flow: WorkerFlow
    school_sizes: SchoolSizeDistribution
    airports: AirportTable

    def total_population(self) -> int:
        return sum(d.population() for d in self.demographics.values())


# ----------------------------------------------------------------------
# Geometry
# ----------------------------------------------------------------------

def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between (lat, lon) points in degrees.

    Exactly symmetric in its arguments and zero iff the points coincide.
    """
    lat1, lon1 = a
    lat2, lon2 = b
    if a == b:
        return 0.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    s = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


def haversine_km_grid(lat1, lon1, lat2, lon2):
    """Vectorized haversine; broadcasts numpy arrays of degrees to km."""
    import numpy as np

    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = np.radians(np.subtract(lat2, lat1))
    dlam = np.radians(np.subtract(lon2, lon1))
    s = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(s)))


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------

def _read_rows(path: Path, expected_header: list[str]) -> Iterable[tuple[int, list[str]]]:
    name = path.name
    if not path.exists():
        raise BundleValidationError(name, None, "file is missing")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BundleValidationError(name, 1, "empty file, expected header row") from None
        if [h.strip() for h in header] != expected_header:
            raise BundleValidationError(
                name, 1, f"bad header {header!r}, expected {expected_header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise BundleValidationError(
                    name, lineno, f"expected {len(expected_header)} columns, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def _parse_int(value: str, file: str, row: int, col: str, minimum: int | None = 0) -> int:
    try:
        v = int(value)
    except ValueError:
        raise BundleValidationError(file, row, f"{col}={value!r} is not an integer") from None
    if minimum is not None and v < minimum:
        raise BundleValidationError(file, row, f"{col}={v} must be >= {minimum}")
    return v


def _parse_float(value: str, file: str, row: int, col: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise BundleValidationError(file, row, f"{col}={value!r} is not a number") from None


def _parse_regions(path: Path) -> RegionHierarchy:
    name = path.name
    states: list[str] = []
    slas: list[Sla] = []
    cds: list[Cd] = []
    dzns: list[Dzn] = []
    seen: dict[tuple[str, str], int] = {}
    rows = []
    for lineno, row in _read_rows(path, ["level", "id", "parent_id", "centroid_lat", "centroid_lon"]):
        level, rid, parent, lat_s, lon_s = row
        if level not in ("STE", "SLA", "CD", "DZN"):
            raise BundleValidationError(name, lineno, f"unknown level {level!r}")
        key = (level, rid)
        if key in seen:
            raise BundleValidationError(name, lineno, f"duplicate {level} id {rid!r} (first at row {seen[key]})")
        seen[key] = lineno
        lat = _parse_float(lat_s, name, lineno, "centroid_lat")
        lon = _parse_float(lon_s, name, lineno, "centroid_lon")
        if not -90.0 <= lat <= 90.0:
            raise BundleValidationError(name, lineno, f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise BundleValidationError(name, lineno, f"longitude {lon} outside [-180, 180]")
        rows.append((lineno, level, rid, parent, lat, lon))

    state_set = set()
    for lineno, level, rid, parent, lat, lon in rows:
        if level == "STE":
            states.append(rid)
            state_set.add(rid)
    for lineno, level, rid, parent, lat, lon in rows:
        if level == "SLA":
            if parent not in state_set:
                raise BundleValidationError(name, lineno, f"SLA {rid!r} references unknown state {parent!r}")
            slas.append(Sla(rid, parent, lat, lon))
    sla_set = {s.sla_id for s in slas}
    for lineno, level, rid, parent, lat, lon in rows:
        if level == "CD":
            if parent not in sla_set:
                raise BundleValidationError(name, lineno, f"CD {rid!r} references unknown SLA {parent!r}")
            cds.append(Cd(rid, parent, lat, lon))
        elif level == "DZN":
            if parent not in sla_set:
                raise BundleValidationError(name, lineno, f"DZN {rid!r} references unknown SLA {parent!r}")
            dzns.append(Dzn(rid, parent, lat, lon))
    return RegionHierarchy(states=states, slas=slas, cds=cds, dzns=dzns)


def parse_bundle(source: Path | str | Mapping[str, Path]) -> CensusBundle:
    """Parse and validate a census bundle.

    ``source`` is either a directory containing the canonical file names
    or a mapping from canonical name to path.
    """
    if isinstance(source, (str, Path)):
        base = Path(source)
        paths = {n: base / n for n in BUNDLE_FILES}
    else:
        paths = {n: Path(source[n]) for n in BUNDLE_FILES}

    hierarchy = _parse_regions(paths["regions.csv"])
    cd_ids = set(hierarchy.cd_by_id)
    dzn_ids = set(hierarchy.dzn_by_id)
    sla_ids = set(hierarchy.sla_by_id)

    # cd_households.csv
    name = "cd_households.csv"
    hh_sizes: dict[str, dict[int, int]] = {}
    for lineno, (cd_id, size_s, count_s) in _read_rows(paths[name], ["cd_id", "hh_size", "count"]):
        if cd_id not in cd_ids:
            raise BundleValidationError(name, lineno, f"unknown cd_id {cd_id!r}")
        size = _parse_int(size_s, name, lineno, "hh_size", minimum=1)
        if size not in HH_SIZES:
            raise BundleValidationError(name, lineno, f"hh_size {size} outside 1..8")
        count = _parse_int(count_s, name, lineno, "count")
        per = hh_sizes.setdefault(cd_id, {})
        if size in per:
            raise BundleValidationError(name, lineno, f"duplicate hh_size {size} for cd {cd_id!r}")
        per[size] = count

    # cd_family_types.csv
    name = "cd_family_types.csv"
    fam: dict[str, dict[int, dict[str, float]]] = {}
    fam_rows: dict[tuple[str, int], int] = {}
    for lineno, (cd_id, size_s, ftype, prob_s) in _read_rows(
            paths[name], ["cd_id", "hh_size", "family_type", "probability"]):
        if cd_id not in cd_ids:
            raise BundleValidationError(name, lineno, f"unknown cd_id {cd_id!r}")
        size = _parse_int(size_s, name, lineno, "hh_size", minimum=1)
        if ftype not in FAMILY_TYPES:
            raise BundleValidationError(name, lineno, f"unknown family_type {ftype!r}")
        prob = _parse_float(prob_s, name, lineno, "probability")
        if not 0.0 <= prob <= 1.0:
            raise BundleValidationError(name, lineno, f"probability {prob} outside [0, 1]")
        per = fam.setdefault(cd_id, {}).setdefault(size, {})
        if ftype in per:
            raise BundleValidationError(name, lineno, f"duplicate family_type {ftype!r} for (cd {cd_id!r}, size {size})")
        per[ftype] = prob
        fam_rows[(cd_id, size)] = lineno
    for cd_id, sizes in fam.items():
        for size, dist in sizes.items():
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise BundleValidationError(
                    name, fam_rows[(cd_id, size)],
                    f"family-type distribution for (cd {cd_id!r}, size {size}) sums to {total!r}, not 1")

    # cd_age_sex.csv
    name = "cd_age_sex.csv"
    ages: dict[str, dict[tuple[str, str], int]] = {}
    for lineno, (cd_id, band, sex, count_s) in _read_rows(
            paths[name], ["cd_id", "age_band", "sex", "count"]):
        if cd_id not in cd_ids:
            raise BundleValidationError(name, lineno, f"unknown cd_id {cd_id!r}")
        if band not in AGE_BANDS:
            raise BundleValidationError(name, lineno, f"unknown age_band {band!r}")
        if sex not in SEXES:
            raise BundleValidationError(name, lineno, f"sex must be M or F, got {sex!r}")
        count = _parse_int(count_s, name, lineno, "count")
        per = ages.setdefault(cd_id, {})
        if (band, sex) in per:
            raise BundleValidationError(name, lineno, f"duplicate (age_band, sex) ({band}, {sex}) for cd {cd_id!r}")
        per[(band, sex)] = count

    demographics = {}
    for cd in hierarchy.cds:
        demographics[cd.cd_id] = CdDemographics(
            cd_id=cd.cd_id,
            household_sizes=hh_sizes.get(cd.cd_id, {}),
            family_type_conditional=fam.get(cd.cd_id, {}),
            age_sex_counts=ages.get(cd.cd_id, {}),
        )

    # worker_flow.csv
    name = "worker_flow.csv"
    entries: list[tuple[str, str, int]] = []
    seen_pairs: dict[tuple[str, str], int] = {}
    for lineno, (cd_id, dzn_id, workers_s) in _read_rows(paths[name], ["cd_id", "dzn_id", "workers"]):
        if cd_id not in cd_ids:
            raise BundleValidationError(name, lineno, f"unknown cd_id {cd_id!r}")
        if dzn_id not in dzn_ids:
            raise BundleValidationError(name, lineno, f"unknown dzn_id {dzn_id!r}")
        if (cd_id, dzn_id) in seen_pairs:
            raise BundleValidationError(
                name, lineno,
                f"duplicate (cd, dzn) pair ({cd_id!r}, {dzn_id!r}), first at row {seen_pairs[(cd_id, dzn_id)]}")
        seen_pairs[(cd_id, dzn_id)] = lineno
        entries.append((cd_id, dzn_id, _parse_int(workers_s, name, lineno, "workers")))

    # school_sizes.csv
    name = "school_sizes.csv"
    by_state: dict[str, dict[tuple[int, int | None], int]] = {}
    state_set = set(hierarchy.states)
    for lineno, (state, low_s, high_s, count_s) in _read_rows(
            paths[name], ["state", "bin_low", "bin_high", "school_count"]):
        if state not in state_set:
            raise BundleValidationError(name, lineno, f"unknown state {state!r}")
        low = _parse_int(low_s, name, lineno, "bin_low")
        high = None if high_s == "" else _parse_int(high_s, name, lineno, "bin_high")
        if (low, high) not in SCHOOL_BINS:
            raise BundleValidationError(
                name, lineno,
                f"bin ({low}, {high}) is not one of the canonical bins {SCHOOL_BINS}")
        count = _parse_int(count_s, name, lineno, "school_count")
        per = by_state.setdefault(state, {})
        if (low, high) in per:
            raise BundleValidationError(name, lineno, f"duplicate bin ({low}, {high}) for state {state!r}")
        per[(low, high)] = count

    # airports.csv
    name = "airports.csv"
    airports: list[Airport] = []
    seen_codes: dict[str, int] = {}
    for lineno, (code, sla_id, pax_s, radius_s) in _read_rows(
            paths[name], ["code", "sla_id", "daily_passengers", "seed_radius_km"]):
        if sla_id not in sla_ids:
            raise BundleValidationError(name, lineno, f"unknown sla_id {sla_id!r}")
        if code in seen_codes:
            raise BundleValidationError(name, lineno, f"duplicate airport code {code!r}")
        seen_codes[code] = lineno
        pax = _parse_int(pax_s, name, lineno, "daily_passengers")
        radius = _parse_float(radius_s, name, lineno, "seed_radius_km")
        if radius <= 0:
            raise BundleValidationError(name, lineno, f"seed_radius_km {radius} must be > 0")
        airports.append(Airport(code, sla_id, pax, radius))

    return CensusBundle(
        hierarchy=hierarchy,
        demographics=demographics,
        worker_flow=WorkerFlow(entries),
        school_sizes=SchoolSizeDistribution(by_state),
        airports=AirportTable(airports),
    )


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_bundle(bundle: CensusBundle, out_dir: Path | str) -> list[Path]:
    """Write a bundle as the canonical CSV set. Deterministic byte-for-byte."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def w(name: str, header: list[str], rows: Iterable[list]) -> None:
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    h = bundle.hierarchy
    region_rows = [["STE", s, "", _fmt_float(0.0), _fmt_float(0.0)] for s in h.states]
    region_rows += [["SLA", s.sla_id, s.state, _fmt_float(s.lat), _fmt_float(s.lon)] for s in h.slas]
    region_rows += [["CD", c.cd_id, c.sla_id, _fmt_float(c.lat), _fmt_float(c.lon)] for c in h.cds]
    region_rows += [["DZN", d.dzn_id, d.sla_id, _fmt_float(d.lat), _fmt_float(d.lon)] for d in h.dzns]
    w("regions.csv", ["level", "id", "parent_id", "centroid_lat", "centroid_lon"], region_rows)

    w("cd_households.csv", ["cd_id", "hh_size", "count"],
      [[cd_id, size, count]
       for cd_id in sorted(bundle.demographics)
       for size, count in sorted(bundle.demographics[cd_id].household_sizes.items())])

    w("cd_family_types.csv", ["cd_id", "hh_size", "family_type", "probability"],
      [[cd_id, size, ftype, _fmt_float(p)]
       for cd_id in sorted(bundle.demographics)
       for size, dist in sorted(bundle.demographics[cd_id].family_type_conditional.items())
       for ftype, p in sorted(dist.items())])

    w("cd_age_sex.csv", ["cd_id", "age_band", "sex", "count"],
      [[cd_id, band, sex, count]
       for cd_id in sorted(bundle.demographics)
       for (band, sex), count in sorted(
           bundle.demographics[cd_id].age_sex_counts.items(),
           key=lambda kv: (AGE_BANDS.index(kv[0][0]), kv[0][1]))])

    w("worker_flow.csv", ["cd_id", "dzn_id", "workers"],
      [[cd, dzn, n] for cd, dzn, n in sorted(bundle.worker_flow.entries)])

    w("school_sizes.csv", ["state", "bin_low", "bin_high", "school_count"],
      [[state, low, "" if high is None else high, count]
       for state in sorted(bundle.school_sizes.by_state)
       for (low, high), count in sorted(
           bundle.school_sizes.by_state[state].items(), key=lambda kv: kv[0][0])])

    w("airports.csv", ["code", "sla_id", "daily_passengers", "seed_radius_km"],
      [[a.code, a.sla_id, a.daily_passengers, _fmt_float(a.seed_radius_km)]
       for a in sorted(bundle.airports.rows, key=lambda a: a.code)])

    return written

"""Synthetic census fixtures for desk-scale runs and tests.

Regions are laid out on a lat/lon grid with SLA blocks, a handful of CDs
clustered around each SLA centroid, and one or more DZNs per SLA.  All
tables are generated from the fixture spec and a single seed; the result
is a pure function of both (byte-identical CSVs on re-run).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .census import (
    AGE_BANDS, SCHOOL_BINS, Airport, AirportTable, Cd, CensusBundle,
    CdDemographics, Dzn, RegionHierarchy, SchoolSizeDistribution, Sla,
    WorkerFlow,
)
from .rng import stream

# Age-band population shares, roughly matching Australian 2006 marginals.
AGE_SHARES = {"0-4": 0.063, "5-18": 0.185, "19-34": 0.215, "35-64": 0.395, "65+": 0.142}

# Household-size pmf over sizes 1..8 (8 = open bin).
HH_SIZE_PMF = {1: 0.23, 2: 0.335, 3: 0.16, 4: 0.16, 5: 0.072, 6: 0.028, 7: 0.010, 8: 0.005}

# Family-type conditional given household size.  Child demand implied by
# these conditionals (~0.67 per household) matches the ~25% child share of
# AGE_SHARES, so typed draws stay feasible as the CD pool drains.
FAMILY_CONDITIONAL = {
    1: {"LONE": 0.85, "SINGLE": 0.15},
    2: {"CWOC": 0.55, "SPF": 0.12, "GROUP": 0.21, "SINGLE": 0.12},
    3: {"CWC": 0.40, "SPF": 0.15, "GROUP": 0.45},
    4: {"CWC": 0.55, "SPF": 0.08, "GROUP": 0.37},
    5: {"CWC": 0.60, "SPF": 0.08, "GROUP": 0.32},
    6: {"CWC": 0.65, "SPF": 0.08, "GROUP": 0.27},
    7: {"CWC": 0.70, "SPF": 0.08, "GROUP": 0.22},
    8: {"CWC": 0.70, "SPF": 0.08, "GROUP": 0.22},
}

# School count shares per enrolment bin; skewed to small schools like the
# national tables, which keeps class sizes realistic.
SCHOOL_BIN_SHARES = (0.10, 0.18, 0.22, 0.16, 0.12, 0.12, 0.06, 0.03, 0.01)
_BIN_MEANS = tuple(
    (low + high) / 2.0 if high is not None else 1250.0 for (low, high) in SCHOOL_BINS
)

_GRID_ORIGIN = (-34.0, 148.0)
_KM_PER_DEG_LAT = 111.32


class FixtureError(ValueError):
    """Invalid fixture specification."""


@dataclass(frozen=True)
class FixtureSpec:
    """Parameters for a synthetic census bundle.

    ``sla_size_spread`` > 0 draws a lognormal per-SLA population factor
    (sigma = spread) so SLA sizes vary; 0 keeps every CD at exactly
    ``population_per_cd``.
    """

    n_slas: int
    n_cds_per_sla: int
    population_per_cd: int
    seed: int
    n_dzns_per_sla: int = 1
    n_states: int = 2
    sla_size_spread: float = 0.0
    sla_spacing_km: float = 30.0
    workforce_rate: float = 0.62
    school_capacity_headroom: float = 1.25
    n_airports: int = 1
    airport_passenger_share: float = 0.005
    airport_radius_km: float = 50.0

    def validate(self) -> None:
        for name in ("n_slas", "n_cds_per_sla", "population_per_cd"):
            if getattr(self, name) < 1:
                raise FixtureError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_dzns_per_sla < 1:
            raise FixtureError("n_dzns_per_sla must be >= 1")


def _offset(lat: float, lon: float, dx_km: float, dy_km: float) -> tuple[float, float]:
    lat2 = lat + dy_km / _KM_PER_DEG_LAT
    lon2 = lon + dx_km / (_KM_PER_DEG_LAT * math.cos(math.radians(lat)))
    return round(lat2, 6), round(lon2, 6)


def generate_fixture(spec: FixtureSpec) -> CensusBundle:
    """Build a synthetic census bundle; deterministic for a fixed spec."""
    spec.validate()
    rng = stream(spec.seed, "fixture")

    n_states = max(1, min(spec.n_states, spec.n_slas))
    states = [f"S{i}" for i in range(n_states)]
    side = math.ceil(math.sqrt(spec.n_slas))

    slas: list[Sla] = []
    cds: list[Cd] = []
    dzns: list[Dzn] = []
    sla_state: dict[str, str] = {}
    cd_target: dict[str, int] = {}
    cd_of_sla: dict[str, list[str]] = {}
    dzn_of_sla: dict[str, list[str]] = {}

    factors = np.ones(spec.n_slas)
    if spec.sla_size_spread > 0:
        factors = np.exp(rng.normal(0.0, spec.sla_size_spread, size=spec.n_slas))
        factors = np.clip(factors, 0.3, 4.0)

    for i in range(spec.n_slas):
        gx, gy = i % side, i // side
        lat, lon = _offset(*_GRID_ORIGIN, gx * spec.sla_spacing_km, gy * spec.sla_spacing_km)
        sla_id = f"SLA{i:04d}"
        state = states[i * n_states // spec.n_slas]
        slas.append(Sla(sla_id, state, lat, lon))
        sla_state[sla_id] = state
        cd_of_sla[sla_id] = []
        dzn_of_sla[sla_id] = []
        for j in range(spec.n_cds_per_sla):
            ang = 2.0 * math.pi * j / max(1, spec.n_cds_per_sla)
            r = 2.0 + 2.0 * (j % 3)
            clat, clon = _offset(lat, lon, r * math.cos(ang), r * math.sin(ang))
            cd_id = f"CD{i:04d}{j:02d}"
            cds.append(Cd(cd_id, sla_id, clat, clon))
            cd_of_sla[sla_id].append(cd_id)
            cd_target[cd_id] = max(1, int(round(spec.population_per_cd * factors[i])))
        for k in range(spec.n_dzns_per_sla):
            dlat, dlon = _offset(lat, lon, 1.0 + k, 0.5)
            dzn_id = f"DZN{i:04d}{k:02d}"
            dzns.append(Dzn(dzn_id, sla_id, dlat, dlon))
            dzn_of_sla[sla_id].append(dzn_id)

    hierarchy = RegionHierarchy(states=states, slas=slas, cds=cds, dzns=dzns)

    # Per-CD demographic tables.
    demographics: dict[str, CdDemographics] = {}
    bands = list(AGE_BANDS)
    shares = np.array([AGE_SHARES[b] for b in bands])
    mean_hh = sum(s * p for s, p in HH_SIZE_PMF.items())
    for cd in cds:
        target = cd_target[cd.cd_id]
        counts = rng.multinomial(target, shares)
        age_sex: dict[tuple[str, str], int] = {}
        for band, n in zip(bands, counts):
            males = int(rng.binomial(n, 0.5))
            age_sex[(band, "M")] = males
            age_sex[(band, "F")] = n - males
        n_households = max(1, int(round(target / mean_hh)))
        hh_counts = rng.multinomial(n_households, list(HH_SIZE_PMF.values()))
        demographics[cd.cd_id] = CdDemographics(
            cd_id=cd.cd_id,
            household_sizes={s: int(c) for s, c in zip(HH_SIZE_PMF, hh_counts)},
            family_type_conditional={s: dict(d) for s, d in FAMILY_CONDITIONAL.items()},
            age_sex_counts=age_sex,
        )

    # Worker flows: most workers stay in their own SLA, the rest commute
    # to the nearest other SLA.
    flows: list[tuple[str, str, int]] = []
    sla_ids = [s.sla_id for s in slas]
    for cd in cds:
        demo = demographics[cd.cd_id]
        working_age = demo.band_count("19-34") + demo.band_count("35-64")
        n_workers = int(working_age * spec.workforce_rate)
        if n_workers == 0:
            continue
        own = dzn_of_sla[cd.sla_id]
        if len(sla_ids) > 1:
            idx = sla_ids.index(cd.sla_id)
            other = sla_ids[(idx + 1) % len(sla_ids)]
            local = int(round(n_workers * 0.8))
            away = n_workers - local
        else:
            other = None
            local, away = n_workers, 0
        per_dzn = np.bincount(rng.integers(0, len(own), size=local), minlength=len(own))
        for dzn_id, n in zip(own, per_dzn):
            if n > 0:
                flows.append((cd.cd_id, dzn_id, int(n)))
        if away > 0 and other is not None:
            flows.append((cd.cd_id, dzn_of_sla[other][0], away))

    # State school tables sized to the expected student population.
    by_state: dict[str, dict[tuple[int, int | None], int]] = {}
    for state in states:
        students = sum(
            demographics[cd_id].band_count("5-18")
            for sla_id, cd_list in cd_of_sla.items() if sla_state[sla_id] == state
            for cd_id in cd_list)
        need = students * spec.school_capacity_headroom
        mean_cap = sum(f * m for f, m in zip(SCHOOL_BIN_SHARES, _BIN_MEANS))
        n_schools = max(1, math.ceil(need / mean_cap))
        per_bin = [int(round(n_schools * f)) for f in SCHOOL_BIN_SHARES]
        # Nudge the largest closed bin until capacity actually covers demand.
        def capacity(pb):
            return sum(n * m for n, m in zip(pb, _BIN_MEANS))
        while capacity(per_bin) < need:
            per_bin[5] += 1
        by_state[state] = {b: n for b, n in zip(SCHOOL_BINS, per_bin) if n > 0}

    total_pop = sum(cd_target.values())
    airports = []
    for k in range(min(spec.n_airports, spec.n_slas)):
        pax = max(1, int(round(total_pop * spec.airport_passenger_share / max(1, spec.n_airports))))
        airports.append(Airport(f"AP{k}", sla_ids[k * len(sla_ids) // max(1, spec.n_airports)],
                                pax, spec.airport_radius_km))

    return CensusBundle(
        hierarchy=hierarchy,
        demographics=demographics,
        worker_flow=WorkerFlow(flows),
        school_sizes=SchoolSizeDistribution(by_state),
        airports=AirportTable(airports),
    )

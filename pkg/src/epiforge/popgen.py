"""Stochastic population synthesis from a census bundle.

Pipeline (all driven by per-phase seeded streams, so a fixed seed yields a
bit-identical population):

1. households per CD, sampling size then family type conditional on size,
   drawing members without replacement from the CD age/sex pool
2. household clusters of up to four consecutive households after a seeded
   shuffle within each CD
3. worker-flow assignment of working-age adults to DZNs
4. school placement per state size tables, biased to DZNs with more
   students nearby
5. student enrolment via school catchment radii (folded normal, doubling
   search up to 100 km), grades by single year of age, classes of <= 25,
   staff pulled from DZN workers at 2 staff per 17 students
6. work groups of <= 20 for remaining workers, community (CD) and
   neighbourhood (SLA) groups for everyone

Agents who neither work nor attend school keep their household and cluster
as daytime groups; community and neighbourhood groups are active in both
half-day cycles.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .census import (AGE_BANDS, Airport, CensusBundle, CdDemographics,
                     WorkerFlow, haversine_km_grid)
from .disease import Context
from .rng import stream

# Role codes.
ROLE_PRESCHOOL = 0
ROLE_STUDENT = 1
ROLE_WORKER = 2
ROLE_NON_WORKING_ADULT = 3
ROLE_OLDER_ADULT = 4
ROLE_NAMES = ("preschool", "student", "worker", "non_working_adult", "older_adult")

CLASS_MAX = 25
WORK_GROUP_MAX = 20
CLUSTER_MAX_HOUSEHOLDS = 4
ATTENDANCE_RATE = 0.987
STAFF_NUM, STAFF_DEN = 2, 17          # staff per student
CATCHMENT_MEAN_KM = 10.0
CATCHMENT_SD_KM = 2.0                 # folded Normal(10, 4 km^2)
MAX_SEARCH_KM = 100.0
SCHOOL_PROXIMITY_KM = 20.0            # "students nearby" radius for placement bias
OPEN_HH_BIN_RANGE = (8, 10)           # closure for the 8+ household bin
OPEN_SCHOOL_BIN_RANGE = (1001, 1500)  # closure for the 1000+ enrolment bin

_CHILD_BANDS = (0, 1)
_ADULT_BANDS = (2, 3, 4)
_WORKING_BANDS = (2, 3)
_BAND_YEAR_RANGE = ((0, 4), (5, 18), (19, 34), (35, 64), (65, 89))


class SynthesisError(RuntimeError):
    pass


# ----------------------------------------------------------------------
# Stage results
# ----------------------------------------------------------------------

@dataclass
class PersonDraft:
    age_band: int
    age_years: int
    sex: int  # 0=M, 1=F


@dataclass
class HouseholdDraft:
    family_type: str
    members: list


@dataclass
class SchoolDraft:
    state: str
    dzn_id: str
    capacity: int


@dataclass
class WorkerAssignment:
    dzn_workers: dict           # dzn_id -> list of agent ids
    shortfalls: list            # dicts with cd, dzn, requested, assigned
    work_groups: dict | None    # dzn_id -> list of groups (lists of ids)


@dataclass
class EnrolmentResult:
    assignment: np.ndarray      # per student: school index or -1
    attempted: np.ndarray       # bool per student (the 98.7%)
    radii_km: np.ndarray        # per school catchment radius
    remaining_places: np.ndarray


@dataclass
class School:
    school_id: int              # school mixing-group id
    dzn_id: str
    capacity: int
    enrolled: int
    staff_count: int            # ceil(enrolled * 2/17), the target
    staff_assigned: int
    grade_group_ids: list
    class_group_ids: list
    catchment_radius_km: float

    def to_dict(self) -> dict:
        return {
            "school_id": self.school_id, "dzn_id": self.dzn_id,
            "capacity": self.capacity, "enrolled": self.enrolled,
            "staff_count": self.staff_count, "staff_assigned": self.staff_assigned,
            "grade_group_ids": list(self.grade_group_ids),
            "class_group_ids": list(self.class_group_ids),
            "catchment_radius_km": self.catchment_radius_km,
        }


# ----------------------------------------------------------------------
# Stage 1: households
# ----------------------------------------------------------------------

def _feasible(ftype: str, size: int, children: int, adults: int) -> bool:
    if ftype == "LONE":
        return size == 1 and adults >= 1
    if ftype in ("SINGLE", "GROUP"):
        return adults >= size
    if ftype == "CWOC":
        return size == 2 and adults >= 2
    if ftype == "CWC":
        return size >= 3 and adults >= 2 and children >= size - 2
    if ftype == "SPF":
        return size >= 2 and adults >= 1 and children >= size - 1
    return False


def _composition(ftype: str, size: int) -> tuple[int, int]:
    """(n_adults, n_children) for a feasible draw."""
    if ftype == "CWC":
        return 2, size - 2
    if ftype == "SPF":
        return 1, size - 1
    return size, 0


def synthesize_households(cd: CdDemographics, rng: np.random.Generator
                          ) -> tuple[list[HouseholdDraft], list[str]]:
    """Generate households for one CD.

    Members are drawn without replacement from the CD age/sex pool, so the
    generated count matches the census population exactly and marginals
    are conserved.  Infeasible family-type draws are retried up to ten
    times, then relaxed to GROUP; if even that fails (e.g. only children
    remain), the leftovers form a GROUP-typed household and a warning is
    recorded.
    """
    pool = np.zeros((len(AGE_BANDS), 2), dtype=np.int64)
    for (band, sex), count in cd.age_sex_counts.items():
        pool[AGE_BANDS.index(band), 0 if sex == "M" else 1] = count

    sizes = sorted(cd.household_sizes)
    size_weights = np.array([cd.household_sizes[s] for s in sizes], dtype=float)
    if size_weights.sum() <= 0:
        sizes, size_weights = [1], np.array([1.0])
    size_cdf = np.cumsum(size_weights) / size_weights.sum()

    warnings: list[str] = []
    households: list[HouseholdDraft] = []

    def draw_person(child: bool) -> PersonDraft:
        bands = _CHILD_BANDS if child else _ADULT_BANDS
        cells = [(b, s) for b in bands for s in (0, 1) if pool[b, s] > 0]
        weights = np.array([pool[b, s] for b, s in cells], dtype=float)
        b, s = cells[rng.choice(len(cells), p=weights / weights.sum())]
        pool[b, s] -= 1
        lo, hi = _BAND_YEAR_RANGE[b]
        return PersonDraft(age_band=b, age_years=int(rng.integers(lo, hi + 1)), sex=s)

    while pool.sum() > 0:
        remaining = int(pool.sum())
        size = sizes[int(np.searchsorted(size_cdf, rng.random(), side="right"))]
        if size == 8:
            size = int(rng.integers(OPEN_HH_BIN_RANGE[0], OPEN_HH_BIN_RANGE[1] + 1))
        size = min(size, remaining)
        children = int(pool[_CHILD_BANDS, :].sum())
        adults = remaining - children

        cond = cd.family_type_conditional.get(min(size, 8), {})
        types = sorted(cond)
        probs = np.array([cond[t] for t in types], dtype=float)
        ftype = None
        if types and probs.sum() > 0:
            cdf = np.cumsum(probs) / probs.sum()
            for _ in range(10):
                cand = types[int(np.searchsorted(cdf, rng.random(), side="right"))]
                if _feasible(cand, size, children, adults):
                    ftype = cand
                    break
        if ftype is None:
            if _feasible("GROUP", size, children, adults):
                ftype = "GROUP"
                warnings.append(f"cd {cd.cd_id}: relaxed infeasible family draw to GROUP (size {size})")
            else:
                # Pool can no longer satisfy any typed composition; absorb
                # whatever is left so census totals stay exact.
                members = []
                for b in range(len(AGE_BANDS)):
                    for s in (0, 1):
                        for _ in range(int(pool[b, s])):
                            lo, hi = _BAND_YEAR_RANGE[b]
                            members.append(PersonDraft(b, int(rng.integers(lo, hi + 1)), s))
                            pool[b, s] -= 1
                if len(members) > size:
                    for chunk_start in range(0, len(members), size):
                        households.append(HouseholdDraft("GROUP", members[chunk_start:chunk_start + size]))
                else:
                    households.append(HouseholdDraft("GROUP", members))
                warnings.append(f"cd {cd.cd_id}: pool exhausted mid-draw, leftovers grouped")
                break

        n_adults, n_children = _composition(ftype, size)
        members = [draw_person(child=False) for _ in range(n_adults)]
        members += [draw_person(child=True) for _ in range(n_children)]
        households.append(HouseholdDraft(ftype, members))

    return households, warnings


# ----------------------------------------------------------------------
# Stage 2: clusters
# ----------------------------------------------------------------------

def form_clusters(n_households: int, rng: np.random.Generator,
                  max_households: int = CLUSTER_MAX_HOUSEHOLDS) -> list[list[int]]:
    """Shuffle households within a CD and group consecutive runs of four."""
    order = rng.permutation(n_households)
    return [order[i:i + max_households].tolist()
            for i in range(0, n_households, max_households)]


# ----------------------------------------------------------------------
# Stage 3: worker flows
# ----------------------------------------------------------------------

def assign_workers(flows: WorkerFlow, workers_by_cd: Mapping[str, Sequence[int]],
                   rng: np.random.Generator, form_groups: bool = True,
                   max_group: int = WORK_GROUP_MAX) -> WorkerAssignment:
    """Assign working-age adults to DZNs per the flow table.

    Each (cd, dzn) entry takes ``min(requested, still available)`` workers
    from the CD; shortfalls are recorded, never raised.  With
    ``form_groups`` the per-DZN workforce is partitioned into groups of at
    most ``max_group`` (ceil(n / max_group) groups).
    """
    dzn_workers: dict[str, list[int]] = {}
    shortfalls: list[dict] = []
    by_cd: dict[str, list[tuple[str, int]]] = {}
    for cd_id, dzn_id, count in flows.entries:
        by_cd.setdefault(cd_id, []).append((dzn_id, count))

    for cd_id in sorted(by_cd):
        avail = list(workers_by_cd.get(cd_id, ()))
        perm = rng.permutation(len(avail))
        ptr = 0
        for dzn_id, want in sorted(by_cd[cd_id]):
            take = min(want, len(avail) - ptr)
            if take > 0:
                ids = [avail[perm[k]] for k in range(ptr, ptr + take)]
                dzn_workers.setdefault(dzn_id, []).extend(ids)
                ptr += take
            if take < want:
                shortfalls.append({"cd_id": cd_id, "dzn_id": dzn_id,
                                   "requested": int(want), "assigned": int(take)})

    work_groups = None
    if form_groups:
        work_groups = {}
        for dzn_id in sorted(dzn_workers):
            ids = dzn_workers[dzn_id]
            order = rng.permutation(len(ids))
            work_groups[dzn_id] = [[ids[k] for k in order[i:i + max_group]]
                                   for i in range(0, len(ids), max_group)]
    return WorkerAssignment(dzn_workers, shortfalls, work_groups)


# ----------------------------------------------------------------------
# Stage 4: school placement
# ----------------------------------------------------------------------

def place_schools(dist, potentials: Mapping[str, float], dzn_state: Mapping[str, str],
                  rng: np.random.Generator) -> tuple[list[SchoolDraft], list[str]]:
    """Place schools in DZNs biased by nearby-student potential.

    The number of schools per (state, size bin) matches the distribution
    exactly; capacities are uniform within the bin.  Each school picks a
    DZN with probability proportional to the remaining potential, which is
    then reduced by the school's capacity.
    """
    schools: list[SchoolDraft] = []
    warnings: list[str] = []
    for state in sorted(dist.by_state):
        dzns = sorted(d for d, st in dzn_state.items() if st == state)
        if not dzns:
            warnings.append(f"state {state}: no DZNs, schools skipped")
            continue
        pot = np.array([float(potentials.get(d, 0.0)) for d in dzns])
        uniform_warned = False
        for (low, high) in sorted(dist.by_state[state], key=lambda b: b[0]):
            count = dist.by_state[state][(low, high)]
            for _ in range(count):
                if high is None:
                    capacity = int(rng.integers(OPEN_SCHOOL_BIN_RANGE[0],
                                                OPEN_SCHOOL_BIN_RANGE[1] + 1))
                else:
                    capacity = int(rng.integers(max(low, 1), high + 1))
                weights = np.clip(pot, 0.0, None)
                total = weights.sum()
                if total <= 0:
                    if not uniform_warned:
                        warnings.append(
                            f"state {state}: student potential exhausted, placing uniformly")
                        uniform_warned = True
                    idx = int(rng.integers(len(dzns)))
                else:
                    idx = int(rng.choice(len(dzns), p=weights / total))
                pot[idx] -= capacity
                schools.append(SchoolDraft(state, dzns[idx], capacity))
    return schools, warnings


# ----------------------------------------------------------------------
# Stage 5: enrolment
# ----------------------------------------------------------------------

def enrol_students(schools: Sequence[SchoolDraft], student_cd_index: np.ndarray,
                   cd_school_km: np.ndarray, rng: np.random.Generator,
                   attendance_rate: float = ATTENDANCE_RATE,
                   max_radius_km: float = MAX_SEARCH_KM) -> EnrolmentResult:
    """Assign attempted students to schools by catchment.

    A student is attempted with probability ``attendance_rate``.  Catchment
    radii are folded-normal draws per school; a student picks among schools
    whose (possibly doubled) effective radius covers the home-CD distance,
    with probability proportional to remaining places.  The effective
    radius is capped at ``max_radius_km``; students beyond that stay
    unenrolled.
    """
    n_students = len(student_cd_index)
    n_schools = len(schools)
    radii = np.abs(rng.normal(CATCHMENT_MEAN_KM, CATCHMENT_SD_KM, size=n_schools))
    remaining = np.array([s.capacity for s in schools], dtype=np.int64)
    attempted = rng.random(n_students) < attendance_rate
    assignment = np.full(n_students, -1, dtype=np.int64)
    if n_schools == 0:
        return EnrolmentResult(assignment, attempted, radii, remaining)

    order = rng.permutation(n_students)
    for s in order:
        if not attempted[s]:
            continue
        drow = cd_school_km[student_cd_index[s]]
        scale = 1.0
        while True:
            eff = np.minimum(radii * scale, max_radius_km)
            cand = np.nonzero((drow <= eff) & (remaining > 0))[0]
            if cand.size:
                w = remaining[cand].astype(float)
                pick = int(cand[rng.choice(cand.size, p=w / w.sum())])
                assignment[s] = pick
                remaining[pick] -= 1
                break
            if np.all(radii * scale >= max_radius_km):
                break
            scale *= 2.0
    return EnrolmentResult(assignment, attempted, radii, remaining)


def staff_for(enrolled: int) -> int:
    """ceil(enrolled * 2 / 17); two staff per seventeen students."""
    return -(-enrolled * STAFF_NUM // STAFF_DEN)


# ----------------------------------------------------------------------
# Population container
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class AgentInfo:
    agent_id: int
    age_band: int
    age_years: int
    sex: int
    role: int
    home_cd_id: str
    household_id: int
    day_groups: tuple
    night_groups: tuple


@dataclass(frozen=True)
class MixingGroup:
    group_id: int
    context: Context
    members: tuple
    size: int


_ARRAY_FIELDS = (
    "age_band", "age_years", "sex", "role", "home_cd", "home_sla", "household_of",
    "group_context", "group_size", "group_indptr", "group_members",
    "day_indptr", "day_groups", "night_indptr", "night_groups",
    "dayx_indptr", "dayx_groups", "cd_sla", "sla_lat", "sla_lon",
)


@dataclass
class Population:
    """Immutable synthesized population: agents, mixing groups, indexes."""

    age_band: np.ndarray
    age_years: np.ndarray
    sex: np.ndarray
    role: np.ndarray
    home_cd: np.ndarray
    home_sla: np.ndarray
    household_of: np.ndarray

    group_context: np.ndarray
    group_size: np.ndarray
    group_indptr: np.ndarray
    group_members: np.ndarray

    day_indptr: np.ndarray
    day_groups: np.ndarray
    night_indptr: np.ndarray
    night_groups: np.ndarray
    dayx_indptr: np.ndarray      # infector view: day groups plus household+cluster
    dayx_groups: np.ndarray

    cd_ids: list
    sla_ids: list
    dzn_ids: list
    sla_states: list
    cd_sla: np.ndarray
    sla_lat: np.ndarray
    sla_lon: np.ndarray

    schools: list
    airports: list                # census airports, carried for seeding
    report: dict
    seed: int

    @property
    def n_agents(self) -> int:
        return len(self.age_band)

    @property
    def n_groups(self) -> int:
        return len(self.group_context)

    def members_of(self, group_id: int) -> np.ndarray:
        return self.group_members[self.group_indptr[group_id]:self.group_indptr[group_id + 1]]

    def group(self, group_id: int) -> MixingGroup:
        members = tuple(int(m) for m in self.members_of(group_id))
        return MixingGroup(group_id, Context(int(self.group_context[group_id])),
                           members, int(self.group_size[group_id]))

    def agent(self, agent_id: int) -> AgentInfo:
        day = tuple(int(g) for g in
                    self.day_groups[self.day_indptr[agent_id]:self.day_indptr[agent_id + 1]])
        night = tuple(int(g) for g in
                      self.night_groups[self.night_indptr[agent_id]:self.night_indptr[agent_id + 1]])
        return AgentInfo(
            agent_id=agent_id,
            age_band=int(self.age_band[agent_id]),
            age_years=int(self.age_years[agent_id]),
            sex=int(self.sex[agent_id]),
            role=int(self.role[agent_id]),
            home_cd_id=self.cd_ids[int(self.home_cd[agent_id])],
            household_id=int(self.household_of[agent_id]),
            day_groups=day,
            night_groups=night,
        )

    def groups_by_context(self, context: Context) -> np.ndarray:
        return np.nonzero(self.group_context == int(context))[0]

    def sla_populations(self) -> np.ndarray:
        return np.bincount(self.home_sla, minlength=len(self.sla_ids)).astype(np.int64)

    def band_populations(self) -> np.ndarray:
        """Per (sla, band) head counts, shape (n_slas, 5)."""
        out = np.zeros((len(self.sla_ids), len(AGE_BANDS)), dtype=np.int64)
        np.add.at(out, (self.home_sla, self.age_band), 1)
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in _ARRAY_FIELDS:
            arr = np.ascontiguousarray(getattr(self, name))
            h.update(name.encode())
            h.update(str(arr.dtype).encode())
            h.update(arr.tobytes())
        h.update(json.dumps([self.cd_ids, self.sla_ids, self.dzn_ids, self.sla_states],
                            sort_keys=True).encode())
        h.update(json.dumps([s.to_dict() for s in self.schools], sort_keys=True).encode())
        h.update(json.dumps([[a.code, a.sla_id, a.daily_passengers, a.seed_radius_km]
                             for a in self.airports], sort_keys=True).encode())
        return h.hexdigest()

    # -- persistence ---------------------------------------------------

    def save(self, path: Path | str) -> None:
        """Binary snapshot (.npz plus embedded JSON metadata)."""
        meta = {
            "cd_ids": self.cd_ids, "sla_ids": self.sla_ids, "dzn_ids": self.dzn_ids,
            "sla_states": self.sla_states,
            "schools": [s.to_dict() for s in self.schools],
            "airports": [[a.code, a.sla_id, a.daily_passengers, a.seed_radius_km]
                         for a in self.airports],
            "report": self.report, "seed": self.seed,
        }
        arrays = {name: getattr(self, name) for name in _ARRAY_FIELDS}
        arrays["meta_json"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        np.savez(path, **arrays)

    @staticmethod
    def load(path: Path | str) -> "Population":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
            kwargs = {name: data[name] for name in _ARRAY_FIELDS}
        schools = [School(**d) for d in meta["schools"]]
        airports = [Airport(code, sla, int(pax), float(radius))
                    for code, sla, pax, radius in meta["airports"]]
        return Population(**kwargs, cd_ids=meta["cd_ids"], sla_ids=meta["sla_ids"],
                          dzn_ids=meta["dzn_ids"], sla_states=meta["sla_states"],
                          schools=schools, airports=airports,
                          report=meta["report"], seed=meta["seed"])

    def export_csvset(self, out_dir: Path | str) -> list[Path]:
        """CSV interchange: agents, groups with member offsets, report."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        agents_path = out / "agents.csv"
        with open(agents_path, "w", encoding="utf-8") as fh:
            fh.write("agent_id,age_band,sex,cd_id,role\n")
            for i in range(self.n_agents):
                fh.write(f"{i},{AGE_BANDS[self.age_band[i]]},{'M' if self.sex[i] == 0 else 'F'},"
                         f"{self.cd_ids[self.home_cd[i]]},{ROLE_NAMES[self.role[i]]}\n")
        groups_path = out / "groups.csv"
        with open(groups_path, "w", encoding="utf-8") as fh:
            fh.write("group_id,context,size,members_start,members_end\n")
            for g in range(self.n_groups):
                fh.write(f"{g},{Context(int(self.group_context[g])).name},"
                         f"{self.group_size[g]},{self.group_indptr[g]},{self.group_indptr[g + 1]}\n")
        members_path = out / "group_members.csv"
        with open(members_path, "w", encoding="utf-8") as fh:
            fh.write("agent_id\n")
            fh.write("\n".join(str(int(m)) for m in self.group_members))
            fh.write("\n")
        report_path = out / "synthesis_report.json"
        report_path.write_text(json.dumps(self.report, indent=2, sort_keys=True) + "\n")
        return [agents_path, groups_path, members_path, report_path]


# ----------------------------------------------------------------------
# Stage 6: full build
# ----------------------------------------------------------------------

class _GroupBuilder:
    def __init__(self):
        self.contexts: list[int] = []
        self.members: list[np.ndarray] = []

    def add(self, context: Context, member_ids) -> int:
        gid = len(self.contexts)
        self.contexts.append(int(context))
        self.members.append(np.asarray(member_ids, dtype=np.int32))
        return gid

    def finish(self):
        indptr = np.zeros(len(self.members) + 1, dtype=np.int64)
        for i, m in enumerate(self.members):
            indptr[i + 1] = indptr[i] + len(m)
        flat = (np.concatenate(self.members) if self.members
                else np.zeros(0, dtype=np.int32))
        sizes = np.diff(indptr).astype(np.int32)
        return (np.array(self.contexts, dtype=np.int8), sizes, indptr, flat)


def _csr(lists: list) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    for i, l in enumerate(lists):
        indptr[i + 1] = indptr[i] + len(l)
    flat = np.fromiter((g for l in lists for g in l), dtype=np.int32, count=int(indptr[-1]))
    return indptr, flat


def build_population(bundle: CensusBundle, seed: int) -> Population:
    """Run the full synthesis pipeline; deterministic for a fixed seed."""
    h = bundle.hierarchy
    cd_ids = [c.cd_id for c in h.cds]
    sla_ids = [s.sla_id for s in h.slas]
    dzn_ids = [d.dzn_id for d in h.dzns]
    sla_index = {s: i for i, s in enumerate(sla_ids)}
    cd_index = {c: i for i, c in enumerate(cd_ids)}

    # --- households per CD
    age_band: list[int] = []
    age_years: list[int] = []
    sex: list[int] = []
    home_cd: list[int] = []
    household_members: list[list[int]] = []
    household_cd: list[int] = []
    warnings: list[str] = []

    cd_household_range: list[tuple[int, int]] = []
    for ci, cd in enumerate(h.cds):
        rng = stream(seed, "households", ci)
        drafts, warns = synthesize_households(bundle.demographics[cd.cd_id], rng)
        warnings.extend(warns)
        start = len(household_members)
        for draft in drafts:
            members = []
            for person in draft.members:
                aid = len(age_band)
                age_band.append(person.age_band)
                age_years.append(person.age_years)
                sex.append(person.sex)
                home_cd.append(ci)
                members.append(aid)
            household_members.append(members)
            household_cd.append(ci)
        cd_household_range.append((start, len(household_members)))

    n_agents = len(age_band)
    age_band_a = np.array(age_band, dtype=np.int8)
    age_years_a = np.array(age_years, dtype=np.int16)
    sex_a = np.array(sex, dtype=np.int8)
    home_cd_a = np.array(home_cd, dtype=np.int32)
    cd_sla_a = np.array([sla_index[c.sla_id] for c in h.cds], dtype=np.int32)
    home_sla_a = cd_sla_a[home_cd_a]

    # --- clusters per CD
    cluster_households: list[list[int]] = []
    for ci in range(len(h.cds)):
        start, end = cd_household_range[ci]
        rng = stream(seed, "clusters", ci)
        for chunk in form_clusters(end - start, rng):
            cluster_households.append([start + k for k in chunk])

    # --- worker flows (groups formed later, after school staff are drawn)
    workers_by_cd = {
        cd_ids[ci]: [int(a) for a in np.nonzero(
            (home_cd_a == ci) & np.isin(age_band_a, _WORKING_BANDS))[0]]
        for ci in range(len(cd_ids))
    }
    assignment = assign_workers(bundle.worker_flow, workers_by_cd,
                                stream(seed, "workers"), form_groups=False)

    # --- school placement
    students_per_cd = np.bincount(home_cd_a[age_band_a == 1], minlength=len(cd_ids))
    cd_lat = np.array([c.lat for c in h.cds])
    cd_lon = np.array([c.lon for c in h.cds])
    dzn_lat = np.array([d.lat for d in h.dzns])
    dzn_lon = np.array([d.lon for d in h.dzns])
    potentials: dict[str, float] = {}
    if len(h.dzns):
        cd_dzn_km = haversine_km_grid(cd_lat[:, None], cd_lon[:, None],
                                      dzn_lat[None, :], dzn_lon[None, :])
        near = cd_dzn_km <= SCHOOL_PROXIMITY_KM
        for di, dzn in enumerate(h.dzns):
            potentials[dzn.dzn_id] = float(students_per_cd @ near[:, di])
    dzn_state = {d.dzn_id: h.state_of_sla(d.sla_id) for d in h.dzns}
    school_drafts, school_warns = place_schools(
        bundle.school_sizes, potentials, dzn_state, stream(seed, "schools"))
    warnings.extend(school_warns)

    # --- enrolment
    student_ids = np.nonzero(age_band_a == 1)[0].astype(np.int64)
    dzn_idx = {d: i for i, d in enumerate(dzn_ids)}
    if school_drafts and len(h.dzns):
        school_dzn = np.array([dzn_idx[s.dzn_id] for s in school_drafts])
        cd_school_km = haversine_km_grid(
            cd_lat[:, None], cd_lon[:, None],
            dzn_lat[school_dzn][None, :], dzn_lon[school_dzn][None, :])
    else:
        cd_school_km = np.zeros((len(cd_ids), len(school_drafts)))
    enrolment = enrol_students(school_drafts, home_cd_a[student_ids],
                               cd_school_km, stream(seed, "enrol"))
    total_capacity = sum(s.capacity for s in school_drafts)
    if total_capacity < int(enrolment.attempted.sum()):
        warnings.append(f"aggregate school capacity {total_capacity} below "
                        f"attempted students {int(enrolment.attempted.sum())}")

    # --- staff selection per school
    staff_rng = stream(seed, "staff")
    dzn_pool = {d: list(ids) for d, ids in assignment.dzn_workers.items()}
    school_students: list[np.ndarray] = []
    school_staff: list[list[int]] = []
    staff_shortfalls: list[dict] = []
    for si, draft in enumerate(school_drafts):
        members = student_ids[enrolment.assignment == si]
        school_students.append(members)
        target = staff_for(len(members))
        pool = dzn_pool.get(draft.dzn_id, [])
        take = min(target, len(pool))
        chosen = []
        if take > 0:
            pick = staff_rng.choice(len(pool), size=take, replace=False)
            chosen = [pool[k] for k in sorted(pick.tolist())]
            keep = set(chosen)
            dzn_pool[draft.dzn_id] = [w for w in pool if w not in keep]
        if take < target:
            staff_shortfalls.append({"school_index": si, "dzn_id": draft.dzn_id,
                                     "target": int(target), "assigned": int(take)})
        school_staff.append(chosen)

    # --- work groups for the remaining (non-staff) workers
    wg_rng = stream(seed, "work-groups")
    work_groups_by_dzn: dict[str, list[list[int]]] = {}
    for dzn_id in sorted(dzn_pool):
        ids = dzn_pool[dzn_id]
        order = wg_rng.permutation(len(ids))
        work_groups_by_dzn[dzn_id] = [[ids[k] for k in order[i:i + WORK_GROUP_MAX]]
                                      for i in range(0, len(ids), WORK_GROUP_MAX)]

    # --- group registry
    gb = _GroupBuilder()
    household_gid = [gb.add(Context.HOUSEHOLD, m) for m in household_members]
    for hh_list in cluster_households:
        members = [a for hid in hh_list for a in household_members[hid]]
        gb.add(Context.HOUSEHOLD_CLUSTER, members)
    cluster_of_household = np.full(len(household_members), -1, dtype=np.int64)
    gid0 = len(household_gid)
    for k, hh_list in enumerate(cluster_households):
        for hid in hh_list:
            cluster_of_household[hid] = gid0 + k

    community_gid = np.zeros(len(cd_ids), dtype=np.int64)
    for ci in range(len(cd_ids)):
        community_gid[ci] = gb.add(Context.COMMUNITY, np.nonzero(home_cd_a == ci)[0])
    neighbourhood_gid = np.zeros(len(sla_ids), dtype=np.int64)
    for si in range(len(sla_ids)):
        neighbourhood_gid[si] = gb.add(Context.NEIGHBOURHOOD, np.nonzero(home_sla_a == si)[0])

    work_group_of = np.full(n_agents, -1, dtype=np.int64)
    for dzn_id in sorted(work_groups_by_dzn):
        for members in work_groups_by_dzn[dzn_id]:
            gid = gb.add(Context.WORK_GROUP, members)
            for a in members:
                work_group_of[a] = gid
    for si, staff in enumerate(school_staff):
        for i in range(0, len(staff), WORK_GROUP_MAX):
            members = staff[i:i + WORK_GROUP_MAX]
            gid = gb.add(Context.WORK_GROUP, members)
            for a in members:
                work_group_of[a] = gid

    class_rng = stream(seed, "classes")
    schools: list[School] = []
    school_group_of = np.full(n_agents, -1, dtype=np.int64)
    grade_group_of = np.full(n_agents, -1, dtype=np.int64)
    class_group_of = np.full(n_agents, -1, dtype=np.int64)
    for si, draft in enumerate(school_drafts):
        members = school_students[si]
        sgid = gb.add(Context.SCHOOL, members)
        grade_ids, class_ids = [], []
        for year in range(5, 19):
            grade_members = members[age_years_a[members] == year]
            if len(grade_members) == 0:
                continue
            ggid = gb.add(Context.GRADE, grade_members)
            grade_ids.append(ggid)
            shuffled = grade_members[class_rng.permutation(len(grade_members))]
            for i in range(0, len(shuffled), CLASS_MAX):
                cgid = gb.add(Context.CLASS, shuffled[i:i + CLASS_MAX])
                class_ids.append(cgid)
                for a in shuffled[i:i + CLASS_MAX]:
                    class_group_of[a] = cgid
            for a in grade_members:
                grade_group_of[a] = ggid
        for a in members:
            school_group_of[a] = sgid
        schools.append(School(
            school_id=sgid, dzn_id=draft.dzn_id, capacity=draft.capacity,
            enrolled=len(members), staff_count=staff_for(len(members)),
            staff_assigned=len(school_staff[si]),
            grade_group_ids=grade_ids, class_group_ids=class_ids,
            catchment_radius_km=float(enrolment.radii_km[si])))

    group_context, group_size, group_indptr, group_members = gb.finish()

    # --- roles
    role_a = np.empty(n_agents, dtype=np.int8)
    role_a[age_band_a == 0] = ROLE_PRESCHOOL
    role_a[age_band_a == 1] = ROLE_STUDENT
    role_a[np.isin(age_band_a, _WORKING_BANDS)] = ROLE_NON_WORKING_ADULT
    role_a[age_band_a == 4] = ROLE_OLDER_ADULT
    role_a[work_group_of >= 0] = ROLE_WORKER

    # --- per-agent cycle lists
    household_of_a = np.full(n_agents, -1, dtype=np.int32)
    for hid, members in enumerate(household_members):
        for a in members:
            household_of_a[a] = household_gid[hid]
    # Households are registered first, so group id == household index.
    cluster_of_agent = cluster_of_household[household_of_a]

    day_lists: list[list[int]] = []
    night_lists: list[list[int]] = []
    dayx_lists: list[list[int]] = []
    for a in range(n_agents):
        hh = int(household_of_a[a])
        cl = int(cluster_of_agent[a])
        comm = int(community_gid[home_cd_a[a]])
        nbhd = int(neighbourhood_gid[home_sla_a[a]])
        night = [hh, cl, comm, nbhd]
        if work_group_of[a] >= 0:
            day = [int(work_group_of[a]), comm, nbhd]
            dayx = [int(work_group_of[a]), hh, cl, comm, nbhd]
        elif class_group_of[a] >= 0:
            day = [int(school_group_of[a]), int(grade_group_of[a]),
                   int(class_group_of[a]), comm, nbhd]
            dayx = day[:3] + [hh, cl, comm, nbhd]
        else:
            day = [hh, cl, comm, nbhd]
            dayx = day
        day_lists.append(day)
        night_lists.append(night)
        dayx_lists.append(dayx)

    day_indptr, day_groups = _csr(day_lists)
    night_indptr, night_groups = _csr(night_lists)
    dayx_indptr, dayx_groups = _csr(dayx_lists)

    enrolled_count = int((enrolment.assignment >= 0).sum())
    attempted_count = int(enrolment.attempted.sum())
    report = {
        "seed": int(seed),
        "n_agents": int(n_agents),
        "n_households": len(household_members),
        "n_groups": int(len(group_context)),
        "groups_by_context": {Context(c).name: int((group_context == c).sum())
                              for c in sorted(set(group_context.tolist()))},
        "worker_shortfalls": assignment.shortfalls,
        "staff_shortfalls": staff_shortfalls,
        "students": int(len(student_ids)),
        "students_attempted": attempted_count,
        "students_enrolled": enrolled_count,
        "students_unenrolled": attempted_count - enrolled_count,
        "enrolment_rate": (enrolled_count / len(student_ids)) if len(student_ids) else 0.0,
        "school_capacity_total": int(total_capacity),
        "warnings": warnings,
    }

    return Population(
        age_band=age_band_a, age_years=age_years_a, sex=sex_a, role=role_a,
        home_cd=home_cd_a, home_sla=home_sla_a, household_of=household_of_a,
        group_context=group_context, group_size=group_size,
        group_indptr=group_indptr, group_members=group_members,
        day_indptr=day_indptr, day_groups=day_groups,
        night_indptr=night_indptr, night_groups=night_groups,
        dayx_indptr=dayx_indptr, dayx_groups=dayx_groups,
        cd_ids=cd_ids, sla_ids=sla_ids, dzn_ids=dzn_ids,
        sla_states=[s.state for s in h.slas], cd_sla=cd_sla_a,
        sla_lat=np.array([s.lat for s in h.slas]),
        sla_lon=np.array([s.lon for s in h.slas]),
        schools=schools, airports=list(bundle.airports.rows),
        report=report, seed=int(seed),
    )

"""Discrete-time epidemic engine: 12-hour day/night cycles.

Each simulated day runs two synchronous steps.  Step ``n = 2*day + cycle``
evaluates every susceptible agent's infection probability over its
cycle-active groups (day: work or school/grade/class; night: household and
cluster; community and neighbourhood in both cycles at half their daily
contact probability; agents with no daytime group keep household and
cluster by day) and resolves it by a Bernoulli trial.  New infections are
applied synchronously: transmission at step n reads only records created
before n.

Seeding happens at the start of each day cycle, before transmission:
airport mode draws Binomial(passengers, per-arrival probability) seeds per
airport among susceptible residents of SLAs whose centroid lies within the
airport's radius; explicit mode infects each listed SLA resident
independently with the configured proportion at day 0.

Every stochastic decision is keyed by (master seed, agent, step, purpose)
counter streams, so a run is a pure function of (population, model,
config) regardless of thread count.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .census import AGE_BANDS, haversine_km
from .disease import Context, DiseaseModel, record_from_uniforms
from .popgen import Population
from .rng import (PURPOSE_LATENT, PURPOSE_ONSET, PURPOSE_SEED,
                  PURPOSE_SYMPTOMATIC, counter_u01, counter_u01_array, stream)

SCENARIO_SCHEMA_VERSION = 1
DEFAULT_PER_ARRIVAL_PROBABILITY = 0.0004

_BAND_TO_SCLASS = np.array([0, 1, 2, 2, 3], dtype=np.int8)
SEED_CONTEXT = -1  # infection_ctx value for seeded cases


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SeedingConfig:
    mode: str = "airports"                      # airports | explicit | none
    per_arrival_probability: float = DEFAULT_PER_ARRIVAL_PROBABILITY
    sla_ids: tuple = ()
    proportion: float = 0.0

    def __post_init__(self):
        if self.mode not in ("airports", "explicit", "none"):
            raise ScenarioError(f"unknown seeding mode {self.mode!r}")
        if not 0.0 <= self.per_arrival_probability <= 1.0:
            raise ScenarioError("per_arrival_probability outside [0, 1]")
        if not 0.0 <= self.proportion <= 1.0:
            raise ScenarioError("proportion outside [0, 1]")
        if self.mode == "explicit" and len(self.sla_ids) == 0:
            raise ScenarioError("explicit seeding requires a non-empty SLA list")
        object.__setattr__(self, "sla_ids", tuple(self.sla_ids))


@dataclass(frozen=True)
class SimConfig:
    duration_days: int
    seed: int
    kappa: float | None = None                  # None: use the model's kappa
    seeding: SeedingConfig = field(default_factory=SeedingConfig)
    threads: int | None = None
    output_cadence_days: int = 1

    def __post_init__(self):
        if self.duration_days < 0:
            raise ScenarioError("duration_days must be >= 0")
        if self.output_cadence_days < 1:
            raise ScenarioError("output_cadence_days must be >= 1")

    def to_dict(self) -> dict:
        s = self.seeding
        seeding = {"mode": s.mode}
        if s.mode == "airports":
            seeding["per_arrival_probability"] = s.per_arrival_probability
        elif s.mode == "explicit":
            seeding["sla_ids"] = list(s.sla_ids)
            seeding["proportion"] = s.proportion
        return {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "duration_days": self.duration_days,
            "seed": self.seed,
            "kappa": self.kappa,
            "seeding": seeding,
            "threads": self.threads,
            "output_cadence_days": self.output_cadence_days,
        }

    @staticmethod
    def from_dict(data: dict) -> "SimConfig":
        if data.get("schema_version") != SCENARIO_SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario schema version {data.get('schema_version')!r}")
        s = data.get("seeding", {})
        seeding = SeedingConfig(
            mode=s.get("mode", "airports"),
            per_arrival_probability=s.get("per_arrival_probability", DEFAULT_PER_ARRIVAL_PROBABILITY),
            sla_ids=tuple(s.get("sla_ids", ())),
            proportion=s.get("proportion", 0.0),
        )
        return SimConfig(
            duration_days=data["duration_days"],
            seed=data["seed"],
            kappa=data.get("kappa"),
            seeding=seeding,
            threads=data.get("threads"),
            output_cadence_days=data.get("output_cadence_days", 1),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load(path: Path | str) -> "SimConfig":
        return SimConfig.from_dict(json.loads(Path(path).read_text()))


# ----------------------------------------------------------------------
# Output container
# ----------------------------------------------------------------------

_OUT_ARRAYS = ("incidence", "prevalence", "cumulative", "incidence_sla",
               "prevalence_sla", "cum_ill_by_sla_band", "pop_by_sla_band")


@dataclass
class SimOutput:
    duration_days: int
    n_agents: int
    master_seed: int
    kappa: float
    incidence: np.ndarray          # newly symptomatic per day
    prevalence: np.ndarray         # symptomatic at end of day
    cumulative: np.ndarray         # running total of incidence
    incidence_sla: np.ndarray      # (days, n_slas)
    prevalence_sla: np.ndarray
    cum_ill_by_sla_band: np.ndarray  # (n_slas, 5) ever-ill counts
    pop_by_sla_band: np.ndarray
    sla_ids: list
    setting_counts: dict           # Context value -> transmission count
    total_transmissions: int
    total_seeds: int
    seed_events: list              # (day, source, count)
    clamp_count: int
    threads: int
    runtime_seconds: float

    @property
    def total_infections(self) -> int:
        return self.total_transmissions + self.total_seeds

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in _OUT_ARRAYS:
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        meta = [self.duration_days, self.n_agents, self.master_seed, self.kappa,
                sorted(self.setting_counts.items()), self.total_transmissions,
                self.total_seeds, self.seed_events, self.clamp_count]
        h.update(json.dumps(meta, sort_keys=True, default=str).encode())
        return h.hexdigest()

    def save(self, path: Path | str) -> None:
        meta = {
            "duration_days": self.duration_days, "n_agents": self.n_agents,
            "master_seed": self.master_seed, "kappa": self.kappa,
            "sla_ids": self.sla_ids,
            "setting_counts": {str(k): v for k, v in self.setting_counts.items()},
            "total_transmissions": self.total_transmissions,
            "total_seeds": self.total_seeds,
            "seed_events": [[d, str(s), int(c)] for d, s, c in self.seed_events],
            "clamp_count": self.clamp_count, "threads": self.threads,
            "runtime_seconds": self.runtime_seconds,
        }
        arrays = {name: getattr(self, name) for name in _OUT_ARRAYS}
        arrays["meta_json"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        np.savez(path, **arrays)

    @staticmethod
    def load(path: Path | str) -> "SimOutput":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
            arrays = {name: data[name] for name in _OUT_ARRAYS}
        return SimOutput(
            duration_days=meta["duration_days"], n_agents=meta["n_agents"],
            master_seed=meta["master_seed"], kappa=meta["kappa"],
            sla_ids=meta["sla_ids"],
            setting_counts={int(k): v for k, v in meta["setting_counts"].items()},
            total_transmissions=meta["total_transmissions"],
            total_seeds=meta["total_seeds"],
            seed_events=[(e[0], e[1], e[2]) for e in meta["seed_events"]],
            clamp_count=meta["clamp_count"], threads=meta["threads"],
            runtime_seconds=meta["runtime_seconds"], **arrays)

    def write_csv(self, out_dir: Path | str, cadence_days: int = 1) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        national = out / "incidence_national.csv"
        with open(national, "w", encoding="utf-8") as fh:
            fh.write("day,incidence,prevalence,cumulative\n")
            for d in range(0, self.duration_days, cadence_days):
                fh.write(f"{d},{self.incidence[d]},{self.prevalence[d]},{self.cumulative[d]}\n")
        per_sla = out / "incidence_sla.csv"
        with open(per_sla, "w", encoding="utf-8") as fh:
            fh.write("day,sla_id,incidence,prevalence\n")
            for d in range(0, self.duration_days, cadence_days):
                for s, sla_id in enumerate(self.sla_ids):
                    fh.write(f"{d},{sla_id},{self.incidence_sla[d, s]},{self.prevalence_sla[d, s]}\n")
        return [national, per_sla]


# ----------------------------------------------------------------------
# Simulation
# ----------------------------------------------------------------------

def _build_q_tables(pop: Population, model: DiseaseModel) -> tuple[np.ndarray, int]:
    """Per-group daily q, indexed [group, infected child/adult, susceptible class].

    The community/neighbourhood half-cycle factor and the group-size
    rescaling are folded in; kappa and infectivity are applied per step.
    Returns (q_tables, n_prebuilt_clamps).
    """
    t = model.tables
    n_groups = pop.n_groups
    q = np.zeros((n_groups, 2, 4))
    ctx = pop.group_context
    size = np.maximum(pop.group_size.astype(np.float64), 1.0)
    ref = t.reference_sizes
    clamps = 0

    def rescaled(c_value: float, mask: np.ndarray, ref_size: float) -> np.ndarray:
        return np.minimum(1.0, c_value * ref_size / size[mask])

    m = ctx == int(Context.HOUSEHOLD)
    if m.any():
        max_size = int(size[m].max())
        child_lut = np.zeros(max_size + 1)
        adult_lut = np.zeros(max_size + 1)
        for s in range(2, max_size + 1):
            child_lut[s], adult_lut[s] = t.household_pair(s)
        hh_sizes = pop.group_size[m]
        for jc in (0, 1):
            q[m, jc, 0] = child_lut[hh_sizes]
            q[m, jc, 1] = child_lut[hh_sizes]
            q[m, jc, 2] = adult_lut[hh_sizes]
            q[m, jc, 3] = adult_lut[hh_sizes]

    m = ctx == int(Context.HOUSEHOLD_CLUSTER)
    if m.any():
        for jc in (0, 1):
            for sc in range(4):
                c = t.cluster_c[jc][0 if sc <= 1 else 1]
                q[m, jc, sc] = t.rho * rescaled(c, m, ref["household_cluster"])

    m = ctx == int(Context.WORK_GROUP)
    if m.any():
        q[m, 1, 2] = t.rho * rescaled(t.work_c, m, ref["work_group"])

    for context, value in ((Context.SCHOOL, t.school_q), (Context.GRADE, t.grade_q),
                           (Context.CLASS, t.class_q)):
        m = ctx == int(context)
        if m.any():
            q[m, 0, 1] = value

    for context, c_row, ref_key in ((Context.COMMUNITY, t.community_c, "community"),
                                    (Context.NEIGHBOURHOOD, t.neighbourhood_c, "neighbourhood")):
        m = ctx == int(context)
        if m.any():
            for jc in (0, 1):
                for sc in range(4):
                    # half the daily probability in each of the two cycles
                    q[m, jc, sc] = 0.5 * t.rho * rescaled(c_row[sc], m, ref[ref_key])

    over = q > 1.0
    if over.any():
        clamps = int(over.sum())
        np.minimum(q, 1.0, out=q)
    return q, clamps


class Simulation:
    """Reusable simulation state for one (population, model, config)."""

    def __init__(self, population: Population, model: DiseaseModel, config: SimConfig):
        self.pop = population
        self.model = model
        self.config = config
        self.seed = int(config.seed)
        self.kappa = float(model.tables.kappa if config.kappa is None else config.kappa)
        nh = model.natural_history
        self.asym_factor = float(nh.asymptomatic_factor)
        self.p_sympt = float(nh.p_symptomatic)
        self.onset_days, self.onset_cdf = nh.onset_choices()
        self.latent_steps_tab, self.latent_cdf = nh.latent_steps_choices()
        self.infectious_steps = int(nh.infectious_steps)
        self.q_tables, self._q_clamps = _build_q_tables(population, model)

        band = population.age_band
        self.jclass = (band >= 2).astype(np.int8)      # 0 child (<19), 1 adult
        self.sclass = _BAND_TO_SCLASS[band]

        n, n_groups = population.n_agents, population.n_groups
        self._acc = np.ones((n_groups, 4))
        self._slot = np.full(n_groups, -1, dtype=np.int64)
        self._touched = np.empty(n_groups, dtype=np.int64)
        self._roster_count = np.zeros(n_groups, dtype=np.int64)
        self._roster_offset = np.zeros(n_groups + 1, dtype=np.int64)
        self._marker = np.zeros(n, dtype=np.int64)
        self._cand_buf = np.empty(n, dtype=np.int64)
        self._p_buf = np.zeros(n)
        self._new_flags = np.zeros(n, dtype=np.uint8)
        self._new_ids = np.empty(n, dtype=np.int64)
        self._tag = 0

        self._setup_seeding()
        self.reset()

    # -- seeding -------------------------------------------------------

    def _setup_seeding(self):
        cfg = self.config.seeding
        pop = self.pop
        self._airport_pools = []
        self._airports = []
        if cfg.mode == "airports":
            sla_index = {s: i for i, s in enumerate(pop.sla_ids)}
            nbhd_gids = {int(pop.home_sla[pop.members_of(g)[0]]): g
                         for g in pop.groups_by_context(Context.NEIGHBOURHOOD)
                         if len(pop.members_of(g))}
            for airport in pop.airports:
                if airport.sla_id not in sla_index:
                    raise ScenarioError(f"airport {airport.code} references unknown SLA {airport.sla_id}")
                ai = sla_index[airport.sla_id]
                origin = (float(pop.sla_lat[ai]), float(pop.sla_lon[ai]))
                pool = []
                for si in range(len(pop.sla_ids)):
                    d = haversine_km(origin, (float(pop.sla_lat[si]), float(pop.sla_lon[si])))
                    if d <= airport.seed_radius_km and si in nbhd_gids:
                        pool.append(pop.members_of(nbhd_gids[si]))
                pool_arr = (np.sort(np.concatenate(pool)).astype(np.int64)
                            if pool else np.empty(0, dtype=np.int64))
                self._airports.append(airport)
                self._airport_pools.append(pool_arr)
        elif cfg.mode == "explicit":
            known = set(pop.sla_ids)
            for sla_id in cfg.sla_ids:
                if sla_id not in known:
                    raise ScenarioError(f"explicit seeding references unknown SLA {sla_id!r}")

    def _seed_day(self, day: int) -> None:
        cfg = self.config.seeding
        step = 2 * day
        if cfg.mode == "airports":
            for ai, airport in enumerate(self._airports):
                k = int(self._airport_rngs[ai].binomial(airport.daily_passengers,
                                                        cfg.per_arrival_probability))
                if k == 0:
                    continue
                pool = self._airport_pools[ai]
                sus = pool[self.n_j[pool] == -1]
                k_eff = min(k, len(sus))
                if k_eff < k:
                    self._seed_shortfalls.append(
                        {"day": day, "airport": airport.code, "requested": k, "seeded": k_eff})
                if k_eff == 0:
                    continue
                chosen = self._airport_rngs[ai].choice(len(sus), size=k_eff, replace=False)
                for a in np.sort(sus[chosen]):
                    self._inject(int(a), step)
                self.seed_events.append((day, airport.code, int(k_eff)))
                self.total_seeds += k_eff
        elif cfg.mode == "explicit" and day == 0:
            sla_index = {s: i for i, s in enumerate(self.pop.sla_ids)}
            for sla_id in cfg.sla_ids:
                members = np.nonzero(self.pop.home_sla == sla_index[sla_id])[0].astype(np.int64)
                if len(members) == 0:
                    continue
                if cfg.proportion >= 1.0:
                    chosen = members
                else:
                    u = counter_u01_array(self.seed, members, step, PURPOSE_SEED)
                    chosen = members[u < cfg.proportion]
                for a in chosen:
                    self._inject(int(a), step)
                if len(chosen):
                    self.seed_events.append((0, sla_id, int(len(chosen))))
                    self.total_seeds += int(len(chosen))

    def _inject(self, agent: int, step: int) -> None:
        """Force an agent LATENT at ``step`` with a counter-drawn record."""
        if self.n_j[agent] != -1:
            return
        seed = self.seed
        u_s = counter_u01(seed, agent, step, PURPOSE_SYMPTOMATIC)
        u_o = counter_u01(seed, agent, step, PURPOSE_ONSET)
        u_l = counter_u01(seed, agent, step, PURPOSE_LATENT)
        record = record_from_uniforms(step, u_s, u_o, u_l, self.model.natural_history)
        self.n_j[agent] = step
        self.latent[agent] = record.latent_steps
        self.dur[agent] = record.infectious_steps
        self.sympt[agent] = 1 if record.will_be_symptomatic else 0
        self.onset[agent] = record.symptom_onset_day if record.will_be_symptomatic else -1
        self.infector[agent] = -1
        self.infection_ctx[agent] = SEED_CONTEXT
        kernels.book_illness(
            agent, step, int(self.latent[agent]), int(self.dur[agent]),
            int(self.sympt[agent]), int(self.onset[agent]),
            int(self.pop.home_sla[agent]), int(self.pop.age_band[agent]),
            self._duration_days, self.inc_day, self.prev_day,
            self.inc_sla, self.prev_sla, self.cum_band)
        self.infected_ids = np.append(self.infected_ids, np.int64(agent))

    # -- state ----------------------------------------------------------

    def reseed(self, seed: int) -> None:
        """Point the counter streams at a new master seed and reset state."""
        self.seed = int(seed)
        self.reset()

    def reset(self) -> None:
        n = self.pop.n_agents
        self.n_j = np.full(n, -1, dtype=np.int64)
        self.latent = np.zeros(n, dtype=np.int64)
        self.dur = np.zeros(n, dtype=np.int64)
        self.sympt = np.zeros(n, dtype=np.int64)
        self.onset = np.full(n, -1, dtype=np.int64)
        self.infector = np.full(n, -1, dtype=np.int64)
        self.infection_ctx = np.full(n, SEED_CONTEXT, dtype=np.int64)
        self.infected_ids = np.empty(0, dtype=np.int64)
        self.total_seeds = 0
        self.clamp_count = int(self._q_clamps)
        self.seed_events = []
        self._seed_shortfalls = []
        self._setting_counts = np.zeros(8, dtype=np.int64)
        self._airport_rngs = [stream(self.seed, "airport-seeds", i)
                              for i in range(len(self._airports))]
        self._allocate_counters(self.config.duration_days)

    def _allocate_counters(self, days: int) -> None:
        n_slas = len(self.pop.sla_ids)
        self._duration_days = days
        self.inc_day = np.zeros(max(days, 1), dtype=np.int64)
        self.prev_day = np.zeros(max(days, 1), dtype=np.int64)
        self.inc_sla = np.zeros((max(days, 1), n_slas), dtype=np.int64)
        self.prev_sla = np.zeros((max(days, 1), n_slas), dtype=np.int64)
        self.cum_band = np.zeros((n_slas, len(AGE_BANDS)), dtype=np.int64)

    def _views(self, step: int):
        if step % 2 == 0:
            return (self.pop.dayx_indptr, self.pop.dayx_groups,
                    self.pop.day_indptr, self.pop.day_groups)
        return (self.pop.night_indptr, self.pop.night_groups,
                self.pop.night_indptr, self.pop.night_groups)

    def step_once(self, step: int) -> int:
        """Advance one half-day step; returns the number of new infections."""
        # prune recovered cases from the active list
        ids = self.infected_ids
        if len(ids):
            alive = (self.n_j[ids] + self.latent[ids] + self.dur[ids]) > step
            ids = ids[alive]
            self.infected_ids = ids
        if len(ids) == 0:
            return 0
        inf_indptr, inf_groups, sus_indptr, sus_groups = self._views(step)

        deg = inf_indptr[ids + 1] - inf_indptr[ids]
        roster_agent = np.empty(int(deg.sum()), dtype=np.int64)
        roster_f = np.empty(len(roster_agent))
        n_touched, n_entries, n_clamp = kernels.phase_a(
            step, self.kappa, self.asym_factor, ids,
            self.n_j, self.latent, self.dur, self.sympt, self.onset, self.jclass,
            inf_indptr, inf_groups, self.q_tables, self._acc,
            self._slot, self._touched, self._roster_count, self._roster_offset,
            roster_agent, roster_f)
        self.clamp_count += int(n_clamp)
        if n_touched == 0:
            return 0

        touched_sizes = int(self.pop.group_size[self._touched[:n_touched]].sum())
        if touched_sizes < self.pop.n_agents:
            self._tag += 1
            n_cand = kernels.collect_candidates(
                self._touched, n_touched, self.pop.group_indptr, self.pop.group_members,
                self.n_j, self._marker, self._tag, self._cand_buf)
            candidates = self._cand_buf[:n_cand]
        else:
            candidates = np.nonzero(self.n_j == -1)[0]

        n_new = 0
        if len(candidates):
            kernels.phase_b(step, self.seed, candidates, self.sclass,
                            sus_indptr, sus_groups, self._acc, self._p_buf, self._new_flags)
            n_new = kernels.phase_c(
                step, self.seed, self.kappa, candidates, self._new_flags,
                self._p_buf, sus_indptr, sus_groups, self.q_tables,
                self.pop.group_context, self._slot, self._roster_offset,
                self._roster_count, roster_agent, roster_f,
                self.jclass, self.sclass, self.pop.home_sla, self.pop.age_band,
                self.n_j, self.latent, self.dur, self.sympt, self.onset,
                self.infector, self.infection_ctx,
                self.p_sympt, self.onset_days, self.onset_cdf,
                self.latent_steps_tab, self.latent_cdf,
                self.infectious_steps, self._duration_days,
                self.inc_day, self.prev_day, self.inc_sla, self.prev_sla,
                self.cum_band, self._setting_counts, self._new_ids)
            if n_new:
                self.infected_ids = np.concatenate(
                    [self.infected_ids, self._new_ids[:n_new].copy()])
        kernels.reset_step(self._touched, n_touched, self._acc, self._slot)
        return int(n_new)

    def infection_probabilities(self, step: int) -> np.ndarray:
        """p_i(step) for all agents given the current state (0 if not susceptible).

        Diagnostic path used by the oracle tests; leaves state untouched.
        """
        ids = self.infected_ids
        if len(ids):
            ids = ids[(self.n_j[ids] + self.latent[ids] + self.dur[ids]) > step]
        out = np.zeros(self.pop.n_agents)
        if len(ids) == 0:
            return out
        inf_indptr, inf_groups, sus_indptr, sus_groups = self._views(step)
        deg = inf_indptr[ids + 1] - inf_indptr[ids]
        roster_agent = np.empty(int(deg.sum()), dtype=np.int64)
        roster_f = np.empty(len(roster_agent))
        n_touched, _, _ = kernels.phase_a(
            step, self.kappa, self.asym_factor, ids,
            self.n_j, self.latent, self.dur, self.sympt, self.onset, self.jclass,
            inf_indptr, inf_groups, self.q_tables, self._acc,
            self._slot, self._touched, self._roster_count, self._roster_offset,
            roster_agent, roster_f)
        sus = np.nonzero(self.n_j == -1)[0]
        p = np.zeros(len(sus))
        kernels.probabilities_only(sus, self.sclass, sus_indptr, sus_groups, self._acc, p)
        out[sus] = p
        kernels.reset_step(self._touched, n_touched, self._acc, self._slot)
        return out

    # -- full run --------------------------------------------------------

    def run(self) -> SimOutput:
        t0 = time.perf_counter()
        threads = kernels.set_threads(self.config.threads or 1)
        self.reset()
        days = self.config.duration_days
        for day in range(days):
            self._seed_day(day)
            self.step_once(2 * day)
            self.step_once(2 * day + 1)
        elapsed = time.perf_counter() - t0

        if days == 0:
            inc = np.zeros(0, dtype=np.int64)
            prev = np.zeros(0, dtype=np.int64)
            inc_sla = np.zeros((0, len(self.pop.sla_ids)), dtype=np.int64)
            prev_sla = np.zeros((0, len(self.pop.sla_ids)), dtype=np.int64)
        else:
            inc, prev = self.inc_day, self.prev_day
            inc_sla, prev_sla = self.inc_sla, self.prev_sla
        return SimOutput(
            duration_days=days,
            n_agents=self.pop.n_agents,
            master_seed=self.seed,
            kappa=self.kappa,
            incidence=inc.copy(),
            prevalence=prev.copy(),
            cumulative=np.cumsum(inc),
            incidence_sla=inc_sla.copy(),
            prevalence_sla=prev_sla.copy(),
            cum_ill_by_sla_band=self.cum_band.copy(),
            pop_by_sla_band=self.pop.band_populations(),
            sla_ids=list(self.pop.sla_ids),
            setting_counts={ctx: int(self._setting_counts[ctx]) for ctx in range(8)
                            if self._setting_counts[ctx] > 0},
            total_transmissions=int(self._setting_counts.sum()),
            total_seeds=int(self.total_seeds),
            seed_events=list(self.seed_events),
            clamp_count=int(self.clamp_count),
            threads=threads,
            runtime_seconds=elapsed,
        )


def run(population: Population, model: DiseaseModel, config: SimConfig) -> SimOutput:
    """One simulation run; a pure function of (population, model, config)."""
    return Simulation(population, model, config).run()


def run_many(population: Population, model: DiseaseModel, config: SimConfig,
             n_runs: int) -> list[SimOutput]:
    """Repeated runs with per-run seeds derived from the master seed."""
    outputs = []
    for r in range(n_runs):
        run_seed = int(stream(config.seed, "run", r).integers(0, 2**62)) if r else config.seed
        cfg = SimConfig(duration_days=config.duration_days, seed=run_seed,
                        kappa=config.kappa, seeding=config.seeding,
                        threads=config.threads,
                        output_cadence_days=config.output_cadence_days)
        outputs.append(Simulation(population, model, cfg).run())
    return outputs

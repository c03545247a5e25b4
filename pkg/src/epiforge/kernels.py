"""Numba kernels for the simulation hot path.

A step is split into three phases:

A. sequential sweep over currently infected agents: each infectious case
   multiplies its survival factor (1 - kappa * f * q) into a per-group,
   per-susceptible-class accumulator, and is recorded in a per-group
   infectious roster used later for attribution;
B. parallel sweep over candidate susceptibles: each agent's infection
   probability is the complement of the product of its groups'
   accumulator entries, and its Bernoulli trial uses a counter-based
   uniform keyed by (seed, agent, step, purpose) - results are therefore
   independent of thread count and agent partitioning;
C. sequential sweep over the newly infected: infector and context are
   attributed by walking the group rosters (first-success order), the
   natural-history record is drawn from counter streams, and the
   day-level counters are updated.

All floating products per agent/group run in a fixed order, so outputs
are bit-identical for any thread configuration.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

from .rng import (GAMMA, PURPOSE_ATTRIBUTE, PURPOSE_INFECT, PURPOSE_LATENT,
                  PURPOSE_ONSET, PURPOSE_SYMPTOMATIC)

_U64 = np.uint64
_G = _U64(GAMMA)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


@njit(cache=True, inline="always")
def _u01(seed, a, b, c):
    z = _mix64(_U64(seed) + _G * (_U64(a) + _U64(1)))
    z = _mix64(z + _G * (_U64(b) + _U64(1)))
    z = _mix64(z + _G * (_U64(c) + _U64(1)))
    return (z >> _U64(11)) * _INV53


@njit(cache=True, inline="always")
def _infectivity(step, nj, lat, dur, sym, ons, asym_factor):
    delta = step - nj
    if delta < lat:
        return 0.0
    k = delta - lat
    if k >= dur:
        return 0.0
    base = (dur - k) / dur
    if sym == 1 and delta >= 2 * ons:
        return base
    return base * asym_factor


@njit(cache=True)
def phase_a(step, kappa, asym_factor, infected_ids,
            n_j, latent, dur, sympt, onset, jclass,
            grp_of_agent_indptr, grp_of_agent, q_tables, acc,
            slot_of_group, touched, roster_count, roster_offset,
            roster_agent, roster_f):
    """Accumulate infectious pressure per (group, susceptible class).

    Returns (n_touched, n_roster_entries, n_clamped).  ``slot_of_group``
    must be -1 everywhere on entry; the caller resets the touched slots
    after the step.
    """
    n_touched = 0
    n_clamp = 0
    # pass 1: survival products and per-group roster counts
    for idx in range(infected_ids.shape[0]):
        j = infected_ids[idx]
        f = _infectivity(step, n_j[j], latent[j], dur[j], sympt[j], onset[j], asym_factor)
        if f == 0.0:
            continue
        jc = jclass[j]
        for gi in range(grp_of_agent_indptr[j], grp_of_agent_indptr[j + 1]):
            g = grp_of_agent[gi]
            s = slot_of_group[g]
            if s < 0:
                s = n_touched
                slot_of_group[g] = s
                touched[s] = g
                roster_count[s] = 0
                n_touched += 1
            roster_count[s] += 1
            for sc in range(4):
                p = kappa * f * q_tables[g, jc, sc]
                if p > 1.0:
                    p = 1.0
                    n_clamp += 1
                acc[g, sc] *= 1.0 - p
    # roster offsets
    total = 0
    for s in range(n_touched):
        roster_offset[s] = total
        total += roster_count[s]
        roster_count[s] = 0
    roster_offset[n_touched] = total
    # pass 2: fill rosters in the same deterministic order
    for idx in range(infected_ids.shape[0]):
        j = infected_ids[idx]
        f = _infectivity(step, n_j[j], latent[j], dur[j], sympt[j], onset[j], asym_factor)
        if f == 0.0:
            continue
        for gi in range(grp_of_agent_indptr[j], grp_of_agent_indptr[j + 1]):
            g = grp_of_agent[gi]
            s = slot_of_group[g]
            e = roster_offset[s] + roster_count[s]
            roster_agent[e] = j
            roster_f[e] = f
            roster_count[s] += 1
    return n_touched, total, n_clamp


@njit(cache=True)
def collect_candidates(touched, n_touched, group_indptr, group_members,
                       n_j, marker, tag, out):
    """Susceptible members of touched groups, deduplicated, fixed order."""
    n = 0
    for t in range(n_touched):
        g = touched[t]
        for mi in range(group_indptr[g], group_indptr[g + 1]):
            a = group_members[mi]
            if n_j[a] == -1 and marker[a] != tag:
                marker[a] = tag
                out[n] = a
                n += 1
    return n


@njit(cache=True, parallel=True)
def phase_b(step, seed, candidates, sclass,
            view_indptr, view_groups, acc, p_buf, new_flags):
    """Bernoulli infection trials over candidate susceptibles (parallel)."""
    for c in prange(candidates.shape[0]):
        i = candidates[c]
        surv = 1.0
        sc = sclass[i]
        for gi in range(view_indptr[i], view_indptr[i + 1]):
            surv *= acc[view_groups[gi], sc]
        p = 1.0 - surv
        p_buf[i] = p
        if p > 0.0 and _u01(seed, i, step, PURPOSE_INFECT) < p:
            new_flags[i] = 1
        else:
            new_flags[i] = 0


@njit(cache=True)
def probabilities_only(candidates, sclass, view_indptr, view_groups, acc, p_out):
    """Infection probabilities without trials (oracle/diagnostic path)."""
    for c in range(candidates.shape[0]):
        i = candidates[c]
        surv = 1.0
        sc = sclass[i]
        for gi in range(view_indptr[i], view_indptr[i + 1]):
            surv *= acc[view_groups[gi], sc]
        p_out[c] = 1.0 - surv


@njit(cache=True)
def phase_c(step, seed, kappa, candidates, new_flags, p_buf,
            view_indptr, view_groups, q_tables, group_context,
            slot_of_group, roster_offset, roster_count, roster_agent, roster_f,
            jclass, sclass, home_sla, age_band,
            n_j, latent, dur, sympt, onset, infector, infection_ctx,
            p_sympt, onset_days, onset_cdf, latent_steps_tab, latent_cdf,
            infectious_steps, duration_days,
            inc_day, prev_day, inc_sla, prev_sla, cum_band, setting_counts,
            new_ids):
    """Attribute infectors, draw records, update counters (sequential)."""
    n_new = 0
    for c in range(candidates.shape[0]):
        i = candidates[c]
        if new_flags[i] == 0:
            continue
        # -- attribution: first firing contact in fixed group/roster order
        target = _u01(seed, i, step, PURPOSE_ATTRIBUTE) * p_buf[i]
        prefix = 1.0
        cum = 0.0
        chosen_j = -1
        chosen_ctx = -1
        last_j = -1
        last_ctx = -1
        sc = sclass[i]
        for gi in range(view_indptr[i], view_indptr[i + 1]):
            g = view_groups[gi]
            s = slot_of_group[g]
            if s < 0:
                continue
            for e in range(roster_offset[s], roster_offset[s] + roster_count[s]):
                j = roster_agent[e]
                p = kappa * roster_f[e] * q_tables[g, jclass[j], sc]
                if p <= 0.0:
                    continue
                if p > 1.0:
                    p = 1.0
                cum += prefix * p
                last_j = j
                last_ctx = group_context[g]
                if target < cum:
                    chosen_j = j
                    chosen_ctx = last_ctx
                    break
                prefix *= 1.0 - p
            if chosen_j >= 0:
                break
        if chosen_j < 0:
            chosen_j = last_j       # floating-point guard at the tail
            chosen_ctx = last_ctx
        # -- natural history record
        u_s = _u01(seed, i, step, PURPOSE_SYMPTOMATIC)
        sym = 1 if u_s < p_sympt else 0
        u_o = _u01(seed, i, step, PURPOSE_ONSET)
        oidx = 0
        while oidx < onset_cdf.shape[0] - 1 and u_o >= onset_cdf[oidx]:
            oidx += 1
        ons = onset_days[oidx] if sym == 1 else -1
        u_l = _u01(seed, i, step, PURPOSE_LATENT)
        lidx = 0
        while lidx < latent_cdf.shape[0] - 1 and u_l >= latent_cdf[lidx]:
            lidx += 1
        lat = latent_steps_tab[lidx]

        n_j[i] = step
        latent[i] = lat
        dur[i] = infectious_steps
        sympt[i] = sym
        onset[i] = ons
        infector[i] = chosen_j
        infection_ctx[i] = chosen_ctx
        if chosen_ctx >= 0:
            setting_counts[chosen_ctx] += 1
        book_illness(i, step, lat, infectious_steps, sym, ons,
                     home_sla[i], age_band[i], duration_days,
                     inc_day, prev_day, inc_sla, prev_sla, cum_band)
        new_ids[n_new] = i
        n_new += 1
    return n_new


@njit(cache=True)
def book_illness(i, step, lat, dur, sym, ons, sla, band, duration_days,
                 inc_day, prev_day, inc_sla, prev_sla, cum_band):
    """Incidence/prevalence bookkeeping for one infection.

    Illness is symptom-state occupancy: onset at max(latent end, onset
    day), over before recovery.  Asymptomatic cases never appear in the
    ill counters.
    """
    if sym == 0:
        return
    onset_step = step + max(lat, 2 * ons)
    recovery = step + lat + dur
    if onset_step >= recovery:
        return
    day = onset_step // 2
    if day < duration_days:
        inc_day[day] += 1
        inc_sla[day, sla] += 1
        cum_band[sla, band] += 1
    d_end = (recovery - 2) // 2
    if d_end >= duration_days:
        d_end = duration_days - 1
    for d in range(onset_step // 2, d_end + 1):
        if d >= 0:
            prev_day[d] += 1
            prev_sla[d, sla] += 1


@njit(cache=True)
def reset_step(touched, n_touched, acc, slot_of_group):
    for t in range(n_touched):
        g = touched[t]
        slot_of_group[g] = -1
        for sc in range(4):
            acc[g, sc] = 1.0


def set_threads(n: int) -> int:
    """Clamp to numba's launch-time maximum and apply."""
    n_eff = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n_eff)
    return n_eff

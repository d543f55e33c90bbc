"""Vectorized inference core: flow index, likelihood tables, delta maintenance.

Flows that share a path set (the two directions of one ECMP pair, or repeats
of one traced route) are pooled into a group.  Everything the model needs
from a group is its path structure plus, per flow, the packet counts; since a
flow's likelihood depends on the hypothesis only through the number of failed
paths b, each group gets a lookup table G[g][b] = sum over its flows of the
normalized log-likelihood at b failed paths.  Initial delta computation,
incremental updates and from-scratch scans are all array passes over flat
(group, path, component) arrays.

The delta array carries prior-inclusive values: delta[c] already contains the
component's prior log-odds, so "best candidate improves the posterior" is
literally max(delta) > 0.  Entries for components already in the hypothesis
are masked from selection, not maintained for removal moves.

Candidate selection quantizes delta values to TIE_EPS and breaks ties toward
the smallest component id.  The incremental and the from-scratch paths
accumulate floating point in different orders; quantized comparison keeps
their argmax decisions identical while staying far below any meaningful
log-likelihood difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain

import numpy as np

from .model import ModelParams

TIE_EPS = 1e-6


def _concat_ranges(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Concatenate [s, e) integer ranges into one index array."""
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    lens = ends - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    base = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    return base + np.arange(total, dtype=np.int64)


class FlowIndex:
    """Bidirectional flow/component incidence plus pooled path structure.

    Built once per (trace, input kind); likelihood tables for specific model
    parameters are layered on top by Engine, so calibration sweeps reuse it.
    """

    def __init__(self, n_ids: int, component_mask: np.ndarray):
        self.n_ids = n_ids
        self.component_mask = component_mask.copy()
        self.n_groups = 0
        self.m = 0
        # filled by build()
        self.group_width = np.empty(0, np.int64)
        self.path_start = np.zeros(1, np.int64)
        self.path_off = np.zeros(1, np.int64)
        self.comps_flat = np.empty(0, np.int32)
        self.L_start = np.zeros(1, np.int64)
        self.L_comp = np.empty(0, np.int32)
        self.L_count = np.empty(0, np.int64)
        self.inv_start = np.zeros(n_ids + 1, np.int64)
        self.inv_group = np.empty(0, np.int32)
        self.flow_group = np.empty(0, np.int32)
        self.flow_r = np.empty(0, np.int64)
        self.flow_t = np.empty(0, np.int64)
        self.group_flow_start = np.zeros(1, np.int64)
        self.sorted_r = np.empty(0, np.int64)
        self.sorted_t = np.empty(0, np.int64)

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, selected, n_ids: int, component_mask: np.ndarray) -> "FlowIndex":
        """selected: list of (record, PathSet) pairs from telemetry.select_input."""
        idx = cls(n_ids, component_mask)
        group_of: dict = {}
        group_paths: list[list[tuple[int, ...]]] = []
        flow_group, flow_r, flow_t = [], [], []
        for rec, ps in selected:
            key = ps.group_key if ps.group_key is not None else tuple(ps.paths)
            gid = group_of.get(key)
            if gid is None:
                gid = len(group_paths)
                group_of[key] = gid
                group_paths.append(ps.paths)
            flow_group.append(gid)
            flow_r.append(rec.r)
            flow_t.append(rec.t)
        idx.m = len(flow_group)
        idx.n_groups = len(group_paths)
        idx.flow_group = np.asarray(flow_group, np.int32)
        idx.flow_r = np.asarray(flow_r, np.int64)
        idx.flow_t = np.asarray(flow_t, np.int64)

        # flatten all paths once; a keyed unique pass deduplicates components
        # within each path (the model only cares about membership, and reduced
        # paths may name a class twice) and canonicalizes entry order
        widths = np.asarray([len(p) for p in group_paths], np.int64)
        idx.group_width = widths
        idx.path_start = np.concatenate(([0], np.cumsum(widths)))
        all_paths = [p for paths in group_paths for p in paths]
        raw_lens = np.fromiter(map(len, all_paths), np.int64, count=len(all_paths))
        if len(raw_lens) and raw_lens.min() == 0:
            raise ValueError("paths must contain at least one component")
        total = int(raw_lens.sum())
        raw = np.fromiter(chain.from_iterable(all_paths), np.int64, count=total)
        path_of_entry = np.repeat(np.arange(len(all_paths), dtype=np.int64), raw_lens)
        pkeys = np.unique(path_of_entry * n_ids + raw)
        idx.comps_flat = (pkeys % n_ids).astype(np.int32)
        dedup_path_of = pkeys // n_ids
        plens = np.bincount(dedup_path_of, minlength=len(all_paths)).astype(np.int64)
        idx.path_off = np.concatenate(([0], np.cumsum(plens)))

        # per-group distinct components with path counts, again via one pass
        group_of_path = np.repeat(np.arange(idx.n_groups, dtype=np.int64),
                                  widths)
        group_of_entry = group_of_path[dedup_path_of]
        lkeys, lcounts = np.unique(group_of_entry * n_ids + idx.comps_flat,
                                   return_counts=True)
        idx.L_comp = (lkeys % n_ids).astype(np.int32)
        idx.L_count = lcounts.astype(np.int64)
        l_group = lkeys // n_ids
        idx.L_start = np.concatenate(
            ([0], np.cumsum(np.bincount(l_group, minlength=idx.n_groups)))).astype(np.int64)

        # inverse index: component -> groups that contain it
        owner = np.repeat(np.arange(idx.n_groups, dtype=np.int32),
                          np.diff(idx.L_start))
        order = np.argsort(idx.L_comp, kind="stable")
        idx.inv_group = owner[order]
        idx.inv_start = np.concatenate(
            ([0], np.cumsum(np.bincount(idx.L_comp, minlength=n_ids)))).astype(np.int64)

        # flows sorted by group, for table building
        forder = np.argsort(idx.flow_group, kind="stable")
        idx.sorted_r = idx.flow_r[forder]
        idx.sorted_t = idx.flow_t[forder]
        idx.group_flow_start = np.concatenate(
            ([0], np.cumsum(np.bincount(idx.flow_group, minlength=idx.n_groups)))).astype(np.int64)
        return idx

    # -- accessors (tests, stats) --------------------------------------------

    def groups_of_component(self, c: int) -> np.ndarray:
        return self.inv_group[self.inv_start[c]:self.inv_start[c + 1]]

    def components_of_group(self, g: int) -> np.ndarray:
        return self.L_comp[self.L_start[g]:self.L_start[g + 1]]

    def flows_of_component(self, c: int) -> int:
        """Number of flows intersecting component c."""
        counts = np.diff(self.group_flow_start)
        return int(counts[self.groups_of_component(c)].sum())

    @property
    def stat_T(self) -> int:
        """Max distinct components any single flow intersects."""
        if self.m == 0:
            return 0
        sizes = np.diff(self.L_start)
        return int(sizes[self.flow_group].max())

    @property
    def stat_D(self) -> int:
        """Max flows any single component intersects."""
        if self.m == 0 or len(self.L_comp) == 0:
            return 0
        counts = np.diff(self.group_flow_start)
        owner = np.repeat(np.arange(self.n_groups), np.diff(self.L_start))
        per_comp = np.bincount(self.L_comp, weights=counts[owner].astype(np.float64),
                               minlength=self.n_ids)
        return int(per_comp.max())

    @property
    def total_entries(self) -> int:
        return len(self.comps_flat)


@dataclass
class DeltaState:
    """Mutable search state: the delta array plus per-group failed-path counts."""

    delta: np.ndarray
    kahan: np.ndarray
    b_group: np.ndarray
    in_hyp: np.ndarray
    hypothesis: list[int] = field(default_factory=list)
    ll: float = 0.0
    last_touched: int = 0

    def clone(self) -> "DeltaState":
        return DeltaState(self.delta.copy(), self.kahan.copy(), self.b_group.copy(),
                          self.in_hyp.copy(), list(self.hypothesis), self.ll,
                          self.last_touched)


class Engine:
    """FlowIndex + model parameters: likelihood tables and delta operations."""

    def __init__(self, index: FlowIndex, params: ModelParams, prior: np.ndarray,
                 table_slab_entries: int = 4_000_000):
        self.index = index
        self.params = params
        self.prior = prior
        self._slab = table_slab_entries
        self.G = self._build_tables()

    def _build_tables(self) -> np.ndarray:
        idx = self.index
        lr = (idx.sorted_r * self.params.log_bad_ratio
              + (idx.sorted_t - idx.sorted_r) * self.params.log_good_ratio)
        wmax = int(idx.group_width.max()) if idx.n_groups else 0
        G = np.zeros((idx.n_groups, wmax + 1), dtype=np.float64)
        fcounts = np.diff(idx.group_flow_start)
        for w in np.unique(idx.group_width):
            w = int(w)
            gsel = np.flatnonzero(idx.group_width == w)
            # slab over groups so the (flows x width) work matrix stays small
            lo = 0
            while lo < len(gsel):
                hi = lo
                entries = 0
                while hi < len(gsel) and (entries == 0 or entries <= self._slab):
                    entries += int(fcounts[gsel[hi]]) * max(w - 1, 1)
                    hi += 1
                part = gsel[lo:hi]
                fidx = _concat_ranges(idx.group_flow_start[part],
                                      idx.group_flow_start[part + 1])
                lr_sel = lr[fidx]
                seg = np.concatenate(([0], np.cumsum(fcounts[part])[:-1]))
                has = fcounts[part] > 0
                if w >= 2 and len(lr_sel):
                    b = np.arange(1, w, dtype=np.float64)
                    mat = np.logaddexp(lr_sel[:, None] + np.log(b)[None, :],
                                       np.log(w - b)[None, :]) - np.log(w)
                    sums = np.add.reduceat(mat, seg, axis=0)
                    sums[~has] = 0.0
                    G[part, 1:w] = sums
                if len(lr_sel):
                    tot = np.add.reduceat(lr_sel, seg)
                    tot[~has] = 0.0
                    G[part, w] = tot
                lo = hi
        return G

    # -- whole-array operations ----------------------------------------------

    def initial_state(self) -> DeltaState:
        idx = self.index
        # non-components keep a finite placeholder; selection masks them out
        delta = np.where(self.index.component_mask, np.nan_to_num(self.prior, nan=0.0), 0.0)
        if len(idx.L_comp):
            owner = np.repeat(np.arange(idx.n_groups), np.diff(idx.L_start))
            contrib = self.G[owner, idx.L_count]
            delta = delta + np.bincount(idx.L_comp, weights=contrib, minlength=idx.n_ids)
        return DeltaState(delta=delta, kahan=np.zeros_like(delta),
                          b_group=np.zeros(idx.n_groups, np.int64),
                          in_hyp=np.zeros(idx.n_ids, dtype=bool))

    def ll_from_scratch(self, hypothesis) -> float:
        """Posterior log-likelihood of a hypothesis, recomputed from nothing.

        This is the reference path: every path's status is re-derived and every
        group is re-summed. The prior term is included.
        """
        idx = self.index
        h = list(hypothesis)
        total = float(sum(self.prior[c] for c in h))
        if not h or idx.n_groups == 0:
            return total
        flags = np.zeros(idx.n_ids, dtype=bool)
        flags[h] = True
        fail = np.bitwise_or.reduceat(flags[idx.comps_flat], idx.path_off[:-1])
        b = np.add.reduceat(fail.astype(np.int64), idx.path_start[:-1])
        return total + float(self.G[np.arange(idx.n_groups), b].sum())

    def b_counts(self, hypothesis) -> np.ndarray:
        """Failed-path count per group for a hypothesis (oracle helper)."""
        idx = self.index
        h = list(hypothesis)
        if not h or idx.n_groups == 0:
            return np.zeros(idx.n_groups, np.int64)
        flags = np.zeros(idx.n_ids, dtype=bool)
        flags[h] = True
        fail = np.bitwise_or.reduceat(flags[idx.comps_flat], idx.path_off[:-1])
        return np.add.reduceat(fail.astype(np.int64), idx.path_start[:-1])

    # -- incremental update ----------------------------------------------------

    def apply_add(self, state: DeltaState, l_star: int) -> None:
        """Move the state from H to H + {l_star}, updating only contributions
        of groups whose paths can contain l_star."""
        idx = self.index
        if state.in_hyp[l_star]:
            raise ValueError(f"component {l_star} already in hypothesis")
        gsel = idx.groups_of_component(l_star).astype(np.int64)
        state.last_touched = 0
        if len(gsel):
            e_start = idx.path_off[idx.path_start[gsel]]
            e_end = idx.path_off[idx.path_start[gsel + 1]]
            ent_idx = _concat_ranges(e_start, e_end)
            ent = idx.comps_flat[ent_idx]
            state.last_touched = len(ent)

            code = state.in_hyp[ent].astype(np.int8)
            code |= (ent == l_star).astype(np.int8) << 1

            p_idx = _concat_ranges(idx.path_start[gsel], idx.path_start[gsel + 1])
            n_paths = np.diff(idx.path_start)[gsel]
            powner = np.repeat(np.arange(len(gsel)), n_paths)
            ent_counts = e_end - e_start
            base = np.concatenate(([0], np.cumsum(ent_counts)[:-1]))
            seg = idx.path_off[p_idx] - e_start[powner] + base[powner]
            bits = np.bitwise_or.reduceat(code, seg)
            fail_old = (bits & 1).astype(bool)
            fail_new = bits.astype(bool)

            pseg = np.concatenate(([0], np.cumsum(n_paths)[:-1]))
            b_old = state.b_group[gsel]
            b_new = np.add.reduceat(fail_new.astype(np.int64), pseg)

            # counters: per (group, component) paths that are non-failed and
            # contain the component, before and after the flip
            path_len = np.diff(idx.path_off)[p_idx]
            gowner_ent = np.repeat(np.arange(len(gsel), dtype=np.int64), ent_counts)
            key = gowner_ent * idx.n_ids + ent
            nbins = len(gsel) * idx.n_ids
            f_old_ent = np.repeat(fail_old, path_len)
            f_new_ent = np.repeat(fail_new, path_len)
            cnt_old = np.bincount(key[f_old_ent], minlength=nbins)
            cnt_new = np.bincount(key[f_new_ent], minlength=nbins)

            l_idx = _concat_ranges(idx.L_start[gsel], idx.L_start[gsel + 1])
            c_arr = idx.L_comp[l_idx].astype(np.int64)
            lowner = np.repeat(np.arange(len(gsel)), np.diff(idx.L_start)[gsel])
            lkey = lowner * idx.n_ids + c_arr
            n_old = idx.L_count[l_idx] - cnt_old[lkey]
            n_new = idx.L_count[l_idx] - cnt_new[lkey]
            gl = gsel[lowner]
            b_old_e = b_old[lowner]
            b_new_e = b_new[lowner]
            change = (self.G[gl, b_new_e + n_new] - self.G[gl, b_new_e]) \
                - (self.G[gl, b_old_e + n_old] - self.G[gl, b_old_e])
            upd = np.bincount(c_arr, weights=change, minlength=idx.n_ids)
            # compensated accumulation keeps drift well under the 1e-6 bound
            y = upd - state.kahan
            t = state.delta + y
            state.kahan = (t - state.delta) - y
            state.delta = t
            state.b_group[gsel] = b_new

        state.in_hyp[l_star] = True
        state.hypothesis.append(int(l_star))


def select_best(delta: np.ndarray, in_hyp: np.ndarray, component_mask: np.ndarray):
    """Best candidate under quantized comparison, smallest id on ties.

    Returns (component, quantized_key) or (None, 0) if no candidate improves
    (quantized key <= 0) or none exists.
    """
    cand = component_mask & ~in_hyp
    if not cand.any():
        return None, 0
    keys = np.where(cand, np.rint(delta / TIE_EPS), np.iinfo(np.int64).min)
    keys = np.where(np.isfinite(keys), keys, np.iinfo(np.int64).min).astype(np.int64)
    best = keys.max()
    if best <= 0:
        return None, int(best)
    return int(np.flatnonzero(keys == best)[0]), int(best)

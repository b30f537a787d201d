"""Selection comparison: infer the cheapest set of variables that explains a
selection of models, then simplify it and emit a grouped-bar-chart spec or
refinement options.

A *variable* assigns each selected model a value label derived from its
operation path (a parameter value, the presence of an operation, the type of
operation, or a pipeline stage).  A variable set *explains* the selection
when models with identical value tuples have identical operation paths.
Cost is lexicographic: variable count first, then the sum of per-kind
complexity weights (parameters are simpler than presence, presence simpler
than operation type).

Inference searches over alignments of the selected models' paths.  For small
selections the search is exact: every consistent way of placing path
operations into shared columns is considered.  Larger selections fall back
to a single progressive longest-common-subsequence alignment, which is also
what the public ``align_paths`` exposes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import UnknownMetric
from .store import ModelStore, Operation, format_scalar, op_path

WEIGHTS = {"param_value": 1, "presence": 2, "op_type": 3, "pipeline_stage": 2}

# Search limits.
MAX_LCS_MATCHINGS = 24       # optimal LCS tracebacks kept per merge step
MAX_ALIGNMENTS = 384         # alternative alignments kept overall
MAX_GROUP_OPTIONS = 16
MAX_FEASIBILITY_TRIES = 1024
MAX_SEARCH_NODES = 50000

ABSENT = "absent"

# Parameters that accumulate across consecutive same-named operations.
# sparsity composes multiplicatively on kept fractions; a key registered
# without a combiner folds by label concatenation.
_COMBINERS: dict[str, Callable[[list[float]], float] | None] = {}


def _combine_sparsity(values: list[float]) -> float:
    kept = 1.0
    for v in values:
        kept *= 1.0 - float(v)
    return 1.0 - kept


def register_combinable(key: str, combiner: Callable[[list[float]], float] | None = None) -> None:
    _COMBINERS[key] = combiner


register_combinable("sparsity", _combine_sparsity)


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

@dataclass
class AlignedSlots:
    """Paths spread over shared slots; None marks an absent operation."""

    slot_count: int
    per_model: dict[str, list[Operation | None]]

    def slot_names(self, slot: int) -> set[str]:
        return {ops[slot].name for ops in self.per_model.values() if ops[slot] is not None}

    def slot_ops(self, slot: int) -> dict[str, Operation]:
        return {mid: ops[slot] for mid, ops in self.per_model.items() if ops[slot] is not None}


def _lcs_match(slot_names: list[str], path_names: list[str]) -> list[tuple[int, int]]:
    """Canonical LCS matching (slot index, path index) pairs.

    Ties are broken toward the earliest slots: the traceback prefers a match
    whenever one is optimal, and otherwise skips slots before path entries.
    """
    n, m = len(slot_names), len(path_names)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if slot_names[i] == path_names[j]:
                table[i][j] = 1 + table[i + 1][j + 1]
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])

    matches: list[tuple[int, int]] = []
    i = j = 0
    while i < n and j < m:
        if slot_names[i] == path_names[j] and table[i][j] == 1 + table[i + 1][j + 1]:
            matches.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return matches


def align_paths(paths: Mapping[str, Sequence[Operation]] | Sequence[Sequence[Operation]],
                ) -> AlignedSlots:
    """Progressive alignment of operation paths into shared slots.

    Seeds the slot list with the longest path and merges each remaining path
    in order by LCS over operation names.  Unmatched operations open new
    slots at their relative position (just before the next matched slot).
    """
    if isinstance(paths, Mapping):
        items = [(str(k), list(v)) for k, v in paths.items()]
    else:
        items = [(str(i), list(p)) for i, p in enumerate(paths)]
    if not items:
        raise ValueError("align_paths requires at least one path")

    seed_idx = max(range(len(items)), key=lambda i: len(items[i][1]))
    order = [seed_idx] + [i for i in range(len(items)) if i != seed_idx]

    # Each slot: (label, {model: op})
    slots: list[tuple[str, dict[str, Operation]]] = [
        (op.name, {items[seed_idx][0]: op}) for op in items[seed_idx][1]
    ]

    for idx in order[1:]:
        mid, path = items[idx]
        matches = _lcs_match([s[0] for s in slots], [op.name for op in path])
        new_slots: list[tuple[str, dict[str, Operation]]] = []
        anchors = matches + [(len(slots), len(path))]
        si = pj = 0
        for slot_i, path_j in anchors:
            # Unmatched existing slots in this region keep their position;
            # unmatched path ops open fresh slots before the next anchor.
            new_slots.extend(slots[si:slot_i])
            for j in range(pj, path_j):
                new_slots.append((path[j].name, {mid: path[j]}))
            if slot_i < len(slots):
                label, ops = slots[slot_i]
                merged = dict(ops)
                merged[mid] = path[path_j]
                new_slots.append((label, merged))
            si, pj = slot_i + 1, path_j + 1
        slots = new_slots

    per_model: dict[str, list[Operation | None]] = {}
    for mid, _ in items:
        per_model[mid] = [slot_ops.get(mid) for _, slot_ops in slots]
    return AlignedSlots(slot_count=len(slots), per_model=per_model)


# ---------------------------------------------------------------------------
# Variables
# ---------------------------------------------------------------------------

@dataclass
class Variable:
    kind: str                      # param_value | presence | op_type | pipeline_stage
    slot: int
    values: list[str]
    assignment: dict[str, str]     # model id -> value label
    label: str
    param_key: str | None = None
    slot_end: int | None = None
    weight: int = 1
    partial: bool = False          # defined only where the slot's op is present

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "slot": self.slot,
            "slot_end": self.slot_end,
            "param_key": self.param_key,
            "label": self.label,
            "values": list(self.values),
            "assignment": dict(self.assignment),
        }


def _order_values(kind: str, labels: Iterable[str]) -> list[str]:
    distinct = sorted(set(labels))
    if kind == "presence":
        return [v for v in ("false", "true") if v in distinct]
    head = [ABSENT] if ABSENT in distinct else []
    rest = [v for v in distinct if v != ABSENT]
    try:
        rest.sort(key=float)
    except ValueError:
        pass
    return head + rest


# --- internal candidate machinery ------------------------------------------

@dataclass
class _Group:
    """Columns that are interchangeable: same member models, same ops."""

    index: int
    members: frozenset[int]
    ops: dict[int, Operation]                       # model index -> op
    realizations: list[dict[int, int]] = field(default_factory=list)
    cand_ids: list[int] = field(default_factory=list)


@dataclass
class _Cand:
    index: int
    kind: str
    key: str | None
    labels: tuple[str | None, ...]   # per model; None = absent
    weight: int
    partial: bool
    names: tuple[str, ...]
    members: frozenset[int] = frozenset()
    groups: list[int] = field(default_factory=list)
    sep: frozenset[tuple[int, int]] = frozenset()


def _candidates_for_group(group: _Group, n_models: int) -> list[dict[str, Any]]:
    """Raw candidate variables induced by one column."""
    out: list[dict[str, Any]] = []
    members = group.members
    all_present = len(members) == n_models
    if not all_present:
        labels = tuple("true" if i in members else "false" for i in range(n_models))
        out.append({"kind": "presence", "key": None, "labels": labels,
                    "weight": WEIGHTS["presence"], "partial": False,
                    "names": tuple(sorted({op.name for op in group.ops.values()}))})
    if len(members) >= 2:
        names = {op.name for op in group.ops.values()}
        if len(names) > 1:
            labels = tuple(
                group.ops[i].signature() if i in members else None for i in range(n_models))
            if len({l for l in labels if l is not None}) >= 2:
                out.append({"kind": "op_type", "key": None, "labels": labels,
                            "weight": WEIGHTS["op_type"], "partial": not all_present,
                            "names": tuple(sorted(names))})
        else:
            keys: list[str] = []
            for op in group.ops.values():
                for k in op.parameters:
                    if k not in keys:
                        keys.append(k)
            for k in keys:
                vals = {}
                for i in members:
                    raw = group.ops[i].parameters.get(k)
                    vals[i] = ABSENT if raw is None else format_scalar(raw)
                if len(set(vals.values())) < 2:
                    continue
                labels = tuple(vals.get(i) for i in range(n_models))
                out.append({"kind": "param_value", "key": k, "labels": labels,
                            "weight": WEIGHTS["param_value"], "partial": not all_present,
                            "names": tuple(sorted(names))})
    return out


def _build_candidates(groups: list[_Group], pairs: list[tuple[int, int]],
                      n_models: int) -> tuple[list[_Cand], dict[frozenset[int], int]]:
    cands: list[_Cand] = []
    seen: dict[tuple, int] = {}
    presence_by_members: dict[frozenset[int], int] = {}
    for group in groups:
        for raw in _candidates_for_group(group, n_models):
            key = (raw["kind"], raw["key"], raw["labels"])
            if key in seen:
                cand = cands[seen[key]]
                if len(cand.groups) < MAX_GROUP_OPTIONS:
                    cand.groups.append(group.index)
                group.cand_ids.append(cand.index)
                continue
            sep = frozenset(
                (i, j) for i, j in pairs if raw["labels"][i] != raw["labels"][j])
            cand = _Cand(index=len(cands), kind=raw["kind"], key=raw["key"],
                         labels=raw["labels"], weight=raw["weight"],
                         partial=raw["partial"], names=raw["names"],
                         members=frozenset(
                             i for i, l in enumerate(raw["labels"]) if l is not None)
                         if raw["kind"] != "presence" else group.members,
                         groups=[group.index], sep=sep)
            seen[key] = cand.index
            cands.append(cand)
            group.cand_ids.append(cand.index)
            if cand.kind == "presence":
                presence_by_members[group.members] = cand.index
    return cands, presence_by_members


def _lcs_matchings(xs: list[str], ys: list[str],
                   cap: int = MAX_LCS_MATCHINGS) -> list[list[tuple[int, int]]]:
    """All distinct optimal LCS matchings of xs against ys (capped).

    The first matching returned is the canonical earliest-slot traceback.
    """
    n, m = len(xs), len(ys)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if xs[i] == ys[j]:
                table[i][j] = 1 + table[i + 1][j + 1]
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])

    out: list[list[tuple[int, int]]] = []
    seen: set[tuple[tuple[int, int], ...]] = set()

    def walk(i: int, j: int, acc: list[tuple[int, int]]) -> None:
        if len(out) >= cap:
            return
        if i == n or j == m or table[i][j] == 0:
            key = tuple(acc)
            if key not in seen:
                seen.add(key)
                out.append(list(acc))
            return
        if xs[i] == ys[j] and table[i][j] == 1 + table[i + 1][j + 1]:
            acc.append((i, j))
            walk(i + 1, j + 1, acc)
            acc.pop()
        if table[i + 1][j] == table[i][j]:
            walk(i + 1, j, acc)
        if table[i][j + 1] == table[i][j]:
            walk(i, j + 1, acc)

    walk(0, 0, [])
    return out


# An alignment under construction: list of columns, each a dict
# {model index -> op index} plus the label the column was created with.
_Column = tuple[str, dict[int, int]]


def _merge_alternatives(slots: list[_Column], paths: list[list[Operation]],
                        model: int) -> list[list[_Column]]:
    """All ways to merge one model's path into existing slots.

    Anchors come from optimal LCS matchings over operation names; each gap
    region either pairs unmatched ops positionally with unmatched slots or
    opens fresh slots at their relative position.
    """
    path = paths[model]
    names = [op.name for op in path]
    results: list[list[_Column]] = []
    seen: set[tuple] = set()

    for matching in _lcs_matchings([s[0] for s in slots], names):
        anchors = matching + [(len(slots), len(path))]
        # Each region independently chooses pairing or fresh slots.
        region_bounds = []
        si = pj = 0
        for slot_i, path_j in anchors:
            region_bounds.append((si, slot_i, pj, path_j))
            si, pj = slot_i + 1, path_j + 1
        choice_space = []
        for s0, s1, p0, p1 in region_bounds:
            pairable = min(s1 - s0, p1 - p0)
            choice_space.append((True, False) if pairable > 0 else (False,))

        for choices in itertools.product(*choice_space):
            merged: list[_Column] = []
            for (s0, s1, p0, p1), pair in zip(region_bounds, choices):
                u, v = s1 - s0, p1 - p0
                paired = min(u, v) if pair else 0
                for t in range(u):
                    label, ops = slots[s0 + t]
                    if t < paired:
                        ops = dict(ops)
                        ops[model] = p0 + t
                    merged.append((label, ops))
                for t in range(paired, v):
                    merged.append((names[p0 + t], {model: p0 + t}))
                if s1 < len(slots):
                    label, ops = slots[s1]
                    ops = dict(ops)
                    ops[model] = p1
                    merged.append((label, ops))
            key = tuple((lbl, tuple(sorted(ops.items()))) for lbl, ops in merged)
            if key not in seen:
                seen.add(key)
                results.append(merged)
    return results


def _enumerate_alignments(paths: list[list[Operation]]) -> list[list[_Column]]:
    """Alternative alignments from progressive LCS merging.

    Branches over optimal-LCS tie-breaks and over pairing-versus-new-slot
    gap handling; the canonical alignment comes first.
    """
    order = sorted(range(len(paths)), key=lambda i: (-len(paths[i]), i))
    seed = order[0]
    states: list[list[_Column]] = [
        [(op.name, {seed: i}) for i, op in enumerate(paths[seed])]
    ]
    for model in order[1:]:
        nxt: list[list[_Column]] = []
        seen: set[tuple] = set()
        for state in states:
            for merged in _merge_alternatives(state, paths, model):
                key = tuple((lbl, tuple(sorted(ops.items()))) for lbl, ops in merged)
                if key in seen:
                    continue
                seen.add(key)
                nxt.append(merged)
                if len(nxt) >= MAX_ALIGNMENTS:
                    break
            if len(nxt) >= MAX_ALIGNMENTS:
                break
        states = nxt
    return states


def _groups_from_alignments(alignments: list[list[_Column]],
                            paths: list[list[Operation]]) -> list[_Group]:
    """Deduplicated columns over every enumerated alignment."""
    groups: dict[tuple, _Group] = {}
    for alignment in alignments:
        for _, column in alignment:
            members = tuple(sorted(column))
            profile = (members,
                       tuple(paths[i][column[i]].signature() for i in members))
            group = groups.get(profile)
            if group is None:
                group = _Group(index=len(groups), members=frozenset(members),
                               ops={i: paths[i][column[i]] for i in members})
                groups[profile] = group
            if column not in group.realizations:
                group.realizations.append(dict(column))
    return list(groups.values())


# --- minimal explaining subset (branch and bound over a pair cover) ---------

def _closure(chosen: frozenset[int], cands: list[_Cand],
             presence_by_members: dict[frozenset[int], int]) -> frozenset[int] | None:
    """Add the presence variable required by each partial candidate."""
    out = set(chosen)
    for ci in chosen:
        cand = cands[ci]
        if cand.partial:
            members = frozenset(i for i, l in enumerate(cand.labels) if l is not None)
            pi = presence_by_members.get(members)
            if pi is None:
                return None
            out.add(pi)
    return frozenset(out)


def _cost(chosen: Iterable[int], cands: list[_Cand]) -> tuple[int, int]:
    chosen = list(chosen)
    return (len(chosen), sum(cands[c].weight for c in chosen))


Feasibility = tuple[dict[int, int], dict[int, dict[int, int]]]


def _check_feasible(chosen: list[int], cands: list[_Cand], groups: list[_Group],
                    limit: int = 16) -> list[Feasibility]:
    """Enumerate ways to assign each chosen candidate to a realizing column.

    Partial candidates must share their column with the presence candidate of
    the same member set.  Distinct columns need disjoint (model, index) picks
    and an acyclic precedence order.  Each result pairs (candidate -> group)
    with (group -> realization); up to ``limit`` results are returned.
    """
    chosen = sorted(chosen, key=lambda ci: (not cands[ci].partial, ci))
    tries = 0

    def members_of(ci: int) -> frozenset[int]:
        return cands[ci].members

    results: list[Feasibility] = []

    def consistent(assign: dict[int, int]) -> None:
        """Pick one realization per distinct group: disjoint and acyclic."""
        nonlocal tries
        distinct = sorted(set(assign.values()))

        def pick(k: int, used: set[tuple[int, int]],
                 real: dict[int, dict[int, int]]) -> None:
            nonlocal tries
            if len(results) >= limit:
                return
            if k == len(distinct):
                # Precedence between columns must be acyclic.
                order: dict[int, set[int]] = {g: set() for g in distinct}
                for a, b in itertools.combinations(distinct, 2):
                    ra, rb = real[a], real[b]
                    for m in set(ra) & set(rb):
                        if ra[m] < rb[m]:
                            order[a].add(b)
                        else:
                            order[b].add(a)
                state: dict[int, int] = {}

                def cyclic(g: int) -> bool:
                    state[g] = 0
                    for nxt in order[g]:
                        if state.get(nxt) == 0 or (nxt not in state and cyclic(nxt)):
                            return True
                    state[g] = 1
                    return False

                if all(g in state or not cyclic(g) for g in distinct):
                    results.append((dict(assign), dict(real)))
                return
            g = distinct[k]
            for realization in groups[g].realizations:
                tries += 1
                if tries > MAX_FEASIBILITY_TRIES:
                    return
                cells = {(m, i) for m, i in realization.items()}
                if cells & used:
                    continue
                real[g] = realization
                pick(k + 1, used | cells, real)
                del real[g]

        pick(0, set(), {})

    def assign_groups(k: int, assign: dict[int, int]) -> None:
        nonlocal tries
        if tries > MAX_FEASIBILITY_TRIES or len(results) >= limit:
            return
        if k == len(chosen):
            consistent(assign)
            return
        ci = chosen[k]
        cand = cands[ci]
        if cand.partial:
            # All partials over one member set share a column so the later
            # conditional merge leaves no variable partial.
            placed = [g for cj, g in assign.items()
                      if cands[cj].partial and members_of(cj) == members_of(ci)]
            options = [g for g in cand.groups if not placed or g in placed]
        else:
            # A presence candidate follows its partials when one was placed.
            placed = [g for cj, g in assign.items()
                      if cands[cj].partial and members_of(cj) == members_of(ci)]
            if cand.kind == "presence" and placed:
                options = [g for g in set(placed) if g in cand.groups]
            else:
                options = cand.groups
        for g in options:
            assign[ci] = g
            assign_groups(k + 1, assign)
            del assign[ci]

    assign_groups(0, {})
    return results


def _min_explaining_subset(cands: list[_Cand], pairs: list[tuple[int, int]],
                           groups: list[_Group],
                           presence_by_members: dict[frozenset[int], int],
                           ) -> list[tuple[list[int], Feasibility]]:
    """Candidate sets of minimal (count, weight) cost covering all distinct
    pairs, together with their feasible column assignments.

    All cost-tied solutions (capped) are returned so the caller can break
    ties by the shape of the materialized alignment.
    """
    all_pairs = frozenset(pairs)
    by_pair: dict[tuple[int, int], list[int]] = {p: [] for p in pairs}
    for cand in cands:
        for p in cand.sep:
            by_pair[p].append(cand.index)
    for p, separators in by_pair.items():
        separators.sort(key=lambda ci: (cands[ci].weight, ci))

    best_cost: tuple[int, int] | None = None
    solutions: list[tuple[list[int], Feasibility]] = []
    nodes = 0
    visited: set[frozenset[int]] = set()

    def search(chosen: frozenset[int], covered: frozenset[tuple[int, int]]) -> None:
        nonlocal best_cost, nodes, solutions
        nodes += 1
        if nodes > MAX_SEARCH_NODES or chosen in visited:
            return
        visited.add(chosen)
        cost = _cost(chosen, cands)
        if best_cost is not None and cost > best_cost:
            return
        if covered == all_pairs:
            # Enough tied solutions collected: further ties would be
            # discarded anyway, so skip the (pricey) feasibility check.
            if best_cost is not None and cost == best_cost and len(solutions) >= 48:
                return
            feas_list = _check_feasible(sorted(chosen), cands, groups, limit=8)
            if feas_list:
                if best_cost is None or cost < best_cost:
                    best_cost = cost
                    solutions = []
                if cost == best_cost and len(solutions) < 48:
                    solutions.extend((sorted(chosen), feas) for feas in feas_list)
            return
        uncovered = [p for p in pairs if p not in covered]
        # Branch on the most constrained uncovered pair.
        target = min(uncovered, key=lambda p: (len(by_pair[p]), p))
        for ci in by_pair[target]:
            if ci in chosen:
                continue
            nxt = _closure(chosen | {ci}, cands, presence_by_members)
            if nxt is None:
                continue
            ncost = _cost(nxt, cands)
            if best_cost is not None and ncost > best_cost:
                continue
            ncov = covered | frozenset().union(*(cands[c].sep for c in nxt))
            search(nxt, ncov)

    search(frozenset(), frozenset())
    if not solutions:
        # Fall back to a greedy cover closed over presence dependencies.
        chosen: set[int] = set()
        covered: set[tuple[int, int]] = set()
        while covered != all_pairs:
            rest = [c for c in cands if c.index not in chosen and c.sep - covered]
            if not rest:
                break
            pick = max(rest, key=lambda c: (len(c.sep - covered), -c.weight, -c.index))
            closed = _closure(frozenset(chosen | {pick.index}), cands, presence_by_members)
            chosen = set(closed or (chosen | {pick.index}))
            covered = set().union(*(cands[c].sep for c in chosen))
        feas_list = _check_feasible(sorted(chosen), cands, groups)
        if not feas_list:
            raise RuntimeError("no feasible explaining variable set found")
        return [(sorted(chosen), feas_list[0])]
    return solutions


# --- materializing the alignment behind a solution --------------------------

def _materialize(ids: list[str], paths: list[list[Operation]], chosen: list[int],
                 cands: list[_Cand], groups: list[_Group],
                 feasibility: Feasibility) -> tuple[list[Variable], AlignedSlots]:
    """Order chosen columns and filler operations into slots, then build the
    Variable objects with their slot indices."""
    n = len(ids)
    cand_group, realized = feasibility
    chosen_groups = sorted(realized)
    cell_to_group: dict[tuple[int, int], int] = {}
    for g in chosen_groups:
        for m, i in realized[g].items():
            cell_to_group[(m, i)] = g

    pointers = [0] * n
    slots: list[dict[int, int]] = []          # slot -> {model: op index}
    group_slot: dict[int, int] = {}
    remaining = set(chosen_groups)

    def ready(g: int) -> bool:
        return all(pointers[m] == i for m, i in realized[g].items())

    while any(pointers[m] < len(paths[m]) for m in range(n)):
        ready_groups = sorted((g for g in remaining if ready(g)),
                              key=lambda g: (min(realized[g]),))
        if ready_groups:
            g = ready_groups[0]
            group_slot[g] = len(slots)
            slots.append(dict(realized[g]))
            for m in realized[g]:
                pointers[m] += 1
            remaining.discard(g)
            continue
        fillers = [m for m in range(n)
                   if pointers[m] < len(paths[m])
                   and (m, pointers[m]) not in cell_to_group]
        if not fillers:
            raise RuntimeError("column ordering deadlock")  # acyclicity guards this
        name = min(paths[m][pointers[m]].name for m in fillers)
        column = {m: pointers[m] for m in fillers if paths[m][pointers[m]].name == name}
        slots.append(column)
        for m in column:
            pointers[m] += 1

    per_model: dict[str, list[Operation | None]] = {mid: [None] * len(slots) for mid in ids}
    for slot, column in enumerate(slots):
        for m, i in column.items():
            per_model[ids[m]][slot] = paths[m][i]
    aligned = AlignedSlots(slot_count=len(slots), per_model=per_model)

    variables: list[Variable] = []
    for ci in sorted(chosen, key=lambda c: (group_slot[cand_group[c]], cands[c].weight, c)):
        cand = cands[ci]
        slot = group_slot[cand_group[ci]]
        assignment = {ids[i]: label for i, label in enumerate(cand.labels) if label is not None}
        name = "/".join(sorted({op.name for op in groups[cand_group[ci]].ops.values()}))
        label = f"{name}.{cand.key}" if cand.kind == "param_value" else name
        variables.append(Variable(
            kind=cand.kind,
            slot=slot,
            values=_order_values(cand.kind, assignment.values()),
            assignment=assignment,
            label=label,
            param_key=cand.key,
            weight=cand.weight,
            partial=cand.partial,
        ))
    variables.sort(key=lambda v: (v.slot, v.weight, v.label))
    return variables, aligned


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def _selection_ids(store: ModelStore, selection: Iterable[str]) -> list[str]:
    wanted = set(selection)
    if not wanted:
        raise ValueError("selection is empty")
    for mid in wanted:
        store.require(mid)
    return [mid for mid in store.nodes if mid in wanted]


def _infer(store: ModelStore, selection: Iterable[str]) -> tuple[list[Variable], AlignedSlots]:
    ids = _selection_ids(store, selection)
    paths = [op_path(store, mid) for mid in ids]
    sigs = [tuple(op.signature() for op in p) for p in paths]
    pairs = [(i, j) for i, j in itertools.combinations(range(len(ids)), 2)
             if sigs[i] != sigs[j]]
    if not pairs:
        return [], align_paths({mid: p for mid, p in zip(ids, paths)})

    alignments = _enumerate_alignments(paths)
    groups = _groups_from_alignments(alignments, paths)
    cands, presence_by_members = _build_candidates(groups, pairs, len(ids))
    solutions = _min_explaining_subset(cands, pairs, groups, presence_by_members)

    # Cost ties are broken by the materialized alignment: fewer slots means
    # more operations matched across models, which keeps variables attached
    # to the operations they describe.
    best: tuple[tuple, list[Variable], AlignedSlots] | None = None
    for chosen, feasibility in solutions:
        variables, aligned = _materialize(ids, paths, chosen, cands, groups, feasibility)
        key = (aligned.slot_count,
               tuple(sorted((v.slot, v.kind, v.label,
                             tuple(sorted(v.assignment.items()))) for v in variables)))
        if best is None or key < best[0]:
            best = (key, variables, aligned)
    assert best is not None
    return best[1], best[2]


def infer_variables(store: ModelStore, selection: Iterable[str]) -> list[Variable]:
    """Minimum-cost variable set explaining the selection (pre-simplification)."""
    return _infer(store, selection)[0]


# --- simplification ---------------------------------------------------------

def _rule_conditional(variables: list[Variable]) -> bool:
    """Merge a presence variable with partial variables of the same slot."""
    by_slot: dict[int, list[Variable]] = {}
    for v in variables:
        by_slot.setdefault(v.slot, []).append(v)
    for slot, group in by_slot.items():
        presence = next((v for v in group if v.kind == "presence"), None)
        partials = [v for v in group if v.partial]
        if presence is None or not partials:
            continue
        absent_models = [m for m, val in presence.assignment.items() if val == "false"]
        variables.remove(presence)
        for v in partials:
            for m in absent_models:
                v.assignment[m] = ABSENT
            v.values = _order_values(v.kind, v.assignment.values())
            v.partial = False
        return True
    return False


def _rule_cumulative(variables: list[Variable], ids: list[str],
                     paths: dict[str, list[Operation]], slot_count: int) -> bool:
    """Collapse a prefix chain of selections into one pipeline-stage variable."""
    if not variables:
        return False
    ordered = sorted(ids, key=lambda m: (len(paths[m]), m))
    sig = {m: tuple(op.signature() for op in paths[m]) for m in ids}
    for a, b in zip(ordered, ordered[1:]):
        if sig[a] != sig[b][:len(sig[a])]:
            return False
    stage = {m: (paths[m][-1].name if paths[m] else "root") for m in ids}
    # Stages must keep distinct paths distinguishable.
    by_label: dict[str, set[tuple[str, ...]]] = {}
    for m in ids:
        by_label.setdefault(stage[m], set()).add(sig[m])
    if any(len(s) > 1 for s in by_label.values()):
        return False
    values: list[str] = []
    for m in ordered:
        if stage[m] not in values:
            values.append(stage[m])
    if len(values) < 2:
        return False
    merged = Variable(kind="pipeline_stage", slot=0, slot_end=max(slot_count - 1, 0),
                      values=values, assignment=dict(stage), label="stage",
                      weight=WEIGHTS["pipeline_stage"])
    if len(variables) == 1 and variables[0].kind == "pipeline_stage" \
            and variables[0].assignment == merged.assignment:
        return False
    variables.clear()
    variables.append(merged)
    return True


def _var_span(v: Variable) -> tuple[int, int]:
    return (v.slot, v.slot_end if v.slot_end is not None else v.slot)


def _rule_accumulate(variables: list[Variable], aligned: AlignedSlots,
                     ids: list[str]) -> bool:
    """Fold consecutive same-named slots with a combinable parameter."""
    if not variables:
        return False
    names: list[str | None] = []
    for slot in range(aligned.slot_count):
        slot_names = aligned.slot_names(slot)
        names.append(next(iter(slot_names)) if len(slot_names) == 1 else None)

    slot = 0
    while slot < aligned.slot_count:
        name = names[slot]
        if name is None:
            slot += 1
            continue
        end = slot
        while end + 1 < aligned.slot_count and names[end + 1] == name:
            end += 1
        if end > slot and _try_fold_run(variables, aligned, ids, slot, end, name):
            return True
        slot = end + 1
    return False


def _try_fold_run(variables: list[Variable], aligned: AlignedSlots, ids: list[str],
                  start: int, end: int, name: str) -> bool:
    run_ops: dict[str, list[Operation]] = {mid: [] for mid in ids}
    for s in range(start, end + 1):
        for mid, op in aligned.slot_ops(s).items():
            if mid in run_ops:
                run_ops[mid].append(op)

    for key, combiner in _COMBINERS.items():
        if not all(key in op.parameters for ops in run_ops.values() for op in ops):
            continue
        in_run = [v for v in variables
                  if _var_span(v)[0] <= end and _var_span(v)[1] >= start]
        ok = all(v.kind == "presence"
                 or (v.kind == "param_value" and v.param_key == key) for v in in_run)
        if not ok or not in_run:
            continue
        assignment: dict[str, str] = {}
        for mid, ops in run_ops.items():
            if not ops:
                assignment[mid] = ABSENT
            elif combiner is None:
                assignment[mid] = "+".join(format_scalar(op.parameters[key]) for op in ops)
            else:
                assignment[mid] = format_scalar(
                    combiner([float(op.parameters[key]) for op in ops]))
        if len(set(assignment.values())) < 2:
            continue
        folded = Variable(kind="param_value", slot=start, slot_end=end,
                          values=_order_values("param_value", assignment.values()),
                          assignment=assignment, label=f"{name}.{key}", param_key=key,
                          weight=WEIGHTS["param_value"])
        if any(v.slot == start and v.slot_end == end and v.assignment == folded.assignment
               for v in variables):
            continue
        for v in in_run:
            variables.remove(v)
        variables.append(folded)
        variables.sort(key=lambda v: (v.slot, v.weight, v.label))
        return True
    return False


def _simplify(variables: list[Variable], aligned: AlignedSlots, store: ModelStore,
              ids: list[str]) -> list[Variable]:
    paths = {mid: op_path(store, mid) for mid in ids}
    out = [replace(v, values=list(v.values), assignment=dict(v.assignment))
           for v in variables]
    for _ in range(20):
        if _rule_conditional(out):
            continue
        if _rule_cumulative(out, ids, paths, aligned.slot_count):
            continue
        if not _rule_accumulate(out, aligned, ids):
            break
    return out


def simplify_variables(variables: list[Variable], store: ModelStore,
                       selection: Iterable[str]) -> list[Variable]:
    """Apply conditional, cumulative, and accumulation merges to a fixpoint."""
    ids = _selection_ids(store, selection)
    _, aligned = _infer(store, selection)
    return _simplify(variables, aligned, store, ids)


# --- chart / refinement ------------------------------------------------------

@dataclass
class ChartBar:
    x: str
    color: str | None
    model: str
    value: float

    def to_json(self) -> dict[str, Any]:
        return {"x": self.x, "color": self.color, "model": self.model, "value": self.value}


@dataclass
class ChartSpec:
    x_variable: Variable | None
    color_variable: Variable | None
    metric: str
    bars: list[ChartBar]

    def to_json(self) -> dict[str, Any]:
        return {
            "x_variable": self.x_variable.to_json() if self.x_variable else None,
            "color_variable": self.color_variable.to_json() if self.color_variable else None,
            "metric": self.metric,
            "bars": [b.to_json() for b in self.bars],
        }


@dataclass
class RefinementGroup:
    fixed: dict[str, str]
    free: list[Variable]
    member_ids: list[str]

    def to_json(self) -> dict[str, Any]:
        return {
            "fixed": dict(self.fixed),
            "free": [v.to_json() for v in self.free],
            "member_ids": list(self.member_ids),
        }


@dataclass
class ComparisonResult:
    chart: ChartSpec | None = None
    refinement: list[RefinementGroup] | None = None
    variables: list[Variable] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"variables": [v.to_json() for v in self.variables]}
        if self.chart is not None:
            out["chart"] = self.chart.to_json()
        if self.refinement is not None:
            out["refinement"] = [g.to_json() for g in self.refinement]
        return out


def _restrict(variable: Variable, members: list[str]) -> Variable:
    assignment = {m: variable.assignment[m] for m in members if m in variable.assignment}
    used = set(assignment.values())
    return replace(variable, assignment=assignment,
                   values=[v for v in variable.values if v in used])


def build_comparison(store: ModelStore, selection: Iterable[str],
                     metric: str) -> ComparisonResult:
    """Run inference and simplification, then chart or offer refinements."""
    if metric not in store.metric_specs:
        raise UnknownMetric(f"unknown metric {metric!r}", detail=metric)
    ids = _selection_ids(store, selection)
    raw, aligned = _infer(store, ids)
    variables = _simplify(raw, aligned, store, ids)

    if len(variables) <= 2:
        if not variables:
            x_var: Variable | None = None
            color_var: Variable | None = None
        elif len(variables) == 1:
            x_var, color_var = variables[0], None
        else:
            a, b = variables
            # More distinct values goes on the x axis; ties prefer the
            # simpler (lower-weight) variable.
            if (len(b.values), -b.weight, -b.slot) > (len(a.values), -a.weight, -a.slot):
                a, b = b, a
            x_var, color_var = a, b
        bars = []
        for mid in ids:
            node = store.nodes[mid]
            if metric not in node.metrics:
                continue
            bars.append(ChartBar(
                x=x_var.assignment.get(mid, mid) if x_var else mid,
                color=color_var.assignment.get(mid) if color_var else None,
                model=mid,
                value=node.metrics[metric],
            ))
        if x_var is not None:
            x_order = {v: i for i, v in enumerate(x_var.values)}
            color_order = {v: i for i, v in enumerate(color_var.values)} if color_var else {}
            bars.sort(key=lambda b: (x_order.get(b.x, len(x_order)),
                                     color_order.get(b.color, len(color_order)), b.model))
        return ComparisonResult(chart=ChartSpec(x_var, color_var, metric, bars),
                                variables=variables)

    groups: list[RefinementGroup] = []
    for combo in itertools.combinations(range(len(variables)), 2):
        free = [variables[i] for i in combo]
        others = [v for i, v in enumerate(variables) if i not in combo]
        buckets: dict[tuple[str, ...], list[str]] = {}
        for mid in ids:
            key = tuple(o.assignment.get(mid, ABSENT) for o in others)
            buckets.setdefault(key, []).append(mid)
        for key in sorted(buckets):
            members = buckets[key]
            if len(members) < 2:
                continue
            groups.append(RefinementGroup(
                fixed={o.label: val for o, val in zip(others, key)},
                free=[_restrict(v, members) for v in free],
                member_ids=members,
            ))
    return ComparisonResult(refinement=groups, variables=variables)

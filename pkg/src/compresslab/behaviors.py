"""Instance-level output comparison: builtin comparison metrics, class-level
aggregation, relative-to-base values, and row sorting (Behaviors tab).

Comparison metrics are a closed builtin set; anything else arrives
pre-computed through the outputs files or the provider protocol.
"""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import (
    BaseRequired,
    MismatchedInstanceSets,
    MissingOutput,
    SchemaError,
    UnknownModel,
)
from .store import ModelStore

KL_EPSILON = 1e-10

METRICS_REQUIRING_BASE = {"top1_change", "kl_divergence", "text_change"}
COMPARISON_METRICS = (
    "correctness", "confidence", "top1_change", "kl_divergence", "text_f1", "text_change",
)
RELATIVE_MODES = ("absolute", "difference", "pct_error_change")


@dataclass(frozen=True)
class InstanceRecord:
    id: str
    truth: str
    group: str | None = None
    payload_ref: str | None = None


@dataclass
class OutputRecord:
    model: str
    instance: str
    label: str | None = None
    probs: list[float] | None = None
    text: str | None = None

    def validate(self) -> None:
        if self.label is None and self.probs is None and self.text is None:
            raise SchemaError(
                f"output for {self.instance!r} carries no label, probs, or text")
        if self.probs is not None:
            if any(p < 0 for p in self.probs):
                raise SchemaError(f"output for {self.instance!r} has negative probs")
            if abs(sum(self.probs) - 1.0) > 1e-6:
                raise SchemaError(f"output for {self.instance!r} probs do not sum to 1")


@dataclass(frozen=True)
class ComparisonMetricSpec:
    name: str
    relative_mode: str = "absolute"

    def __post_init__(self):
        if self.name not in COMPARISON_METRICS:
            raise SchemaError(f"unknown comparison metric {self.name!r}")
        if self.relative_mode not in RELATIVE_MODES:
            raise SchemaError(f"unknown relative mode {self.relative_mode!r}")
        if self.relative_mode == "pct_error_change" and self.name != "correctness":
            raise SchemaError("pct_error_change applies to correctness only")

    @property
    def needs_base(self) -> bool:
        return self.name in METRICS_REQUIRING_BASE or self.relative_mode != "absolute"


@dataclass
class BehaviorCell:
    value: float
    relative: float | None = None
    # Set when pct_error_change is undefined (no base errors): the count of
    # model errors, rendered as "new errors: N".
    new_errors: int | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"value": self.value}
        if self.relative is not None:
            out["relative"] = self.relative
        if self.new_errors is not None:
            out["new_errors"] = self.new_errors
        return out


@dataclass
class BehaviorRow:
    key: str
    per_model: dict[str, BehaviorCell]
    count: int

    def to_json(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "count": self.count,
            "per_model": {m: c.to_json() for m, c in self.per_model.items()},
        }


def default_base(selection: Iterable[str], store: ModelStore) -> str:
    """The selected model closest to its tree's root; ties go to the first id."""
    ids = sorted(set(selection))
    if not ids:
        raise ValueError("selection is empty")
    for mid in ids:
        store.require(mid)
    return min(ids, key=lambda m: (store.depth(m), m))


# --- per-instance metric evaluation -----------------------------------------

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _text_tokens(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def text_f1(prediction: str, truth: str) -> float:
    """SQuAD-style token F1 with multiset overlap."""
    pred = _text_tokens(prediction)
    gold = _text_tokens(truth)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    overlap = sum((Counter(pred) & Counter(gold)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def kl_divergence(base_probs: list[float], model_probs: list[float]) -> float:
    """KL(base || model) over epsilon-smoothed, renormalized distributions."""
    if len(base_probs) != len(model_probs):
        raise SchemaError("probability vectors have different lengths")
    zb = sum(base_probs) + KL_EPSILON * len(base_probs)
    zm = sum(model_probs) + KL_EPSILON * len(model_probs)
    total = 0.0
    for pb, pm in zip(base_probs, model_probs):
        b = (pb + KL_EPSILON) / zb
        m = (pm + KL_EPSILON) / zm
        total += b * math.log(b / m)
    return total


def _predicted_label(record: OutputRecord) -> str | None:
    if record.label is not None:
        return record.label
    if record.probs is not None:
        return str(record.probs.index(max(record.probs)))
    return None


def eval_metric(spec: ComparisonMetricSpec,
                outputs_model: dict[str, OutputRecord],
                outputs_base: dict[str, OutputRecord] | None,
                instances: list[InstanceRecord]) -> dict[str, float]:
    """Evaluate one comparison metric for every instance."""
    if spec.name in METRICS_REQUIRING_BASE and outputs_base is None:
        raise BaseRequired(f"metric {spec.name!r} requires a base model")

    values: dict[str, float] = {}
    for inst in instances:
        rec = outputs_model.get(inst.id)
        if rec is None:
            raise MissingOutput(f"no output for instance {inst.id!r}", detail=inst.id)
        base_rec = None
        if outputs_base is not None:
            base_rec = outputs_base.get(inst.id)
            if base_rec is None and spec.name in METRICS_REQUIRING_BASE:
                raise MissingOutput(
                    f"no base output for instance {inst.id!r}", detail=inst.id)

        if spec.name == "correctness":
            values[inst.id] = 1.0 if _predicted_label(rec) == inst.truth else 0.0
        elif spec.name == "confidence":
            if rec.probs is None:
                raise MissingOutput(
                    f"instance {inst.id!r} lacks probabilities", detail=inst.id)
            values[inst.id] = max(rec.probs)
        elif spec.name == "top1_change":
            values[inst.id] = 0.0 if _predicted_label(rec) == _predicted_label(base_rec) \
                else 1.0
        elif spec.name == "kl_divergence":
            if rec.probs is None or base_rec.probs is None:
                raise MissingOutput(
                    f"instance {inst.id!r} lacks probabilities", detail=inst.id)
            values[inst.id] = kl_divergence(base_rec.probs, rec.probs)
        elif spec.name == "text_f1":
            values[inst.id] = text_f1(rec.text or "", inst.truth)
        elif spec.name == "text_change":
            values[inst.id] = 0.0 if (rec.text or "") == (base_rec.text or "") else 1.0
    return values


# --- aggregation -------------------------------------------------------------

def aggregate_rows(values_per_model: dict[str, dict[str, float]],
                   instances: list[InstanceRecord],
                   group_by: str,
                   base: str,
                   relative_mode: str) -> list[BehaviorRow]:
    """Assemble Behaviors-table rows at the instance or group level.

    Group rows average the metric; pct_error_change compares group error
    counts (correctness metric) against the base.  When the base has no
    errors in a group the relative value is undefined and the cell instead
    reports the model's error count.
    """
    if relative_mode not in RELATIVE_MODES:
        raise SchemaError(f"unknown relative mode {relative_mode!r}")
    if base not in values_per_model:
        raise UnknownModel(f"base model {base!r} is not among the compared models",
                           detail=base)
    instance_ids = {inst.id for inst in instances}
    for model, values in values_per_model.items():
        if set(values) != instance_ids:
            raise MismatchedInstanceSets(
                f"model {model!r} was evaluated on a different instance set",
                detail=model)

    if group_by == "instance":
        buckets: dict[str, list[InstanceRecord]] = {inst.id: [inst] for inst in instances}
    elif group_by == "group":
        buckets = {}
        for inst in instances:
            buckets.setdefault(inst.group or "ungrouped", []).append(inst)
    else:
        raise SchemaError(f"unknown group_by {group_by!r}")

    rows: list[BehaviorRow] = []
    for key, members in buckets.items():
        per_model: dict[str, BehaviorCell] = {}
        for model, values in values_per_model.items():
            mean = sum(values[m.id] for m in members) / len(members)
            cell = BehaviorCell(value=mean)
            if relative_mode == "difference":
                base_mean = sum(values_per_model[base][m.id] for m in members) / len(members)
                cell.relative = mean - base_mean
            elif relative_mode == "pct_error_change":
                errors_model = sum(1 for m in members if values[m.id] == 0.0)
                errors_base = sum(
                    1 for m in members if values_per_model[base][m.id] == 0.0)
                if errors_base == 0:
                    cell.new_errors = errors_model
                else:
                    cell.relative = 100.0 * (errors_model - errors_base) / errors_base
            per_model[model] = cell
        rows.append(BehaviorRow(key=key, per_model=per_model, count=len(members)))
    return rows


def sort_rows(rows: list[BehaviorRow], key: tuple[str, str],
              direction: str = "desc") -> list[BehaviorRow]:
    """Stable sort by one model's absolute or relative column.

    Rows whose sort value is undefined go last regardless of direction.
    """
    model, mode = key
    if rows and model not in rows[0].per_model:
        raise UnknownModel(f"model {model!r} is not among the compared models",
                           detail=model)
    if mode not in ("absolute", "relative"):
        raise SchemaError(f"unknown sort mode {mode!r}")
    reverse = direction == "desc"

    def sort_value(row: BehaviorRow) -> float | None:
        cell = row.per_model[model]
        return cell.value if mode == "absolute" else cell.relative

    defined = [r for r in rows if sort_value(r) is not None]
    undefined = [r for r in rows if sort_value(r) is None]
    defined.sort(key=sort_value, reverse=reverse)
    return defined + undefined

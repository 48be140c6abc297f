"""Group-respecting cross-validation plans and a data-leakage auditor.

A *group* is any unit that makes samples dependent (speaker, source
recording, patient). Plans never split a group across folds, and the auditor
flags evaluation samples whose group, or content, also shows up in the data
used for training or development.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .core import TrialSet, TrialFormatError, concat_trials

CRITICAL = "critical"
ADVISORY = "advisory"


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SampleCatalog:
    """Sample ids with their group; ungrouped samples are their own group.

    ``labels`` (optional) drive stratified folds; ``contents`` (optional) are
    feature strings whose exact hash is compared across splits.
    """

    sample_ids: tuple[str, ...]
    groups: tuple[str, ...]
    labels: tuple[Any, ...] | None = None
    contents: tuple[str, ...] | None = None

    @classmethod
    def build(cls, sample_ids, groups=None, labels=None, contents=None) -> "SampleCatalog":
        ids = tuple(str(s) for s in sample_ids)
        dup = [s for s, c in Counter(ids).items() if c > 1]
        if dup:
            raise SplitError(f"duplicate sample_id {dup[0]!r}")
        if not ids:
            raise SplitError("empty catalog")
        if groups is None:
            groups = [None] * len(ids)
        grp = tuple(str(g) if g is not None else f"__sample__:{s}" for s, g in zip(ids, groups))
        for name, seq in (("groups", groups), ("labels", labels), ("contents", contents)):
            if seq is not None and len(seq) != len(ids):
                raise SplitError(f"{name} has length {len(seq)}, expected {len(ids)}")
        return cls(ids, grp,
                   None if labels is None else tuple(labels),
                   None if contents is None else tuple(str(c) for c in contents))

    @classmethod
    def from_trials(cls, trials: TrialSet) -> "SampleCatalog":
        return cls.build(trials.sample_ids,
                         None if trials.groups is None else list(trials.groups),
                         None if trials.labels is None else [int(x) for x in trials.labels])

    def __len__(self) -> int:
        return len(self.sample_ids)

    def group_of(self) -> dict[str, str]:
        return dict(zip(self.sample_ids, self.groups))

    def subset(self, ids: Iterable[str]) -> "SampleCatalog":
        keep = set(ids)
        rows = [i for i, s in enumerate(self.sample_ids) if s in keep]

        def pick(seq):
            return None if seq is None else [seq[i] for i in rows]

        return SampleCatalog.build([self.sample_ids[i] for i in rows],
                                   pick(self.groups), pick(self.labels), pick(self.contents))


def load_catalog(path: str | Path) -> SampleCatalog:
    """Catalog from JSONL (``id``, ``group``?, ``label``?, ``content``?) or CSV."""
    path = Path(path)
    if not path.exists():
        raise SplitError(f"{path}: no such file")
    rows: list[dict] = []
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append({k: v for k, v in rec.items() if v not in (None, "")})
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SplitError(f"{path}:{lineno}: malformed row ({exc.msg})") from None
                if "id" not in obj:
                    if "num_classes" in obj and not rows:
                        continue
                    raise SplitError(f"{path}:{lineno}: malformed row (missing 'id')")
                rows.append(obj)
    if not rows:
        raise SplitError(f"{path}: empty catalog")
    ids = [str(r["id"]) for r in rows]
    groups = [r.get("group") for r in rows]
    labels = [r.get("label") for r in rows]
    contents = [r.get("content") for r in rows]
    return SampleCatalog.build(
        ids, groups,
        labels if all(x is not None for x in labels) else None,
        contents if all(x is not None for x in contents) else None,
    )


@dataclass(frozen=True)
class FoldPlan:
    """``assignment`` maps sample id to fold, in catalog order.

    For nested plans, ``nested[f]`` partitions every sample outside fold ``f``.
    """

    k: int
    assignment: Mapping[str, int]
    nested: tuple["FoldPlan", ...] | None = None

    def fold(self, f: int) -> list[str]:
        return [s for s, a in self.assignment.items() if a == f]

    def folds(self) -> list[list[str]]:
        return [self.fold(f) for f in range(self.k)]

    def sizes(self) -> list[int]:
        counts = Counter(self.assignment.values())
        return [counts.get(f, 0) for f in range(self.k)]

    def train_eval(self, f: int) -> tuple[list[str], list[str]]:
        """(training ids, held-out ids) for outer fold ``f``."""
        return ([s for s, a in self.assignment.items() if a != f], self.fold(f))

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.k,
            "folds": dict(self.assignment),
            "nested": [p.to_dict() for p in self.nested] if self.nested else [],
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "FoldPlan":
        try:
            nested = tuple(cls.from_dict(p) for p in obj.get("nested") or [])
            return cls(int(obj["K"]), {str(s): int(f) for s, f in obj["folds"].items()},
                       nested or None)
        except (KeyError, TypeError, ValueError) as exc:
            raise SplitError(f"malformed fold plan: {exc}") from None


def check_plan(plan: FoldPlan, catalog: SampleCatalog) -> None:
    """Raise :class:`SplitError` unless ``plan`` is a valid group-atomic partition."""
    if list(plan.assignment) != list(catalog.sample_ids):
        missing = set(catalog.sample_ids) - set(plan.assignment)
        extra = set(plan.assignment) - set(catalog.sample_ids)
        if missing or extra:
            raise SplitError(f"plan does not cover the catalog (missing {sorted(missing)[:3]}, "
                             f"extra {sorted(extra)[:3]})")
    if any(not 0 <= f < plan.k for f in plan.assignment.values()):
        raise SplitError("fold index out of range")
    if 0 in plan.sizes():
        raise SplitError("empty fold")
    group_fold: dict[str, int] = {}
    for sid, grp in zip(catalog.sample_ids, catalog.groups):
        f = plan.assignment[sid]
        if group_fold.setdefault(grp, f) != f:
            raise SplitError(f"group {grp!r} spans folds {group_fold[grp]} and {f}")
    if plan.nested:
        if len(plan.nested) != plan.k:
            raise SplitError("need one inner plan per outer fold")
        for f, inner in enumerate(plan.nested):
            rest, _ = plan.train_eval(f)
            check_plan(inner, catalog.subset(rest))


def _group_table(catalog: SampleCatalog) -> tuple[list[str], dict[str, list[str]]]:
    members: dict[str, list[str]] = {}
    for sid, grp in zip(catalog.sample_ids, catalog.groups):
        members.setdefault(grp, []).append(sid)
    return list(members), members


def make_folds(
    catalog: SampleCatalog, k: int, seed: int = 0, *, stratify: bool = False
) -> FoldPlan:
    """Split ``catalog`` into ``k`` group-atomic folds of balanced size.

    Groups go largest first into the currently smallest fold (lowest index on
    ties); the seed only shuffles the order of equal-size groups. With
    ``stratify`` the target fold is instead the one that keeps per-class
    counts closest to an even share, which is best effort: group atomicity
    always wins.
    """
    if k < 2:
        raise SplitError(f"need at least 2 folds, got {k}")
    names, members = _group_table(catalog)
    if len(names) < k:
        raise SplitError(f"{len(names)} groups cannot fill {k} folds")
    if stratify and catalog.labels is None:
        raise SplitError("stratified folds need labels in the catalog")

    rng = np.random.default_rng(seed)
    shuffled = [names[i] for i in rng.permutation(len(names))]
    order = sorted(shuffled, key=lambda g: -len(members[g]))  # stable: ties keep shuffle order

    sizes = [0] * k
    fold_of_group: dict[str, int] = {}
    if stratify:
        label_of = dict(zip(catalog.sample_ids, catalog.labels))
        classes = sorted({str(v) for v in catalog.labels})
        cidx = {c: i for i, c in enumerate(classes)}
        totals = np.zeros(len(classes))
        for v in catalog.labels:
            totals[cidx[str(v)]] += 1
        target = totals / k
        fold_counts = np.zeros((k, len(classes)))
    for g in order:
        empty = [f for f in range(k) if sizes[f] == 0]
        remaining = len(order) - len(fold_of_group)
        # keep enough groups to fill every empty fold
        candidates = empty if empty and remaining <= len(empty) else range(k)
        if stratify:
            gc = np.zeros(len(classes))
            for sid in members[g]:
                gc[cidx[str(label_of[sid])]] += 1

            def badness(f):
                after = fold_counts.copy()
                after[f] += gc
                return (float(np.sum((after - target) ** 2)), sizes[f], f)

            best = min(candidates, key=badness)
            fold_counts[best] += gc
        else:
            best = min(candidates, key=lambda f: (sizes[f], f))
        fold_of_group[g] = best
        sizes[best] += len(members[g])

    assignment = {sid: fold_of_group[grp] for sid, grp in zip(catalog.sample_ids, catalog.groups)}
    return FoldPlan(k, assignment)


def make_nested_folds(
    catalog: SampleCatalog, k_outer: int, k_inner: int, seed: int = 0, *, stratify: bool = False
) -> FoldPlan:
    """Outer plan plus, per outer fold, an inner plan over the other folds."""
    outer = make_folds(catalog, k_outer, seed, stratify=stratify)
    inner = []
    for f in range(k_outer):
        rest, _ = outer.train_eval(f)
        try:
            sub_seed = int(np.random.SeedSequence([seed, f]).generate_state(1, np.uint64)[0])
            inner.append(make_folds(catalog.subset(rest), k_inner, sub_seed, stratify=stratify))
        except SplitError as exc:
            raise SplitError(f"outer fold {f}: {exc}") from None
    return FoldPlan(k_outer, outer.assignment, tuple(inner))


def save_plan(plan: FoldPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_plan(path: str | Path) -> FoldPlan:
    with open(path, encoding="utf-8") as fh:
        return FoldPlan.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# auditing

@dataclass(frozen=True)
class Violation:
    kind: str
    severity: str
    sample_ids: tuple[str, ...]
    groups: tuple[str, ...]
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "severity": self.severity,
                "sample_ids": list(self.sample_ids), "groups": list(self.groups),
                "message": self.message}


@dataclass(frozen=True)
class AuditReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def has_critical(self) -> bool:
        return any(v.severity == CRITICAL for v in self.violations)

    def summary(self) -> dict[str, Any]:
        return {
            "total": len(self.violations),
            "by_severity": dict(sorted(Counter(v.severity for v in self.violations).items())),
            "by_kind": dict(sorted(Counter(v.kind for v in self.violations).items())),
        }

    def to_dict(self) -> dict[str, Any]:
        return {"violations": [v.to_dict() for v in self.violations], "summary": self.summary()}

    def table(self) -> str:
        if not self.violations:
            return "no violations"
        lines = [f"{'severity':<9} {'kind':<17} {'groups':<20} samples"]
        for v in self.violations:
            grp = ",".join(v.groups)[:20]
            ids = ",".join(v.sample_ids[:5]) + (" ..." if len(v.sample_ids) > 5 else "")
            lines.append(f"{v.severity:<9} {v.kind:<17} {grp:<20} {ids}")
        return "\n".join(lines)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def audit(
    train: Iterable[str],
    dev: Iterable[str],
    eval: Iterable[str],
    catalog: SampleCatalog,
) -> AuditReport:
    """Check a train/dev/eval split for leaks into the evaluation set.

    Critical: an eval sample also in train or dev (``sample_overlap``); an eval
    sample sharing its group with a different train/dev sample
    (``group_overlap``); identical content across eval and train/dev
    (``duplicate_content``, only when the catalog carries contents).
    Advisory: dev shares groups with train while eval does not
    (``criteria_mismatch``), so dev results mislead development decisions.
    """
    sets = {"train": list(train), "dev": list(dev), "eval": list(eval)}
    group_of = catalog.group_of()
    for name, ids in sets.items():
        unknown = [s for s in ids if s not in group_of]
        if unknown:
            raise SplitError(f"{name} split has unknown sample id {unknown[0]!r}")

    violations: list[Violation] = []
    eval_ids = sets["eval"]
    for other in ("train", "dev"):
        other_set = set(sets[other])
        for sid in eval_ids:
            if sid in other_set:
                violations.append(Violation(
                    "sample_overlap", CRITICAL, (sid,), (group_of[sid],),
                    f"sample {sid!r} is in both eval and {other}"))

    for other in ("train", "dev"):
        by_group: dict[str, list[str]] = {}
        for sid in sets[other]:
            by_group.setdefault(group_of[sid], []).append(sid)
        leaked: dict[str, list[str]] = {}
        for sid in eval_ids:
            grp = group_of[sid]
            others = [t for t in by_group.get(grp, []) if t != sid]
            if others:
                leaked.setdefault(grp, [])
                leaked[grp] += [sid] + [t for t in others if t not in leaked[grp]]
        for grp, ids in leaked.items():
            ids = list(dict.fromkeys(ids))
            violations.append(Violation(
                "group_overlap", CRITICAL, tuple(ids), (grp,),
                f"group {grp!r} has samples in both eval and {other}"))

    if catalog.contents is not None:
        digest_of = {s: _digest(c) for s, c in zip(catalog.sample_ids, catalog.contents)}
        for other in ("train", "dev"):
            seen: dict[str, list[str]] = {}
            for sid in sets[other]:
                seen.setdefault(digest_of[sid], []).append(sid)
            for sid in eval_ids:
                dupes = [t for t in seen.get(digest_of[sid], []) if t != sid]
                if dupes:
                    violations.append(Violation(
                        "duplicate_content", CRITICAL, (sid, *dupes),
                        tuple(dict.fromkeys(group_of[t] for t in (sid, *dupes))),
                        f"eval sample {sid!r} has identical content to {other} sample(s)"))

    train_groups = {group_of[s] for s in sets["train"]}
    dev_shared = sorted({group_of[s] for s in sets["dev"]} & train_groups)
    eval_shared = {group_of[s] for s in eval_ids} & train_groups
    if dev_shared and not eval_shared:
        violations.append(Violation(
            "criteria_mismatch", ADVISORY,
            tuple(s for s in sets["dev"] if group_of[s] in set(dev_shared)), tuple(dev_shared),
            "dev shares groups with train but eval does not; dev results may mislead"))
    return AuditReport(tuple(violations))


def audit_plan(plan: FoldPlan, catalog: SampleCatalog) -> AuditReport:
    """Audit every fold as eval against the remaining folds as train."""
    found: list[Violation] = []
    for f in range(plan.k):
        rest, held = plan.train_eval(f)
        found += audit(rest, [], held, catalog).violations
    if plan.nested:
        for f, inner in enumerate(plan.nested):
            rest, held = plan.train_eval(f)
            # the inner loop must never see the outer hold-out
            found += audit(list(inner.assignment), [], held, catalog).violations
            found += audit_plan(inner, catalog.subset(rest)).violations
    return AuditReport(tuple(found))


def pooled_outputs(fold_outputs: Sequence[TrialSet], plan: FoldPlan) -> TrialSet:
    """Stack per-fold hold-out outputs into one set, in plan (catalog) order.

    ``fold_outputs[f]`` must only score samples of fold ``f``; together they
    must score every planned sample exactly once.
    """
    if len(fold_outputs) != plan.k:
        raise SplitError(f"expected {plan.k} fold outputs, got {len(fold_outputs)}")
    where: dict[str, tuple[int, int]] = {}
    for f, part in enumerate(fold_outputs):
        for n, sid in enumerate(part.sample_ids):
            sid = str(sid)
            if sid in where:
                raise SplitError(f"sample {sid!r} scored more than once")
            if sid not in plan.assignment:
                raise SplitError(f"sample {sid!r} is not in the plan")
            if plan.assignment[sid] != f:
                raise SplitError(f"sample {sid!r} belongs to fold {plan.assignment[sid]}, "
                                 f"not fold {f} (scored by a model trained on it)")
            where[sid] = (f, n)
    missing = [s for s in plan.assignment if s not in where]
    if missing:
        raise SplitError(f"no output for sample {missing[0]!r}"
                         + (f" and {len(missing) - 1} more" if len(missing) > 1 else ""))
    try:
        stacked = concat_trials(list(fold_outputs))
    except TrialFormatError as exc:
        raise SplitError(str(exc)) from None
    offsets = np.cumsum([0] + [len(p) for p in fold_outputs])
    order = [offsets[where[s][0]] + where[s][1] for s in plan.assignment]
    return stacked.take(order)

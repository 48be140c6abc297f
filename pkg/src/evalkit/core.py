"""Trial containers, cost matrices, priors and file ingestion.

Every container is immutable once built: the numpy arrays they hold are
flagged read-only, so the same object can be shared freely between threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

POSTERIOR_TOL = 1e-6
PRIOR_TOL = 1e-9
# rows closer than this to unit sum are already normalized; keeps reloads idempotent
_RENORM_SKIP = 1e-12


class TrialFormatError(ValueError):
    """Raised when a trial file or trial data violates the data model."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _check_ids(ids: Sequence[str]) -> np.ndarray:
    seen: set[str] = set()
    for sid in ids:
        if sid in seen:
            raise TrialFormatError(f"duplicate sample_id {sid!r}")
        seen.add(sid)
    return np.asarray(list(ids), dtype=str)


def _normalize_posteriors(post: np.ndarray) -> np.ndarray:
    if post.ndim != 2:
        raise TrialFormatError("posteriors must be an N x K matrix")
    if not np.all(np.isfinite(post)):
        raise TrialFormatError("posteriors contain non-finite values")
    if np.any(post < 0.0) or np.any(post > 1.0 + POSTERIOR_TOL):
        raise TrialFormatError("posterior entries must lie in [0, 1]")
    sums = post.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > POSTERIOR_TOL)
    if bad.size:
        raise TrialFormatError(
            f"posterior row does not sum to 1 (row {int(bad[0])}, sum={sums[bad[0]]!r})"
        )
    fix = np.abs(sums - 1.0) > _RENORM_SKIP
    if np.any(fix):
        post = post.copy()
        post[fix] = post[fix] / sums[fix, None]
    return post


@dataclass(frozen=True, eq=False)
class TrialSet:
    """Per-sample labels and system outputs for one evaluation set.

    ``labels`` may be ``None`` only for regression-only sets, which carry
    ``predictions`` and ``targets`` instead. ``class_names`` records the
    string-to-index mapping when the source file used string labels.
    """

    sample_ids: np.ndarray
    labels: np.ndarray | None
    num_classes: int | None
    posteriors: np.ndarray | None = None
    decisions: np.ndarray | None = None
    predictions: np.ndarray | None = None
    targets: np.ndarray | None = None
    groups: np.ndarray | None = None
    class_names: tuple[str, ...] | None = None

    @classmethod
    def build(
        cls,
        sample_ids: Sequence[str],
        labels: Sequence[int] | None = None,
        *,
        num_classes: int | None = None,
        posteriors: Any = None,
        decisions: Sequence[int] | None = None,
        predictions: Sequence[float] | None = None,
        targets: Sequence[float] | None = None,
        groups: Sequence[str] | None = None,
        class_names: Sequence[str] | None = None,
    ) -> "TrialSet":
        """Validate raw per-sample data and return a read-only trial set."""
        ids = _check_ids([str(s) for s in sample_ids])
        n = len(ids)
        if n < 1:
            raise TrialFormatError("a trial set needs at least one sample")

        def per_sample(name, values, dtype):
            if values is None:
                return None
            arr = np.asarray(values, dtype=dtype)
            if arr.shape[:1] != (n,):
                raise TrialFormatError(f"{name} has length {len(arr)}, expected {n}")
            return arr.copy()

        post = None
        if posteriors is not None:
            post = np.asarray(posteriors, dtype=float)
            if post.ndim != 2 or post.shape[0] != n:
                raise TrialFormatError(f"posteriors must have shape ({n}, K)")
            post = _normalize_posteriors(post.copy())
        lab = per_sample("labels", labels, np.int64)
        dec = per_sample("decisions", decisions, np.int64)
        pred = per_sample("predictions", predictions, float)
        targ = per_sample("targets", targets, float)
        grp = per_sample("groups", None if groups is None else [str(g) for g in groups], str)

        if post is None and dec is None and pred is None:
            raise TrialFormatError("need at least one of posteriors, decisions, predictions")
        if lab is None and (post is not None or dec is not None):
            raise TrialFormatError("labels are required for classification outputs")
        if targ is not None and pred is None:
            raise TrialFormatError("targets given without predictions")

        k = num_classes
        if lab is not None:
            if k is None:
                if post is not None:
                    k = post.shape[1]
                elif class_names is not None:
                    k = len(class_names)
                else:
                    k = int(max(lab.max(), dec.max() if dec is not None else 0)) + 1
            if k < 1:
                raise TrialFormatError("num_classes must be a positive integer")
            if post is not None and post.shape[1] != k:
                raise TrialFormatError(f"posteriors have {post.shape[1]} columns but K={k}")
            for name, arr in (("label", lab), ("decision", dec)):
                if arr is not None and (arr.min() < 0 or arr.max() >= k):
                    raise TrialFormatError(f"{name} out of range for K={k}")
        elif k is not None:
            raise TrialFormatError("num_classes given for a set without labels")

        names = None
        if class_names is not None:
            names = tuple(str(c) for c in class_names)
            if len(names) != k:
                raise TrialFormatError(f"{len(names)} class names for K={k}")

        return cls(
            sample_ids=_frozen(ids),
            labels=None if lab is None else _frozen(lab),
            num_classes=k,
            posteriors=None if post is None else _frozen(post),
            decisions=None if dec is None else _frozen(dec),
            predictions=None if pred is None else _frozen(pred),
            targets=None if targ is None else _frozen(targ),
            groups=None if grp is None else _frozen(grp),
            class_names=names,
        )

    def __len__(self) -> int:
        return len(self.sample_ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrialSet):
            return NotImplemented
        if self.num_classes != other.num_classes or self.class_names != other.class_names:
            return False
        for name in ("sample_ids", "labels", "posteriors", "decisions",
                     "predictions", "targets", "groups"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    __hash__ = None  # type: ignore[assignment]

    def take(self, indices: Iterable[int]) -> "TrialSet":
        """Return the rows at ``indices`` without re-validation.

        Repeated indices are allowed (bootstrap replicates), so the result may
        hold duplicate sample ids; it is meant for metric evaluation only.
        """
        idx = np.asarray(indices, dtype=np.intp)

        def pick(a):
            return None if a is None else _frozen(a[idx])

        return TrialSet(
            sample_ids=pick(self.sample_ids),
            labels=pick(self.labels),
            num_classes=self.num_classes,
            posteriors=pick(self.posteriors),
            decisions=pick(self.decisions),
            predictions=pick(self.predictions),
            targets=pick(self.targets),
            groups=pick(self.groups),
            class_names=self.class_names,
        )

    def replace_decisions(self, decisions: Sequence[int]) -> "TrialSet":
        """Same trials with ``decisions`` swapped in (e.g. Bayes decisions)."""
        dec = np.asarray(decisions, dtype=np.int64)
        if dec.shape != (len(self),):
            raise TrialFormatError(f"decisions have length {dec.size}, expected {len(self)}")
        if self.labels is None or dec.min() < 0 or dec.max() >= self.num_classes:
            raise TrialFormatError(f"decision out of range for K={self.num_classes}")
        return replace(self, decisions=_frozen(dec.copy()))


@dataclass(frozen=True, eq=False)
class SequenceTrialSet:
    """Reference and hypothesis token sequences, one pair per sample."""

    sample_ids: np.ndarray
    references: tuple[tuple[str, ...], ...]
    hypotheses: tuple[tuple[str, ...], ...]
    groups: np.ndarray | None = None

    @classmethod
    def build(cls, sample_ids, references, hypotheses, groups=None) -> "SequenceTrialSet":
        ids = _check_ids([str(s) for s in sample_ids])
        n = len(ids)
        if n < 1:
            raise TrialFormatError("a trial set needs at least one sample")
        refs = tuple(tuple(str(t) for t in r) for r in references)
        hyps = tuple(tuple(str(t) for t in h) for h in hypotheses)
        if len(refs) != n or len(hyps) != n:
            raise TrialFormatError("references and hypotheses must match sample_ids in length")
        grp = None
        if groups is not None:
            grp = np.asarray([str(g) for g in groups], dtype=str)
            if len(grp) != n:
                raise TrialFormatError("groups must match sample_ids in length")
            grp = _frozen(grp)
        return cls(_frozen(ids), refs, hyps, grp)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def take(self, indices: Iterable[int]) -> "SequenceTrialSet":
        idx = [int(i) for i in indices]
        return SequenceTrialSet(
            sample_ids=_frozen(self.sample_ids[idx]),
            references=tuple(self.references[i] for i in idx),
            hypotheses=tuple(self.hypotheses[i] for i in idx),
            groups=None if self.groups is None else _frozen(self.groups[idx]),
        )


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """``costs[i, j]``: cost of deciding class ``j`` when the truth is ``i``."""

    costs: np.ndarray

    def __post_init__(self):
        c = np.array(self.costs, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ValueError(f"cost matrix must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("cost entries must be finite and non-negative")
        if np.any(np.diag(c) != 0):
            raise ValueError("cost matrix diagonal must be zero")
        if not np.any(c > 0):
            raise ValueError("cost matrix needs at least one positive off-diagonal entry")
        object.__setattr__(self, "costs", _frozen(c))

    @property
    def num_classes(self) -> int:
        return self.costs.shape[0]

    @classmethod
    def zero_one(cls, k: int) -> "CostMatrix":
        """All errors cost 1."""
        return cls(np.ones((k, k)) - np.eye(k))

    def scaled(self, factor: float) -> "CostMatrix":
        return CostMatrix(self.costs * factor)

    def __eq__(self, other):
        return isinstance(other, CostMatrix) and np.array_equal(self.costs, other.costs)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Priors:
    p: np.ndarray
    source: str = "user-specified"

    def __post_init__(self):
        if self.source not in ("empirical", "user-specified"):
            raise ValueError(f"unknown priors source {self.source!r}")
        p = np.array(self.p, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("priors must be a non-empty vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("priors must be finite and non-negative")
        if abs(p.sum() - 1.0) > PRIOR_TOL:
            raise ValueError(f"priors must sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "p", _frozen(p))

    def __len__(self) -> int:
        return self.p.size

    def __eq__(self, other):
        return (isinstance(other, Priors) and self.source == other.source
                and np.array_equal(self.p, other.p))

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def uniform(cls, k: int) -> "Priors":
        return cls(np.full(k, 1.0 / k))


def empirical_priors(trials: TrialSet) -> Priors:
    """Per-class label frequencies of ``trials``."""
    if trials.labels is None:
        raise TrialFormatError("empirical priors need labels")
    counts = np.bincount(trials.labels, minlength=trials.num_classes)
    return Priors(counts / counts.sum(), source="empirical")


# --------------------------------------------------------------------------
# file ingestion

def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "jsonl"):
            raise TrialFormatError(f"unknown trial format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "jsonl"


def _read_jsonl(path: Path) -> tuple[dict, list[tuple[int, dict]]]:
    header: dict = {}
    rows: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrialFormatError(f"{path}:{lineno}: malformed row ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise TrialFormatError(f"{path}:{lineno}: malformed row (not an object)")
            if "id" not in obj and "num_classes" in obj and not rows and not header:
                header = obj
                continue
            rows.append((lineno, obj))
    return header, rows


def _cell(value: str | None):
    return None if value is None or value.strip() == "" else value.strip()


def _read_csv(path: Path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "id" not in cols:
            raise TrialFormatError(f"{path}:1: header must contain an 'id' column")
        post_cols = sorted(
            (c for c in cols if c.startswith("posterior_")),
            key=lambda c: int(c.split("_", 1)[1]),
        )
        if [int(c.split("_", 1)[1]) for c in post_cols] != list(range(len(post_cols))):
            raise TrialFormatError(f"{path}:1: posterior columns must be posterior_0..posterior_{{K-1}}")
        for lineno, rec in enumerate(reader, start=2):
            if None in rec:
                raise TrialFormatError(f"{path}:{lineno}: malformed row (too many cells)")
            obj: dict[str, Any] = {}
            try:
                for key in ("id", "label", "decision", "group"):
                    val = _cell(rec.get(key))
                    if val is not None:
                        obj[key] = val
                for key in ("prediction", "target"):
                    val = _cell(rec.get(key))
                    if val is not None:
                        obj[key] = float(val)
                cells = [_cell(rec.get(c)) for c in post_cols]
                if any(c is not None for c in cells):
                    if any(c is None for c in cells):
                        raise ValueError("partially empty posterior")
                    obj["posterior"] = [float(c) for c in cells]
            except ValueError as exc:
                raise TrialFormatError(f"{path}:{lineno}: malformed row ({exc})") from None
            rows.append((lineno, obj))
    return rows


def _as_int_label(value, where: str):
    if isinstance(value, bool):
        raise TrialFormatError(f"{where}: boolean class label")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            return value
    raise TrialFormatError(f"{where}: class label must be int or str, got {value!r}")


def load_trials(
    path: str | Path,
    format: str | None = None,
    *,
    num_classes: int | None = None,
    class_names: Sequence[str] | None = None,
) -> TrialSet:
    """Read and validate a trial file.

    ``format`` is ``"jsonl"`` or ``"csv"`` and defaults from the file suffix.
    An explicit ``num_classes`` (argument, or a JSONL header line such as
    ``{"num_classes": 3}``) wins over inference; string labels are mapped to
    indices in sorted order unless ``class_names`` fixes the order.
    """
    path = Path(path)
    if not path.exists():
        raise TrialFormatError(f"{path}: no such file")
    fmt = _infer_format(path, format)
    header: dict = {}
    if fmt == "jsonl":
        header, rows = _read_jsonl(path)
    else:
        rows = _read_csv(path)
    if not rows:
        raise TrialFormatError(f"{path}: no trials")

    if num_classes is None and "num_classes" in header:
        num_classes = int(header["num_classes"])
    if class_names is None and "class_names" in header:
        class_names = list(header["class_names"])

    ids, labels, decisions, posts, preds, targs, groups = [], [], [], [], [], [], []
    seen: dict[str, int] = {}
    for lineno, obj in rows:
        where = f"{path}:{lineno}"
        if "id" not in obj:
            raise TrialFormatError(f"{where}: malformed row (missing 'id')")
        sid = str(obj["id"])
        if sid in seen:
            raise TrialFormatError(f"{where}: duplicate sample_id {sid!r} (first on line {seen[sid]})")
        seen[sid] = lineno
        ids.append(sid)
        labels.append(_as_int_label(obj["label"], where) if obj.get("label") is not None else None)
        decisions.append(_as_int_label(obj["decision"], where) if obj.get("decision") is not None else None)
        post = obj.get("posterior")
        if post is not None:
            if not isinstance(post, list) or not post:
                raise TrialFormatError(f"{where}: malformed row (posterior must be a list)")
            try:
                row = np.asarray(post, dtype=float)
            except (TypeError, ValueError):
                raise TrialFormatError(f"{where}: malformed row (non-numeric posterior)") from None
            if np.any(row < 0) or np.any(row > 1.0 + POSTERIOR_TOL) or not np.all(np.isfinite(row)):
                raise TrialFormatError(f"{where}: posterior entries must lie in [0, 1]")
            if abs(row.sum() - 1.0) > POSTERIOR_TOL:
                raise TrialFormatError(f"{where}: posterior row does not sum to 1 (sum={row.sum()!r})")
            post = row
        posts.append(post)
        preds.append(obj.get("prediction"))
        targs.append(obj.get("target"))
        g = obj.get("group")
        groups.append(None if g is None else str(g))

    def column(values, name):
        present = [v is not None for v in values]
        if not any(present):
            return None
        if not all(present):
            missing = rows[present.index(False)][0]
            raise TrialFormatError(f"{path}:{missing}: missing '{name}' (present on other rows)")
        return values

    labels = column(labels, "label")
    decisions = column(decisions, "decision")
    posts = column(posts, "posterior")
    preds = column(preds, "prediction")
    targs = column(targs, "target")
    if any(g is not None for g in groups):
        # ungrouped samples form their own group
        groups = [g if g is not None else f"__sample__:{sid}" for g, sid in zip(groups, ids)]
    else:
        groups = None

    if posts is not None:
        widths = {len(p) for p in posts}
        if len(widths) != 1:
            raise TrialFormatError(f"{path}: posterior rows have inconsistent lengths {sorted(widths)}")

    # map string labels
    raw = [v for v in (labels or []) + (decisions or []) if v is not None]
    kinds = {isinstance(v, str) for v in raw}
    if kinds == {True, False}:
        raise TrialFormatError(f"{path}: mixed integer and string class labels")
    if kinds == {True}:
        names = list(class_names) if class_names is not None else sorted(set(raw))
        index = {name: i for i, name in enumerate(names)}
        unknown = sorted(set(raw) - set(index))
        if unknown:
            raise TrialFormatError(f"{path}: label {unknown[0]!r} not among class names")
        labels = [index[v] for v in labels] if labels is not None else None
        decisions = [index[v] for v in decisions] if decisions is not None else None
        class_names = names
        if num_classes is None:
            num_classes = len(names)

    def label_range(values, name):
        if values is None:
            return
        k = num_classes if num_classes is not None else (len(posts[0]) if posts is not None else None)
        for (lineno, _), v in zip(rows, values):
            if v < 0 or (k is not None and v >= k):
                raise TrialFormatError(f"{path}:{lineno}: {name} {v} out of range for K={k}")

    label_range(labels, "label")
    label_range(decisions, "decision")

    try:
        return TrialSet.build(
            ids, labels, num_classes=num_classes,
            posteriors=None if posts is None else np.vstack(posts),
            decisions=decisions, predictions=preds, targets=targs,
            groups=groups, class_names=class_names,
        )
    except TrialFormatError as exc:
        raise TrialFormatError(f"{path}: {exc}") from None


def dump_trials(trials: TrialSet, path: str | Path) -> None:
    """Write ``trials`` as JSONL such that :func:`load_trials` reproduces it."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        if trials.num_classes is not None:
            header: dict[str, Any] = {"num_classes": trials.num_classes}
            if trials.class_names is not None:
                header["class_names"] = list(trials.class_names)
            fh.write(json.dumps(header) + "\n")
        for n, sid in enumerate(trials.sample_ids):
            obj: dict[str, Any] = {"id": str(sid)}
            if trials.labels is not None:
                obj["label"] = int(trials.labels[n])
            if trials.posteriors is not None:
                obj["posterior"] = [float(x) for x in trials.posteriors[n]]
            if trials.decisions is not None:
                obj["decision"] = int(trials.decisions[n])
            if trials.predictions is not None:
                obj["prediction"] = float(trials.predictions[n])
            if trials.targets is not None:
                obj["target"] = float(trials.targets[n])
            if trials.groups is not None:
                obj["group"] = str(trials.groups[n])
            fh.write(json.dumps(obj) + "\n")


def load_sequences(path: str | Path) -> SequenceTrialSet:
    """Read sequence trials: ``{"id", "ref": [...], "hyp": [...], "group"?}`` per line."""
    path = Path(path)
    if not path.exists():
        raise TrialFormatError(f"{path}: no such file")
    _, rows = _read_jsonl(path)
    if not rows:
        raise TrialFormatError(f"{path}: no trials")
    ids, refs, hyps, groups = [], [], [], []
    seen: set[str] = set()
    for lineno, obj in rows:
        where = f"{path}:{lineno}"
        if "id" not in obj or "ref" not in obj or "hyp" not in obj:
            raise TrialFormatError(f"{where}: malformed row (need 'id', 'ref' and 'hyp')")
        if not isinstance(obj["ref"], list) or not isinstance(obj["hyp"], list):
            raise TrialFormatError(f"{where}: malformed row ('ref' and 'hyp' must be lists)")
        sid = str(obj["id"])
        if sid in seen:
            raise TrialFormatError(f"{where}: duplicate sample_id {sid!r}")
        seen.add(sid)
        ids.append(sid)
        refs.append(obj["ref"])
        hyps.append(obj["hyp"])
        g = obj.get("group")
        groups.append(None if g is None else str(g))
    if any(g is not None for g in groups):
        groups = [g if g is not None else f"__sample__:{sid}" for g, sid in zip(groups, ids)]
    else:
        groups = None
    return SequenceTrialSet.build(ids, refs, hyps, groups)


def concat_trials(parts: Sequence[TrialSet]) -> TrialSet:
    """Stack trial sets that share K and carry the same output fields."""
    if not parts:
        raise TrialFormatError("nothing to concatenate")
    first = parts[0]
    for p in parts[1:]:
        if p.num_classes != first.num_classes or p.class_names != first.class_names:
            raise TrialFormatError("cannot concatenate trial sets with different classes")

    def cat(name):
        vals = [getattr(p, name) for p in parts]
        present = [v is not None for v in vals]
        if not any(present):
            return None
        if not all(present):
            raise TrialFormatError(f"field {name!r} present in some parts only")
        return np.concatenate(vals)

    return TrialSet.build(
        cat("sample_ids"), cat("labels"), num_classes=first.num_classes,
        posteriors=cat("posteriors"), decisions=cat("decisions"),
        predictions=cat("predictions"), targets=cat("targets"),
        groups=cat("groups"), class_names=first.class_names,
    )

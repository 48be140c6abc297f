"""Command-line front end: ``evalkit {metric,compare,splits,audit,pool}``.

Settings come from an optional JSON config (``--config``) overlaid by
command-line flags; flags win. Every report embeds the effective config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .bootstrap import (
    BootstrapConfig,
    BootstrapError,
    bootstrap_ci,
    bootstrap_difference,
    load_distribution,
    pool_distributions,
    save_distribution,
    verdict,
)
from .core import CostMatrix, Priors, TrialFormatError, empirical_priors, load_sequences, load_trials
from .metrics import METRIC_NAMES, SEQUENCE_METRICS, MetricError, get_metric
from .splits import (
    SplitError,
    audit,
    audit_plan,
    load_catalog,
    load_plan,
    make_folds,
    make_nested_folds,
    save_plan,
)

DEFAULTS: dict[str, Any] = {
    "metric": "accuracy",
    "costs": None,
    "priors": "empirical",
    "n_boot": 1000,
    "level": 0.95,
    "seed": 0,
    "group_by": False,
    "format": "text",
    "input_format": None,
    "num_classes": None,
    "workers": 1,
}


class ConfigError(ValueError):
    pass


def _parse_json_arg(value, what):
    if value is None or not isinstance(value, str):
        return value
    try:
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc.msg}") from None


def effective_config(args: argparse.Namespace, keys: list[str]) -> dict[str, Any]:
    cfg: dict[str, Any] = {k: DEFAULTS.get(k) for k in keys}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(keys))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg.update(loaded)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    return cfg


def _cost_priors(cfg: dict[str, Any], k: int):
    cost = None
    costs = _parse_json_arg(cfg.get("costs"), "--costs")
    if costs is not None:
        try:
            cost = CostMatrix(costs)
        except ValueError as exc:
            raise ConfigError(f"invalid cost matrix: {exc}") from None
        if cost.num_classes != k:
            raise ConfigError(f"cost matrix is {cost.num_classes}x{cost.num_classes} but data has K={k}")
    priors = None
    spec = cfg.get("priors", "empirical")
    if spec not in (None, "empirical"):
        values = _parse_json_arg(spec, "--priors")
        try:
            priors = Priors(values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid priors: {exc}") from None
        if len(priors) != k:
            raise ConfigError(f"priors have {len(priors)} entries but data has K={k}")
    return cost, priors


def _load(path: str, cfg: dict[str, Any], metric: str):
    if metric in SEQUENCE_METRICS:
        return load_sequences(path)
    return load_trials(path, cfg.get("input_format"), num_classes=cfg.get("num_classes"))


def _bootstrap_config(cfg: dict[str, Any]) -> BootstrapConfig:
    try:
        return BootstrapConfig(int(cfg["n_boot"]), float(cfg["level"]), int(cfg["seed"]),
                               bool(cfg["group_by"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _reference(trials, cfg, name, cost, priors) -> dict[str, Any]:
    """Naive-system reference and the normalized companion metric, where defined."""
    if name in SEQUENCE_METRICS:
        return {}
    ref: dict[str, Any] = {}
    if trials.labels is not None:
        emp = empirical_priors(trials)
        ref["class_priors"] = emp.p.tolist()
        ref["majority_class_frequency"] = float(emp.p.max())
    primary = get_metric(name, cost=cost, priors=priors)
    try:
        res = primary(trials)
        for key in ("naive_accuracy", "naive_cost", "naive_decision", "naive_score", "naive_error"):
            if key in res.components:
                ref[key] = res.components[key]
        if primary.normalized is not None:
            norm = get_metric(primary.normalized, cost=cost, priors=priors)(trials)
            ref["normalized"] = {"metric": primary.normalized, "value": norm.value,
                                 "components": norm.components}
            for key in ("naive_cost", "naive_decision", "naive_score"):
                if key in norm.components:
                    ref.setdefault(key, norm.components[key])
    except MetricError as exc:
        ref["unavailable"] = str(exc)
    return ref


def _ci_dict(ci) -> dict[str, Any]:
    return {"low": ci.low, "high": ci.high, "level": ci.level, "n_replicates": ci.n_replicates}


def _emit(report: dict[str, Any], text: str, cfg: dict[str, Any], out: str | None) -> None:
    blob = json.dumps(report, sort_keys=True, indent=1) + "\n"
    if out:
        Path(out).write_text(blob, encoding="utf-8")
    if cfg.get("format") == "json":
        sys.stdout.write(blob)
    else:
        print(text)


def _class_mapping(trials) -> dict[str, int] | None:
    names = getattr(trials, "class_names", None)
    return None if names is None else {n: i for i, n in enumerate(names)}


METRIC_KEYS = ["input", "metric", "costs", "priors", "n_boot", "level", "seed", "group_by",
               "format", "input_format", "num_classes", "out", "dist_out", "workers"]


def cmd_metric(args: argparse.Namespace) -> int:
    cfg = effective_config(args, METRIC_KEYS)
    if not cfg.get("input"):
        raise ConfigError("--input is required")
    name = cfg["metric"]
    if name not in METRIC_NAMES:
        raise ConfigError(f"unknown metric {name!r}; choose from {', '.join(METRIC_NAMES)}")
    trials = _load(cfg["input"], cfg, name)
    k = getattr(trials, "num_classes", None)
    cost, priors = _cost_priors(cfg, k) if k else (None, None)
    bcfg = _bootstrap_config(cfg)
    metric = get_metric(name, cost=cost, priors=priors)
    point = metric(trials)
    dist, ci = bootstrap_ci(trials, metric, bcfg, workers=int(cfg["workers"]))
    if cfg.get("dist_out"):
        save_distribution(dist, cfg["dist_out"])
    ref = _reference(trials, cfg, name, cost, priors)
    report = {
        "command": "metric",
        "version": __version__,
        "config": cfg,
        "metric": name,
        "metric_params": metric.params,
        "n_samples": len(trials),
        "class_mapping": _class_mapping(trials),
        "point_estimate": point.value,
        "components": point.components,
        "ci": _ci_dict(ci),
        "distribution": dist.summary(),
        "reference": ref,
    }
    text = [f"{name}: {point.value:.6g}  {100 * ci.level:g}% CI [{ci.low:.6g}, {ci.high:.6g}]"
            f"  ({dist.values.size} replicates, {dist.n_failed} failed)"]
    if "majority_class_frequency" in ref and name == "accuracy":
        text.append(f"naive reference (majority class): {ref['majority_class_frequency']:.6g}")
    if "normalized" in ref:
        text.append(f"{ref['normalized']['metric']}: {ref['normalized']['value']:.6g} (naive system = 1)")
    for key in ("naive_cost", "naive_score", "naive_error"):
        if key in ref:
            text.append(f"naive reference ({key}): {ref[key]:.6g}")
    if report["class_mapping"]:
        text.append(f"class mapping: {report['class_mapping']}")
    _emit(report, "\n".join(text), cfg, cfg.get("out"))
    return 0


COMPARE_KEYS = METRIC_KEYS + ["input_b"]


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = effective_config(args, COMPARE_KEYS)
    if not cfg.get("input") or not cfg.get("input_b"):
        raise ConfigError("--input and --input-b are required")
    name = cfg["metric"]
    if name not in METRIC_NAMES:
        raise ConfigError(f"unknown metric {name!r}")
    a = _load(cfg["input"], cfg, name)
    b = _load(cfg["input_b"], cfg, name)
    if getattr(a, "num_classes", None) != getattr(b, "num_classes", None):
        raise ConfigError("systems A and B have different numbers of classes")
    k = getattr(a, "num_classes", None)
    cost, priors = _cost_priors(cfg, k) if k else (None, None)
    metric = get_metric(name, cost=cost, priors=priors)
    dist, ci = bootstrap_difference(a, b, metric, _bootstrap_config(cfg), workers=int(cfg["workers"]))
    if cfg.get("dist_out"):
        save_distribution(dist, cfg["dist_out"])
    v = verdict(ci, metric.higher_is_better)
    report = {
        "command": "compare",
        "version": __version__,
        "config": cfg,
        "metric": name,
        "metric_params": metric.params,
        "n_samples": len(a),
        "point_a": metric.value(a),
        "point_b": metric.value(b),
        "difference": dist.point_estimate,
        "ci": _ci_dict(ci),
        "distribution": dist.summary(),
        "significant": ci.excludes(0.0),
        "verdict": v,
    }
    text = (f"{name}: A={report['point_a']:.6g} B={report['point_b']:.6g}  "
            f"A-B={dist.point_estimate:.6g}  {100 * ci.level:g}% CI [{ci.low:.6g}, {ci.high:.6g}]\n"
            f"verdict: {v}")
    _emit(report, text, cfg, cfg.get("out"))
    return 0


SPLIT_KEYS = ["catalog", "k", "k_inner", "seed", "stratify", "out", "format"]


def cmd_splits(args: argparse.Namespace) -> int:
    cfg = effective_config(args, SPLIT_KEYS)
    if not cfg.get("catalog") or not cfg.get("k"):
        raise ConfigError("--catalog and --k are required")
    catalog = load_catalog(cfg["catalog"])
    if cfg.get("k_inner"):
        plan = make_nested_folds(catalog, int(cfg["k"]), int(cfg["k_inner"]), int(cfg["seed"] or 0),
                                 stratify=bool(cfg.get("stratify")))
    else:
        plan = make_folds(catalog, int(cfg["k"]), int(cfg["seed"] or 0),
                          stratify=bool(cfg.get("stratify")))
    if cfg.get("out"):
        save_plan(plan, cfg["out"])
    sizes = plan.sizes()
    if cfg.get("format") == "json":
        sys.stdout.write(json.dumps(plan.to_dict(), indent=1) + "\n")
    else:
        print(f"{plan.k} folds, sizes {sizes}, {len(set(catalog.groups))} groups"
              + (f", inner K={cfg['k_inner']}" if cfg.get("k_inner") else ""))
    return 0


def _read_ids(path: str | None) -> list[str]:
    if not path:
        return []
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        return [str(s) for s in json.loads(text)]
    return [line.strip() for line in text.splitlines() if line.strip()]


AUDIT_KEYS = ["catalog", "train", "dev", "eval", "plan", "out", "format"]


def cmd_audit(args: argparse.Namespace) -> int:
    cfg = effective_config(args, AUDIT_KEYS)
    if not cfg.get("catalog"):
        raise ConfigError("--catalog is required")
    catalog = load_catalog(cfg["catalog"])
    if cfg.get("plan"):
        report = audit_plan(load_plan(cfg["plan"]), catalog)
    else:
        if not cfg.get("eval"):
            raise ConfigError("--eval (or --plan) is required")
        report = audit(_read_ids(cfg.get("train")), _read_ids(cfg.get("dev")),
                       _read_ids(cfg.get("eval")), catalog)
    payload = {"command": "audit", "version": __version__, "config": cfg, **report.to_dict()}
    text = report.table()
    if report.violations and not report.has_critical:
        text += "\nwarning: advisory findings only; split accepted"
    _emit(payload, text, cfg, cfg.get("out"))
    return 1 if report.has_critical else 0


POOL_KEYS = ["dist", "out", "format"]


def cmd_pool(args: argparse.Namespace) -> int:
    cfg = effective_config(args, POOL_KEYS)
    paths = cfg.get("dist") or []
    if not paths:
        raise ConfigError("at least one --dist file is required")
    dists = [load_distribution(p) for p in paths]
    ci = pool_distributions(dists)
    report = {
        "command": "pool",
        "version": __version__,
        "config": cfg,
        "metric": dists[0].metric,
        "point_estimate": ci.point_estimate,
        "member_points": [d.point_estimate for d in dists],
        "ci": _ci_dict(ci),
    }
    text = (f"{dists[0].metric} pooled over {len(dists)} runs: {ci.point_estimate:.6g}  "
            f"{100 * ci.level:g}% CI [{ci.low:.6g}, {ci.high:.6g}]")
    _emit(report, text, cfg, cfg.get("out"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evalkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="write the JSON report here"):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help=out_help)
        p.add_argument("--format", choices=["json", "text"], help="stdout format (default text)")

    def scoring(p):
        p.add_argument("--input", help="trial file (JSONL or CSV)")
        p.add_argument("--input-format", dest="input_format", choices=["jsonl", "csv"])
        p.add_argument("--metric", help=f"one of: {', '.join(METRIC_NAMES)}")
        p.add_argument("--costs", help="cost matrix as JSON, e.g. '[[0,1],[10,0]]'")
        p.add_argument("--priors", help="'empirical' or a JSON vector")
        p.add_argument("--num-classes", dest="num_classes", type=int)
        p.add_argument("--n-boot", dest="n_boot", type=int)
        p.add_argument("--level", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--group-by", dest="group_by", action="store_true",
                       help="resample whole groups instead of samples")
        p.add_argument("--workers", type=int, help="threads for replicate evaluation")
        p.add_argument("--dist-out", dest="dist_out", help="persist the bootstrap distribution (JSON)")

    p = sub.add_parser("metric", help="metric with bootstrap confidence interval")
    common(p)
    scoring(p)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("compare", help="paired bootstrap comparison of two systems")
    common(p)
    scoring(p)
    p.add_argument("--input-b", dest="input_b", help="trial file of system B")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("splits", help="group-respecting (nested) cross-validation plan")
    common(p, "write the fold plan (JSON) here")
    p.add_argument("--catalog", help="sample catalog (JSONL or CSV with id, group, label)")
    p.add_argument("--k", type=int, help="number of (outer) folds")
    p.add_argument("--k-inner", dest="k_inner", type=int, help="inner folds for nested CV")
    p.add_argument("--seed", type=int)
    p.add_argument("--stratify", action="store_true", help="balance class labels across folds")
    p.set_defaults(func=cmd_splits)

    p = sub.add_parser("audit", help="check a split for evaluation-data leaks")
    common(p)
    p.add_argument("--catalog")
    p.add_argument("--train", help="id list (one per line, or JSON array)")
    p.add_argument("--dev")
    p.add_argument("--eval")
    p.add_argument("--plan", help="fold plan JSON to audit instead of train/dev/eval lists")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("pool", help="pool bootstrap distributions from several runs")
    common(p)
    p.add_argument("--dist", action="append", help="distribution JSON (repeatable)")
    p.set_defaults(func=cmd_pool)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrialFormatError, MetricError, BootstrapError, SplitError,
            ValueError, OSError) as exc:
        print(f"evalkit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

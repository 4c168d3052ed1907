"""Run configuration and the end-to-end stages behind the command line.

Every stage recomputes what it needs from the config (ingest, clean, split,
features), so commands can run independently and still agree with each other.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, artifacts, blend, ingest, linmod, metrics, ratingcurve
from .features import RENDITIONS, FeatureMatrix, FeatureParams, assemble
from .forest import RfParams, fit_forest
from .preprocess import iqr_filter, quartiles


class InputError(Exception):
    """Bad input files, schemas or artifacts (exit status 2)."""


class ConfigError(InputError):
    pass


DEFAULT_SWEEP = (
    {"mode": "percentile", "value": 25},
    {"mode": "percentile", "value": 50},
    {"mode": "percentile", "value": 75},
    {"mode": "fixed_mcm", "value": 200},
    {"mode": "fixed_mcm", "value": 300},
)

DEFAULTS = {
    "observations": None,
    "rating_curve": None,
    "schema": None,
    "sentinels": [-9.9],
    "iqr": {"enabled": True, "field": "water_area", "k": 1.5},
    "split": {"mode": "chronological", "fraction": 0.8, "seed": 0},
    "rendition": "full_elevation",
    "feature_params": {},
    "models": ["rf", "elasticnet", "lasso", "ridge", "blend"],
    "rf_renditions": None,
    "linear": {"lambda": None, "grid_size": 50, "cv_folds": 5, "elasticnet_alpha": 0.5},
    "rf": {},
    "blends": [{"mode": "fixed_mcm", "value": 200}],
    "sweep": list(DEFAULT_SWEEP),
    "sweep_rating_curve": True,
    "per_regime": False,
    "n_jobs": 1,
    "output_dir": "out",
}
MODEL_KINDS = ("rf", "ols", "ridge", "lasso", "elasticnet", "blend")
BLEND_MODES = ("percentile", "fixed_mcm", "rating_curve")


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_overrides(raw: dict, pairs) -> dict:
    """Apply ``key.sub=value`` strings; values parse as JSON, else stay strings."""
    raw = copy.deepcopy(raw)
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, text = pair.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part!r} is not a section")
        node[parts[-1]] = value
    return raw


def _check_blend_spec(spec, where: str) -> dict:
    if not isinstance(spec, dict) or set(spec) - {"mode", "value"}:
        raise ConfigError(f"{where}: expected {{'mode': ..., 'value': ...}}, got {spec!r}")
    mode = spec.get("mode")
    if mode not in BLEND_MODES:
        raise ConfigError(f"{where}: mode must be one of {', '.join(BLEND_MODES)}, got {mode!r}")
    value = spec.get("value")
    if mode != "rating_curve" and not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: mode {mode!r} needs a numeric value")
    if mode == "percentile" and not 0 < value < 100:
        raise ConfigError(f"{where}: percentile must lie in (0, 100)")
    return {"mode": mode, "value": value}


@dataclass
class RunConfig:
    data: dict
    base_dir: Path

    def path(self, key: str) -> Path | None:
        v = self.data[key]
        return None if v is None else (self.base_dir / v)

    @property
    def output_dir(self) -> Path:
        return self.base_dir / self.data["output_dir"]

    def __getitem__(self, key):
        return self.data[key]

    @property
    def feature_params(self) -> FeatureParams:
        return FeatureParams.from_dict(self.data["feature_params"])

    @property
    def rf_params(self) -> RfParams:
        return RfParams.from_dict(self.data["rf"])


def build_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    """Validate a raw config dict against the defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    data = _merge(DEFAULTS, raw)
    if not data["observations"]:
        raise ConfigError("config needs 'observations' (path to the observations CSV)")
    base = Path(base_dir)
    for key in ("observations", "rating_curve"):
        if data[key] is not None and not (base / data[key]).is_file():
            raise ConfigError(f"{key}: no such file: {base / data[key]}")
    names = list(RENDITIONS)
    for r in [data["rendition"]] + list(data["rf_renditions"] or []):
        if r not in RENDITIONS:
            raise ConfigError(f"unknown rendition {r!r}; valid: {', '.join(names)}")
    bad = [m for m in data["models"] if m not in MODEL_KINDS]
    if bad:
        raise ConfigError(f"unknown model(s) {bad}; valid: {', '.join(MODEL_KINDS)}")
    if data["split"]["mode"] not in ("chronological", "random"):
        raise ConfigError("split.mode must be 'chronological' or 'random'")
    if not 0 < data["split"]["fraction"] < 1:
        raise ConfigError("split.fraction must lie in (0, 1)")
    data["blends"] = [_check_blend_spec(s, f"blends[{i}]") for i, s in enumerate(data["blends"])]
    data["sweep"] = [_check_blend_spec(s, f"sweep[{i}]") for i, s in enumerate(data["sweep"])]
    needs_curve = any(s["mode"] == "rating_curve" for s in data["blends"] + data["sweep"])
    if needs_curve and data["rating_curve"] is None:
        raise ConfigError("rating_curve mode needs a 'rating_curve' CSV path")
    try:
        FeatureParams.from_dict(data["feature_params"])
        RfParams.from_dict(data["rf"])
        linmod.PenaltySpec(0.0, data["linear"]["elasticnet_alpha"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(data, base)


def load_config(path: str | Path, overrides=()) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return build_config(apply_overrides(raw, overrides), p.parent)


# -- data stages ---------------------------------------------------------------

@dataclass
class Prepared:
    raw: ingest.Dataset
    train: ingest.Dataset
    test: ingest.Dataset
    summary: dict

    @property
    def cleaned(self) -> ingest.Dataset:
        return ingest.Dataset(self.train.records + self.test.records, self.test.provenance)


def prepare(cfg: RunConfig) -> Prepared:
    """Ingest, drop sentinels, split, then IQR-filter both splits with train bounds."""
    try:
        raw = ingest.parse_csv(cfg.path("observations"), cfg["schema"])
    except ingest.SchemaError as exc:
        raise InputError(str(exc)) from None
    ds = ingest.drop_sentinels(raw, cfg["sentinels"])
    sp = cfg["split"]
    if sp["mode"] == "random":
        train, test = ingest.random_split(ds, sp["fraction"], sp["seed"])
    else:
        train, test = ingest.chronological_split(ds, sp["fraction"])
    iq = cfg["iqr"]
    bounds = None
    removed = {"train": 0, "test": 0}
    if iq["enabled"]:
        bounds = list(quartiles(train.column(iq["field"])).bounds(iq["k"]))
        ref = train
        train, removed["train"] = iqr_filter(train, iq["field"], iq["k"])
        test, removed["test"] = iqr_filter(test, iq["field"], iq["k"], reference=ref)
        test = test.subset(test.records, dropped_outlier=removed["train"] + removed["test"])
    prov = test.provenance
    summary = {
        "source": Path(cfg["observations"]).name,
        "raw_rows": prov.raw_rows,
        "dropped_sentinel": prov.dropped_sentinel,
        "dropped_malformed": prov.dropped_malformed,
        "dropped_outlier": prov.dropped_outlier,
        "outliers_by_split": removed,
        "iqr_bounds": bounds,
        "n_clean": len(train) + len(test),
        "n_train": len(train),
        "n_test": len(test),
        "malformed": [{"line": ln, "reason": why} for ln, why in prov.malformed],
    }
    return Prepared(raw, train, test, summary)


def matrices(prep: Prepared, rendition: str, params: FeatureParams) -> tuple[FeatureMatrix, FeatureMatrix]:
    try:
        return assemble(prep.train, rendition, params), assemble(prep.test, rendition, params)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def load_curve(cfg: RunConfig) -> ratingcurve.RatingCurve | None:
    p = cfg.path("rating_curve")
    if p is None:
        return None
    try:
        return ratingcurve.read_curve_csv(p)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{p}: {exc}") from None


# -- model helpers -------------------------------------------------------------

LINEAR_ALPHA = {"ridge": 0.0, "lasso": 1.0, "ols": None}


def choose_lambda(cfg: RunConfig, fm: FeatureMatrix, alpha: float) -> tuple[float, list]:
    lin = cfg["linear"]
    if lin["lambda"] is not None:
        return float(lin["lambda"]), []
    grid = linmod.default_grid(fm.X, fm.y, n=lin["grid_size"])
    return linmod.cv_select_lambda(fm.X, fm.y, alpha, grid, k=lin["cv_folds"])


def fit_linear(kind: str, cfg: RunConfig, fm: FeatureMatrix):
    if kind == "ols":
        return linmod.fit_ols(fm.X, fm.y, fm.columns), {}
    alpha = LINEAR_ALPHA.get(kind, cfg["linear"]["elasticnet_alpha"])
    lam, table = choose_lambda(cfg, fm, alpha)
    if alpha == 0:
        fit = linmod.fit_ridge(fm.X, fm.y, lam, fm.columns)
    else:
        fit = linmod.fit_elasticnet(fm.X, fm.y, linmod.PenaltySpec(lam, alpha), columns=fm.columns,
                                    kind=kind)
    return fit, {"lambda": lam, "alpha": alpha, "cv": table}


def resolve_rule(spec: dict, train: FeatureMatrix, curve):
    """``(name, label, rule, provenance)`` for one blend threshold spec."""
    mode, value = spec["mode"], spec["value"]
    if mode == "fixed_mcm":
        v = float(value)
        return (f"blend_{v:g}mcm", f"Blended ({v:g} MCM Threshold)", blend.GatePrediction(v),
                {"source": "fixed_mcm", "threshold_mcm": v})
    if mode == "percentile":
        v = float(blend.percentile_thresholds(train.y, [value])[0])
        return (f"blend_p{value:g}", f"Blended (p{value:g} = {v:.1f} MCM Threshold)",
                blend.GatePrediction(v),
                {"source": "percentile", "percentile": value, "threshold_mcm": v})
    rule, prov = blend.gauge_threshold_from_curve(curve, value)
    return ("blend_rating_curve",
            f"Blended ({prov['volume_mcm']:g} MCM Threshold, gauge {prov['stage_m']:g} m)",
            rule, prov)


# -- manifest ------------------------------------------------------------------

def _rel(cfg: RunConfig, p: Path) -> str:
    return p.relative_to(cfg.output_dir).as_posix()


def update_manifest(cfg: RunConfig, stage: str, section: dict, outputs, artifacts_map=None) -> Path:
    """Merge one stage's results into ``manifest.json``; stale manifests are reset."""
    out = cfg.output_dir
    path = out / "manifest.json"
    doc = None
    if path.is_file():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            doc = None
    if not doc or doc.get("config") != cfg.data:
        doc = {"toolkit_version": __version__, "config": cfg.data, "stages": {},
               "artifacts": {}, "outputs": [],
               "seeds": {"split": cfg["split"]["seed"], "rf": cfg.rf_params.seed}}
    doc["stages"][stage] = section
    if artifacts_map:
        doc["artifacts"].update(artifacts_map)
    doc["outputs"] = sorted(set(doc["outputs"]) | {_rel(cfg, Path(p)) for p in outputs}
                            | {"manifest.json"})
    metrics.dump_json(doc, path)
    return path


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _warning_texts(caught) -> list[str]:
    return sorted({f"{w.category.__name__}: {w.message}" for w in caught})


# -- stages --------------------------------------------------------------------

def run_clean(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cleaned = out / "cleaned.csv"
    ingest.write_csv(prep.cleaned, cleaned)
    summary = out / "clean_summary.json"
    metrics.dump_json(prep.summary, summary)
    update_manifest(cfg, "clean", {k: v for k, v in prep.summary.items() if k != "malformed"},
                    [cleaned, summary])
    return prep.summary


def run_train(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    params = cfg.feature_params
    pdict = asdict(params)
    rfp = cfg.rf_params
    out = cfg.output_dir / "artifacts"
    out.mkdir(parents=True, exist_ok=True)
    written, info = {}, {}
    models = cfg["models"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        forests = {}
        if "rf" in models:
            for rend in cfg["rf_renditions"] or [cfg["rendition"]]:
                tr, _ = matrices(prep, rend, params)
                f = fit_forest(tr.X, tr.y, rfp, tr.columns, cfg["n_jobs"])
                forests[rend] = f
                name = f"rf_{rend}"
                p = out / f"{name}.json"
                artifacts.save(p, name, f, rend, pdict)
                written[name] = p
                info[name] = {"rendition": rend, "n_train": len(tr), "columns": list(tr.columns),
                              "feature_pool": list(f.feature_pool)}
        rend = cfg["rendition"]
        tr, _ = matrices(prep, rend, params)
        ridge_fit = None
        for kind in ("ols", "elasticnet", "lasso", "ridge"):
            if kind not in models:
                continue
            fit, extra = fit_linear(kind, cfg, tr)
            if kind == "ridge":
                ridge_fit = fit
            p = out / f"{kind}.json"
            artifacts.save(p, kind, fit, rend, pdict)
            written[kind] = p
            info[kind] = {"rendition": rend, "n_train": len(tr),
                          "lambda": extra.get("lambda"), "alpha": extra.get("alpha"),
                          "iterations": fit.iterations_used, "converged": fit.converged}
        if "blend" in models:
            if ridge_fit is None:
                ridge_fit, _ = fit_linear("ridge", cfg, tr)
            forest = forests.get(rend) or fit_forest(tr.X, tr.y, rfp, tr.columns, cfg["n_jobs"])
            curve = load_curve(cfg)
            for spec in cfg["blends"]:
                name, label, rule, prov = resolve_rule(spec, tr, curve)
                m = blend.fit_blend(tr, ridge_fit.penalty.lam, rfp, rule, cfg["per_regime"], prov,
                                    cfg["n_jobs"], None if cfg["per_regime"] else (ridge_fit, forest))
                p = out / f"{name}.json"
                artifacts.save(p, name, m, rend, pdict, label)
                written[name] = p
                info[name] = {"rendition": rend, "label": label, "threshold": prov}
    section = {"models": info, "warnings": _warning_texts(caught),
               "n_train": len(prep.train), "n_test": len(prep.test)}
    update_manifest(cfg, "train", section, written.values(),
                    {k: _rel(cfg, v) for k, v in written.items()})
    return section


def _predict(model, fm: FeatureMatrix) -> np.ndarray:
    if isinstance(model, blend.BlendModel):
        return blend.predict_blend(model, fm)
    cols = tuple(model.columns)
    if cols and cols != tuple(fm.columns):
        raise InputError(f"artifact columns {list(cols)} do not match features {list(fm.columns)}")
    if isinstance(model, linmod.LinearFit):
        return linmod.predict(model, fm.X)
    return model.predict(fm.X)


def run_evaluate(cfg: RunConfig, paths=None) -> dict:
    prep = prepare(cfg)
    out = cfg.output_dir
    if paths is None:
        paths = sorted((out / "artifacts").glob("*.json"))
    paths = [Path(p) for p in paths]
    if not paths:
        raise InputError(f"no artifacts to evaluate (looked in {out / 'artifacts'})")
    results, labels, bins = [], {}, {}
    plots = []
    for p in paths:
        if not p.is_file():
            raise InputError(f"artifact not found: {p}")
        try:
            doc, model = artifacts.load(p)
        except (ValueError, KeyError) as exc:
            raise InputError(f"{p}: {exc}") from None
        params = FeatureParams.from_dict(doc.get("feature_params"))
        _, te = matrices(prep, doc["rendition"] or cfg["rendition"], params)
        try:
            pred = _predict(model, te)
        except ValueError as exc:
            raise InputError(f"{p.name}: {exc}") from None
        res = metrics.evaluate(doc["name"], te.y, pred, te.dates)
        results.append(res)
        if "label" in doc:
            labels[doc["name"]] = doc["label"]
        bins[doc["name"]] = metrics.residual_bins(te.y, pred).to_dict()
        plot = out / "plots" / f"{doc['name']}.csv"
        plot.parent.mkdir(parents=True, exist_ok=True)
        metrics.write_plot_csv(res, plot)
        plots.append(plot)
    report = metrics.comparison_report(results, labels)
    report["residual_bins"] = bins
    report["n_test"] = len(prep.test)
    rj, rt = out / "report.json", out / "report.txt"
    metrics.dump_json(report, rj)
    _write_text(rt, metrics.format_table(report))
    summary = {r["model"]: {"rmse": r["rmse"], "r2": r["r2"]} for r in report["rows"]}
    update_manifest(cfg, "evaluate", {"metrics": summary}, [rj, rt, *plots])
    return report


def run_sweep(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    tr, te = matrices(prep, cfg["rendition"], cfg.feature_params)
    curve = load_curve(cfg)
    specs = list(cfg["sweep"])
    if curve is not None and cfg["sweep_rating_curve"] and not any(
            s["mode"] == "rating_curve" for s in specs):
        specs.append({"mode": "rating_curve", "value": None})
    if not specs:
        raise ConfigError("sweep candidate list is empty")
    cands, provs = [], {}
    for spec in specs:
        _, label, rule, prov = resolve_rule(spec, tr, curve)
        cands.append((label, rule))
        provs[label] = prov
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lam, _ = choose_lambda(cfg, tr, 0.0)
        rows = blend.threshold_sweep(tr, te, cands, lam, cfg.rf_params, cfg["per_regime"],
                                     cfg["n_jobs"])
    doc = {"rendition": cfg["rendition"], "ridge_lambda": lam,
           "rows": [{**r.to_dict(), "provenance": provs[r.label]} for r in rows],
           "warnings": _warning_texts(caught)}
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sj, st = out / "sweep.json", out / "sweep.txt"
    metrics.dump_json(doc, sj)
    _write_text(st, blend.format_sweep(rows))
    best = rows[0]
    update_manifest(cfg, "blend_sweep", {"best": best.label, "best_rmse": best.rmse,
                                         "ridge_lambda": lam, "n_candidates": len(rows)}, [sj, st])
    return doc


def run_rating_threshold(cfg: RunConfig, curve_path=None, override=None) -> dict:
    if curve_path is not None:
        p = Path(curve_path)
        if not p.is_file():
            raise InputError(f"rating curve not found: {p}")
        try:
            curve = ratingcurve.read_curve_csv(p)
        except (ValueError, KeyError) as exc:
            raise InputError(f"{p}: {exc}") from None
    else:
        curve = load_curve(cfg)
        if curve is None:
            raise ConfigError("no rating curve configured (set 'rating_curve' or pass --curve)")
    rule, prov = blend.gauge_threshold_from_curve(curve, override)
    doc = {**prov, "knots": [list(k) for k in curve.knots()],
           "segment_slopes": ratingcurve.segment_slopes(curve).tolist()}
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "rating_threshold.json"
    metrics.dump_json(doc, path)
    update_manifest(cfg, "rating_threshold", prov, [path])
    return doc


def run_report(cfg: RunConfig) -> str:
    """Collect the stage outputs present in the output directory into one text report."""
    out = cfg.output_dir
    mpath = out / "manifest.json"
    if not mpath.is_file():
        raise InputError(f"no manifest in {out}; run the other commands first")
    man = json.loads(mpath.read_text(encoding="utf-8"))
    parts = [f"damvol {man['toolkit_version']} run report", ""]
    st = man["stages"]
    if "clean" in st:
        c = st["clean"]
        parts += ["Cleaning",
                  f"  raw rows {c['raw_rows']}, sentinel drops {c['dropped_sentinel']}, "
                  f"malformed {c['dropped_malformed']}, IQR outliers {c['dropped_outlier']}",
                  f"  train {c['n_train']}, test {c['n_test']}", ""]
    if (out / "report.txt").is_file():
        parts += ["Model comparison (test split)", (out / "report.txt").read_text(encoding="utf-8")]
    if (out / "sweep.txt").is_file():
        parts += ["Blend threshold sweep", (out / "sweep.txt").read_text(encoding="utf-8")]
    if "rating_threshold" in st:
        r = st["rating_threshold"]
        parts += [f"Rating-curve threshold: {r['stage_m']:g} m ({r['volume_mcm']:g} MCM)", ""]
    for stage in ("train", "blend_sweep"):
        for w in st.get(stage, {}).get("warnings", []):
            parts.append(f"warning ({stage}): {w}")
    text = "\n".join(parts).rstrip() + "\n"
    path = _write_text(out / "run_report.txt", text)
    update_manifest(cfg, "report", {"stages": sorted(st)}, [path])
    return text

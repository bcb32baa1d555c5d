"""Batch command-line surface: simulate, fit, score, test and bench.

Every run resolves its configuration (defaults < config file < flags),
writes the resolved configuration as ``manifest.json`` in the output
directory, and produces deterministic CSV/JSON outputs, so replaying a
manifest reproduces a run byte for byte.  All computation is done through
the library API; the CLI only wires files to functions.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .algebra import LevelCapError, TruncatedTensor, tensor_dim
from .datasets import SPIKE_EPS_GRID, SpikeConfig, simulate_bm, simulate_fbm, simulate_spiked_bm
from .multiple_testing import auroc, benjamini_hochberg, evaluate, storey_bh
from .scores import (
    anomaly_scores,
    fit_score_model,
    model_from_json_dict,
    model_to_json_dict,
    tamsd,
)
from .signatures import PathStream, apply_transforms, read_paths_csv, write_paths_csv
from .tails import (
    DeviationFunction,
    TailModelWeibull,
    TciParams,
    empirical_pvalues,
    parametric_pvalue,
    type1_bound,
    weibull_tail_fit,
)

__all__ = [
    "main",
    "ConfigError",
    "DataError",
    "NumericalError",
    "run_spike_auroc",
    "run_researcher_protocol",
    "run_tamsd_compare",
    "run_pvalue_compare",
    "run_cvar_descent_demo",
]

# applied when --transforms is not given: reset first, then time-augment
DEFAULT_TRANSFORMS = ("invisibility", "time")

# refuse signature computations whose coefficient count explodes
MAX_TENSOR_DIM = 2_000_000


class ConfigError(Exception):
    """Invalid or inconsistent run configuration (exit code 2)."""


class DataError(Exception):
    """Missing or malformed input data (exit code 3)."""


class NumericalError(Exception):
    """A numerical routine failed to produce a usable result (exit code 4)."""


# -- configuration plumbing ----------------------------------------------------


def _parse_transforms(value: str) -> tuple[str, ...]:
    value = value.strip()
    if value in ("", "none"):
        return ()
    return tuple(t.strip() for t in value.split(",") if t.strip())


def _load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    try:
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ConfigError(f"config JSON must be an object: {path}")
        return obj
    except json.JSONDecodeError:
        pass
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(text: str, default, key: str):
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, (tuple, list)):
            if all(isinstance(v, str) for v in default) or not default:
                return _parse_transforms(text)
            return tuple(type(default[0])(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}")
    return text


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_ready(obj), sort_keys=True, indent=2) + "\n")


def _write_manifest(outdir: Path, subcommand: str, cfg: dict) -> None:
    manifest = {"subcommand": subcommand}
    manifest.update({k: v for k, v in cfg.items() if k != "output"})
    manifest["output"] = cfg.get("output")
    _write_json(outdir / "manifest.json", manifest)


def _outdir(cfg: dict) -> Path:
    out = cfg.get("output")
    if not out:
        raise ConfigError("--output directory is required")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows_csv(path: Path, fieldnames: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            out = {}
            for key in fieldnames:
                value = row.get(key)
                if isinstance(value, (float, np.floating)):
                    out[key] = repr(float(value))
                else:
                    out[key] = value
            writer.writerow(out)


def _load_paths(path: str) -> list[PathStream]:
    try:
        paths = read_paths_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")
    except (ValueError, IndexError) as exc:
        raise DataError(f"malformed path CSV {path}: {exc}")
    if not paths:
        raise DataError(f"no paths found in {path}")
    return paths


def _read_scores_csv(path: str) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["path_id", "score"]:
                raise DataError(f"{path}: expected header path_id,score")
            ids, values = [], []
            for row in reader:
                if not row:
                    continue
                ids.append(row[0])
                values.append(float(row[1]))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")
    except ValueError as exc:
        raise DataError(f"malformed score CSV {path}: {exc}")
    if not ids:
        raise DataError(f"no scores found in {path}")
    return ids, np.array(values)


def _transformed(paths: Sequence[PathStream], transforms: Sequence[str]) -> list[PathStream]:
    try:
        return [apply_transforms(p, transforms) for p in paths]
    except ValueError as exc:
        raise ConfigError(str(exc))


# -- simulate -------------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    outdir = _outdir(cfg)
    generator = cfg["generator"]
    seed = int(cfg["seed"])
    n_paths = int(cfg["n_paths"])
    n_steps = int(cfg["steps"])
    if n_paths < 1 or n_steps < 1:
        raise ConfigError("n-paths and steps must be positive")
    if generator == "bm":
        paths = simulate_bm(
            n_paths, n_steps, d=int(cfg["dim"]), horizon=float(cfg["horizon"]), seed=seed
        )
        write_paths_csv(paths, outdir / "paths.csv")
    elif generator == "spike":
        spike = SpikeConfig(eps=float(cfg["eps"]), n_steps=n_steps, horizon=float(cfg["horizon"]))
        paths = simulate_spiked_bm(spike, n_paths, seed=seed)
        write_paths_csv(paths, outdir / "paths.csv")
    elif generator == "fbm":
        try:
            paths = simulate_fbm(
                float(cfg["hurst"]), n_paths, n_steps, horizon=float(cfg["horizon"]), seed=seed
            )
        except ValueError as exc:
            raise NumericalError(str(exc))
        write_paths_csv(paths, outdir / "paths.csv")
    elif generator == "researcher":
        _simulate_researcher_files(cfg, outdir)
    else:
        raise ConfigError(f"unknown generator {generator!r}")
    _write_manifest(outdir, "simulate", cfg)
    return 0


def _simulate_researcher_files(cfg: dict, outdir: Path) -> None:
    """Reference + test-set files for the multiple-researcher protocol.

    Writes one reference CSV and n test-set CSVs per researcher; outliers in
    test sets carry a ``spike-`` id prefix, which doubles as the label.
    """
    n_steps = int(cfg["steps"])
    horizon = float(cfg["horizon"])
    eps = float(cfg["eps"])
    n_ref = int(cfg["n_paths"])
    n_sets = int(cfg["test_sets"])
    n_test = int(cfg["test_size"])
    frac = float(cfg["outlier_frac"])
    if not 0.0 <= frac <= 1.0:
        raise ConfigError("outlier-frac must lie in [0, 1]")
    for j in range(int(cfg["researchers"])):
        rseq = np.random.SeedSequence(int(cfg["seed"]), spawn_key=(j,))
        streams = rseq.spawn(1 + 2 * n_sets)
        ref = simulate_bm(n_ref, n_steps, horizon=horizon, seed=streams[0])
        write_paths_csv(ref, outdir / f"ref_{j:03d}.csv")
        n_out = int(round(frac * n_test))
        spike = SpikeConfig(eps=eps, n_steps=n_steps, horizon=horizon)
        for l in range(n_sets):
            normal = simulate_bm(n_test - n_out, n_steps, horizon=horizon, seed=streams[1 + 2 * l])
            outliers = simulate_spiked_bm(spike, n_out, seed=streams[2 + 2 * l])
            write_paths_csv(list(normal) + list(outliers), outdir / f"test_{j:03d}_{l:03d}.csv")


# -- fit ------------------------------------------------------------------------


def cmd_fit(cfg: dict) -> int:
    outdir = _outdir(cfg)
    if not cfg.get("input"):
        raise ConfigError("--input path CSV is required")
    level = int(cfg["level"])
    if level < 1:
        raise ConfigError("--level must be >= 1")
    paths = _load_paths(cfg["input"])
    transforms = cfg["transforms"]
    tpaths = _transformed(paths, transforms)
    dim = tensor_dim(tpaths[0].d, level)
    if dim > MAX_TENSOR_DIM:
        raise ConfigError(
            f"tensor cap exceeded: d={tpaths[0].d}, N={level} needs {dim} coefficients"
        )
    stat = cfg["stat"]
    if stat == "ocsvm" and float(cfg["gamma_nu"]) * len(tpaths) < 1.0:
        raise ConfigError(
            f"ocsvm infeasible: gamma_nu * n = {float(cfg['gamma_nu']) * len(tpaths):.3g} < 1"
        )
    try:
        model = fit_score_model(
            stat,
            tpaths,
            level,
            gamma_nu=float(cfg["gamma_nu"]),
            eps_reg=None if cfg["eps_reg"] < 0 else float(cfg["eps_reg"]),
            keep_corpus=bool(cfg["keep_corpus"]),
            transforms=transforms,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"model fit failed: {exc}")
    _write_json(outdir / "model.json", model_to_json_dict(model))
    _write_manifest(outdir, "fit", cfg)
    return 0


def _load_model(path: str):
    try:
        obj = json.loads(Path(path).read_text())
        return model_from_json_dict(obj)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}")
    except (ValueError, KeyError) as exc:
        raise DataError(f"malformed model file {path}: {exc}")


# -- score ----------------------------------------------------------------------


def cmd_score(cfg: dict) -> int:
    outdir = _outdir(cfg)
    if not cfg.get("input") or not cfg.get("model"):
        raise ConfigError("--input and --model are required")
    model = _load_model(cfg["model"])
    paths = _load_paths(cfg["input"])
    tpaths = _transformed(paths, model.transforms)
    if tpaths[0].d != model.d:
        raise DataError(
            f"path dimension {tpaths[0].d} (after transforms {list(model.transforms)}) "
            f"does not match model d={model.d}"
        )
    values = anomaly_scores(model, tpaths)
    rows = [
        {"path_id": p.id or f"path-{i:06d}", "score": float(v)}
        for i, (p, v) in enumerate(zip(paths, values))
    ]
    _write_rows_csv(outdir / "scores.csv", ["path_id", "score"], rows)
    _write_manifest(outdir, "score", cfg)
    return 0


# -- test -----------------------------------------------------------------------


def _labels_for(ids: Sequence[str], cfg: dict) -> np.ndarray | None:
    label_file = cfg.get("labels")
    prefix = cfg.get("label_prefix")
    if label_file:
        try:
            with open(label_file, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header is None or header[:2] != ["path_id", "label"]:
                    raise DataError(f"{label_file}: expected header path_id,label")
                table = {row[0]: int(row[1]) for row in reader if row}
        except OSError as exc:
            raise DataError(f"cannot read labels {label_file}: {exc}")
        except ValueError as exc:
            raise DataError(f"malformed labels {label_file}: {exc}")
        try:
            return np.array([table[i] for i in ids], dtype=bool)
        except KeyError as exc:
            raise DataError(f"label missing for path id {exc}")
    if prefix:
        return np.array([i.startswith(prefix) for i in ids])
    return None


def cmd_test(cfg: dict) -> int:
    outdir = _outdir(cfg)
    if not cfg.get("scores"):
        raise ConfigError("--scores CSV is required")
    ids, scores = _read_scores_csv(cfg["scores"])
    alpha = float(cfg["alpha"])
    if not 0.0 < alpha < 1.0:
        raise ConfigError("--alpha must lie in (0, 1)")
    method = cfg["pvalue_method"]
    tail_model = None
    if method == "empirical":
        if not cfg.get("calibration"):
            raise ConfigError("empirical p-values need --calibration scores")
        _, calibration = _read_scores_csv(cfg["calibration"])
        pvals = empirical_pvalues(scores, calibration)
    elif method == "weibull":
        if cfg.get("tail_model"):
            try:
                tail_model = TailModelWeibull.from_json_dict(
                    json.loads(Path(cfg["tail_model"]).read_text())
                )
            except OSError as exc:
                raise DataError(f"cannot read tail model: {exc}")
            except (ValueError, KeyError) as exc:
                raise DataError(f"malformed tail model: {exc}")
        elif cfg.get("calibration"):
            if int(cfg["level"]) < 1:
                raise ConfigError("--level (signature level N) is required to fit a Weibull tail")
            _, calibration = _read_scores_csv(cfg["calibration"])
            try:
                tail_model = weibull_tail_fit(
                    calibration, int(cfg["level"]), float(cfg["tail_fraction"])
                )
            except ValueError as exc:
                raise NumericalError(f"Weibull tail fit failed: {exc}")
            _write_json(outdir / "tail_model.json", tail_model.to_json_dict())
        else:
            raise ConfigError(
                "weibull p-values need a fitted tail model: pass --tail-model or "
                "--calibration together with --level"
            )
        pvals = parametric_pvalue(scores, tail_model)
    elif method == "tci":
        level = int(cfg["level"])
        if level < 1:
            raise ConfigError("--level (signature level N) is required for TCI p-values")
        try:
            tci = TciParams(
                p=float(cfg["tci_p"]),
                deviation_fn=DeviationFunction(cfg["deviation"], q=float(cfg["deviation_q"])),
                c1=float(cfg["c1"]),
                c2=float(cfg["c2"]),
                rho_hat=float(cfg["rho_hat"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc))
        pvals = np.array(
            [
                type1_bound(max(0.0, float(s)), level, int(cfg["dim"]), float(cfg["w_norm"]), tci)
                for s in scores
            ]
        )
    else:
        raise ConfigError(f"unknown p-value method {method!r}")

    correction = cfg["correction"]
    if correction == "none":
        rejected = pvals <= alpha
    elif correction == "bh":
        rejected = benjamini_hochberg(pvals, alpha)
    elif correction == "storey":
        rejected = storey_bh(pvals, alpha, float(cfg["storey_lambda"]))
    else:
        raise ConfigError(f"unknown correction {correction!r}")

    labels = _labels_for(ids, cfg)
    report = evaluate(
        scores,
        pvals,
        rejected,
        labels,
        metadata={"alpha": alpha, "pvalue_method": method, "correction": correction},
    )
    rows = [
        {
            "path_id": ids[i],
            "score": float(scores[i]),
            "pvalue": float(pvals[i]),
            "rejected": int(rejected[i]),
            **({"label": int(labels[i])} if labels is not None else {}),
        }
        for i in range(len(ids))
    ]
    fields = ["path_id", "score", "pvalue", "rejected"] + (
        ["label"] if labels is not None else []
    )
    _write_rows_csv(outdir / "report.csv", fields, rows)
    _write_json(outdir / "summary.json", report.to_json_dict())
    _write_manifest(outdir, "test", cfg)
    return 0


# -- bench ----------------------------------------------------------------------


def _fit_on_bm(
    stat: str,
    n_fit: int,
    n_steps: int,
    horizon: float,
    level: int,
    transforms: Sequence[str],
    seed,
    gamma_nu: float = 0.2,
):
    fit_paths = _transformed(simulate_bm(n_fit, n_steps, horizon=horizon, seed=seed), transforms)
    return fit_score_model(stat, fit_paths, level, gamma_nu=gamma_nu, transforms=transforms)


def run_spike_auroc(
    eps_grid: Sequence[float] = SPIKE_EPS_GRID,
    n_fit: int = 1000,
    n_normal: int = 500,
    n_spiked: int = 500,
    n_steps: int = 200,
    horizon: float = 2.0,
    level: int = 4,
    transforms: Sequence[str] = ("time",),
    stat: str = "dist",
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """AUROC of a signature statistic against the spike alternative.

    One model is fitted on clean Brownian paths; each grid point scores a
    fresh batch of normal and spiked paths.  Returns tidy rows and a summary
    with the Spearman trend of AUROC against the spike magnitude.
    """
    root = np.random.SeedSequence(seed)
    streams = root.spawn(1 + 2 * len(eps_grid))
    model = _fit_on_bm(stat, n_fit, n_steps, horizon, level, transforms, streams[0])
    rows = []
    for k, eps in enumerate(eps_grid):
        normal = simulate_bm(n_normal, n_steps, horizon=horizon, seed=streams[1 + 2 * k])
        spiked = simulate_spiked_bm(
            SpikeConfig(eps=float(eps), n_steps=n_steps, horizon=horizon),
            n_spiked,
            seed=streams[2 + 2 * k],
        )
        batch = _transformed(list(normal) + list(spiked), transforms)
        values = anomaly_scores(model, batch)
        labels = np.concatenate([np.zeros(n_normal, bool), np.ones(n_spiked, bool)])
        rows.append(
            {
                "eps": float(eps),
                "auroc": auroc(values, labels),
                "n_normal": n_normal,
                "n_spiked": n_spiked,
            }
        )
    aurocs = [r["auroc"] for r in rows]
    trend = float(spearmanr(list(eps_grid), aurocs).statistic)
    summary = {
        "stat": stat,
        "level": level,
        "transforms": list(transforms),
        "spearman_eps_auroc": trend,
        "auroc_by_eps": {repr(float(e)): a for e, a in zip(eps_grid, aurocs)},
    }
    return rows, summary


def run_researcher_protocol(
    n_researchers: int = 20,
    n_fit: int = 400,
    n_cal: int = 400,
    n_test_sets: int = 10,
    n_test: int = 200,
    outlier_frac: float = 0.1,
    eps: float = 4.0,
    n_steps: int = 200,
    horizon: float = 2.0,
    level: int = 4,
    transforms: Sequence[str] = ("time",),
    stat: str = "dist",
    alpha_fdr: float = 0.1,
    alpha_raw: float = 0.01,
    correction: str = "bh",
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """Marginal FDR/FPR/power of the conformal pipeline over many researchers.

    Each researcher fits the statistic on an independent reference sample,
    calibrates empirical p-values on a second sample, and tests several
    contaminated batches; the FDR correction runs within each batch and the
    raw threshold ``alpha_raw`` estimates the single-test FPR.
    """
    n_out = int(round(outlier_frac * n_test))
    spike = SpikeConfig(eps=eps, n_steps=n_steps, horizon=horizon)
    rows = []
    for j in range(n_researchers):
        streams = np.random.SeedSequence(seed, spawn_key=(j,)).spawn(2 + 2 * n_test_sets)
        model = _fit_on_bm(stat, n_fit, n_steps, horizon, level, transforms, streams[0])
        cal_paths = _transformed(
            simulate_bm(n_cal, n_steps, horizon=horizon, seed=streams[1]), transforms
        )
        calibration = anomaly_scores(model, cal_paths)
        for l in range(n_test_sets):
            normal = simulate_bm(
                n_test - n_out, n_steps, horizon=horizon, seed=streams[2 + 2 * l]
            )
            outliers = simulate_spiked_bm(spike, n_out, seed=streams[3 + 2 * l])
            batch = _transformed(list(normal) + list(outliers), transforms)
            values = anomaly_scores(model, batch)
            labels = np.concatenate([np.zeros(n_test - n_out, bool), np.ones(n_out, bool)])
            pvals = empirical_pvalues(values, calibration)
            if correction == "storey":
                rejected = storey_bh(pvals, alpha_fdr)
            else:
                rejected = benjamini_hochberg(pvals, alpha_fdr)
            report = evaluate(values, pvals, rejected, labels)
            raw_reject = pvals <= alpha_raw
            fpr_raw = float((raw_reject & ~labels).sum() / max(1, (~labels).sum()))
            rows.append(
                {
                    "researcher": j,
                    "test_set": l,
                    "fdr": report.summary["fdr"],
                    "power": report.summary["power"],
                    "fpr_raw": fpr_raw,
                    "n_rejected": report.summary["n_rejected"],
                }
            )
    summary = {
        "marginal_fdr": float(np.mean([r["fdr"] for r in rows])),
        "marginal_power": float(np.mean([r["power"] for r in rows])),
        "marginal_fpr_raw": float(np.mean([r["fpr_raw"] for r in rows])),
        "alpha_fdr": alpha_fdr,
        "alpha_raw": alpha_raw,
        "eps": eps,
        "n_researchers": n_researchers,
        "n_test_sets": n_test_sets,
        "correction": correction,
        "stat": stat,
        "level": level,
        "transforms": list(transforms),
    }
    return rows, summary


def run_tamsd_compare(
    eps_grid: Sequence[float] = SPIKE_EPS_GRID,
    taus: Sequence[int] = (1, 2, 4, 16, 512),
    n_fit: int = 300,
    n_normal: int = 200,
    n_spiked: int = 200,
    n_steps: int = 200,
    horizon: float = 2.0,
    level: int = 4,
    transforms: Sequence[str] = ("time",),
    gamma_nu: float = 0.2,
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """AUROC comparison of the signature statistics against TAMSD lags.

    TAMSD at an infeasible lag (lag >= path segment count) is reported as a
    skipped row with the error message rather than a score.
    """
    root = np.random.SeedSequence(seed)
    streams = root.spawn(3 + 2 * len(eps_grid))
    models = {
        stat: _fit_on_bm(
            stat, n_fit, n_steps, horizon, level, transforms, streams[k], gamma_nu=gamma_nu
        )
        for k, stat in enumerate(("dist", "conf", "ocsvm"))
    }
    rows = []
    for k, eps in enumerate(eps_grid):
        normal = simulate_bm(n_normal, n_steps, horizon=horizon, seed=streams[3 + 2 * k])
        spiked = simulate_spiked_bm(
            SpikeConfig(eps=float(eps), n_steps=n_steps, horizon=horizon),
            n_spiked,
            seed=streams[4 + 2 * k],
        )
        raw = list(normal) + list(spiked)
        labels = np.concatenate([np.zeros(n_normal, bool), np.ones(n_spiked, bool)])
        batch = _transformed(raw, transforms)
        for stat, model in models.items():
            rows.append(
                {
                    "statistic": stat,
                    "eps": float(eps),
                    "auroc": auroc(anomaly_scores(model, batch), labels),
                    "skipped": 0,
                    "note": "",
                }
            )
        for tau in taus:
            name = f"tamsd-{tau}"
            try:
                values = np.array([tamsd(p, tau) for p in raw])
            except ValueError as exc:
                warnings.warn(f"{name} skipped at eps={eps}: {exc}")
                rows.append(
                    {"statistic": name, "eps": float(eps), "auroc": "", "skipped": 1, "note": str(exc)}
                )
                continue
            rows.append(
                {
                    "statistic": name,
                    "eps": float(eps),
                    "auroc": auroc(values, labels),
                    "skipped": 0,
                    "note": "",
                }
            )
    summary = {
        "taus": list(taus),
        "eps_grid": [float(e) for e in eps_grid],
        "level": level,
        "transforms": list(transforms),
    }
    return rows, summary


def run_pvalue_compare(
    eps: float = 4.0,
    n_fit: int = 500,
    n_cal: int = 500,
    n_cal_tail: int = 20_000,
    n_test_sets: int = 10,
    n_test: int = 200,
    outlier_frac: float = 0.1,
    n_steps: int = 200,
    horizon: float = 2.0,
    level: int = 4,
    transforms: Sequence[str] = ("time",),
    stat: str = "dist",
    alpha_fdr: float = 0.1,
    alpha_raw: float = 0.01,
    tail_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """Empirical conformal p-values versus the Weibull-form parametric tail.

    The Weibull tail is fitted on a large dedicated calibration sample (the
    parametric route trades sample size for lower variance); both methods
    then run the same BH-corrected tests on identical batches.
    """
    root = np.random.SeedSequence(seed)
    streams = root.spawn(3 + 2 * n_test_sets)
    model = _fit_on_bm(stat, n_fit, n_steps, horizon, level, transforms, streams[0])
    cal_small = anomaly_scores(
        model,
        _transformed(simulate_bm(n_cal, n_steps, horizon=horizon, seed=streams[1]), transforms),
    )
    cal_large = anomaly_scores(
        model,
        _transformed(
            simulate_bm(n_cal_tail, n_steps, horizon=horizon, seed=streams[2]), transforms
        ),
    )
    try:
        tail = weibull_tail_fit(cal_large, level, tail_fraction)
    except ValueError as exc:
        raise NumericalError(f"Weibull tail fit failed: {exc}")
    n_out = int(round(outlier_frac * n_test))
    spike = SpikeConfig(eps=eps, n_steps=n_steps, horizon=horizon)
    rows = []
    for l in range(n_test_sets):
        normal = simulate_bm(n_test - n_out, n_steps, horizon=horizon, seed=streams[3 + 2 * l])
        outliers = simulate_spiked_bm(spike, n_out, seed=streams[4 + 2 * l])
        batch = _transformed(list(normal) + list(outliers), transforms)
        values = anomaly_scores(model, batch)
        labels = np.concatenate([np.zeros(n_test - n_out, bool), np.ones(n_out, bool)])
        for method, pvals in (
            ("empirical", empirical_pvalues(values, cal_small)),
            ("weibull", parametric_pvalue(values, tail)),
        ):
            rejected = benjamini_hochberg(pvals, alpha_fdr)
            report = evaluate(values, pvals, rejected, labels)
            raw_reject = pvals <= alpha_raw
            rows.append(
                {
                    "method": method,
                    "test_set": l,
                    "fdr": report.summary["fdr"],
                    "power": report.summary["power"],
                    "fpr_raw": float((raw_reject & ~labels).sum() / max(1, (~labels).sum())),
                }
            )
    summary = {
        "tail_model": tail.to_json_dict(),
        "stat": stat,
        "level": level,
        "transforms": list(transforms),
        "marginal_fdr": {
            m: float(np.mean([r["fdr"] for r in rows if r["method"] == m]))
            for m in ("empirical", "weibull")
        },
        "marginal_power": {
            m: float(np.mean([r["power"] for r in rows if r["method"] == m]))
            for m in ("empirical", "weibull")
        },
        "marginal_fpr_raw": {
            m: float(np.mean([r["fpr_raw"] for r in rows if r["method"] == m]))
            for m in ("empirical", "weibull")
        },
    }
    return rows, summary


def run_cvar_descent_demo(
    n_paths: int = 200,
    n_steps: int = 50,
    level: int = 2,
    degree: int = 4,
    alpha: float = 0.9,
    reg_weight: float = 1.0,
    n_iter: int = 30,
    step_size: float = 0.25,
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """Minimal gradient-descent demonstrator for the smooth-CVaR objective.

    Descends CVaR_alpha(-<w, S(X)>) + reg/2 ||w||^2 over the functional
    coordinates with central-difference gradients, evaluating the objective
    exactly through the expected-signature polynomial at every step.  A
    demonstrator only: plain fixed-step descent, not a production solver.
    """
    from .cvar import CvarSurrogateSpec, minimize_cvar_polynomial, smooth_cvar_coefficients
    from .scores import fit_expected_signature
    from .signatures import signature_matrix

    paths = simulate_bm(n_paths, n_steps, d=1, horizon=1.0, seed=seed)
    expected_sig = fit_expected_signature(paths, degree * level).mean
    sig_rows = signature_matrix(paths, level)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    n_coords = tensor_dim(1, level) - 1  # empty-word coefficient pinned to 0
    w_vec = rng.normal(size=n_coords)
    spec = CvarSurrogateSpec.for_scores(
        sig_rows @ np.concatenate([[0.0], w_vec]), alpha, degree=degree
    )

    def objective(vec: np.ndarray) -> tuple[float, float]:
        functional = TruncatedTensor.from_dense(1, level, np.concatenate([[0.0], vec]))
        poly = smooth_cvar_coefficients(-1.0 * functional, expected_sig, spec)
        rho_star, value = minimize_cvar_polynomial(poly)
        penalty = 0.5 * reg_weight * float(vec @ vec)
        return value + penalty, rho_star

    rows = []
    for iteration in range(n_iter + 1):
        value, rho_star = objective(w_vec)
        rows.append(
            {
                "iteration": iteration,
                "objective": value,
                "rho_star": rho_star,
                "w_norm": float(np.linalg.norm(w_vec)),
            }
        )
        if iteration == n_iter:
            break
        grad = np.empty(n_coords)
        h = 1e-5
        for k in range(n_coords):
            bump = np.zeros(n_coords)
            bump[k] = h
            grad[k] = (objective(w_vec + bump)[0] - objective(w_vec - bump)[0]) / (2 * h)
        w_vec = w_vec - step_size * grad
    summary = {
        "initial_objective": rows[0]["objective"],
        "final_objective": rows[-1]["objective"],
        "decreased": rows[-1]["objective"] < rows[0]["objective"],
        "surrogate_half_width": spec.half_width,
        "degree": degree,
        "level": level,
        "alpha": alpha,
        "reg_weight": reg_weight,
    }
    return rows, summary


_BENCH_FIELDS = {
    "spike-auroc": ["eps", "auroc", "n_normal", "n_spiked"],
    "researcher-fdr": ["researcher", "test_set", "fdr", "power", "fpr_raw", "n_rejected"],
    "tamsd-compare": ["statistic", "eps", "auroc", "skipped", "note"],
    "pvalue-compare": ["method", "test_set", "fdr", "power", "fpr_raw"],
    "cvar-descent": ["iteration", "objective", "rho_star", "w_norm"],
}


def cmd_bench(cfg: dict) -> int:
    outdir = _outdir(cfg)
    suite = cfg["suite"]
    suites = list(_BENCH_FIELDS) if suite == "all" else [suite]
    for name in suites:
        if name not in _BENCH_FIELDS:
            raise ConfigError(f"unknown bench suite {name!r}")
    seed = int(cfg["seed"])
    level = int(cfg["level"])
    transforms = cfg["transforms"]
    scale = float(cfg["scale"])
    if scale <= 0:
        raise ConfigError("--scale must be positive")

    def sized(n: int, lo: int = 20) -> int:
        return max(lo, int(round(n * scale)))

    for name in suites:
        if name == "spike-auroc":
            rows, summary = run_spike_auroc(
                n_fit=sized(1000),
                n_normal=sized(500),
                n_spiked=sized(500),
                level=level,
                transforms=transforms,
                stat=cfg["stat"],
                seed=seed,
            )
        elif name == "researcher-fdr":
            rows, summary = run_researcher_protocol(
                n_researchers=sized(20, lo=2),
                n_fit=sized(400),
                n_cal=sized(400),
                n_test_sets=sized(10, lo=2),
                n_test=sized(200),
                eps=float(cfg["eps"]),
                level=level,
                transforms=transforms,
                stat=cfg["stat"],
                alpha_fdr=float(cfg["alpha"]),
                correction="storey" if cfg["correction"] == "storey" else "bh",
                seed=seed,
            )
        elif name == "tamsd-compare":
            rows, summary = run_tamsd_compare(
                n_fit=sized(300),
                n_normal=sized(200),
                n_spiked=sized(200),
                level=level,
                transforms=transforms,
                seed=seed,
            )
        elif name == "cvar-descent":
            rows, summary = run_cvar_descent_demo(n_paths=sized(200), seed=seed)
        else:
            rows, summary = run_pvalue_compare(
                eps=float(cfg["eps"]),
                n_fit=sized(500),
                n_cal=sized(500),
                n_cal_tail=sized(20_000),
                n_test_sets=sized(10, lo=2),
                n_test=sized(200),
                level=level,
                transforms=transforms,
                stat=cfg["stat"],
                alpha_fdr=float(cfg["alpha"]),
                seed=seed,
            )
        _write_rows_csv(outdir / f"{name}.csv", _BENCH_FIELDS[name], rows)
        _write_json(outdir / f"{name}_summary.json", summary)
    _write_manifest(outdir, "bench", cfg)
    return 0


# -- argument parsing -----------------------------------------------------------


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="flat key=value file or manifest JSON; flags override")
    sp.add_argument("--output", help="output directory")
    sp.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signovel",
        description="Signature-based novelty detection pipelines on path space.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate synthetic path datasets")
    _add_common(p)
    p.add_argument("--generator", choices=["bm", "spike", "fbm", "researcher"], default=None)
    p.add_argument("--n-paths", type=int, default=None, dest="n_paths")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--hurst", type=float, default=None)
    p.add_argument("--researchers", type=int, default=None)
    p.add_argument("--test-sets", type=int, default=None, dest="test_sets")
    p.add_argument("--test-size", type=int, default=None, dest="test_size")
    p.add_argument("--outlier-frac", type=float, default=None, dest="outlier_frac")
    p.set_defaults(
        _defaults=dict(
            generator="bm", n_paths=100, steps=200, dim=1, horizon=1.0, eps=0.0,
            hurst=0.5, researchers=2, test_sets=2, test_size=100, outlier_frac=0.1, seed=0,
        ),
        _run=cmd_simulate,
    )

    p = sub.add_parser("fit", help="fit a score statistic on a path CSV")
    _add_common(p)
    p.add_argument("--input", default=None)
    p.add_argument("--stat", choices=["dist", "conf", "ocsvm"], default=None)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--transforms", type=_parse_transforms, default=None,
                   help="comma-separated transform names applied left to right; 'none' disables")
    p.add_argument("--gamma-nu", type=float, default=None, dest="gamma_nu")
    p.add_argument("--eps-reg", type=float, default=None, dest="eps_reg",
                   help="conformance ridge; negative means the automatic default")
    p.add_argument("--keep-corpus", action="store_const", const=True, default=None,
                   dest="keep_corpus")
    p.set_defaults(
        _defaults=dict(
            input="", stat="dist", level=4, transforms=DEFAULT_TRANSFORMS,
            gamma_nu=0.2, eps_reg=-1.0, keep_corpus=False, seed=0,
        ),
        _run=cmd_fit,
    )

    p = sub.add_parser("score", help="score paths against a fitted model")
    _add_common(p)
    p.add_argument("--input", default=None)
    p.add_argument("--model", default=None)
    p.set_defaults(_defaults=dict(input="", model="", seed=0), _run=cmd_score)

    p = sub.add_parser("test", help="p-values, corrections and a test report")
    _add_common(p)
    p.add_argument("--scores", default=None)
    p.add_argument("--calibration", default=None)
    p.add_argument("--tail-model", default=None, dest="tail_model")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--pvalue-method", choices=["empirical", "weibull", "tci"], default=None,
                   dest="pvalue_method")
    p.add_argument("--correction", choices=["none", "bh", "storey"], default=None)
    p.add_argument("--storey-lambda", type=float, default=None, dest="storey_lambda")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--tail-fraction", type=float, default=None, dest="tail_fraction")
    p.add_argument("--labels", default=None)
    p.add_argument("--label-prefix", default=None, dest="label_prefix")
    p.add_argument("--deviation", choices=["quadratic", "rde"], default=None,
                   help="deviation function of the assumed TCI")
    p.add_argument("--deviation-q", type=float, default=None, dest="deviation_q")
    p.add_argument("--tci-p", type=float, default=None, dest="tci_p",
                   help="cost exponent of the assumed TCI")
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--rho-hat", type=float, default=None, dest="rho_hat")
    p.add_argument("--w-norm", type=float, default=None, dest="w_norm",
                   help="norm of the score functional, for TCI p-values")
    p.add_argument("--dim", type=int, default=None,
                   help="path dimension, for TCI p-values")
    p.set_defaults(
        _defaults=dict(
            scores="", calibration="", tail_model="", alpha=0.1,
            pvalue_method="empirical", correction="bh", storey_lambda=0.5,
            level=0, tail_fraction=0.2, labels="", label_prefix="",
            deviation="quadratic", deviation_q=2.0, tci_p=1.0,
            c1=1.0, c2=1.0, rho_hat=1.0, w_norm=1.0, dim=1, seed=0,
        ),
        _run=cmd_test,
    )

    p = sub.add_parser("bench", help="run the synthetic experiment suites")
    _add_common(p)
    p.add_argument("--suite",
                   choices=["spike-auroc", "researcher-fdr", "tamsd-compare",
                            "pvalue-compare", "cvar-descent", "all"],
                   default=None)
    p.add_argument("--stat", choices=["dist", "conf", "ocsvm"], default=None)
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--transforms", type=_parse_transforms, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--correction", choices=["bh", "storey"], default=None)
    p.add_argument("--scale", type=float, default=None,
                   help="multiplier on the default suite sizes (1.0 = desk scale)")
    p.set_defaults(
        _defaults=dict(
            suite="spike-auroc", stat="dist", level=4, transforms=("time",),
            alpha=0.1, eps=4.0, correction="bh", scale=1.0, seed=0,
        ),
        _run=cmd_bench,
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        flags = argparse.Namespace(
            **{
                k: v
                for k, v in vars(args).items()
                if k not in ("_defaults", "_run", "subcommand")
            }
        )
        merged = _merge(dict(args._defaults), flags, args.config)
        return args._run(merged)
    except ConfigError as exc:
        print(f"signovel: config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"signovel: data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, LevelCapError) as exc:
        print(f"signovel: numerical failure: {exc}", file=sys.stderr)
        return 4


def _merge(defaults: dict, args: argparse.Namespace, config_path: str | None) -> dict:
    resolved = dict(defaults)
    resolved.setdefault("output", None)
    if config_path:
        file_cfg = _load_config_file(config_path)
        for key, value in file_cfg.items():
            dest = key.replace("-", "_")
            if dest in ("subcommand", "config"):
                continue
            if dest not in resolved:
                raise ConfigError(f"unknown config key {key!r}")
            base = resolved[dest]
            if isinstance(value, str) and base is not None and not isinstance(base, str):
                value = _coerce(value, base, key)
            if isinstance(value, list):
                value = tuple(value)
            resolved[dest] = value
    for key, value in vars(args).items():
        if value is not None and key != "config":
            resolved[key] = value
    return resolved


if __name__ == "__main__":
    sys.exit(main())

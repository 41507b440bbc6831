"""Command-line harness for the simulation and training pipelines.

Subcommands: sim1 (dimensionality vs categorization accuracy grid), sim2
(generalization contours after learning axis-aligned clusters), fewshot
(one-shot/zero-shot model comparison against a synthetic reference
chooser), theory-check (analytic-vs-Monte-Carlo report), deep (embedding
classifier training), crp-check (prior sanity). Every command writes its
outputs plus a manifest.json (config echo, seed, content hashes of file
inputs) into --out; outputs are byte-deterministic given (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import baselines, contours, deep_head, dpmix, fewshot, ppca, theory
from .datatypes import Dataset

# ---------------------------------------------------------------------------
# config plumbing


DEFAULTS: dict[str, dict] = {
    "sim1": {
        "distances": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0],
        "noise_sds": [0.5, 1.0, 1.5, 2.0],
        "var_first": 4.0,
        "var_third": 0.25,
        "samples": 10000,
        "qs": [0, 1, 2],
    },
    "sim2": {
        "centers": [[-3.0, -5.0], [-3.0, 5.0], [3.0, -5.0], [3.0, 5.0]],
        "long_axes": [1, 1, 1, 1],  # 0 = elongated along x, 1 = along y
        "var_long": 4.0,
        "var_short": 0.1,
        "n_per": 200,
        "anchor": [0.0, 0.0],
        "grid_extent": 8.0,
        "grid_points": 41,
        "epochs": 20,
        "n_new_draws": 64,
        "level": 0.5,
        "hyper": {},
    },
    "fewshot": {
        "center_size": 2.0,
        "var_size": 0.05,
        "var_color": 4.0,
        "n_train_per": 40,
        "n_test": 40,
        "new_size": 0.0,
        "sub_parent": 1,
        "sub_z": 2.0,
        "sub_sigma2": 0.05,
        "reference": "mppca",
        "n_boot": 1000,
        "hyper": {},
    },
    "theory-check": {
        "n_orientation_configs": 1000,
        "n_bound_configs": 200,
        "bound_draws": 20000,
        "n_snr_configs": 20,
        "snr_draws": 100000,
        "d_range": [3, 8],
    },
    "deep": {
        "embeddings": None,
        "soft_labels": None,
        "covariances": None,
        "epochs": 150,
        "batch_size": 64,
        "learning_rate": 0.05,
        "momentum": 0.9,
        "lambda2": 0.001,
        "lambda1": None,  # None means the conventional C * lambda2
        "validation_fraction": 0.2,
        "init_scale": 0.1,
    },
    "crp-check": {
        "n": 50,
        "gamma": 1.0,
        "sequences": 100000,
        "tolerance": 0.01,
    },
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    out_dir: Path
    params: dict


def _load_config(command: str, args) -> RunConfig:
    params = dict(DEFAULTS[command])
    file_hash = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise SystemExit(f"config file not found: {path}")
        loaded = json.loads(path.read_text())
        unknown = sorted(set(loaded) - set(params) - {"seed"})
        if unknown:
            raise SystemExit(f"unknown config keys for {command}: {unknown}")
        params.update({k: v for k, v in loaded.items() if k != "seed"})
        if args.seed is None and "seed" in loaded:
            args.seed = int(loaded["seed"])
        file_hash[str(path)] = _sha256_file(path)
    seed = 0 if args.seed is None else int(args.seed)
    if args.samples is not None:
        key = {
            "sim1": "samples",
            "sim2": "n_per",
            "fewshot": "n_test",
            "theory-check": "bound_draws",
            "crp-check": "sequences",
        }.get(command)
        if key is not None:
            params[key] = int(args.samples)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params["_config_file_hashes"] = file_hash
    return RunConfig(command=command, seed=seed, out_dir=out_dir, params=params)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _sha256_array(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(np.asarray(arr, dtype=float)).tobytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_manifest(cfg: RunConfig, outputs, input_hashes=None, extra=None) -> None:
    params = {k: v for k, v in cfg.params.items() if k != "_config_file_hashes"}
    hashes = dict(cfg.params.get("_config_file_hashes", {}))
    hashes.update(input_hashes or {})
    doc = {
        "command": cfg.command,
        "seed": cfg.seed,
        "config": params,
        "input_hashes": hashes,
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    _write_json(cfg.out_dir / "manifest.json", doc)


def read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    """Reader counterpart of _write_csv (header row + string cells)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# sim1: dimensionality of the category representation


SIM1_DIRECTIONS = {
    "a": np.array([0.0, 1.0, 0.0]),  # one informative dimension (dim 2)
    "b": np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0),  # two informative dimensions
    "c": np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0),  # all equally informative
}


def _sim1_models(variances: np.ndarray, qs) -> dict[int, tuple[np.ndarray, float]]:
    """Per q: loading matrix from the true coordinate-aligned spectrum and
    the matching noise floor (mean of discarded eigenvalues)."""
    vals, vecs = ppca._canonical_eig_order(variances.copy(), np.eye(variances.size))
    models = {}
    for q in qs:
        if not 0 <= q < variances.size:
            raise SystemExit(f"invalid q={q} for d={variances.size}")
        sigma2 = float(np.mean(vals[q:]))
        scales = np.sqrt(np.clip(vals[:q] - sigma2, 0.0, None))
        models[q] = (vecs[:, :q] * scales[None, :], sigma2)
    return models


def cmd_sim1(cfg: RunConfig) -> int:
    p = cfg.params
    qs = list(p["qs"])
    n = int(p["samples"])
    rows = []
    for name, direction in SIM1_DIRECTIONS.items():
        for i_dist, dist in enumerate(p["distances"]):
            mu_a = np.zeros(3)
            mu_b = dist * direction
            # common standard-normal draws across noise levels and q
            gen = np.random.default_rng([cfg.seed, ord(name), i_dist])
            g_a = gen.standard_normal((n // 2, 3))
            g_b = gen.standard_normal((n - n // 2, 3))
            for noise_sd in p["noise_sds"]:
                variances = np.array([p["var_first"], noise_sd**2, p["var_third"]])
                sds = np.sqrt(variances)
                x_a = mu_a + g_a * sds
                x_b = mu_b + g_b * sds
                for q, (W, sigma2) in _sim1_models(variances, qs).items():
                    par_a = ppca.PpcaParams(mu=mu_a, W=W, sigma2=sigma2) if q else None
                    par_b = ppca.PpcaParams(mu=mu_b, W=W, sigma2=sigma2) if q else None
                    if q == 0:
                        iso_a = ppca.PpcaParams(mu=mu_a, W=np.zeros((3, 0)), sigma2=sigma2)
                        iso_b = ppca.PpcaParams(mu=mu_b, W=np.zeros((3, 0)), sigma2=sigma2)
                        par_a, par_b = iso_a, iso_b
                    ll_aa = ppca.marginal_log_density(x_a, par_a)
                    ll_ab = ppca.marginal_log_density(x_a, par_b)
                    ll_ba = ppca.marginal_log_density(x_b, par_a)
                    ll_bb = ppca.marginal_log_density(x_b, par_b)
                    p_correct_a = 1.0 / (1.0 + np.exp(ll_ab - ll_aa))
                    p_correct_b = 1.0 / (1.0 + np.exp(ll_ba - ll_bb))
                    acc = float((p_correct_a.sum() + p_correct_b.sum()) / n)
                    rows.append([name, float(dist), float(noise_sd), q, float(sigma2), acc])
    out = cfg.out_dir / "sim1_accuracy.csv"
    _write_csv(out, ["config", "distance", "noise_sd", "q", "sigma2", "expected_accuracy"], rows)
    _write_manifest(cfg, [out.name])
    return 0


# ---------------------------------------------------------------------------
# sim2: generalization contours


def _sim2_training_data(p: dict, seed: int) -> Dataset:
    gen = np.random.default_rng([seed, 2])
    centers = np.asarray(p["centers"], dtype=float)
    xs, labels = [], []
    for c, center in enumerate(centers):
        var = np.full(2, p["var_short"])
        var[int(p["long_axes"][c])] = p["var_long"]
        xs.append(center + gen.standard_normal((int(p["n_per"]), 2)) * np.sqrt(var))
        labels.append(np.full(int(p["n_per"]), c))
    return Dataset(x=np.concatenate(xs), labels=np.concatenate(labels))


def cmd_sim2(cfg: RunConfig) -> int:
    p = cfg.params
    data = _sim2_training_data(p, cfg.seed)
    hyper = dpmix.Hyperparams(**p["hyper"])
    anchor = np.asarray(p["anchor"], dtype=float)
    model = dpmix.fit_unsupervised(Dataset(x=data.x), hyper, epochs=int(p["epochs"]), rng=cfg.seed)

    exemplar_base = baselines.fit_exemplar(data)
    prototype_base = baselines.fit_prototype(data)

    def p_mppca(points):
        return dpmix.generalization_grid(model, anchor, points, n_new_draws=int(p["n_new_draws"]), rng=cfg.seed)

    def p_nosharing(points):
        return dpmix.generalization_grid(
            model, anchor, points, n_new_draws=int(p["n_new_draws"]), rng=cfg.seed, share_loadings=False
        )

    # similarity gradients around the instructed point: training shapes only
    # the sensitivity scale, never the contour shape (no transfer)
    def p_exemplar(points):
        dist = np.linalg.norm(np.atleast_2d(points) - anchor, axis=1)
        return np.exp(-exemplar_base.sensitivity * dist)

    def p_prototype(points):
        dist = np.linalg.norm(np.atleast_2d(points) - anchor, axis=1)
        return np.exp(-prototype_base.sensitivity * dist**2)

    fns = {"mppca": p_mppca, "dp_nosharing": p_nosharing, "exemplar": p_exemplar, "prototype": p_prototype}
    axis = np.linspace(-p["grid_extent"], p["grid_extent"], int(p["grid_points"]))
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    lattice = np.stack([xx.ravel(), yy.ravel()], axis=1)
    grids = {name: fn(lattice).reshape(xx.shape) for name, fn in fns.items()}

    summary = {}
    for name, fn in fns.items():
        radii, dirs = contours.level_crossing_radii(fn, anchor, level=float(p["level"]), r_max=2.0 * p["grid_extent"])
        entry = {"n_crossings": int(np.sum(np.isfinite(radii)))}
        if np.sum(np.isfinite(radii)) >= 3:
            axes, lengths = contours.ellipse_fit(radii, dirs, anchor)
            entry.update(
                {
                    "anisotropy_ratio": contours.anisotropy_ratio(radii),
                    "major_axis": axes[0].tolist(),
                    "axis_ratio": float(lengths[0] / lengths[1]),
                    "angle_to_x_deg": contours.angle_to_axis_deg(axes[0], 0),
                    "angle_to_y_deg": contours.angle_to_axis_deg(axes[0], 1),
                }
            )
        summary[name] = entry

    doc = {
        "axis": axis.tolist(),
        "anchor": anchor.tolist(),
        "level": p["level"],
        "grids": {name: grid.tolist() for name, grid in grids.items()},
        "contour_summary": summary,
        "model": json.loads(dpmix.model_to_json(model)),
    }
    out = cfg.out_dir / "sim2_grids.json"
    _write_json(out, doc)
    _write_manifest(cfg, [out.name], extra={"training_data_hash": _sha256_array(data.x)})
    return 0


# ---------------------------------------------------------------------------
# fewshot: model comparison against a synthetic reference chooser


def _fewshot_environment(p: dict, seed: int):
    """Two trained categories split on size with shared color variation, the
    one-shot sample at a new size value, and per-task probe stimuli: around
    the new sample for the new-category session, from the parent category
    for the subcategory session."""
    gen = np.random.default_rng([seed, 3])
    sds = np.sqrt(np.array([p["var_size"], p["var_color"]]))
    centers = np.array([[-p["center_size"], 0.0], [p["center_size"], 0.0]])
    n_per = int(p["n_train_per"])
    xs = [centers[c] + gen.standard_normal((n_per, 2)) * sds for c in range(2)]
    train = Dataset(x=np.concatenate(xs), labels=np.repeat(np.arange(2), n_per))
    x1 = np.array([p["new_size"], 0.0])  # the one-shot new-category sample
    n_test = int(p["n_test"])
    test_new = x1 + gen.standard_normal((n_test, 2)) * sds
    test_sub = centers[int(p["sub_parent"])] + gen.standard_normal((n_test, 2)) * sds
    return train, x1, test_new, test_sub


def _mppca_newcat_predictions(model, x1, test):
    mixture = fewshot.new_category_predictive(x1, model)
    from .datatypes import Prediction

    preds = []
    for x in test:
        log_scores = [ppca.marginal_log_density(x, cat) for cat in model.categories]
        log_scores.append(mixture.log_density(x))
        preds.append(Prediction.from_log_scores(np.array(log_scores)))
    return preds


def _mppca_subcat_predictions(model, spec, test):
    from .datatypes import Prediction

    preds = []
    for x in test:
        log_scores = [ppca.marginal_log_density(x, cat) for cat in model.categories]
        log_scores.append(fewshot.subcategory_log_density(x, spec))
        preds.append(Prediction.from_log_scores(np.array(log_scores)))
    return preds


def _baseline_predictions(train: Dataset, extra_point: np.ndarray, test: np.ndarray):
    """Exemplar/prototype variants over {existing categories} + {the
    instructed category represented by a single point}."""
    out = {}
    for attention in (False, True):
        ex = baselines.fit_exemplar(train, use_attention=attention)
        store = baselines.ExemplarStore(
            exemplars=ex.exemplars + (extra_point[None, :],),
            sensitivity=ex.sensitivity,
            attention=ex.attention,
        )
        name = "exemplar_attention" if attention else "exemplar"
        out[name] = [baselines.exemplar_predict(x, store) for x in test]
        pr = baselines.fit_prototype(train, use_attention=attention)
        pstore = baselines.PrototypeStore(
            prototypes=np.vstack([pr.prototypes, extra_point[None, :]]),
            sensitivity=pr.sensitivity,
            attention=pr.attention,
        )
        name = "prototype_attention" if attention else "prototype"
        out[name] = [baselines.prototype_predict(x, pstore) for x in test]
    return out


def cmd_fewshot(cfg: RunConfig) -> int:
    p = cfg.params
    train, x1, test_new, test_sub = _fewshot_environment(p, cfg.seed)
    hyper = dpmix.Hyperparams(**p["hyper"])
    model = dpmix.fit_supervised(train, hyper)

    tasks = {}
    # one-shot new category: third option represented by the single sample
    preds = {"mppca": _mppca_newcat_predictions(model, x1, test_new)}
    preds.update(_baseline_predictions(train, x1, test_new))
    tasks["new_category"] = (preds, test_new)
    # zero-shot subcategory: instruction pins the latent score on the parent
    parent = model.categories[int(p["sub_parent"])]
    spec = fewshot.SubcategorySpec(parent=parent, z_sub=float(p["sub_z"]), sigma2=float(p["sub_sigma2"]))
    sub_point = spec.center
    preds2 = {"mppca": _mppca_subcat_predictions(model, spec, test_sub)}
    preds2.update(_baseline_predictions(train, sub_point, test_sub))
    tasks["subcategory"] = (preds2, test_sub)

    reference_name = str(p["reference"])
    rows = []
    pnew_rows = []
    for task, (model_preds, test) in tasks.items():
        if reference_name not in model_preds:
            raise SystemExit(f"reference model {reference_name!r} not in {sorted(model_preds)}")
        reference = np.array([pr.categories for pr in model_preds[reference_name]])
        # linear rule is fitted directly to the reference probabilities
        weights, bias = baselines.fit_linear_rule(test, reference)
        model_preds["linear_rule"] = [baselines.linear_rule_predict(x, weights, bias) for x in test]
        table = baselines.compare_models(model_preds, reference, n_boot=int(p["n_boot"]), rng=cfg.seed)
        for name in sorted(table):
            m = table[name]
            rows.append(
                [task, name, m["expected_accuracy"], m["expected_accuracy_se"], m["correlation"], m["correlation_se"]]
            )
        for i in range(test.shape[0]):
            for name in sorted(model_preds):
                pnew_rows.append([task, i, name, float(model_preds[name][i].categories[-1])])

    out_metrics = cfg.out_dir / "fewshot_metrics.csv"
    _write_csv(
        out_metrics,
        ["task", "model", "expected_accuracy", "expected_accuracy_se", "correlation", "correlation_se"],
        rows,
    )
    out_pnew = cfg.out_dir / "fewshot_new_mass.csv"
    _write_csv(out_pnew, ["task", "stimulus", "model", "p_instructed"], pnew_rows)
    _write_manifest(
        cfg,
        [out_metrics.name, out_pnew.name],
        extra={
            "stimulus_hashes": {"new_category": _sha256_array(test_new), "subcategory": _sha256_array(test_sub)},
            "train_hash": _sha256_array(train.x),
            "conventions": baselines.CONVENTIONS,
        },
    )
    return 0


# ---------------------------------------------------------------------------
# theory-check


def cmd_theory_check(cfg: RunConfig) -> int:
    p = cfg.params
    report = {"orientation": theory.orientation_report(int(p["n_orientation_configs"]), tuple(p["d_range"]), rng=cfg.seed)}
    gen = np.random.default_rng([cfg.seed, 4])
    violations = 0
    checked = 0
    worst = 0.0
    for _ in range(int(p["n_bound_configs"])):
        d = int(gen.integers(p["d_range"][0], p["d_range"][1] + 1))
        spec = theory.random_two_category_spec(d, gen)
        decomp = theory.info_decomposition(spec)
        q = int(gen.integers(0, d))
        try:
            snr = theory.snr_analytic(q, decomp, spec.eigvals)
        except theory.DegenerateConfigError:
            continue
        bound = theory.accuracy_lower_bound(snr)
        acc, se = theory.mc_classifier_accuracy(spec, q, n_draws=int(p["bound_draws"]), rng=gen)
        checked += 1
        slack = acc - bound
        worst = min(worst, slack + 3.0 * se)
        if slack < -3.0 * se:
            violations += 1
    report["chebyshev"] = {"n_checked": checked, "n_violations": violations, "worst_slack_plus_3se": worst}
    max_abs_z = 0.0
    for _ in range(int(p["n_snr_configs"])):
        d = int(gen.integers(p["d_range"][0], p["d_range"][1] + 1))
        spec = theory.random_two_category_spec(d, gen)
        decomp = theory.info_decomposition(spec)
        q = int(gen.integers(0, d))
        mean, var = theory.alpha_moments(q, decomp, spec.eigvals)
        mc_mean, mc_var, se_mean, se_var = theory.mc_alpha_moments(spec, q, n_draws=int(p["snr_draws"]), rng=gen)
        max_abs_z = max(max_abs_z, abs(mc_mean - mean) / se_mean, abs(mc_var - var) / se_var)
    report["snr_moments"] = {"n_configs": int(p["n_snr_configs"]), "max_abs_z": max_abs_z}
    ok = (
        report["orientation"]["n_mismatch"] == 0
        and violations == 0
        and (int(p["n_snr_configs"]) == 0 or max_abs_z < 5.0)
    )
    report["ok"] = bool(ok)
    out = cfg.out_dir / "theory_report.json"
    _write_json(out, report)
    _write_manifest(cfg, [out.name])
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# deep


def cmd_deep(cfg: RunConfig) -> int:
    p = cfg.params
    if not p["embeddings"] or not p["soft_labels"]:
        raise SystemExit("deep requires 'embeddings' and 'soft_labels' paths in the config")
    emb_path, lab_path = Path(p["embeddings"]), Path(p["soft_labels"])
    for path in (emb_path, lab_path):
        if not path.is_file():
            raise SystemExit(f"input file not found: {path}")
    emb_ids, emb = deep_head.read_embeddings_csv(emb_path)
    lab_ids, labels = deep_head.read_soft_labels_csv(lab_path)
    batch = deep_head.align_soft_labels(emb_ids, emb, lab_ids, labels)
    n_heads = batch.targets.shape[1]
    lambda2 = float(p["lambda2"])
    lambda1 = deep_head.default_lambda1(n_heads, lambda2) if p["lambda1"] is None else float(p["lambda1"])
    config = deep_head.TrainConfig(
        epochs=int(p["epochs"]),
        batch_size=int(p["batch_size"]),
        learning_rate=float(p["learning_rate"]),
        momentum=float(p["momentum"]),
        lambda1=lambda1,
        lambda2=lambda2,
        validation_fraction=float(p["validation_fraction"]),
        seed=cfg.seed,
    )
    heads = deep_head.init_heads_for(batch, rng=cfg.seed, scale=float(p["init_scale"]))
    heads, trace = deep_head.train(batch, heads, config)

    outputs = []
    heads_path = cfg.out_dir / "heads.json"
    heads_path.write_text(deep_head.heads_to_json(heads) + "\n")
    outputs.append(heads_path.name)
    trace_path = cfg.out_dir / "trace.csv"
    header = ["epoch", "train_loss"] + (["val_loss"] if "val_loss" in trace[0] else [])
    _write_csv(trace_path, header, [[e["epoch"]] + [e[k] for k in header[1:]] for e in trace])
    outputs.append(trace_path.name)
    hashes = {str(emb_path): _sha256_file(emb_path), str(lab_path): _sha256_file(lab_path)}
    if p["covariances"]:
        cov_path = Path(p["covariances"])
        if not cov_path.is_file():
            raise SystemExit(f"input file not found: {cov_path}")
        covs = [np.asarray(c, dtype=float) for c in json.loads(cov_path.read_text())]
        fractions = deep_head.spectrum_report(covs)
        spec_path = cfg.out_dir / "spectrum.csv"
        _write_csv(
            spec_path,
            ["category"] + [f"fraction_{i}" for i in range(fractions.shape[1])],
            [[k] + row.tolist() for k, row in enumerate(fractions)],
        )
        outputs.append(spec_path.name)
        hashes[str(cov_path)] = _sha256_file(cov_path)
    _write_manifest(cfg, outputs, input_hashes=hashes)
    return 0


# ---------------------------------------------------------------------------
# crp-check


def cmd_crp_check(cfg: RunConfig) -> int:
    p = cfg.params
    counts = dpmix.simulate_crp(int(p["n"]), float(p["gamma"]), int(p["sequences"]), rng=cfg.seed)
    expected = dpmix.crp_expected_clusters(int(p["n"]), float(p["gamma"]))
    empirical = float(np.mean(counts))
    rel_error = abs(empirical - expected) / expected
    report = {
        "n": int(p["n"]),
        "gamma": float(p["gamma"]),
        "sequences": int(p["sequences"]),
        "empirical_mean_clusters": empirical,
        "expected_mean_clusters": expected,
        "relative_error": rel_error,
        "tolerance": float(p["tolerance"]),
        "ok": bool(rel_error <= float(p["tolerance"])),
    }
    out = cfg.out_dir / "crp_report.json"
    _write_json(out, report)
    _write_manifest(cfg, [out.name])
    return 0 if report["ok"] else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mppca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 0)")
        cmd.add_argument("--config", type=str, default=None, help="JSON config file")
        cmd.add_argument("--out", type=str, required=True, help="output directory")
        cmd.add_argument("--samples", type=int, default=None, help="sample-count override")
    return parser


HANDLERS = {
    "sim1": cmd_sim1,
    "sim2": cmd_sim2,
    "fewshot": cmd_fewshot,
    "theory-check": cmd_theory_check,
    "deep": cmd_deep,
    "crp-check": cmd_crp_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _load_config(args.command, args)
    return HANDLERS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line workflow: simulate, fit, predict, eval, barycenter.

File formats
------------
* Long (tidy) observation CSV with header ``unit_id,role,c1,...,cd``; one
  raw observation vector per row, ``role`` in {predictor, response}.
  Trailing empty coordinate cells are allowed so the two roles may have
  different arity; within a role the arity must be constant.
* Measures CSV with header ``unit_id[,projected,eta],mean_1..mean_d,
  cov_1_1..cov_d_d`` (covariance row-major), carrying one Gaussian per row.
* Versioned JSON for models, scenario configs, summaries and manifests.

Outputs start with a ``# schema_version=1`` comment line; readers here skip
``#`` lines. Floats print with 9 significant digits. Exit codes: 0 success,
2 input/config error, 3 numerical/degeneracy error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import GwregError, InputError, NumericalError
from .geometry import (
    GaussianMeasure,
    frechet_mean,
    stack_measures,
    wasserstein_distances,
)
from .regression import FitOptions, model_from_json, model_to_dict, predict_batch
from .sampling import empirical_moments, fit_from_samples
from .simulation import (
    PRESETS,
    load_config,
    records_to_csv,
    run_scenario,
    summarize_records,
)

ROLES = ("predictor", "response")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _hash_config(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_manifest(out_dir: str, command: str, config_doc: dict, seed) -> None:
    manifest = {
        "schema_version": 1,
        "command": command,
        "config_hash": _hash_config(config_doc),
        "seed": seed,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _read_rows(path: str) -> list[tuple[int, list[str]]]:
    """CSV rows with their 1-based line numbers, comments skipped."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#") or line.strip() == "":
            continue
        rows.append((lineno, next(csv.reader(io.StringIO(line)))))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _parse_float(cell: str, path: str, lineno: int) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise InputError(f"{path}:{lineno}: not a number: {cell!r}") from exc
    if math.isnan(value) or math.isinf(value):
        raise InputError(f"{path}:{lineno}: non-finite coordinate {cell!r}")
    return value


class LongData:
    """Parsed long-format observations, grouped by unit and role."""

    def __init__(self) -> None:
        self.unit_order: list[str] = []
        self.rows: dict[tuple[str, str], list[list[float]]] = {}
        self.arity: dict[str, int] = {}

    def units_with(self, role: str) -> list[str]:
        return [u for u in self.unit_order if (u, role) in self.rows]

    def block(self, units: Sequence[str], role: str) -> list[np.ndarray]:
        return [np.array(self.rows[(u, role)]) for u in units]


def read_long_csv(path: str) -> LongData:
    rows = _read_rows(path)
    lineno, header = rows[0]
    if len(header) < 3 or header[0] != "unit_id" or header[1] != "role":
        raise InputError(
            f"{path}:{lineno}: expected header 'unit_id,role,c1,...'"
        )
    max_arity = len(header) - 2
    data = LongData()
    for lineno, row in rows[1:]:
        if len(row) < 3:
            raise InputError(f"{path}:{lineno}: too few fields")
        if len(row) > len(header):
            raise InputError(f"{path}:{lineno}: more fields than header columns")
        unit, role = row[0], row[1]
        if role not in ROLES:
            raise InputError(
                f"{path}:{lineno}: role must be one of {ROLES}, got {role!r}"
            )
        cells = row[2:]
        while cells and cells[-1].strip() == "":
            cells.pop()
        if not cells:
            raise InputError(f"{path}:{lineno}: row has no coordinates")
        coords = [_parse_float(c, path, lineno) for c in cells]
        if len(coords) > max_arity:
            raise InputError(f"{path}:{lineno}: more coordinates than header")
        if role in data.arity and data.arity[role] != len(coords):
            raise InputError(
                f"{path}:{lineno}: role {role!r} arity changed from "
                f"{data.arity[role]} to {len(coords)}"
            )
        data.arity.setdefault(role, len(coords))
        if unit not in data.unit_order:
            data.unit_order.append(unit)
        data.rows.setdefault((unit, role), []).append(coords)
    return data


def _measures_header(d: int, with_flags: bool) -> list[str]:
    cols = ["unit_id"]
    if with_flags:
        cols += ["projected", "eta"]
    cols += [f"mean_{i + 1}" for i in range(d)]
    cols += [f"cov_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
    return cols


def write_measures_csv(
    path: str,
    unit_ids: Sequence[str],
    means: np.ndarray,
    covs: np.ndarray,
    projected: Optional[np.ndarray] = None,
    etas: Optional[np.ndarray] = None,
) -> None:
    d = means.shape[1]
    with_flags = projected is not None
    lines = ["# schema_version=1", ",".join(_measures_header(d, with_flags))]
    for i, unit in enumerate(unit_ids):
        cells = [str(unit)]
        if with_flags:
            cells += ["true" if projected[i] else "false", _fmt(float(etas[i]))]
        cells += [_fmt(x) for x in means[i]]
        cells += [_fmt(x) for x in covs[i].ravel(order="C")]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measures_csv(path: str) -> tuple[list[str], list[GaussianMeasure]]:
    rows = _read_rows(path)
    lineno, header = rows[0]
    if not header or header[0] != "unit_id":
        raise InputError(f"{path}:{lineno}: expected measures header")
    with_flags = len(header) > 2 and header[1] == "projected"
    base = 3 if with_flags else 1
    ncoord = len(header) - base
    d = int((math.isqrt(4 * ncoord + 1) - 1) // 2)
    if d * (d + 1) != ncoord or d < 1:
        raise InputError(f"{path}:{lineno}: header does not match d + d^2 layout")
    ids: list[str] = []
    measures: list[GaussianMeasure] = []
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields")
        values = [_parse_float(c, path, lineno) for c in row[base:]]
        mean = np.array(values[:d])
        cov = np.array(values[d:]).reshape(d, d)
        ids.append(row[0])
        measures.append(GaussianMeasure(mean, (cov + cov.T) / 2.0))
    return ids, measures


def _sniff_measures(path: str) -> bool:
    rows = _read_rows(path)
    _, header = rows[0]
    return len(header) >= 2 and header[0] == "unit_id" and header[1] != "role"


class Standardizer:
    """Per-coordinate affine scaling applied before moment estimation."""

    def __init__(self, offset: np.ndarray, scale: np.ndarray):
        self.offset = np.asarray(offset, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Standardizer":
        offset = rows.mean(axis=0)
        scale = rows.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(offset, scale)

    def forward(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.offset) / self.scale

    def invert_measure(
        self, mean: np.ndarray, cov: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        dmat = np.diag(self.scale)
        return self.offset + self.scale * mean, dmat @ cov @ dmat

    def to_dict(self) -> dict:
        return {"offset": self.offset.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["offset"]), np.asarray(doc["scale"]))


def _split_units(units: list[str], rule: str) -> list[str]:
    """Training-unit filter: 'all', or 'le:<value>'.

    Units compare numerically against the bound when both parse as numbers,
    lexicographically otherwise.
    """
    if rule == "all":
        return list(units)
    if rule.startswith("le:"):
        bound = rule[3:]

        def keep(u: str) -> bool:
            try:
                return float(u) <= float(bound)
            except ValueError:
                return u <= bound

        return [u for u in units if keep(u)]
    raise InputError(f"unknown split rule {rule!r}; use 'all' or 'le:<value>'")


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise InputError(
                f"unknown preset {args.preset!r}; available: {sorted(PRESETS)}"
            )
        cfg = PRESETS[args.preset]
    elif args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = load_config(fh.read())
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc
    else:
        raise InputError("simulate needs --config or --preset")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)

    os.makedirs(args.out, exist_ok=True)
    records = run_scenario(cfg)
    with open(
        os.path.join(args.out, "runs.csv"), "w", encoding="utf-8", newline=""
    ) as fh:
        fh.write(records_to_csv(records))
    summary = summarize_records(records)
    with open(
        os.path.join(args.out, "summary.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _write_manifest(args.out, "simulate", cfg.to_dict(), cfg.seed)
    print(
        f"simulated {cfg.runs} runs: median AWD proposed "
        f"{_fmt(summary['proposed']['awd']['median'])}, alternative "
        f"{_fmt(summary['alternative']['awd']['median'])}"
    )
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    if args.kind == "lowrank" and args.rank is None:
        raise InputError("--kind lowrank requires --rank")
    data = read_long_csv(args.data)
    units = [
        u
        for u in data.unit_order
        if (u, "predictor") in data.rows or (u, "response") in data.rows
    ]
    train_units = _split_units(units, args.split)
    missing = [
        u
        for u in train_units
        if (u, "predictor") not in data.rows or (u, "response") not in data.rows
    ]
    if missing:
        raise InputError(
            f"units missing a role in fit data: {', '.join(missing[:5])}"
        )
    if len(train_units) == 0:
        raise InputError("split rule selected no training units")
    if len(train_units) < 2 and not args.allow_single_unit:
        raise NumericalError(
            "only one training unit; barycenter reference is degenerate "
            "(pass --allow-single-unit to force)"
        )

    pred_rows = data.block(train_units, "predictor")
    resp_rows = data.block(train_units, "response")
    scalers = None
    if args.standardize:
        scalers = {
            "predictor": Standardizer.fit(np.vstack(pred_rows)),
            "response": Standardizer.fit(np.vstack(resp_rows)),
        }
        pred_rows = [scalers["predictor"].forward(r) for r in pred_rows]
        resp_rows = [scalers["response"].forward(r) for r in resp_rows]

    options = FitOptions(seed=args.seed if args.seed is not None else 0)
    pred_measures = [empirical_moments(r) for r in pred_rows]
    resp_measures = [empirical_moments(r) for r in resp_rows]
    model = fit_from_samples(
        pred_measures,
        resp_measures,
        kind="lowrank" if args.kind == "lowrank" else "basic",
        rank=args.rank,
        options=options,
    )

    doc = model_to_dict(model)
    doc["training_units"] = train_units
    if scalers is not None:
        doc["standardize"] = {k: v.to_dict() for k, v in scalers.items()}
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    config_doc = {
        "data": os.path.basename(args.data),
        "kind": args.kind,
        "rank": args.rank,
        "split": args.split,
        "standardize": bool(args.standardize),
    }
    _write_manifest(args.out, "fit", config_doc, options.seed)
    print(
        f"fitted {args.kind} model on {len(train_units)} units "
        f"(d1={model.d1}, d2={model.d2})"
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    try:
        with open(args.model, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read model: {exc}") from exc
    model = model_from_json(text)
    doc = json.loads(text)
    scaler_pred = scaler_resp = None
    if "standardize" in doc:
        scaler_pred = Standardizer.from_dict(doc["standardize"]["predictor"])
        scaler_resp = Standardizer.from_dict(doc["standardize"]["response"])

    if _sniff_measures(args.data):
        ids, measures = read_measures_csv(args.data)
        if scaler_pred is not None:
            raise InputError(
                "model was fitted with standardization; provide raw "
                "long-format observations instead of measures"
            )
    else:
        data = read_long_csv(args.data)
        ids = data.units_with("predictor")
        if not ids:
            raise InputError("no predictor rows in input")
        blocks = data.block(ids, "predictor")
        if scaler_pred is not None:
            blocks = [scaler_pred.forward(b) for b in blocks]
        measures = [empirical_moments(b) for b in blocks]

    means, covs = stack_measures(measures)
    pm, pc, projected, etas = predict_batch(model, means, covs)
    if scaler_resp is not None:
        for i in range(len(pm)):
            pm[i], pc[i] = scaler_resp.invert_measure(pm[i], pc[i])

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "predictions.csv")
    write_measures_csv(out_path, ids, pm, pc, projected, etas)
    _write_manifest(
        args.out,
        "predict",
        {"model": os.path.basename(args.model), "data": os.path.basename(args.data)},
        None,
    )
    print(f"predicted {len(ids)} units -> {out_path}")
    return 0


def _observed_measures(path: str) -> tuple[list[str], list[GaussianMeasure]]:
    if _sniff_measures(path):
        return read_measures_csv(path)
    data = read_long_csv(path)
    ids = data.units_with("response")
    if not ids:
        raise InputError(f"{path}: no response rows to evaluate against")
    return ids, [empirical_moments(b) for b in data.block(ids, "response")]


def cmd_eval(args: argparse.Namespace) -> int:
    pred_ids, pred_measures = read_measures_csv(args.predicted)
    obs_ids, obs_measures = _observed_measures(args.observed)
    obs_map = dict(zip(obs_ids, obs_measures))
    missing = [u for u in pred_ids if u not in obs_map]
    if missing:
        raise InputError(
            f"observed data lacks units: {', '.join(missing[:5])}"
        )
    fits = pred_measures
    truths = [obs_map[u] for u in pred_ids]
    tm, tc = stack_measures(truths)
    fm, fc = stack_measures(fits)
    dists = wasserstein_distances(tm, tc, fm, fc)
    qs = np.quantile(dists, [0.25, 0.5, 0.75])
    stats = [float(dists.min()), float(qs[0]), float(qs[1]), float(qs[2]), float(dists.max())]
    header = "min,q25,median,q75,max"
    row = ",".join(_fmt(s) for s in stats)
    print(header)
    print(row)
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "eval_summary.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(
                "# schema_version=1\n# quartiles=linear-interpolation\n"
                + header
                + "\n"
                + row
                + "\n"
            )
    return 0


def cmd_barycenter(args: argparse.Namespace) -> int:
    if _sniff_measures(args.data):
        _, measures = read_measures_csv(args.data)
    else:
        data = read_long_csv(args.data)
        ids = data.units_with(args.role)
        if not ids:
            raise InputError(f"no rows with role {args.role!r}")
        measures = [empirical_moments(b) for b in data.block(ids, args.role)]
    center = frechet_mean(measures)
    print("mean: " + " ".join(_fmt(x) for x in center.mean))
    print("cov:")
    for row in center.cov:
        print("  " + " ".join(_fmt(x) for x in row))
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        write_measures_csv(
            os.path.join(args.out, "barycenter.csv"),
            ["barycenter"],
            center.mean[None, :],
            center.cov[None, :, :],
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwreg",
        description="Gaussian-to-Gaussian regression under the Wasserstein metric",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p_sim.add_argument("--config", help="scenario config JSON path")
    p_sim.add_argument("--preset", help=f"named preset: {sorted(PRESETS)}")
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a model from a long-format CSV")
    p_fit.add_argument("data", help="long-format observations CSV")
    p_fit.add_argument("--kind", choices=("basic", "lowrank"), default="basic")
    p_fit.add_argument("--rank", type=int, help="rank for --kind lowrank")
    p_fit.add_argument("--split", default="all", help="'all' or 'le:<value>'")
    p_fit.add_argument("--seed", type=int, help="fitting seed (lowrank restarts)")
    p_fit.add_argument(
        "--standardize",
        action="store_true",
        help="standardize each coordinate before estimating moments",
    )
    p_fit.add_argument(
        "--allow-single-unit",
        action="store_true",
        help="permit a single training unit (interpolating fit)",
    )
    p_fit.add_argument("--out", default=".", help="output directory")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict responses for new units")
    p_pred.add_argument("model", help="model.json from fit")
    p_pred.add_argument("data", help="predictor CSV (long or measures format)")
    p_pred.add_argument("--out", default=".", help="output directory")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("eval", help="summarize Wasserstein discrepancies")
    p_eval.add_argument("predicted", help="predictions measures CSV")
    p_eval.add_argument("observed", help="observed measures CSV or long CSV")
    p_eval.add_argument("--out", help="optional output directory")
    p_eval.set_defaults(func=cmd_eval)

    p_bary = sub.add_parser("barycenter", help="barycenter of per-unit Gaussians")
    p_bary.add_argument("data", help="long-format or measures CSV")
    p_bary.add_argument("--role", choices=ROLES, default="predictor")
    p_bary.add_argument("--out", help="optional output directory")
    p_bary.set_defaults(func=cmd_barycenter)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GwregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

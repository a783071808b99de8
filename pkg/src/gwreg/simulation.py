"""Monte Carlo experiment engine: mixture generator, baselines, AWD.

Each run draws training pairs from a 50/50 mixture of two data-generating
processes over Gaussian pairs:

* the transport-model process builds a tangent element with standard-normal
  first column and exponential diagonal, pushes it through the generator
  tensor, adds noise, and maps back through the standard-normal reference;
* the raw-moment process applies the same tensor directly to the stacked
  (mean | covariance) layout, so the response moments are linear in the
  predictor moments with no transport geometry involved.

Both models are fitted per run (through the sampling stage when draws per
unit are finite, optionally heavy-tailed via a location-scale t), then
scored by the average Wasserstein discrepancy against noiseless truths on
fresh predictors.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyInput, InputError, LengthMismatch
from .geometry import (
    GaussianMeasure,
    ReferenceMeasure,
    TangentVector,
    exp_map,
    stack_measures,
    wasserstein_distances,
)
from .matfun import PSD_RTOL, project_psd
from .regression import FitOptions, _ols_identified, predict_batch
from .sampling import SampleBlock, block_moments, fit_from_samples
from .tensors import IdentifiedTensor, contract, contract_batch, half_vec

GENERATION_NOISE_RETRIES = 100


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``n_draws=None`` means the distributions are observed directly; a finite
    value adds the sampling stage with that many draws per unit. ``t_dof``
    switches the draws to a location-scale t with that many degrees of
    freedom (must exceed 2; infinity reproduces the Gaussian path exactly).
    """

    d: int
    n: int
    n_draws: Optional[int] = None
    kind: str = "basic"
    rank: Optional[int] = None
    runs: int = 100
    new_predictors: int = 200
    t_dof: Optional[float] = None
    seed: int = 0
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self) -> None:
        for name in ("d", "n", "runs", "new_predictors"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be a positive integer")
        if self.n_draws is not None and self.n_draws < 1:
            raise InputError("n_draws must be a positive integer when present")
        if self.kind not in ("basic", "lowrank"):
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.kind == "lowrank" and (self.rank is None or self.rank < 1):
            raise InputError("lowrank scenarios need rank >= 1")
        if self.t_dof is not None and not self.t_dof > 2:
            raise InputError("t_dof must exceed 2 (finite covariance)")

    def to_dict(self) -> dict:
        doc = {
            "d": self.d,
            "n": self.n,
            "n_draws": self.n_draws,
            "kind": self.kind,
            "rank": self.rank,
            "runs": self.runs,
            "new_predictors": self.new_predictors,
            "t_dof": self.t_dof,
            "seed": self.seed,
        }
        if self.fit != FitOptions():
            doc["fit"] = {
                "restarts": self.fit.restarts,
                "max_iters": self.fit.max_iters,
                "tol": self.fit.tol,
                "init_low": self.fit.init_low,
                "init_high": self.fit.init_high,
                "seed": self.fit.seed,
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise InputError("scenario config must be a JSON object")
        known = {
            "d", "n", "n_draws", "kind", "rank", "runs",
            "new_predictors", "t_dof", "seed", "fit",
        }
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        kwargs = {k: v for k, v in doc.items() if k != "fit"}
        if "fit" in doc:
            try:
                kwargs["fit"] = FitOptions(**doc["fit"])
            except TypeError as exc:
                raise InputError(f"bad fit options: {exc}") from exc
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InputError(f"bad scenario config: {exc}") from exc


@dataclass(frozen=True)
class RunRecord:
    run: int
    awd_proposed: float
    awd_alternative: float
    proj_proposed: int
    proj_alternative: int

    def __post_init__(self) -> None:
        if self.awd_proposed < 0 or self.awd_alternative < 0:
            raise InputError("AWD values must be nonnegative")


@dataclass(frozen=True)
class MixtureSample:
    """Gaussian pairs with their noiseless truths and mixture labels."""

    predictors: list[GaussianMeasure]
    responses: list[GaussianMeasure]
    truths: list[GaussianMeasure]
    labels: NDArray[np.int64]
    generation_projections: int = 0


@lru_cache(maxsize=None)
def standard_reference(d: int) -> ReferenceMeasure:
    return ReferenceMeasure.standard(d)


@lru_cache(maxsize=None)
def generator_tensor(d: int) -> IdentifiedTensor:
    """Coefficient tensor used by both data-generating processes.

    Every a-output slice has an all-ones first column; the diagonal V-output
    slice (r, r+1) carries 1/(2d) on the V-block diagonal; everything else
    is zero.
    """
    arr = np.zeros((d, d + 1, d, d + 1))
    for r in range(d):
        arr[:, 0, r, 0] = 1.0
        for p in range(d):
            arr[p, p + 1, r, r + 1] = 1.0 / (2.0 * d)
    return IdentifiedTensor(arr)


def _noise(rng: np.random.Generator, d: int) -> TangentVector:
    u = rng.standard_normal(d)
    v = rng.uniform(-0.5, 0.5, size=d)
    return TangentVector(u, np.diag(v))


def draw_proposed_pair(
    rng: np.random.Generator, d: int, tensor: IdentifiedTensor
) -> tuple[GaussianMeasure, GaussianMeasure, TangentVector]:
    """One pair from the transport-model process, plus the noiseless output.

    The predictor tangent element carries the centered exponential draws on
    its V-block diagonal, so the element is always admissible (V + I =
    diag(H) with H >= 0) and has mean zero, which makes the barycenter of
    the generated predictors exactly the standard reference. The centered
    noise keeps the response side admissible and mean-zero too.
    """
    ref = standard_reference(d)
    g = rng.standard_normal(d)
    h = rng.exponential(1.0, size=d)
    x = TangentVector(g, np.diag(h - 1.0))
    nu1 = exp_map(x, ref)
    y_true = contract(x, tensor)
    y = y_true + _noise(rng, d)
    nu2 = exp_map(y, ref)
    return nu1, nu2, y_true


def draw_alternative_pair(
    rng: np.random.Generator, d: int, tensor: IdentifiedTensor
) -> tuple[GaussianMeasure, GaussianMeasure, GaussianMeasure, bool]:
    """One pair from the raw-moment process, plus the noiseless truth.

    The response covariance block is read directly from the contraction
    output; if noise drives an eigenvalue negative the draw is retried and
    eventually projected to the nearest PSD matrix (flag reports this).
    """
    g = rng.standard_normal(d)
    h = rng.exponential(1.0, size=d)
    z = TangentVector(g, np.diag(h + 1.0))
    nu1 = GaussianMeasure(g, np.diag(h + 1.0))
    w_true = contract(z, tensor)
    truth = GaussianMeasure(w_true.a, w_true.V)
    projected = False
    for _ in range(GENERATION_NOISE_RETRIES):
        w = w_true + _noise(rng, d)
        evals = np.linalg.eigvalsh(w.V)
        if evals[0] >= -PSD_RTOL * (1.0 + np.max(np.abs(evals))):
            break
    else:
        w = TangentVector(w.a, project_psd(w.V))
        projected = True
    nu2 = GaussianMeasure(w.a, w.V)
    return nu1, nu2, truth, projected


def generate_mixture(
    rng: np.random.Generator, d: int, count: int
) -> MixtureSample:
    """Draw ``count`` labelled pairs from the 50/50 mixture."""
    tensor = generator_tensor(d)
    ref = standard_reference(d)
    labels = rng.integers(0, 2, size=count)
    preds, resps, truths = [], [], []
    gen_proj = 0
    for c in labels:
        if c == 0:
            nu1, nu2, y_true = draw_proposed_pair(rng, d, tensor)
            truth = exp_map(y_true, ref)
        else:
            nu1, nu2, truth, projected = draw_alternative_pair(rng, d, tensor)
            gen_proj += int(projected)
        preds.append(nu1)
        resps.append(nu2)
        truths.append(truth)
    return MixtureSample(preds, resps, truths, labels, gen_proj)


def sample_block(
    rng: np.random.Generator,
    measures: Sequence[GaussianMeasure],
    n_draws: int,
    t_dof: Optional[float] = None,
) -> SampleBlock:
    """Draw ``n_draws`` vectors per measure.

    With finite ``t_dof`` the draws follow the location-scale t built from
    the Gaussian over the square root of a scaled chi-square; an infinite
    ``t_dof`` takes the Gaussian path unchanged (bit-identical draws).
    """
    heavy = t_dof is not None and np.isfinite(t_dof)
    units = []
    for m in measures:
        w, v = np.linalg.eigh(m.cov)
        factor = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
        z = rng.standard_normal((n_draws, m.dim)) @ factor
        if heavy:
            scale = np.sqrt(rng.chisquare(t_dof, size=n_draws) / t_dof)
            z = z / scale[:, None]
        units.append(m.mean + z)
    return SampleBlock(tuple(units))


def fit_alternative(
    pred_moments: Sequence[GaussianMeasure],
    resp_moments: Sequence[GaussianMeasure],
) -> IdentifiedTensor:
    """Least squares on raw (mean | covariance) layouts, Frobenius weighted.

    Per-coordinate OLS on the half-vectorized moment layouts; the Frobenius
    norm is exactly the tangent norm at the standard reference, so the same
    SUR argument collapses the weighting.
    """
    if len(pred_moments) == 0 or len(resp_moments) == 0:
        raise EmptyInput("fit_alternative needs nonempty data")
    if len(pred_moments) != len(resp_moments):
        raise LengthMismatch(
            f"{len(pred_moments)} predictors but {len(resp_moments)} responses"
        )
    d1 = pred_moments[0].dim
    d2 = resp_moments[0].dim
    feats = np.stack(
        [half_vec(np.hstack([m.mean[:, None], m.cov])) for m in pred_moments]
    )
    targets = np.stack(
        [half_vec(np.hstack([m.mean[:, None], m.cov])) for m in resp_moments]
    )
    return _ols_identified(feats, targets, d1, d2)


def alternative_predict(
    tensor: IdentifiedTensor, predictors: Sequence[GaussianMeasure]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """Apply the raw-moment model; project non-PSD covariance parts."""
    means, covs = stack_measures(predictors)
    zmats = np.concatenate([means[:, :, None], covs], axis=2)
    out = contract_batch(zmats, tensor.entries)
    pred_means = out[:, :, 0]
    pred_covs = (out[:, :, 1:] + np.swapaxes(out[:, :, 1:], -1, -2)) / 2.0
    w = np.linalg.eigvalsh(pred_covs)
    tol = PSD_RTOL * (1.0 + np.max(np.abs(w), axis=-1))
    flags = w[:, 0] < -tol
    for i in np.nonzero(flags)[0]:
        pred_covs[i] = project_psd(pred_covs[i])
    return pred_means, pred_covs, flags


def awd(
    truths: Sequence[GaussianMeasure], fits: Sequence[GaussianMeasure]
) -> float:
    """Average Wasserstein discrepancy over paired truths and fits."""
    if len(truths) == 0:
        raise EmptyInput("awd needs at least one pair")
    if len(truths) != len(fits):
        raise LengthMismatch(f"{len(truths)} truths but {len(fits)} fits")
    tm, tc = stack_measures(truths)
    fm, fc = stack_measures(fits)
    return float(wasserstein_distances(tm, tc, fm, fc).mean())


def _single_run(cfg: ScenarioConfig, run_index: int, seed: np.random.SeedSequence) -> RunRecord:
    rng = np.random.default_rng(seed)
    train = generate_mixture(rng, cfg.d, cfg.n)

    if cfg.n_draws is None:
        pred_measures = train.predictors
        resp_measures = train.responses
    else:
        pred_block = sample_block(rng, train.predictors, cfg.n_draws, cfg.t_dof)
        resp_block = sample_block(rng, train.responses, cfg.n_draws, cfg.t_dof)
        pred_measures = block_moments(pred_block)
        resp_measures = block_moments(resp_block)

    model = fit_from_samples(
        pred_measures,
        resp_measures,
        kind=cfg.kind,
        rank=cfg.rank,
        options=cfg.fit,
    )
    alt_tensor = fit_alternative(pred_measures, resp_measures)

    new = generate_mixture(rng, cfg.d, cfg.new_predictors)
    new_means, new_covs = stack_measures(new.predictors)
    truth_means, truth_covs = stack_measures(new.truths)

    pm, pc, proj_flags, _ = predict_batch(model, new_means, new_covs)
    awd_p = float(wasserstein_distances(truth_means, truth_covs, pm, pc).mean())

    am, ac, alt_flags = alternative_predict(alt_tensor, new.predictors)
    awd_a = float(wasserstein_distances(truth_means, truth_covs, am, ac).mean())

    return RunRecord(
        run=run_index,
        awd_proposed=awd_p,
        awd_alternative=awd_a,
        proj_proposed=int(proj_flags.sum()),
        proj_alternative=int(alt_flags.sum()),
    )


def run_scenario(
    cfg: ScenarioConfig, workers: Optional[int] = None
) -> list[RunRecord]:
    """Execute all Monte Carlo runs of a scenario.

    Every run owns an RNG spawned from the scenario seed, so records are
    reproducible bit-for-bit regardless of the worker count (``GWR_THREADS``
    caps parallelism when ``workers`` is not given). Records come back in
    run order.
    """
    if workers is None:
        workers = int(os.environ.get("GWR_THREADS", "1"))
    workers = max(1, min(workers, cfg.runs))
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.runs)
    if workers == 1:
        return [_single_run(cfg, i, s) for i, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_single_run, cfg, i, s) for i, s in enumerate(seeds)
        ]
        return [f.result() for f in futures]


def records_to_csv(records: Sequence[RunRecord]) -> str:
    """RunRecords as CSV with a schema comment line."""
    lines = ["# schema_version=1"]
    lines.append("run,awd_proposed,awd_alternative,proj_proposed,proj_alternative")
    for r in records:
        lines.append(
            f"{r.run},{r.awd_proposed:.9g},{r.awd_alternative:.9g},"
            f"{r.proj_proposed},{r.proj_alternative}"
        )
    return "\n".join(lines) + "\n"


def _five_numbers(values: NDArray[np.float64]) -> dict:
    qs = np.quantile(values, [0.25, 0.5, 0.75])
    return {
        "min": float(np.min(values)),
        "q25": float(qs[0]),
        "median": float(qs[1]),
        "q75": float(qs[2]),
        "max": float(np.max(values)),
    }


def summarize_records(records: Sequence[RunRecord]) -> dict:
    """JSON-ready summary: AWD quartiles and projection totals per method."""
    if len(records) == 0:
        raise EmptyInput("no records to summarize")
    prop = np.array([r.awd_proposed for r in records])
    alt = np.array([r.awd_alternative for r in records])
    return {
        "schema_version": 1,
        "runs": len(records),
        "proposed": {
            "awd": _five_numbers(prop),
            "projections_total": int(sum(r.proj_proposed for r in records)),
        },
        "alternative": {
            "awd": _five_numbers(alt),
            "projections_total": int(sum(r.proj_alternative for r in records)),
        },
    }


PRESETS = {
    "fig2-desk": ScenarioConfig(d=2, n=200, n_draws=500, kind="basic", runs=100),
    "fig3-desk": ScenarioConfig(
        d=6, n=200, n_draws=500, kind="lowrank", rank=3, runs=50
    ),
    "fig4-desk": ScenarioConfig(
        d=2, n=200, n_draws=500, kind="basic", runs=50, t_dof=10.0
    ),
}


def load_config(text: str) -> ScenarioConfig:
    """Parse a scenario config from JSON text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid config JSON: {exc}") from exc
    return ScenarioConfig.from_dict(doc)

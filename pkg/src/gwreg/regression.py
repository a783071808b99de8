"""Model fitting between tangent spaces and the Gaussian-level prediction map.

Fitting happens on half-vectorized coordinates. For the full ("basic")
model, every output coordinate regresses on the same feature vector with
unconstrained coefficients, so the norm-weighted least squares problem
decouples into one ordinary least squares per output coordinate (the
weighting cancels; verified by the SUR-equivalence test). The rank-K model
keeps the weighting: its objective is quadratic in each factor block and is
minimized by cyclic exact block updates.

Predictions compose ``exp_map . contract . log_map`` between the stored
reference measures; out-of-range tangent predictions are scaled radially
back to the admissible boundary (``eta`` projection).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DegenerateInput,
    DegenerateReference,
    DimensionMismatch,
    EmptyInput,
    InputError,
    LengthMismatch,
    NotPositiveDefinite,
    SingularHessian,
)
from .geometry import (
    GaussianMeasure,
    ReferenceMeasure,
    TangentVector,
    exp_map,
    exp_map_batch,
    frechet_mean,
    log_map,
    log_map_batch,
    stack_measures,
    tangent_inner,
)
from .matfun import PSD_RTOL
from .tensors import (
    CoefficientTensor,
    IdentifiedTensor,
    LowRankFactors,
    contract,
    contract_batch,
    free_coord_count,
    half_vec,
    half_vec_indices,
    matrix_from_half_vec,
    tangent_from_half_vec,
    tensor_sym_part,
)

SCHEMA_VERSION = 1
HESSIAN_MAX_COND = 1e12


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the rank-K block relaxation."""

    restarts: int = 5
    max_iters: int = 100
    tol: float = 1e-8
    init_low: float = -1.0
    init_high: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int = 1
    final_objective: float = 0.0
    restarts: int = 0
    boundary_projections: int = 0
    singular_blocks: int = 0
    objective_trace: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "restarts": self.restarts,
            "boundary_projections": self.boundary_projections,
            "singular_blocks": self.singular_blocks,
        }


@dataclass(frozen=True)
class Prediction:
    measure: GaussianMeasure
    projected: bool
    eta: float


@dataclass(frozen=True)
class FittedModel:
    """A fitted regression map between two Gaussian spaces.

    ``tensor`` drives prediction; for the rank-K kind the canonicalized
    factors are kept alongside. Instances are immutable and safe to share.
    """

    kind: str
    tensor: CoefficientTensor
    ref_in: ReferenceMeasure
    ref_out: ReferenceMeasure
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)
    rank: Optional[int] = None
    factors: Optional[LowRankFactors] = None

    def __post_init__(self) -> None:
        if self.kind not in ("basic", "lowrank"):
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.tensor.d1 != self.ref_in.dim or self.tensor.d2 != self.ref_out.dim:
            raise DimensionMismatch(
                "tensor dimensions do not match the reference measures"
            )
        if self.kind == "lowrank" and self.rank is None:
            raise InputError("lowrank model requires a rank")

    @property
    def d1(self) -> int:
        return self.tensor.d1

    @property
    def d2(self) -> int:
        return self.tensor.d2


def tangent_gram(ref: ReferenceMeasure) -> NDArray[np.float64]:
    """Gram matrix of the tangent inner product on half-vec coordinates.

    Off-diagonal V coordinates appear once in the half-vectorization but
    twice in the matrix; the basis elements used here carry both mirror
    entries, so the quadratic form of the returned matrix reproduces the
    tangent norm exactly.
    """
    d = ref.dim
    p = free_coord_count(d)
    basis = [
        tangent_from_half_vec(np.eye(p)[i], d) for i in range(p)
    ]
    gram = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            gram[i, j] = gram[j, i] = tangent_inner(basis[i], basis[j], ref)
    return gram


def _half_vec_stack(
    a: NDArray[np.float64], v: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Half-vectorize stacked tangent elements: (n, d), (n, d, d) -> (n, p)."""
    d = a.shape[1]
    cols = []
    for r, c in half_vec_indices(d):
        cols.append(a[:, r] if c == 0 else v[:, r, c - 1])
    return np.stack(cols, axis=1)


def _features(xs: Sequence[TangentVector]) -> NDArray[np.float64]:
    return np.stack([half_vec(x.as_matrix()) for x in xs])


def _ols_identified(
    feats: NDArray[np.float64], targets: NDArray[np.float64], d1: int, d2: int
) -> IdentifiedTensor:
    """Per-output-coordinate OLS on shared features, reassembled as a tensor.

    Rank-deficient designs get the minimum-norm solution.
    """
    coef, _, _, _ = np.linalg.lstsq(feats, targets, rcond=None)
    arr = np.zeros((d1, d1 + 1, d2, d2 + 1))
    for j, (r, s) in enumerate(half_vec_indices(d2)):
        block = matrix_from_half_vec(coef[:, j], d1)
        arr[:, :, r, s] = block
        if s >= 1:
            arr[:, :, s - 1, r + 1] = block
    return IdentifiedTensor(arr)


def _check_paired(xs: Sequence, ys: Sequence, what: str) -> None:
    if len(xs) != len(ys):
        raise LengthMismatch(
            f"{what}: {len(xs)} predictors but {len(ys)} responses"
        )
    if len(xs) == 0:
        raise EmptyInput(f"{what} needs nonempty data")


def fit_basic(
    xs: Sequence[TangentVector],
    ys: Sequence[TangentVector],
    ref_out: ReferenceMeasure,
) -> IdentifiedTensor:
    """Least squares fit of the full linear model on tangent coordinates.

    Minimizes the summed squared tangent norm of the residuals over
    output-symmetric tensors; solved as one OLS per output coordinate
    (the norm weighting drops out because all coordinates share the same
    regressors). ``ref_out`` names the norm being minimized.
    """
    _check_paired(xs, ys, "fit_basic")
    d1, d2 = xs[0].dim, ys[0].dim
    if ref_out.dim != d2:
        raise DimensionMismatch("ref_out dimension does not match responses")
    feats = _features(xs)
    targets = _features(ys)
    return _ols_identified(feats, targets, d1, d2)


def fit_scalar(
    xs: Sequence[TangentVector], zs: ArrayLike
) -> NDArray[np.float64]:
    """Least squares of scalar responses on tangent features.

    Returns the identified d1 x (d1+1) coefficient matrix (zeros above the
    first superdiagonal of the V-block).
    """
    z = np.asarray(zs, dtype=np.float64)
    _check_paired(xs, z, "fit_scalar")
    feats = _features(xs)
    coef, _, _, _ = np.linalg.lstsq(feats, z, rcond=None)
    return matrix_from_half_vec(coef, xs[0].dim)


def predict_scalar(coef: ArrayLike, x: TangentVector) -> float:
    """Evaluate the scalar model: entrywise product with the input layout."""
    c = np.asarray(coef, dtype=np.float64)
    return float(np.sum(x.as_matrix() * c))


def _sym_vech_operator(d2: int) -> NDArray[np.float64]:
    """Matrix form of M -> half_vec((M + mirror(M)) / 2) on flattened M."""
    p2 = free_coord_count(d2)
    ncol = d2 * (d2 + 1)
    op = np.zeros((p2, ncol))

    def flat(r: int, s: int) -> int:
        return r * (d2 + 1) + s

    for j, (r, c) in enumerate(half_vec_indices(d2)):
        if c == 0:
            op[j, flat(r, 0)] = 1.0
        else:
            op[j, flat(r, c)] += 0.5
            op[j, flat(c - 1, r + 1)] += 0.5
    return op


def _objective(
    resid: NDArray[np.float64], gram: NDArray[np.float64]
) -> float:
    return float(np.einsum("ij,jk,ik->", resid, gram, resid))


def _solve_block(
    hess: NDArray[np.float64], rhs: NDArray[np.float64]
) -> tuple[NDArray[np.float64], bool]:
    """Solve the block normal equations; fall back to minimum-norm lstsq."""
    try:
        sol = np.linalg.solve(hess, rhs)
        if np.all(np.isfinite(sol)):
            return sol, False
    except np.linalg.LinAlgError:
        pass
    sol, _, rank, _ = np.linalg.lstsq(hess, rhs, rcond=None)
    return sol, rank < hess.shape[0]


class _BlockRelaxation:
    """One pass of the cyclic exact minimization for the rank-K objective."""

    def __init__(
        self,
        xmats: NDArray[np.float64],
        targets: NDArray[np.float64],
        gram: NDArray[np.float64],
        d2: int,
        rank: int,
    ):
        self.x = xmats
        self.z = targets
        self.g = gram
        self.d2 = d2
        self.rank = rank
        self.op = _sym_vech_operator(d2)
        # op reshaped to act on (r, s) index pairs directly
        self.op3 = self.op.reshape(self.op.shape[0], d2, d2 + 1)
        self.singular = 0

    def _coeffs(self, a1, a2):
        return np.einsum("pk,ipq,qk->ik", a1, self.x, a2)

    def _pred(self, c, a3, a4):
        mats = np.einsum("ik,rk,sk->irs", c, a3, a4)
        return np.einsum("jrs,irs->ij", self.op3, mats)

    def objective(self, a1, a2, a3, a4) -> float:
        c = self._coeffs(a1, a2)
        return _objective(self.z - self._pred(c, a3, a4), self.g)

    def update_a1(self, a1, a2, a3, a4):
        u = np.einsum("ipq,qk->ikp", self.x, a2)
        gvec = np.einsum("jrs,rk,sk->jk", self.op3, a3, a4)
        cross = gvec.T @ self.g @ gvec
        umom = np.einsum("ikp,ilq->klpq", u, u)
        hess = np.einsum("kl,klpq->kplq", cross, umom)
        k, d1 = self.rank, a1.shape[0]
        hess = hess.reshape(k * d1, k * d1)
        zg = self.z @ (self.g @ gvec)
        rhs = np.einsum("ik,ikp->kp", zg, u).reshape(-1)
        sol, bad = self._solved(hess, rhs)
        return sol.reshape(k, d1).T, bad

    def update_a2(self, a1, a2, a3, a4):
        u = np.einsum("ipq,pk->ikq", self.x, a1)
        gvec = np.einsum("jrs,rk,sk->jk", self.op3, a3, a4)
        cross = gvec.T @ self.g @ gvec
        umom = np.einsum("ikp,ilq->klpq", u, u)
        hess = np.einsum("kl,klpq->kplq", cross, umom)
        k, m = self.rank, a2.shape[0]
        hess = hess.reshape(k * m, k * m)
        zg = self.z @ (self.g @ gvec)
        rhs = np.einsum("ik,ikp->kp", zg, u).reshape(-1)
        sol, bad = self._solved(hess, rhs)
        return sol.reshape(k, m).T, bad

    def update_a3(self, c, a4):
        t4 = np.einsum("jrs,sk->jkr", self.op3, a4)
        p2, k, d2 = t4.shape
        t4f = t4.reshape(p2, k * d2)
        quad = t4f.T @ self.g @ t4f
        cmom = c.T @ c
        hess = quad.reshape(k, d2, k, d2) * cmom[:, None, :, None]
        hess = hess.reshape(k * d2, k * d2)
        w = (self.z @ self.g @ t4f).reshape(-1, k, d2)
        rhs = np.einsum("ik,ikr->kr", c, w).reshape(-1)
        sol, bad = self._solved(hess, rhs)
        return sol.reshape(k, d2).T, bad

    def update_a4(self, c, a3):
        t3 = np.einsum("jrs,rk->jks", self.op3, a3)
        p2, k, m = t3.shape
        t3f = t3.reshape(p2, k * m)
        quad = t3f.T @ self.g @ t3f
        cmom = c.T @ c
        hess = quad.reshape(k, m, k, m) * cmom[:, None, :, None]
        hess = hess.reshape(k * m, k * m)
        w = (self.z @ self.g @ t3f).reshape(-1, k, m)
        rhs = np.einsum("ik,iks->ks", c, w).reshape(-1)
        sol, bad = self._solved(hess, rhs)
        return sol.reshape(k, m).T, bad

    def _solved(self, hess, rhs):
        sol, bad = _solve_block(hess, rhs)
        if bad:
            self.singular += 1
        return sol, bad


def _run_block_relaxation(
    solver: _BlockRelaxation,
    rank: int,
    d1: int,
    d2: int,
    rng: np.random.Generator,
    opts: FitOptions,
) -> tuple[LowRankFactors, list[float], int]:
    lo, hi = opts.init_low, opts.init_high
    a1 = rng.uniform(lo, hi, size=(d1, rank))
    a2 = rng.uniform(lo, hi, size=(d1 + 1, rank))
    a3 = rng.uniform(lo, hi, size=(d2, rank))
    a4 = rng.uniform(lo, hi, size=(d2 + 1, rank))
    trace: list[float] = []
    prev = solver.objective(a1, a2, a3, a4)
    sweeps = 0
    for sweeps in range(1, opts.max_iters + 1):
        a1, _ = solver.update_a1(a1, a2, a3, a4)
        trace.append(solver.objective(a1, a2, a3, a4))
        a2, _ = solver.update_a2(a1, a2, a3, a4)
        trace.append(solver.objective(a1, a2, a3, a4))
        c = solver._coeffs(a1, a2)
        a3, _ = solver.update_a3(c, a4)
        trace.append(solver.objective(a1, a2, a3, a4))
        a4, _ = solver.update_a4(c, a3)
        cur = solver.objective(a1, a2, a3, a4)
        trace.append(cur)
        if prev - cur < opts.tol * max(prev, 1e-300):
            prev = cur
            break
        prev = cur
    return LowRankFactors(a1, a2, a3, a4), trace, sweeps


def fit_low_rank(
    xs: Sequence[TangentVector],
    ys: Sequence[TangentVector],
    ref_out: ReferenceMeasure,
    rank: int,
    options: Optional[FitOptions] = None,
) -> tuple[LowRankFactors, FitDiagnostics]:
    """Rank-K fit by cyclic block minimization of the weighted objective.

    The objective is quadratic in each factor block with the others fixed,
    so every update is an exact weighted least squares solve and the
    objective is nonincreasing across updates. The best of
    ``options.restarts`` random initializations is returned, with its
    per-update objective trace in the diagnostics. Rank-deficient block
    systems fall back to minimum-norm solves and are counted, not fatal.
    """
    _check_paired(xs, ys, "fit_low_rank")
    if rank < 1:
        raise InputError(f"rank must be >= 1, got {rank}")
    opts = options or FitOptions()
    d1, d2 = xs[0].dim, ys[0].dim
    if ref_out.dim != d2:
        raise DimensionMismatch("ref_out dimension does not match responses")
    xmats = np.stack([x.as_matrix() for x in xs])
    targets = _features(ys)
    gram = tangent_gram(ref_out)
    solver = _BlockRelaxation(xmats, targets, gram, d2, rank)

    rng = np.random.default_rng(opts.seed)
    best: Optional[tuple[LowRankFactors, list[float], int]] = None
    for _ in range(max(1, opts.restarts)):
        factors, trace, sweeps = _run_block_relaxation(
            solver, rank, d1, d2, rng, opts
        )
        if best is None or trace[-1] < best[1][-1]:
            best = (factors, trace, sweeps)
    factors, trace, sweeps = best
    diag = FitDiagnostics(
        iterations=sweeps,
        final_objective=trace[-1],
        restarts=max(1, opts.restarts),
        singular_blocks=solver.singular,
        objective_trace=tuple(trace),
    )
    return factors, diag


def _batch_range_stats(
    vstack: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Min eigenvalue of V + I and the per-unit PSD tolerance."""
    eye = np.eye(vstack.shape[-1])
    w = np.linalg.eigvalsh(vstack + eye)
    tol = PSD_RTOL * (1.0 + np.max(np.abs(w), axis=-1))
    return w[:, 0], tol


def predict(model: FittedModel, nu1: GaussianMeasure) -> Prediction:
    """Map a predictor Gaussian through the fitted regression map.

    If the tangent-space prediction leaves the admissible range, it is
    scaled by the largest ``eta`` in [0, 1] keeping ``eta V + I`` PSD
    (``eta = 1 / |lambda_min(V)|``) and flagged as projected.
    """
    if nu1.dim != model.d1:
        raise DimensionMismatch(
            f"predictor has dimension {nu1.dim}, model expects {model.d1}"
        )
    x = log_map(nu1, model.ref_in)
    u = contract(x, model.tensor)
    wmin, tol = _batch_range_stats(u.V[None])
    if wmin[0] >= -tol[0]:
        return Prediction(exp_map(u, model.ref_out), False, 1.0)
    eta = 1.0 / (1.0 - float(wmin[0]))
    return Prediction(exp_map(eta * u, model.ref_out), True, eta)


def predict_batch(
    model: FittedModel,
    means: NDArray[np.float64],
    covs: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_], NDArray[np.float64]]:
    """Vectorized :func:`predict` over stacked predictor moments.

    Returns predicted means, covariances, projection flags and etas.
    """
    a, v = log_map_batch(means, covs, model.ref_in)
    xm = np.concatenate([a[:, :, None], v], axis=2)
    out = contract_batch(xm, model.tensor.entries)
    ya, yv = out[:, :, 0], out[:, :, 1:]
    yv = (yv + np.swapaxes(yv, -1, -2)) / 2.0
    wmin, tol = _batch_range_stats(yv)
    projected = wmin < -tol
    etas = np.ones(len(yv))
    etas[projected] = 1.0 / (1.0 - wmin[projected])
    ya = ya * etas[:, None]
    yv = yv * etas[:, None, None]
    pm, pc = exp_map_batch(ya, yv, model.ref_out)
    return pm, pc, projected, etas


def _reference_from(measures: Sequence[GaussianMeasure], what: str) -> ReferenceMeasure:
    try:
        return ReferenceMeasure(frechet_mean(measures))
    except (NotPositiveDefinite, DegenerateInput) as exc:
        raise DegenerateReference(
            f"empirical barycenter of the {what} is not positive definite"
        ) from exc


def fit_distributions(
    predictors: Sequence[GaussianMeasure],
    responses: Sequence[GaussianMeasure],
    kind: str = "basic",
    rank: Optional[int] = None,
    options: Optional[FitOptions] = None,
    ref_in: Optional[ReferenceMeasure] = None,
    ref_out: Optional[ReferenceMeasure] = None,
) -> FittedModel:
    """Full pipeline on directly observed Gaussians.

    Estimates the reference measures as empirical barycenters unless given,
    lifts both sides to tangent coordinates, and fits the requested model.
    The diagnostics count how many in-sample fitted values fall outside the
    admissible range (they are projected at prediction time, never during
    fitting).
    """
    _check_paired(predictors, responses, "fit_distributions")
    if kind not in ("basic", "lowrank"):
        raise InputError(f"unknown model kind {kind!r}")
    if kind == "lowrank" and (rank is None or rank < 1):
        raise InputError("lowrank fitting requires rank >= 1")
    if ref_in is None:
        ref_in = _reference_from(predictors, "predictors")
    if ref_out is None:
        ref_out = _reference_from(responses, "responses")

    pmeans, pcovs = stack_measures(predictors)
    rmeans, rcovs = stack_measures(responses)
    xa, xv = log_map_batch(pmeans, pcovs, ref_in)
    ya, yv = log_map_batch(rmeans, rcovs, ref_out)
    feats = _half_vec_stack(xa, xv)
    targets = _half_vec_stack(ya, yv)
    d1, d2 = ref_in.dim, ref_out.dim

    factors = None
    if kind == "basic":
        tensor: CoefficientTensor = _ols_identified(feats, targets, d1, d2)
        diag = FitDiagnostics(iterations=1, restarts=0)
        resid = targets - feats @ np.stack(
            [half_vec(tensor.entries[:, :, r, s]) for r, s in half_vec_indices(d2)]
        ).T
        diag = replace(diag, final_objective=_objective(resid, tangent_gram(ref_out)))
    else:
        xs = [TangentVector(xa[i], xv[i]) for i in range(len(xa))]
        ys = [TangentVector(ya[i], yv[i]) for i in range(len(ya))]
        factors, diag = fit_low_rank(xs, ys, ref_out, rank, options)
        factors = factors.canonicalize()
        tensor = factors.materialize()

    xm = np.concatenate([xa[:, :, None], xv], axis=2)
    fitted = contract_batch(xm, tensor.entries)
    fv = fitted[:, :, 1:]
    fv = (fv + np.swapaxes(fv, -1, -2)) / 2.0
    wmin, tol = _batch_range_stats(fv)
    diag = replace(diag, boundary_projections=int(np.sum(wmin < -tol)))

    return FittedModel(
        kind=kind,
        tensor=tensor,
        ref_in=ref_in,
        ref_out=ref_out,
        diagnostics=diag,
        rank=rank if kind == "lowrank" else None,
        factors=factors,
    )


def sandwich_covariance(
    xs: Sequence[TangentVector],
    ys: Sequence[TangentVector],
    theta_hat: ArrayLike,
    ref_out: ReferenceMeasure,
) -> NDArray[np.float64]:
    """Plug-in sandwich estimate of the covariance of the fitted parameters.

    The loss per observation is the squared weighted norm of the residual in
    half-vec coordinates; its Hessian in the stacked parameter vector is the
    constant ``2 G (x) mean(f f^T)`` (Kronecker, output-major blocks), and the
    meat is the empirical second moment of the score at ``theta_hat``.

    Returns ``H^{-1} meat H^{-1} / n``, the estimated covariance of the
    estimator itself (divide out ``1/n`` to recover the asymptotic covariance
    of ``sqrt(n) (theta_hat - theta)``).

    Raises
    ------
    SingularHessian
        If the Hessian's condition number exceeds ``1e12``.
    """
    _check_paired(xs, ys, "sandwich_covariance")
    d1, d2 = xs[0].dim, ys[0].dim
    p1, p2 = free_coord_count(d1), free_coord_count(d2)
    theta = np.asarray(theta_hat, dtype=np.float64)
    if theta.shape != (p1 * p2,):
        raise LengthMismatch(
            f"theta_hat must have length {p1 * p2}, got {theta.shape}"
        )
    n = len(xs)
    feats = _features(xs)
    targets = _features(ys)
    gram = tangent_gram(ref_out)
    coef = theta.reshape(p2, p1)
    resid = targets - feats @ coef.T

    moment = feats.T @ feats / n
    hess = 2.0 * np.kron(gram, moment)
    cond = np.linalg.cond(hess)
    if not np.isfinite(cond) or cond > HESSIAN_MAX_COND:
        raise SingularHessian(
            f"empirical Hessian condition number {cond:.3e} exceeds 1e12"
        )
    gr = resid @ gram
    scores = -2.0 * np.einsum("ij,ip->ijp", gr, feats).reshape(n, p2 * p1)
    meat = scores.T @ scores / n
    hinv = np.linalg.inv(hess)
    return hinv @ meat @ hinv / n


def model_to_dict(model: FittedModel) -> dict:
    """Serialize a fitted model to a JSON-ready dictionary."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "rank": model.rank,
        "d1": model.d1,
        "d2": model.d2,
        "tensor": {
            "shape": list(model.tensor.entries.shape),
            "index_order": "C",
            "data": model.tensor.entries.ravel(order="C").tolist(),
        },
        "ref_in": {
            "mean": model.ref_in.mean.tolist(),
            "cov": model.ref_in.cov.tolist(),
        },
        "ref_out": {
            "mean": model.ref_out.mean.tolist(),
            "cov": model.ref_out.cov.tolist(),
        },
        "diagnostics": model.diagnostics.to_dict(),
    }
    if model.factors is not None:
        doc["factors"] = {
            name: getattr(model.factors, name).tolist()
            for name in ("a1", "a2", "a3", "a4")
        }
    return doc


def model_from_dict(doc: dict) -> FittedModel:
    """Rebuild a fitted model from its JSON dictionary."""
    try:
        version = doc["schema_version"]
        if version != SCHEMA_VERSION:
            raise InputError(f"unsupported model schema_version {version}")
        shape = tuple(doc["tensor"]["shape"])
        data = np.asarray(doc["tensor"]["data"], dtype=np.float64)
        entries = data.reshape(shape, order=doc["tensor"].get("index_order", "C"))
        tensor = CoefficientTensor(entries)
        ref_in = ReferenceMeasure.from_moments(
            doc["ref_in"]["mean"], doc["ref_in"]["cov"]
        )
        ref_out = ReferenceMeasure.from_moments(
            doc["ref_out"]["mean"], doc["ref_out"]["cov"]
        )
        diag_doc = doc.get("diagnostics", {})
        diag = FitDiagnostics(
            iterations=diag_doc.get("iterations", 1),
            final_objective=diag_doc.get("final_objective", 0.0),
            restarts=diag_doc.get("restarts", 0),
            boundary_projections=diag_doc.get("boundary_projections", 0),
            singular_blocks=diag_doc.get("singular_blocks", 0),
        )
        factors = None
        if "factors" in doc:
            factors = LowRankFactors(
                np.asarray(doc["factors"]["a1"], dtype=np.float64),
                np.asarray(doc["factors"]["a2"], dtype=np.float64),
                np.asarray(doc["factors"]["a3"], dtype=np.float64),
                np.asarray(doc["factors"]["a4"], dtype=np.float64),
            )
        return FittedModel(
            kind=doc["kind"],
            tensor=tensor,
            ref_in=ref_in,
            ref_out=ref_out,
            diagnostics=diag,
            rank=doc.get("rank"),
            factors=factors,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model document: {exc}") from exc


def model_to_json(model: FittedModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_json(text: str) -> FittedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid model JSON: {exc}") from exc
    return model_from_dict(doc)

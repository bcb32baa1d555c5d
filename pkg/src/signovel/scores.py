"""Fitted signature test statistics and anomaly scores.

Three score families share the pipeline: distance to the expected signature,
variance-norm (Mahalanobis) conformance to a corpus, and the one-class SVM
decision function.  Models are immutable once fitted and can be serialized
to JSON; scoring batches of paths is vectorized over dense signature rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import TruncatedTensor
from .signatures import PathStream, signature_matrix

__all__ = [
    "ExpectedSignatureModel",
    "ConformanceModel",
    "OcsvmModel",
    "fit_expected_signature",
    "distance_to_mean",
    "fit_conformance",
    "variance_norm",
    "conformance_score",
    "variance_adjusted_conformance",
    "ocsvm_fit",
    "ocsvm_kkt_residual",
    "fit_ocsvm_model",
    "ocsvm_score",
    "tamsd",
    "fit_score_model",
    "anomaly_scores",
    "model_to_json_dict",
    "model_from_json_dict",
]


@dataclass(frozen=True)
class ExpectedSignatureModel:
    """Empirical expected truncated signature of a reference sample."""

    mean: TruncatedTensor
    level: int
    d: int
    sample_count: int
    mean_sq_norm: float
    transforms: tuple[str, ...] = ()
    corpus_rows: np.ndarray | None = None

    @property
    def mean_vector(self) -> np.ndarray:
        return self.mean.dense()


@dataclass(frozen=True)
class ConformanceModel:
    """Reference corpus with the covariance form inducing the variance norm.

    ``second_moment`` is the empirical bilinear form E[x*(S) y*(S)] of the
    corpus signatures on coordinate functionals; its regularized inverse
    turns coefficient differences into Mahalanobis distances.
    """

    corpus_rows: np.ndarray
    corpus_ids: tuple[str | None, ...]
    second_moment: np.ndarray
    eps_reg: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    level: int
    d: int
    transforms: tuple[str, ...] = ()


@dataclass(frozen=True)
class OcsvmModel:
    """One-class SVM in truncated-signature feature space (dual solution)."""

    alphas: np.ndarray
    support_rows: np.ndarray
    support_ids: tuple[str | None, ...]
    rho: float
    gamma_nu: float
    level: int
    d: int
    kkt_residual: float
    transforms: tuple[str, ...] = ()

    @property
    def primal_vector(self) -> np.ndarray:
        return self.alphas @ self.support_rows


ScoreModel = ExpectedSignatureModel | ConformanceModel | OcsvmModel


# -- distance to the expected signature --------------------------------------


def fit_expected_signature(
    paths: Sequence[PathStream],
    level: int,
    keep_corpus: bool = False,
    transforms: Sequence[str] = (),
) -> ExpectedSignatureModel:
    """Coefficient-wise mean of the truncated signatures of a sample."""
    if len(paths) == 0:
        raise ValueError("cannot fit an expected signature on an empty sample")
    rows = signature_matrix(paths, level)
    mean_vec = rows.mean(axis=0)
    return ExpectedSignatureModel(
        mean=TruncatedTensor.from_dense(paths[0].d, level, mean_vec),
        level=level,
        d=paths[0].d,
        sample_count=len(paths),
        mean_sq_norm=float(mean_vec @ mean_vec),
        transforms=tuple(transforms),
        corpus_rows=rows if keep_corpus else None,
    )


def distance_to_mean(
    x: PathStream,
    model: ExpectedSignatureModel,
    method: str = "direct",
) -> float:
    """l2 distance between the signature of ``x`` and the model mean.

    ``method="kernel"`` evaluates the same quantity through kernel averages
    against the retained corpus (requires ``keep_corpus=True`` at fit time);
    the two routes agree to high precision.
    """
    if x.d != model.d:
        raise ValueError(f"path dimension {x.d} does not match model d={model.d}")
    s = signature_matrix([x], model.level)[0]
    if method == "direct":
        return float(np.linalg.norm(s - model.mean_vector))
    if method == "kernel":
        if model.corpus_rows is None:
            raise ValueError("kernel form needs a model fitted with keep_corpus=True")
        k_xx = float(s @ s)
        k_cross = float(np.mean(model.corpus_rows @ s))
        gram = model.corpus_rows @ model.corpus_rows.T
        return float(np.sqrt(max(0.0, k_xx - 2.0 * k_cross + float(gram.mean()))))
    raise ValueError(f"unknown method {method!r}")


# -- conformance --------------------------------------------------------------


def fit_conformance(
    paths: Sequence[PathStream],
    level: int,
    eps_reg: float | None = None,
    transforms: Sequence[str] = (),
) -> ConformanceModel:
    """Fit the corpus second-moment form used by the variance norm.

    The default ridge is 1e-8 * trace / dim; corpora smaller than the
    feature dimension always produce a singular form, so some
    regularization (or the eps_reg=0 pseudo-inverse route) is required.
    """
    if len(paths) == 0:
        raise ValueError("cannot fit conformance on an empty corpus")
    rows = signature_matrix(paths, level)
    second = rows.T @ rows / len(rows)
    second = 0.5 * (second + second.T)
    if eps_reg is None:
        eps_reg = 1e-8 * float(np.trace(second)) / second.shape[0]
    if eps_reg < 0:
        raise ValueError("eps_reg must be >= 0")
    evals, evecs = np.linalg.eigh(second)
    tol = 1e-10 * max(1.0, float(evals.max(initial=0.0)))
    if evals.min(initial=0.0) < -tol:
        raise ValueError("corpus second-moment matrix is not PSD")
    return ConformanceModel(
        corpus_rows=rows,
        corpus_ids=tuple(p.id for p in paths),
        second_moment=second,
        eps_reg=float(eps_reg),
        eigenvalues=np.clip(evals, 0.0, None),
        eigenvectors=evecs,
        level=level,
        d=paths[0].d,
        transforms=tuple(transforms),
    )


def variance_norm(v: TruncatedTensor | np.ndarray, model: ConformanceModel) -> float:
    """Mahalanobis norm sqrt(v^T (Sigma + eps I)^-1 v) of a coefficient vector.

    With eps_reg = 0 the pseudo-inverse is used and a component of ``v``
    outside the range of the corpus form yields ``inf`` (the supremum over
    unit-covariance functionals is unbounded there).
    """
    vec = v.dense() if isinstance(v, TruncatedTensor) else np.asarray(v, dtype=float)
    return float(_variance_norms(vec[None, :], model)[0])


def _variance_norms(vecs: np.ndarray, model: ConformanceModel) -> np.ndarray:
    coords = vecs @ model.eigenvectors
    evals = model.eigenvalues
    if model.eps_reg > 0.0:
        return np.sqrt((coords**2 / (evals + model.eps_reg)).sum(axis=1))
    scale = max(1.0, float(evals.max(initial=0.0)))
    in_range = evals > 1e-12 * scale
    out = np.sqrt((coords[:, in_range] ** 2 / evals[in_range]).sum(axis=1))
    norms = np.linalg.norm(vecs, axis=1)
    residual = np.linalg.norm(coords[:, ~in_range], axis=1)
    out[residual > 1e-9 * np.maximum(norms, 1.0)] = np.inf
    return out


def conformance_score(x: PathStream, model: ConformanceModel) -> float:
    """Minimum variance-norm distance from the signature of ``x`` to the corpus."""
    return float(conformance_scores([x], model)[0])


def conformance_scores(paths: Sequence[PathStream], model: ConformanceModel) -> np.ndarray:
    if model.corpus_rows.shape[0] == 0:
        raise ValueError("conformance model has an empty corpus")
    rows = signature_matrix(paths, model.level)
    out = np.empty(len(rows))
    for i, s in enumerate(rows):
        out[i] = _variance_norms(s[None, :] - model.corpus_rows, model).min()
    return out


def variance_adjusted_conformance(
    x: PathStream,
    corpus: Sequence[PathStream],
    sigma: np.ndarray,
) -> float:
    """Sup-norm nearest-neighbour distance scaled by ||Sigma||_op^(1/2).

    Paths are affinely rescaled to [0, 1] in time and compared on the union
    of their node grids (exact for piecewise-linear paths).  ``sigma`` is the
    d x d covariance of the underlying increment distribution.
    """
    sigma = np.asarray(sigma, dtype=float)
    evals = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))
    if evals.min() < -1e-10 * max(1.0, evals.max(initial=0.0)):
        raise ValueError("sigma must be positive semidefinite")
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    op_norm = float(evals.max(initial=0.0))
    return float(np.sqrt(op_norm) * min(_sup_distance(x, y) for y in corpus))


def _sup_distance(x: PathStream, y: PathStream) -> float:
    if x.d != y.d:
        raise ValueError("paths must share the same dimension")
    tx = (x.times - x.times[0]) / (x.times[-1] - x.times[0])
    ty = (y.times - y.times[0]) / (y.times[-1] - y.times[0])
    grid = np.union1d(tx, ty)
    px = np.column_stack([np.interp(grid, tx, x.points[:, j]) for j in range(x.d)])
    py = np.column_stack([np.interp(grid, ty, y.points[:, j]) for j in range(y.d)])
    return float(np.sqrt(((px - py) ** 2).sum(axis=1)).max())


# -- one-class SVM -------------------------------------------------------------


def ocsvm_fit(
    gram: np.ndarray,
    gamma_nu: float,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> tuple[np.ndarray, float]:
    """Solve the one-class SVM dual by pairwise (SMO-style) descent.

    Minimizes (1/2) a^T K a subject to 0 <= a_i <= 1/(gamma n) and
    sum a_i = 1, transferring mass between the most violating pair until the
    KKT gap drops below ``tol``.  Returns the weights and the offset rho,
    taken from margin support vectors (midpoint of the feasible interval
    when none exist).
    """
    gram = np.asarray(gram, dtype=float)
    n = gram.shape[0]
    if gram.ndim != 2 or gram.shape[1] != n:
        raise ValueError("gram matrix must be square")
    if not np.allclose(gram, gram.T, atol=1e-8 * max(1.0, np.abs(gram).max())):
        raise ValueError("gram matrix must be symmetric")
    if not 0.0 < gamma_nu <= 1.0:
        raise ValueError("gamma_nu must lie in (0, 1]")
    if gamma_nu * n < 1.0:
        raise ValueError(
            f"infeasible constraints: gamma_nu * n = {gamma_nu * n:.3g} < 1"
        )
    scale = max(1.0, float(np.abs(gram).max()))
    min_eig = float(np.linalg.eigvalsh(gram).min())
    if min_eig < -1e-8 * scale:
        raise ValueError(f"gram matrix is not PSD (min eigenvalue {min_eig:.3g})")

    upper = 1.0 / (gamma_nu * n)
    alphas = np.full(n, 1.0 / n)
    grad = gram @ alphas
    snap = 1e-14 * upper
    for _ in range(max_iter):
        can_up = alphas < upper - snap
        can_down = alphas > snap
        if not can_up.any() or not can_down.any():
            break
        i = int(np.flatnonzero(can_up)[np.argmin(grad[can_up])])
        j = int(np.flatnonzero(can_down)[np.argmax(grad[can_down])])
        violation = grad[j] - grad[i]
        if violation <= tol:
            # incremental gradients drift; certify optimality on a fresh one
            grad = gram @ alphas
            if grad[can_down].max() - grad[can_up].min() <= tol:
                break
            continue
        limit = min(upper - alphas[i], alphas[j])
        denom = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        step = limit if denom <= 1e-15 * scale else min(limit, violation / denom)
        alphas[i] += step
        alphas[j] -= step
        if alphas[j] < snap:
            alphas[j] = 0.0
        if alphas[i] > upper - snap:
            alphas[i] = upper
        grad += step * (gram[:, i] - gram[:, j])

    at_zero = alphas <= snap
    at_upper = alphas >= upper - snap
    margin = ~at_zero & ~at_upper
    if margin.any():
        rho = float(grad[margin].mean())
    else:
        lo = float(grad[at_upper].max()) if at_upper.any() else -np.inf
        hi = float(grad[at_zero].min()) if at_zero.any() else np.inf
        if np.isinf(lo):
            rho = hi
        elif np.isinf(hi):
            rho = lo
        else:
            rho = 0.5 * (lo + hi)
    return alphas, rho


def ocsvm_kkt_residual(gram: np.ndarray, alphas: np.ndarray, gamma_nu: float) -> float:
    """Maximum KKT violation of a feasible point of the one-class SVM dual."""
    n = len(alphas)
    upper = 1.0 / (gamma_nu * n)
    grad = np.asarray(gram) @ alphas
    snap = 1e-12 * upper
    can_up = alphas < upper - snap
    can_down = alphas > snap
    if not can_up.any() or not can_down.any():
        return 0.0
    return float(grad[can_down].max() - grad[can_up].min())


def fit_ocsvm_model(
    paths: Sequence[PathStream],
    level: int,
    gamma_nu: float,
    tol: float = 1e-6,
    transforms: Sequence[str] = (),
) -> OcsvmModel:
    """Fit the one-class SVM on the truncated signature kernel of a sample."""
    if len(paths) == 0:
        raise ValueError("cannot fit an OCSVM on an empty sample")
    rows = signature_matrix(paths, level)
    gram = rows @ rows.T
    alphas, rho = ocsvm_fit(gram, gamma_nu, tol=tol)
    residual = ocsvm_kkt_residual(gram, alphas, gamma_nu)
    support = alphas > 0.0
    return OcsvmModel(
        alphas=alphas[support],
        support_rows=rows[support],
        support_ids=tuple(p.id for i, p in enumerate(paths) if support[i]),
        rho=rho,
        gamma_nu=gamma_nu,
        level=level,
        d=paths[0].d,
        kkt_residual=residual,
        transforms=tuple(transforms),
    )


def ocsvm_score(x: PathStream, model: OcsvmModel, method: str = "primal") -> float:
    """Decision value sum_i alpha_i kappa(x_i, x) - rho (negative = novelty).

    ``method="dual"`` sums kernel evaluations against every support
    signature; ``method="primal"`` pairs with the precomputed primal tensor.
    """
    if x.d != model.d:
        raise ValueError(f"path dimension {x.d} does not match model d={model.d}")
    s = signature_matrix([x], model.level)[0]
    if method == "primal":
        return float(model.primal_vector @ s - model.rho)
    if method == "dual":
        return float(model.alphas @ (model.support_rows @ s) - model.rho)
    raise ValueError(f"unknown method {method!r}")


# -- TAMSD baseline ------------------------------------------------------------


def tamsd(x: PathStream, lag: int) -> float:
    """Time-averaged mean square displacement at an integer observation lag."""
    if lag < 1:
        raise ValueError("lag must be a positive integer")
    if lag >= x.n_segments:
        raise ValueError(
            f"lag {lag} too large for a path with {x.n_segments} segments"
        )
    diffs = x.points[lag:] - x.points[:-lag]
    return float((diffs**2).sum(axis=1).mean())


# -- shared scoring surface ----------------------------------------------------


def fit_score_model(
    kind: str,
    paths: Sequence[PathStream],
    level: int,
    gamma_nu: float = 0.2,
    eps_reg: float | None = None,
    keep_corpus: bool = False,
    transforms: Sequence[str] = (),
) -> ScoreModel:
    """Fit one of the score statistics: 'dist', 'conf' or 'ocsvm'."""
    if kind == "dist":
        return fit_expected_signature(paths, level, keep_corpus=keep_corpus, transforms=transforms)
    if kind == "conf":
        return fit_conformance(paths, level, eps_reg=eps_reg, transforms=transforms)
    if kind == "ocsvm":
        return fit_ocsvm_model(paths, level, gamma_nu, transforms=transforms)
    raise ValueError(f"unknown statistic kind {kind!r}")


def anomaly_scores(model: ScoreModel, paths: Sequence[PathStream]) -> np.ndarray:
    """Batch anomaly scores; larger always means more anomalous.

    For the OCSVM this is rho - sum_i alpha_i kappa(x_i, x), the negated
    decision value, so that all three statistics share the same tail
    direction for p-values.
    """
    if len(paths) == 0:
        return np.empty(0)
    if paths[0].d != model.d:
        raise ValueError(
            f"path dimension {paths[0].d} does not match model d={model.d}"
        )
    if isinstance(model, ExpectedSignatureModel):
        rows = signature_matrix(paths, model.level)
        return np.linalg.norm(rows - model.mean_vector, axis=1)
    if isinstance(model, ConformanceModel):
        return conformance_scores(paths, model)
    if isinstance(model, OcsvmModel):
        rows = signature_matrix(paths, model.level)
        return model.rho - rows @ model.primal_vector
    raise TypeError(f"unsupported model type {type(model).__name__}")


def model_kind(model: ScoreModel) -> str:
    return {
        ExpectedSignatureModel: "dist",
        ConformanceModel: "conf",
        OcsvmModel: "ocsvm",
    }[type(model)]


def model_to_json_dict(model: ScoreModel) -> dict:
    """Serialize a fitted model (kind, level, d, tensors, parameters)."""
    base = {
        "kind": model_kind(model),
        "N": model.level,
        "d": model.d,
        "transforms": list(model.transforms),
    }
    if isinstance(model, ExpectedSignatureModel):
        base.update(
            mean=model.mean.to_json_dict(),
            sample_count=model.sample_count,
            mean_sq_norm=model.mean_sq_norm,
            corpus_rows=None if model.corpus_rows is None else model.corpus_rows.tolist(),
        )
    elif isinstance(model, ConformanceModel):
        base.update(
            corpus_rows=model.corpus_rows.tolist(),
            corpus_ids=list(model.corpus_ids),
            covariance=model.second_moment.tolist(),
            eps_reg=model.eps_reg,
        )
    elif isinstance(model, OcsvmModel):
        base.update(
            alphas=model.alphas.tolist(),
            support_rows=model.support_rows.tolist(),
            support_ids=list(model.support_ids),
            rho=model.rho,
            gamma_nu=model.gamma_nu,
            kkt_residual=model.kkt_residual,
        )
    return base


def model_from_json_dict(obj: dict) -> ScoreModel:
    kind = obj["kind"]
    transforms = tuple(obj.get("transforms", ()))
    if kind == "dist":
        mean = TruncatedTensor.from_json_dict(obj["mean"])
        rows = obj.get("corpus_rows")
        return ExpectedSignatureModel(
            mean=mean,
            level=obj["N"],
            d=obj["d"],
            sample_count=obj["sample_count"],
            mean_sq_norm=obj["mean_sq_norm"],
            transforms=transforms,
            corpus_rows=None if rows is None else np.array(rows),
        )
    if kind == "conf":
        second = np.array(obj["covariance"])
        evals, evecs = np.linalg.eigh(second)
        return ConformanceModel(
            corpus_rows=np.array(obj["corpus_rows"]),
            corpus_ids=tuple(obj["corpus_ids"]),
            second_moment=second,
            eps_reg=obj["eps_reg"],
            eigenvalues=np.clip(evals, 0.0, None),
            eigenvectors=evecs,
            level=obj["N"],
            d=obj["d"],
            transforms=transforms,
        )
    if kind == "ocsvm":
        return OcsvmModel(
            alphas=np.array(obj["alphas"]),
            support_rows=np.array(obj["support_rows"]),
            support_ids=tuple(obj["support_ids"]),
            rho=obj["rho"],
            gamma_nu=obj["gamma_nu"],
            level=obj["N"],
            d=obj["d"],
            kkt_residual=obj["kkt_residual"],
            transforms=transforms,
        )
    raise ValueError(f"unknown model kind {kind!r}")

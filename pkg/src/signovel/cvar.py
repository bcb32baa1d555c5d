"""Empirical VaR/CVaR and exact smooth-CVaR surrogates via shuffle products.

The variational form CVaR_a(Z) = min_eta {eta + E[(Z-eta)^+] / (1-a)} becomes
a plain polynomial minimization once the max-function is replaced by a
polynomial surrogate on [-K, K]: for a signature-linear statistic
Z = <w, S(X)> the surrogate objective is itself a polynomial in the shift
variable whose coefficients are pairings of shuffle powers of ``w`` with the
expected signature, so no sampling is needed at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, comb, pi

import numpy as np

from .algebra import (
    PolynomialCoefficients,
    TruncatedTensor,
    l2_norm,
    pairing,
    shuffle,
)

__all__ = [
    "CvarSurrogateSpec",
    "SmoothCvarPolynomial",
    "MaxSurrogateFit",
    "empirical_var",
    "empirical_cvar",
    "fit_max_surrogate",
    "smooth_cvar_coefficients",
    "minimize_cvar_polynomial",
    "cvar_regularized_objective",
]


def empirical_var(samples, alpha: float) -> float:
    """Empirical alpha-quantile: the ceil(alpha * n)-th order statistic."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    k = max(1, ceil(alpha * samples.size))
    return float(np.sort(samples)[k - 1])


def empirical_cvar(samples, alpha: float) -> float:
    """Empirical CVaR via the variational formula.

    Minimizes eta + mean((Z - eta)^+) / (1 - alpha) over eta; the objective
    is piecewise linear with kinks at the sample points, so the minimum over
    the sample values is exact.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    s = np.sort(samples)
    n = s.size
    # mean((Z - s_i)^+) = (suffix_sum_i - (n - i) * s_i) / n, suffix over j > i
    suffix = np.concatenate([np.cumsum(s[::-1])[::-1][1:], [0.0]])
    excess = (suffix - (n - 1 - np.arange(n)) * s) / n
    return float((s + excess / (1.0 - alpha)).min())


@dataclass(frozen=True)
class MaxSurrogateFit:
    """Least-squares polynomial surrogate of max(x, 0) on [-K, K]."""

    coefficients: PolynomialCoefficients
    half_width: float
    sup_error: float


def fit_max_surrogate(n: int, half_width: float, n_grid: int = 2001) -> MaxSurrogateFit:
    """Degree-n least-squares fit of the max-function on Chebyshev nodes.

    Uses 4n Chebyshev nodes on [-K, K]; the sup error of the fit is recorded
    on a uniform grid of ``n_grid`` points.
    """
    if n < 1:
        raise ValueError("surrogate degree must be >= 1")
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    m = 4 * n
    nodes = half_width * np.cos((2 * np.arange(1, m + 1) - 1) * pi / (2 * m))
    targets = np.maximum(nodes, 0.0)
    # fit in the Chebyshev basis of the scaled variable for conditioning
    cheb = np.polynomial.chebyshev.Chebyshev.fit(
        nodes / half_width, targets, deg=n, domain=[-1, 1]
    )
    poly_scaled = cheb.convert(kind=np.polynomial.Polynomial)
    scale = half_width ** -np.arange(n + 1, dtype=float)
    coeffs = PolynomialCoefficients(tuple(poly_scaled.coef * scale))
    grid = np.linspace(-half_width, half_width, n_grid)
    sup_error = float(np.abs(coeffs(grid) - np.maximum(grid, 0.0)).max())
    return MaxSurrogateFit(coeffs, float(half_width), sup_error)


@dataclass(frozen=True)
class CvarSurrogateSpec:
    """Surrogate polynomial, its domain half-width and the confidence level."""

    coefficients: PolynomialCoefficients
    half_width: float
    alpha: float

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    @property
    def degree(self) -> int:
        return self.coefficients.degree

    @classmethod
    def fit(cls, n: int, half_width: float, alpha: float) -> "CvarSurrogateSpec":
        return cls(fit_max_surrogate(n, half_width).coefficients, half_width, alpha)

    @classmethod
    def for_scores(cls, scores, alpha: float, degree: int = 6) -> "CvarSurrogateSpec":
        """Surrogate sized to a training sample: K = 2 max|score|.

        The factor 2 leaves room for the shift variable, which stays within
        the score range at the optimum; surrogate fidelity needs
        score - shift inside [-K, K].
        """
        scores = np.asarray(scores, dtype=float)
        if scores.size == 0:
            raise ValueError("empty score sample")
        half_width = 2.0 * float(np.abs(scores).max())
        if half_width == 0.0:
            half_width = 1.0
        return cls.fit(degree, half_width, alpha)


@dataclass(frozen=True)
class SmoothCvarPolynomial:
    """The surrogate CVaR objective as a polynomial in the shift variable."""

    b: tuple[float, ...]
    half_width: float
    alpha: float

    @property
    def degree(self) -> int:
        return len(self.b) - 1

    def __call__(self, rho):
        return np.polynomial.polynomial.polyval(rho, np.asarray(self.b))

    def to_json_dict(self) -> dict:
        return {"b": list(self.b), "K": self.half_width, "alpha": self.alpha}


def smooth_cvar_coefficients(
    functional: TruncatedTensor,
    expected_sig: TruncatedTensor,
    spec: CvarSurrogateSpec,
) -> SmoothCvarPolynomial:
    """Expand the surrogate CVaR objective of <w, S(X)> in the shift variable.

    The m-th coefficient is
    delta_{m=1} + (1-alpha)^-1 * sum_{i>=m} a_i C(i, m) (-1)^m <w^(shuffle (i-m)), ES>,
    evaluated with exact shuffle powers against the expected signature, which
    must be truncated at level >= degree * level(w).
    """
    n = spec.degree
    required = n * functional.level
    if expected_sig.level < required:
        raise ValueError(
            f"expected signature truncated at level {expected_sig.level}; "
            f"degree {n} with a level-{functional.level} functional needs level {required}"
        )
    if abs(expected_sig[()] - 1.0) > 1e-9:
        raise ValueError("expected signature must have level-0 coefficient 1")
    # pairings of shuffle powers w^(shuffle k) with the expected signature
    power = TruncatedTensor.unit(functional.d, required)
    pair_pow = [pairing(power, expected_sig)]
    for _ in range(n):
        power = shuffle(power, functional, required)
        pair_pow.append(pairing(power, expected_sig))
    a = spec.coefficients.a
    b = [0.0] * (max(n, 1) + 1)  # the shift term contributes rho even at n = 0
    for m in range(n + 1):
        total = sum(a[i] * comb(i, m) * pair_pow[i - m] for i in range(m, n + 1))
        b[m] = (-1.0) ** m * total / (1.0 - spec.alpha)
    b[1] += 1.0
    return SmoothCvarPolynomial(tuple(b), spec.half_width, spec.alpha)


def minimize_cvar_polynomial(p: SmoothCvarPolynomial) -> tuple[float, float]:
    """Global minimum of the objective polynomial over [-K, K].

    Stationary points are the real eigenvalue roots of the derivative
    (companion matrix); candidates are those roots inside the interval plus
    both endpoints.
    """
    k = p.half_width
    candidates = [-k, k]
    poly = np.polynomial.Polynomial(p.b)
    deriv = poly.deriv()
    if deriv.degree() >= 1 and np.any(deriv.coef != 0.0):
        roots = deriv.roots()
        for r in roots:
            if abs(r.imag) <= 1e-9 and -k <= r.real <= k:
                candidates.append(float(r.real))
    values = [float(poly(c)) for c in candidates]
    best = int(np.argmin(values))
    return candidates[best], values[best]


def cvar_regularized_objective(
    functional: TruncatedTensor,
    expected_sig: TruncatedTensor,
    spec: CvarSurrogateSpec,
    reg_weight: float = 1.0,
) -> float:
    """Surrogate CVaR of -<w, S(X)> plus the ridge penalty on ``w``.

    This is the training objective of the smooth-CVaR one-class SVM variant:
    CVaR_alpha(-<w, S(X)>) (surrogate form) + reg_weight/2 * ||w||^2.
    """
    poly = smooth_cvar_coefficients(-1.0 * functional, expected_sig, spec)
    _, value = minimize_cvar_polynomial(poly)
    return value + 0.5 * reg_weight * l2_norm(functional) ** 2

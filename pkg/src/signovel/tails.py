"""Tail bounds, rejection thresholds and p-values for signature statistics.

Two routes to calibrated decisions are provided: concentration-style bounds
driven by transportation-cost-inequality constants (deterministic, usually
conservative) and data-driven tails (conformal empirical p-values and a
Weibull-form parametric fit of the score survival function).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, inf, log, sqrt

import numpy as np
from scipy.special import ndtr

__all__ = [
    "DeviationFunction",
    "TciParams",
    "TailModelWeibull",
    "Type2Bound",
    "TsbBound",
    "deviation",
    "deviation_inverse",
    "type1_threshold",
    "type1_bound",
    "type2_lower_bound",
    "tsb_bound",
    "weibull_tail_fit",
    "parametric_pvalue",
    "empirical_pvalue",
    "empirical_pvalues",
    "estimate_tci_constants",
]


@dataclass(frozen=True)
class DeviationFunction:
    """Monotone deviation function of a transportation-cost inequality.

    Kinds:
      * ``quadratic`` - a(t) = t^2 (Gaussian-type inequality);
      * ``rde`` - a(t) = min(t^2, t^(2q)), the form satisfied by laws of
        solutions of rough differential equations with Gaussian drivers;
      * ``table`` - monotone interpolation of user-supplied (t, a(t)) pairs.
    """

    kind: str = "quadratic"
    q: float | None = None
    table_t: tuple[float, ...] = field(default=())
    table_a: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind == "rde":
            if self.q is None or self.q <= 0:
                raise ValueError("rde deviation needs q > 0")
        elif self.kind == "table":
            t = np.asarray(self.table_t, dtype=float)
            a = np.asarray(self.table_a, dtype=float)
            if t.size < 2 or t.size != a.size:
                raise ValueError("table deviation needs matching (t, a) arrays")
            if not (np.all(np.diff(t) > 0) and np.all(np.diff(a) > 0)):
                raise ValueError("table deviation must be strictly increasing")
            if t[0] != 0.0 or a[0] != 0.0:
                raise ValueError("table deviation must start at a(0) = 0")
        elif self.kind != "quadratic":
            raise ValueError(f"unknown deviation kind {self.kind!r}")

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError("deviation argument must be >= 0")
        if self.kind == "quadratic":
            return t * t
        if self.kind == "rde":
            return min(t * t, t ** (2.0 * self.q))
        return float(np.interp(t, self.table_t, self.table_a))

    def inverse(self, s: float) -> float:
        """Exact inverse for the closed forms; interpolation for tables."""
        if s < 0:
            raise ValueError("deviation inverse argument must be >= 0")
        if s == 0.0:
            return 0.0
        if np.isinf(s):
            return inf
        if self.kind == "quadratic":
            return sqrt(s)
        if self.kind == "rde":
            return max(s**0.5, s ** (1.0 / (2.0 * self.q)))
        if s > self.table_a[-1]:
            return inf
        return float(np.interp(s, self.table_a, self.table_t))


def deviation(kind: DeviationFunction | str, t: float, q: float | None = None) -> float:
    dev = kind if isinstance(kind, DeviationFunction) else DeviationFunction(kind, q=q)
    return dev(t)


def deviation_inverse(kind: DeviationFunction | str, s: float, q: float | None = None) -> float:
    dev = kind if isinstance(kind, DeviationFunction) else DeviationFunction(kind, q=q)
    return dev.inverse(s)


@dataclass(frozen=True)
class TciParams:
    """Constants of the transportation-cost inequality behind the tail bounds.

    ``p`` is the cost exponent (cost = Hölder distance to the power p),
    ``gamma`` the Hölder exponent of the path space, ``c1``/``c2`` the
    concentration constants, and ``rho_hat`` parametrizes the level-growth
    constant C(N) = (1 + rho_hat)^(N/2) absorbed from the pathwise signature
    bound.  ``convention`` selects how the threshold/bound pair is written:
    ``proof`` uses exp(-(c1^2/2) u^(2p)) with threshold constant 2/c1^2
    (the algebraically inverse pair); ``statement`` keeps the printed
    threshold constant 2/c1 and rescales the bound accordingly.
    """

    p: float = 1.0
    gamma: float = 0.4
    deviation_fn: DeviationFunction = field(default_factory=DeviationFunction)
    c1: float = 1.0
    c2: float = 1.0
    rho_hat: float = 1.0
    convention: str = "proof"

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.c1 <= 0.0:
            raise ValueError("c1 must be positive")
        if self.c2 < 1.0:
            raise ValueError("c2 must be >= 1")
        if self.rho_hat < 0.0:
            raise ValueError("rho_hat must be >= 0")
        if self.convention not in ("proof", "statement"):
            raise ValueError("convention must be 'proof' or 'statement'")

    def growth_constant(self, level: int) -> float:
        return (1.0 + self.rho_hat) ** (level / 2.0)

    def exponent_constant(self) -> float:
        # bound exp(-(k/2) u^..) pairs with threshold constant 2/k
        return self.c1**2 if self.convention == "proof" else self.c1

    def to_json_dict(self) -> dict:
        dev = {"kind": self.deviation_fn.kind, "q": self.deviation_fn.q}
        if self.deviation_fn.kind == "table":
            dev["t"] = list(self.deviation_fn.table_t)
            dev["a"] = list(self.deviation_fn.table_a)
        return {
            "p": self.p,
            "gamma": self.gamma,
            "deviation": dev,
            "c1": self.c1,
            "c2": self.c2,
            "rho_hat": self.rho_hat,
            "convention": self.convention,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TciParams":
        dev = obj["deviation"]
        dev_fn = DeviationFunction(
            dev["kind"],
            q=dev.get("q"),
            table_t=tuple(dev.get("t", ())),
            table_a=tuple(dev.get("a", ())),
        )
        return cls(
            p=obj["p"],
            gamma=obj["gamma"],
            deviation_fn=dev_fn,
            c1=obj["c1"],
            c2=obj["c2"],
            rho_hat=obj["rho_hat"],
            convention=obj.get("convention", "proof"),
        )


def _scale_factor(level: int, d: int, w_norm: float, tci: TciParams) -> float:
    return w_norm * sqrt(level) * d**level * tci.growth_constant(level)


def type1_threshold(
    alpha: float,
    level: int,
    d: int,
    w_norm: float,
    tci: TciParams,
) -> float:
    """Rejection threshold guaranteeing false positive rate <= alpha.

    r* = ||w|| sqrt(N) d^N C(N) max{ s^(1/2p), s^(N/2p) } with
    s = (2/k) log(c2/alpha), where k is the convention's exponent constant.
    Returns 0 when alpha >= c2 (the log term is non-positive).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if w_norm < 0:
        raise ValueError("w_norm must be >= 0")
    s = (2.0 / tci.exponent_constant()) * log(tci.c2 / alpha)
    if s <= 0.0:
        return 0.0
    inner = max(s ** (1.0 / (2.0 * tci.p)), s ** (level / (2.0 * tci.p)))
    return _scale_factor(level, d, w_norm, tci) * inner


def type1_bound(
    r: float,
    level: int,
    d: int,
    w_norm: float,
    tci: TciParams,
) -> float:
    """Upper bound on the false positive rate of the rejection region {score > r}.

    c2 * exp(-(k/2) * min(u^(2p), u^(2p/N))) with u the rescaled threshold;
    the reported value is clipped to [0, 1].  Inverse of
    :func:`type1_threshold` at fixed parameters.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if r == 0.0 or w_norm == 0.0:
        return min(1.0, tci.c2)
    u = r / _scale_factor(level, d, w_norm, tci)
    # min(u^2p, u^(2p/N)) in log space to survive extreme thresholds
    log_u = log(u)
    log_expo = min(2.0 * tci.p * log_u, 2.0 * tci.p / level * log_u)
    if log_expo > 700.0:
        return 0.0
    arg = 0.5 * tci.exponent_constant() * exp(log_expo)
    if arg > 745.0:
        return 0.0
    return min(1.0, tci.c2 * exp(-arg))


@dataclass(frozen=True)
class Type2Bound:
    """Lower bound on the type-II error with a vacuousness flag."""

    value: float
    uninformative: bool
    case: str


def type2_lower_bound(
    r: float,
    level: int,
    d: int,
    w_norm: float,
    relative_entropy: float,
    e_mu_holder_p: float,
    tci: TciParams,
    c_const: float = 1.0,
    exponent: str = "proof",
) -> Type2Bound:
    """Lower bound on the probability of not rejecting under the alternative.

    With t = a^-1(H) + E_mu||X||_gamma^p the bound reads
    1 - (||w||/r)^(p/N) C d^p N^e max{1 - 1/N + t/N, t}, the max selecting
    the case split at t = 1.  ``exponent`` picks the level factor N^e:
    ``proof`` uses e = p/(2N), ``statement`` the printed e = 1/(2Np).
    Infinite relative entropy gives the vacuous bound 0, flagged
    uninformative.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if relative_entropy < 0:
        raise ValueError("relative entropy must be >= 0")
    if e_mu_holder_p < 0:
        raise ValueError("e_mu_holder_p must be >= 0")
    if exponent == "proof":
        n_exp = level ** (tci.p / (2.0 * level))
    elif exponent == "statement":
        n_exp = level ** (1.0 / (2.0 * level * tci.p))
    else:
        raise ValueError("exponent must be 'proof' or 'statement'")
    if np.isinf(relative_entropy):
        return Type2Bound(0.0, True, "infinite-entropy")
    t = tci.deviation_fn.inverse(relative_entropy) + e_mu_holder_p
    if t <= 1.0:
        factor = 1.0 - 1.0 / level + t / level
        case = "small-shift"
    else:
        factor = t
        case = "large-shift"
    value = 1.0 - (w_norm / r) ** (tci.p / level) * c_const * d**tci.p * n_exp * factor
    return Type2Bound(max(0.0, value), False, case)


@dataclass(frozen=True)
class TsbBound:
    """Gaussian isoperimetric tail bound in both of its forms.

    ``phi_bar`` is the complementary-normal-CDF form; ``exponential`` the
    weaker closed form exp(-z^2/2), valid (and >= phi_bar) only where the
    shifted argument z is nonnegative, and reported as the vacuous 1.0
    elsewhere.
    """

    phi_bar: float
    exponential: float


def tsb_bound(r: float, c_hat: float, k_embed: float = 1.0) -> TsbBound:
    """Tail bound on the conformance of a Gaussian sample to a corpus.

    ``c_hat`` is the normal quantile of the corpus mass and ``k_embed`` the
    norm-equivalence constant between the ambient norm and the variance
    norm; the bound is evaluated at z = c_hat + r / k_embed.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if k_embed <= 0:
        raise ValueError("k_embed must be positive")
    z = c_hat + r / k_embed
    phi_bar = float(1.0 - ndtr(z))
    exponential = exp(-0.5 * z * z) if z >= 0 else 1.0
    return TsbBound(phi_bar, exponential)


@dataclass(frozen=True)
class TailModelWeibull:
    """Weibull-form tail fit: survival(r) approximately A exp(-B r^(2/N))."""

    a: float
    b: float
    level: int
    fit_range: tuple[float, float]
    sample_size: int

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Weibull tail parameters must be positive")

    def to_json_dict(self) -> dict:
        return {
            "A": self.a,
            "B": self.b,
            "N": self.level,
            "fit_range": list(self.fit_range),
            "sample_size": self.sample_size,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TailModelWeibull":
        return cls(obj["A"], obj["B"], obj["N"], tuple(obj["fit_range"]), obj["sample_size"])


def weibull_tail_fit(scores, level: int, tail_fraction: float = 0.2) -> TailModelWeibull:
    """Fit A exp(-B r^(2/N)) to the upper tail of the score distribution.

    Least squares of log empirical survival against r^(2/N) over the top
    ``tail_fraction`` of the sample; the bulk is excluded because the bound
    form only targets the tail.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size < 100:
        raise ValueError("need at least 100 scores for a tail fit")
    if not 0.0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 0.5]")
    s = np.sort(scores)
    m = s.size
    k = int(np.floor(m * tail_fraction))
    if k < 10:
        raise ValueError("too few tail points; increase tail_fraction or sample size")
    tail = s[m - k :]
    if tail[0] <= 0:
        raise ValueError("tail scores must be positive to fit the Weibull form")
    if tail[-1] - tail[0] <= 0:
        raise ValueError("degenerate (constant) tail scores")
    survival = (m - (m - k + np.arange(k))) / m  # (m - rank) / m, always > 0
    x = tail ** (2.0 / level)
    y = np.log(survival)
    slope, intercept = np.polyfit(x, y, 1)
    if slope >= 0:
        raise ValueError("tail fit produced B <= 0; scores do not decay in the tail")
    return TailModelWeibull(
        a=float(np.exp(intercept)),
        b=float(-slope),
        level=level,
        fit_range=(float(tail[0]), float(tail[-1])),
        sample_size=int(m),
    )


def parametric_pvalue(score, model: TailModelWeibull):
    """Weibull tail p-value min(1, A exp(-B score^(2/N))), scalar or array."""
    score = np.asarray(score, dtype=float)
    p = np.minimum(1.0, model.a * np.exp(-model.b * np.maximum(score, 0.0) ** (2.0 / model.level)))
    return float(p) if p.ndim == 0 else p


def empirical_pvalue(score: float, calibration) -> float:
    """Conformal empirical p-value (1 + #{calibration >= score}) / (n + 1)."""
    return float(empirical_pvalues([score], calibration)[0])


def empirical_pvalues(scores, calibration) -> np.ndarray:
    """Vectorized conformal p-values against one calibration sample."""
    calibration = np.asarray(calibration, dtype=float)
    if calibration.size == 0:
        raise ValueError("empty calibration sample")
    scores = np.asarray(scores, dtype=float)
    sorted_cal = np.sort(calibration)
    count_ge = calibration.size - np.searchsorted(sorted_cal, scores, side="left")
    return (1.0 + count_ge) / (calibration.size + 1.0)


def estimate_tci_constants(
    holder_norms: np.ndarray,
    p: float = 1.0,
    quad_const: float = 1.0,
) -> tuple[float, float]:
    """Plug-in estimates of (c1, c2) from calibration Hölder norms.

    c1 = (2 (mean ||X||_gamma^p + C))^(-1/2) with C the near-zero quadratic
    constant of the deviation function, and c2 the empirical exponential
    moment E[exp(c1^2/2 ||X||_gamma^(2p))].  Both are plug-in estimates of
    population quantities and inherit Monte Carlo error.
    """
    h = np.asarray(holder_norms, dtype=float)
    if h.size == 0:
        raise ValueError("empty calibration sample")
    if quad_const <= 0:
        raise ValueError("quad_const must be positive")
    c1 = (2.0 * (float(np.mean(h**p)) + quad_const)) ** -0.5
    c2 = float(np.mean(np.exp(0.5 * c1**2 * h ** (2.0 * p))))
    return c1, max(1.0, c2)

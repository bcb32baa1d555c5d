"""Multiple-testing procedures and error-rate summaries.

Benjamini-Hochberg step-up with an optional Storey null-proportion
correction, plus the FDR/FPR/power/AUROC bookkeeping used by the synthetic
benchmarks.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "TestReport",
    "benjamini_hochberg",
    "storey_pi0",
    "storey_bh",
    "evaluate",
    "auroc",
]


def _check_pvals(pvals: np.ndarray) -> np.ndarray:
    pvals = np.asarray(pvals, dtype=float)
    if pvals.size == 0:
        raise ValueError("empty p-value array")
    if np.any(~np.isfinite(pvals)) or np.any(pvals < 0) or np.any(pvals > 1):
        raise ValueError("p-values must lie in [0, 1]")
    return pvals


def benjamini_hochberg(pvals, alpha: float) -> np.ndarray:
    """Step-up BH rejection mask at FDR level alpha.

    Rejects the k* smallest p-values where k* = max{k : p_(k) <= k alpha / m};
    ties at the boundary value are all rejected.
    """
    pvals = _check_pvals(pvals)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return _bh_mask(pvals, alpha)


def _bh_mask(pvals: np.ndarray, level: float) -> np.ndarray:
    m = pvals.size
    order = np.sort(pvals)
    thresholds = level * np.arange(1, m + 1) / m
    passing = np.flatnonzero(order <= thresholds)
    if passing.size == 0:
        return np.zeros(m, dtype=bool)
    return pvals <= order[passing[-1]]


def storey_pi0(pvals, lam: float = 0.5) -> float:
    """Storey estimate of the null proportion: #{p > lambda} / ((1-lambda) m)."""
    pvals = _check_pvals(pvals)
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    return min(1.0, float(np.sum(pvals > lam)) / ((1.0 - lam) * pvals.size))


def storey_bh(pvals, alpha: float, lam: float = 0.5) -> np.ndarray:
    """BH run at the adaptive level alpha / pi0_hat.

    With pi0_hat clipped at 1 this can only reject more than plain BH; the
    degenerate pi0_hat = 0 (no p-value above lambda) rejects everything.
    """
    pvals = _check_pvals(pvals)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    pi0 = storey_pi0(pvals, lam)
    if pi0 == 0.0:
        return np.ones(pvals.size, dtype=bool)
    return _bh_mask(pvals, alpha / pi0)


def auroc(scores, labels) -> float:
    """Rank-statistic AUROC with tie averaging (1 = perfect separation)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class TestReport:
    """Per-observation test outcomes plus aggregate error rates."""

    scores: np.ndarray
    pvals: np.ndarray
    rejected: np.ndarray
    labels: np.ndarray | None
    summary: dict
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"summary": self.summary, "metadata": self.metadata}

    def write_csv(self, file) -> None:
        """One row per observation; the summary is appended as comment rows."""
        close = False
        if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
            file = open(file, "w", newline="")
            close = True
        try:
            writer = csv.writer(file)
            header = ["index", "score", "pvalue", "rejected"]
            if self.labels is not None:
                header.append("label")
            writer.writerow(header)
            for i in range(len(self.scores)):
                row = [
                    i,
                    repr(float(self.scores[i])),
                    repr(float(self.pvals[i])),
                    int(self.rejected[i]),
                ]
                if self.labels is not None:
                    row.append(int(self.labels[i]))
                writer.writerow(row)
            for key in sorted(self.summary):
                writer.writerow([f"#summary:{key}", json.dumps(self.summary[key])])
        finally:
            if close:
                file.close()


def evaluate(
    scores,
    pvals,
    rejected,
    labels=None,
    metadata: dict | None = None,
) -> TestReport:
    """Assemble a TestReport with FDR/FPR/power (and AUROC when labelled).

    Conventions: FDR = FP / max(1, rejections); rates with an empty
    denominator class are reported as 0.
    """
    scores = np.asarray(scores, dtype=float)
    pvals = _check_pvals(pvals)
    rejected = np.asarray(rejected).astype(bool)
    if not (scores.size == pvals.size == rejected.size):
        raise ValueError("scores, pvals and rejected must have equal length")
    summary: dict = {
        "n": int(scores.size),
        "n_rejected": int(rejected.sum()),
    }
    lab = None
    if labels is not None:
        lab = np.asarray(labels).astype(bool)
        if lab.size != scores.size:
            raise ValueError("labels length mismatch")
        fp = int((rejected & ~lab).sum())
        tp = int((rejected & lab).sum())
        n_pos = int(lab.sum())
        n_neg = int(lab.size - n_pos)
        summary.update(
            n_positive=n_pos,
            n_negative=n_neg,
            false_rejections=fp,
            true_rejections=tp,
            fdr=fp / max(1, int(rejected.sum())),
            fpr=fp / n_neg if n_neg > 0 else 0.0,
            power=tp / n_pos if n_pos > 0 else 0.0,
            auroc=auroc(scores, lab) if 0 < n_pos < lab.size else None,
        )
    return TestReport(
        scores=scores,
        pvals=pvals,
        rejected=rejected,
        labels=lab,
        summary=summary,
        metadata=metadata or {},
    )

"""Signature-based novelty detection on path space.

Truncated path signatures and shuffle-algebra operations, signature-linear
test statistics (distance to the expected signature, conformance, one-class
SVM), exact smooth-CVaR surrogates from expected signatures, tail-bound
thresholds and p-values, multiple-testing procedures, and synthetic path
generators, tied together by the ``signovel`` command-line interface.
"""

from .algebra import (
    PolynomialCoefficients,
    TruncatedTensor,
    Word,
    l2_norm,
    pairing,
    polynomial_shuffle,
    shuffle,
    shuffle_power,
    shuffle_words,
)
from .signatures import (
    PathStream,
    TruncatedSignature,
    apply_transforms,
    chen_concat,
    holder_norm,
    invisibility_reset,
    read_paths_csv,
    signature,
    signature_matrix,
    time_augment,
    truncated_sig_kernel,
    write_paths_csv,
)

__version__ = "0.1.0"

"""Graded truncated tensor algebra over the alphabet {1, ..., d}.

Coefficients are indexed by words (multi-indices), ordered length-first and
lexicographically within each length, so that dense layouts are reproducible
and serialized tensors are byte-comparable.  Shuffle multiplicities are
computed in exact integer arithmetic before any scaling by float
coefficients.

All objects are immutable after construction; every operation is a pure
function, so concurrent read access is safe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import sqrt
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "Word",
    "TruncatedTensor",
    "PolynomialCoefficients",
    "LevelCapError",
    "level_start",
    "tensor_dim",
    "word_index",
    "enumerate_words",
    "shuffle_words",
    "shuffle",
    "shuffle_power",
    "polynomial_shuffle",
    "pairing",
    "l2_norm",
]

# polynomial_shuffle refuses outputs above this graded level unless the caller
# raises the cap explicitly; d^level coefficient counts explode quickly.
DEFAULT_LEVEL_CAP = 12


class LevelCapError(ValueError):
    """A shuffle-polynomial output would exceed the configured level cap."""

    def __init__(self, required_level: int, cap: int):
        self.required_level = required_level
        self.cap = cap
        super().__init__(
            f"operation requires truncation level {required_level}, above the "
            f"cap {cap}; raise level_cap explicitly if this size is intended"
        )


class Word(tuple):
    """A word over the alphabet {1, ..., d}: an immutable tuple of letters.

    The empty word is allowed and acts as the unit of both concatenation and
    the shuffle product.  Words compare and hash like plain tuples, so they
    can be mixed freely with tuple keys.
    """

    __slots__ = ()

    def __new__(cls, letters: Iterable[int] = ()) -> "Word":
        w = super().__new__(cls, tuple(int(a) for a in letters))
        if any(a < 1 for a in w):
            raise ValueError(f"letters must be positive integers, got {tuple(w)}")
        return w

    def concat(self, other: Iterable[int]) -> "Word":
        return Word(tuple(self) + tuple(other))

    def __repr__(self) -> str:
        return f"Word({tuple(self)!r})"


def _as_letters(word: Iterable[int]) -> tuple[int, ...]:
    if isinstance(word, tuple):
        return word
    return tuple(word)


def level_start(d: int, k: int) -> int:
    """Flat offset of the first length-k word in the dense graded layout."""
    if d == 1:
        return k
    return (d**k - 1) // (d - 1)


def tensor_dim(d: int, level: int) -> int:
    """Number of words of length <= level over a d-letter alphabet."""
    return level_start(d, level + 1)


def word_index(d: int, word: Iterable[int]) -> int:
    """Flat dense index of a word (length-then-lexicographic order)."""
    letters = _as_letters(word)
    idx = 0
    for a in letters:
        if not 1 <= a <= d:
            raise ValueError(f"letter {a} outside alphabet of size {d}")
        idx = idx * d + (a - 1)
    return level_start(d, len(letters)) + idx


def enumerate_words(d: int, level: int) -> Iterator[Word]:
    """All words of length <= level in canonical (dense layout) order."""
    for k in range(level + 1):
        for letters in itertools.product(range(1, d + 1), repeat=k):
            yield Word(letters)


@lru_cache(maxsize=200_000)
def _shuffle_letters(u: tuple[int, ...], v: tuple[int, ...]) -> Mapping[tuple[int, ...], int]:
    if not u:
        return MappingProxyType({v: 1})
    if not v:
        return MappingProxyType({u: 1})
    out: dict[tuple[int, ...], int] = {}
    for tail, mult in _shuffle_letters(u[1:], v).items():
        w = (u[0],) + tail
        out[w] = out.get(w, 0) + mult
    for tail, mult in _shuffle_letters(u, v[1:]).items():
        w = (v[0],) + tail
        out[w] = out.get(w, 0) + mult
    return MappingProxyType(out)


def shuffle_words(u: Iterable[int], v: Iterable[int]) -> dict[Word, int]:
    """Shuffle product of two words as a formal integer combination.

    Returns every interleaving of ``u`` and ``v`` with its multiplicity; the
    total multiplicity is binomial(|u| + |v|, |u|).
    """
    res = _shuffle_letters(_as_letters(u), _as_letters(v))
    return {Word(w): m for w, m in res.items()}


class TruncatedTensor:
    """Real coefficients on all words of length <= level over {1, ..., d}.

    Used both for truncated signatures and for the linear functionals that
    act on them (the two sides of the natural pairing).  Storage is a sparse
    word -> coefficient map; ``dense()`` materializes the canonical flat
    layout when a vector view is needed.
    """

    __slots__ = ("d", "level", "coeffs")

    def __init__(self, d: int, level: int, coeffs: Mapping[Iterable[int], float] | None = None):
        if d < 1:
            raise ValueError(f"alphabet size must be >= 1, got {d}")
        if level < 0:
            raise ValueError(f"level must be >= 0, got {level}")
        data: dict[tuple[int, ...], float] = {}
        if coeffs:
            for word, value in coeffs.items():
                letters = _as_letters(word)
                if len(letters) > level:
                    raise ValueError(
                        f"word {letters} longer than declared level {level}"
                    )
                if any(not 1 <= a <= d for a in letters):
                    raise ValueError(f"word {letters} outside alphabet of size {d}")
                value = float(value)
                if value != 0.0:
                    data[letters] = data.get(letters, 0.0) + value
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "coeffs", MappingProxyType(data))

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("TruncatedTensor is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def unit(cls, d: int, level: int = 0) -> "TruncatedTensor":
        """The empty-word functional (unit of the shuffle product)."""
        return cls(d, level, {(): 1.0})

    @classmethod
    def zero(cls, d: int, level: int = 0) -> "TruncatedTensor":
        return cls(d, level, {})

    @classmethod
    def basis(cls, d: int, word: Iterable[int], level: int | None = None) -> "TruncatedTensor":
        letters = _as_letters(word)
        return cls(d, len(letters) if level is None else level, {letters: 1.0})

    @classmethod
    def from_dense(cls, d: int, level: int, values: np.ndarray) -> "TruncatedTensor":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != tensor_dim(d, level):
            raise ValueError(
                f"dense tensor for d={d}, level={level} needs "
                f"{tensor_dim(d, level)} values, got {values.size}"
            )
        coeffs = {
            tuple(w): values[i]
            for i, w in enumerate(enumerate_words(d, level))
            if values[i] != 0.0
        }
        return cls(d, level, coeffs)

    # -- access -------------------------------------------------------------

    def __getitem__(self, word: Iterable[int]) -> float:
        return self.coeffs.get(_as_letters(word), 0.0)

    def dense(self) -> np.ndarray:
        """Canonical flat coefficient vector (length-then-lexicographic)."""
        size = tensor_dim(self.d, self.level)
        if size > 1 << 25:
            raise MemoryError(
                f"dense view of d={self.d}, level={self.level} would hold {size} entries"
            )
        out = np.zeros(size)
        for word, value in self.coeffs.items():
            out[word_index(self.d, word)] = value
        return out

    def truncate(self, level: int) -> "TruncatedTensor":
        """Restrict (or re-declare) the truncation level."""
        if level >= self.level:
            return TruncatedTensor(self.d, level, self.coeffs)
        kept = {w: v for w, v in self.coeffs.items() if len(w) <= level}
        return TruncatedTensor(self.d, level, kept)

    # -- linear structure ----------------------------------------------------

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_alphabet(other)
        out = dict(self.coeffs)
        for w, v in other.coeffs.items():
            out[w] = out.get(w, 0.0) + v
        return TruncatedTensor(self.d, max(self.level, other.level), out)

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return self + (-1.0) * other

    def __neg__(self) -> "TruncatedTensor":
        return (-1.0) * self

    def __mul__(self, scalar: float) -> "TruncatedTensor":
        s = float(scalar)
        return TruncatedTensor(self.d, self.level, {w: s * v for w, v in self.coeffs.items()})

    __rmul__ = __mul__

    def allclose(self, other: "TruncatedTensor", atol: float = 1e-12, rtol: float = 1e-12) -> bool:
        words = set(self.coeffs) | set(other.coeffs)
        return all(
            abs(self[w] - other[w]) <= atol + rtol * max(abs(self[w]), abs(other[w]))
            for w in words
        )

    def _check_alphabet(self, other: "TruncatedTensor") -> None:
        if self.d != other.d:
            raise ValueError(f"alphabet size mismatch: {self.d} vs {other.d}")

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        items = sorted(self.coeffs.items(), key=lambda kv: (len(kv[0]), kv[0]))
        return {"d": self.d, "N": self.level, "coeffs": [[list(w), v] for w, v in items]}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TruncatedTensor":
        return cls(obj["d"], obj["N"], {tuple(w): v for w, v in obj["coeffs"]})

    def __repr__(self) -> str:
        head = sorted(self.coeffs.items(), key=lambda kv: (len(kv[0]), kv[0]))[:4]
        body = ", ".join(f"{''.join(map(str, w)) or 'e'}:{v:.4g}" for w, v in head)
        more = "" if len(self.coeffs) <= 4 else f", +{len(self.coeffs) - 4} terms"
        return f"TruncatedTensor(d={self.d}, level={self.level}, {{{body}{more}}})"


@dataclass(frozen=True)
class PolynomialCoefficients:
    """Power-basis coefficients a_0..a_n of a degree-n real polynomial."""

    a: tuple[float, ...]

    def __post_init__(self):
        if len(self.a) < 1:
            raise ValueError("need at least the constant coefficient")
        object.__setattr__(self, "a", tuple(float(c) for c in self.a))

    @property
    def degree(self) -> int:
        return len(self.a) - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.a))


def shuffle(w1: TruncatedTensor, w2: TruncatedTensor, out_level: int) -> TruncatedTensor:
    """Bilinear extension of the word shuffle to truncated functionals.

    The coefficient of a word w in the output accumulates
    w1[u] * w2[v] * mult for every pair (u, v) whose shuffle contains w.
    Words longer than ``out_level`` are dropped.
    """
    w1._check_alphabet(w2)
    if out_level < 0:
        raise ValueError("out_level must be >= 0")
    out: dict[tuple[int, ...], float] = {}
    for u, cu in w1.coeffs.items():
        if len(u) > out_level:
            continue
        for v, cv in w2.coeffs.items():
            if len(u) + len(v) > out_level:
                continue
            scale = cu * cv
            for word, mult in _shuffle_letters(u, v).items():
                out[word] = out.get(word, 0.0) + mult * scale
    return TruncatedTensor(w1.d, out_level, out)


def shuffle_power(w: TruncatedTensor, k: int, out_level: int) -> TruncatedTensor:
    """k-fold shuffle product of ``w`` with itself; k = 0 gives the unit."""
    if k < 0:
        raise ValueError("shuffle power requires k >= 0")
    acc = TruncatedTensor.unit(w.d, out_level)
    for _ in range(k):
        acc = shuffle(acc, w, out_level)
    return acc


def polynomial_shuffle(
    q: PolynomialCoefficients,
    ell: TruncatedTensor,
    level_cap: int = DEFAULT_LEVEL_CAP,
) -> TruncatedTensor:
    """Apply a polynomial through the shuffle product: sum_i a_i * ell^(shuffle i).

    The output lives at level n * N (polynomial degree times the level of
    ``ell``), so the word count grows like d^(nN): levels above ``level_cap``
    are refused with the required level reported rather than silently
    truncated.  Raise the cap explicitly only after checking that
    tensor_dim(d, n * N) words fit your memory budget; the default 12 keeps
    the dense view under ~2^24 coefficients for d <= 4.
    """
    out_level = q.degree * ell.level
    if out_level > level_cap:
        raise LevelCapError(out_level, level_cap)
    out = TruncatedTensor.zero(ell.d, out_level)
    power = TruncatedTensor.unit(ell.d, out_level)
    for i, a_i in enumerate(q.a):
        if i > 0:
            power = shuffle(power, ell, out_level)
        if a_i != 0.0:
            out = out + a_i * power
    return out


def pairing(w: TruncatedTensor, s: TruncatedTensor) -> float:
    """Natural l2 pairing: sum of products of coefficients on shared words.

    Levels may differ; words beyond the smaller level do not contribute.
    """
    w._check_alphabet(s)
    shared = min(w.level, s.level)
    if len(w.coeffs) > len(s.coeffs):
        w, s = s, w
    total = 0.0
    for word, value in w.coeffs.items():
        if len(word) <= shared:
            other = s.coeffs.get(word)
            if other is not None:
                total += value * other
    return total


def l2_norm(s: TruncatedTensor) -> float:
    """Euclidean norm of the graded coefficient vector."""
    return sqrt(sum(v * v for v in s.coeffs.values()))

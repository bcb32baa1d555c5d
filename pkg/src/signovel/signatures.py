"""Truncated signatures of piecewise-linear paths and path transforms.

Signatures are computed exactly: each linear segment contributes the tensor
exponential of its increment (level k equals increment^(tensor k) / k!) and
segments are folded together with the Chen concatenation identity.  A batch
engine evaluates many equal-shape paths at once as a dense coefficient
matrix in the canonical word order of :mod:`signovel.algebra`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .algebra import TruncatedTensor, pairing, tensor_dim

__all__ = [
    "PathStream",
    "TruncatedSignature",
    "signature",
    "signature_matrix",
    "chen_concat",
    "time_augment",
    "invisibility_reset",
    "apply_transforms",
    "TRANSFORMS",
    "holder_norm",
    "holder_norms",
    "truncated_sig_kernel",
    "signature_gram",
    "read_paths_csv",
    "write_paths_csv",
]


@dataclass(frozen=True)
class PathStream:
    """A timestamped d-dimensional piecewise-linear path.

    ``times`` must be strictly increasing with at least two nodes; ``points``
    holds one d-vector per node.  Instances are immutable (the arrays are
    marked read-only) and safe to share across threads.
    """

    times: np.ndarray
    points: np.ndarray
    id: str | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if times.ndim != 1 or points.ndim != 2 or len(times) != len(points):
            raise ValueError("times must be (L+1,) and points (L+1, d)")
        if len(times) < 2:
            raise ValueError("a path needs at least two nodes")
        if not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(points))):
            raise ValueError("path contains non-finite values")
        times.flags.writeable = False
        points.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_segments(self) -> int:
        return len(self.times) - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.points, axis=0)


@dataclass(frozen=True)
class TruncatedSignature:
    """A truncated signature tensor; its level-0 coefficient is always 1."""

    tensor: TruncatedTensor
    path_id: str | None = None

    def __post_init__(self):
        if abs(self.tensor[()] - 1.0) > 1e-9:
            raise ValueError("signature level-0 coefficient must equal 1")

    @property
    def d(self) -> int:
        return self.tensor.d

    @property
    def level(self) -> int:
        return self.tensor.level

    def __getitem__(self, word) -> float:
        return self.tensor[word]

    def dense(self) -> np.ndarray:
        return self.tensor.dense()


def _batch_signature(increments: np.ndarray, level: int) -> np.ndarray:
    """Signatures of a batch of equal-length paths given segment increments.

    increments: (n, L, d).  Returns the dense coefficient matrix
    (n, tensor_dim(d, level)) in canonical word order.
    """
    n, n_seg, d = increments.shape
    state: list[np.ndarray] = [np.ones((n, 1))]
    state += [np.zeros((n, d**k)) for k in range(1, level + 1)]
    seg_levels: list[np.ndarray] = [np.ones((n, 1))]
    for seg in range(n_seg):
        delta = increments[:, seg, :]
        del seg_levels[1:]
        for k in range(1, level + 1):
            outer = seg_levels[k - 1][:, :, None] * delta[:, None, :]
            seg_levels.append(outer.reshape(n, -1) / k)
        # Chen fold, top level first so lower levels stay pre-update
        for k in range(level, 0, -1):
            acc = state[k] + seg_levels[k]
            for j in range(1, k):
                acc += (state[j][:, :, None] * seg_levels[k - j][:, None, :]).reshape(n, -1)
            state[k] = acc
    return np.concatenate(state, axis=1)


def signature_matrix(
    paths: Sequence[PathStream],
    level: int,
    chunk_size: int = 2048,
) -> np.ndarray:
    """Dense signature coefficients for a batch of paths, one row per path.

    Paths of equal node count and dimension are vectorized together; mixed
    shapes are grouped internally.  All paths must share the same dimension.
    """
    if level < 1:
        raise ValueError("signature level must be >= 1")
    if len(paths) == 0:
        raise ValueError("empty path batch")
    d = paths[0].d
    if any(p.d != d for p in paths):
        raise ValueError("all paths in a batch must share the same dimension")
    out = np.empty((len(paths), tensor_dim(d, level)))
    by_shape: dict[int, list[int]] = {}
    for i, p in enumerate(paths):
        by_shape.setdefault(p.n_segments, []).append(i)
    for idxs in by_shape.values():
        for start in range(0, len(idxs), chunk_size):
            block = idxs[start : start + chunk_size]
            incs = np.stack([paths[i].increments() for i in block])
            out[block] = _batch_signature(incs, level)
    return out


def signature(x: PathStream, level: int) -> TruncatedSignature:
    """Truncated signature of a piecewise-linear path at the given level."""
    if level < 1:
        raise ValueError("signature level must be >= 1")
    row = _batch_signature(x.increments()[None, :, :], level)[0]
    tensor = TruncatedTensor.from_dense(x.d, level, row)
    return TruncatedSignature(tensor, x.id)


def chen_concat(s1: TruncatedSignature, s2: TruncatedSignature) -> TruncatedSignature:
    """Signature of a concatenated path via the truncated tensor product."""
    if s1.d != s2.d or s1.level != s2.level:
        raise ValueError("signatures must share alphabet size and level")
    out: dict[tuple[int, ...], float] = {}
    for u, cu in s1.tensor.coeffs.items():
        for v, cv in s2.tensor.coeffs.items():
            if len(u) + len(v) > s1.level:
                continue
            w = u + v
            out[w] = out.get(w, 0.0) + cu * cv
    return TruncatedSignature(
        TruncatedTensor(s1.d, s1.level, out),
        s1.path_id or s2.path_id,
    )


def time_augment(x: PathStream) -> PathStream:
    """Prepend a normalized-time coordinate (t - t0) / (tL - t0)."""
    span = x.times[-1] - x.times[0]
    tcol = (x.times - x.times[0]) / span
    return PathStream(x.times, np.column_stack([tcol, x.points]), x.id)


def invisibility_reset(x: PathStream) -> PathStream:
    """Append a visibility coordinate and a tail returning to the origin.

    The visibility channel is 1 over the original time span.  Two synthetic
    nodes (unit spacing past the final time) first drop visibility to 0 and
    then translate every original coordinate to 0, making the signature
    sensitive to the path's absolute position.
    """
    last_t = x.times[-1]
    times = np.concatenate([x.times, [last_t + 1.0, last_t + 2.0]])
    vis = np.ones(len(x.times))
    body = np.column_stack([x.points, vis])
    tail = np.vstack([
        np.concatenate([x.points[-1], [0.0]]),
        np.zeros(x.d + 1),
    ])
    return PathStream(times, np.vstack([body, tail]), x.id)


TRANSFORMS = {
    "time": time_augment,
    "invisibility": invisibility_reset,
}


def apply_transforms(x: PathStream, names: Iterable[str]) -> PathStream:
    """Apply named path transforms left to right."""
    for name in names:
        try:
            x = TRANSFORMS[name](x)
        except KeyError:
            raise ValueError(
                f"unknown transform {name!r}; available: {sorted(TRANSFORMS)}"
            ) from None
    return x


def holder_norm(x: PathStream, gamma: float) -> float:
    """Discrete Hölder norm sup|x(t)| + sup |x(t)-x(s)| / |t-s|^gamma.

    Times are affinely rescaled to [0, 1] first.  Both suprema are evaluated
    over the path nodes, which is exact for the sup-norm term of a
    piecewise-linear path and a lower bound for the increment ratio whenever
    its supremum is attained off the nodes.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return float(holder_norms([x], gamma)[0])


def holder_norms(paths: Sequence[PathStream], gamma: float) -> np.ndarray:
    """Vectorized :func:`holder_norm` over a batch of paths."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    out = np.empty(len(paths))
    for i, x in enumerate(paths):
        t = (x.times - x.times[0]) / (x.times[-1] - x.times[0])
        pts = x.points
        sup_abs = np.sqrt((pts**2).sum(axis=1)).max()
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        dt = np.abs(t[:, None] - t[None, :])
        iu = np.triu_indices(len(t), k=1)
        ratio = dist[iu] / dt[iu] ** gamma
        out[i] = sup_abs + ratio.max()
    return out


def truncated_sig_kernel(x: PathStream, y: PathStream, level: int) -> float:
    """Inner product of the two truncated signatures (a PSD kernel)."""
    if x.d != y.d:
        raise ValueError("paths must share the same dimension")
    return pairing(signature(x, level).tensor, signature(y, level).tensor)


def signature_gram(sig_rows: np.ndarray) -> np.ndarray:
    """Gram matrix of dense signature rows under the truncated kernel."""
    return sig_rows @ sig_rows.T


# -- path CSV (long format: path_id, t, x1..xd) ------------------------------


def write_paths_csv(paths: Sequence[PathStream], file) -> None:
    """Write paths in the long CSV format (columns path_id, t, x1..xd)."""
    if len(paths) == 0:
        raise ValueError("no paths to write")
    d = paths[0].d
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "w", newline="")
        close = True
    try:
        writer = csv.writer(file)
        writer.writerow(["path_id", "t"] + [f"x{j + 1}" for j in range(d)])
        for k, p in enumerate(paths):
            if p.d != d:
                raise ValueError("all paths in one file must share the dimension")
            pid = p.id if p.id is not None else f"path-{k:06d}"
            for t, row in zip(p.times, p.points):
                writer.writerow([pid, repr(float(t))] + [repr(float(v)) for v in row])
    finally:
        if close:
            file.close()


def read_paths_csv(file) -> list[PathStream]:
    """Read paths from the long CSV format, preserving file order."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "r", newline="")
        close = True
    try:
        reader = csv.reader(file)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[:2] != ["path_id", "t"]:
            raise ValueError("expected header path_id,t,x1..xd")
        order: list[str] = []
        groups: dict[str, list[tuple[float, list[float]]]] = {}
        for row in reader:
            if not row:
                continue
            pid = row[0]
            if pid not in groups:
                groups[pid] = []
                order.append(pid)
            groups[pid].append((float(row[1]), [float(v) for v in row[2:]]))
    finally:
        if close:
            file.close()
    paths = []
    for pid in order:
        rows = groups[pid]
        times = np.array([r[0] for r in rows])
        points = np.array([r[1] for r in rows])
        paths.append(PathStream(times, points, pid))
    return paths

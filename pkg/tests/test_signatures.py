import io

import numpy as np
import pytest

from signovel.algebra import TruncatedTensor, enumerate_words, pairing, shuffle
from signovel.signatures import (
    PathStream,
    TruncatedSignature,
    apply_transforms,
    chen_concat,
    holder_norm,
    holder_norms,
    invisibility_reset,
    read_paths_csv,
    signature,
    signature_matrix,
    time_augment,
    truncated_sig_kernel,
    write_paths_csv,
)


def random_path(rng, n_segments=5, d=2, uniform_grid=False):
    if uniform_grid:
        times = np.linspace(0.0, 1.0, n_segments + 1)
    else:
        interior = np.sort(rng.uniform(0.05, 0.95, n_segments - 1))
        times = np.concatenate([[0.0], interior, [1.0]])
    return PathStream(times, rng.normal(size=(n_segments + 1, d)))


def quadrature_signature(path: PathStream, level: int, refine: int):
    """Nested trapezoid evaluation of the iterated integrals on a fine grid.

    The refinement grid contains the original nodes, so the piecewise-linear
    interpolant is the path itself and trapezoid quadrature is the only
    error source.
    """
    grid = np.union1d(
        np.linspace(path.times[0], path.times[-1], refine + 1), path.times
    )
    pts = np.column_stack(
        [np.interp(grid, path.times, path.points[:, j]) for j in range(path.d)]
    )
    dx = np.diff(pts, axis=0)
    results = {(): np.ones(len(grid))}
    for k in range(1, level + 1):
        for word in enumerate_words(path.d, k):
            if len(word) != k:
                continue
            prev = results[tuple(word[:-1])]
            integrand = 0.5 * (prev[:-1] + prev[1:]) * dx[:, word[-1] - 1]
            results[tuple(word)] = np.concatenate([[0.0], np.cumsum(integrand)])
    return {w: vals[-1] for w, vals in results.items()}


# -- path stream ---------------------------------------------------------------


def test_pathstream_validation():
    with pytest.raises(ValueError):
        PathStream([0.0, 0.0], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        PathStream([0.0], [[1.0]])
    with pytest.raises(ValueError):
        PathStream([0.0, 1.0], [[1.0], [np.nan]])
    p = PathStream([0.0, 1.0, 2.0], [[0.0], [1.0], [0.5]])
    assert p.d == 1 and p.n_segments == 2
    with pytest.raises(ValueError):
        p.points[0, 0] = 9.0


# -- signature closed forms ------------------------------------------------------


def test_signature_single_segment_1d():
    x = PathStream([0.0, 1.0], [[0.0], [2.0]])
    s = signature(x, 3)
    assert s[()] == 1.0
    assert s[(1,)] == pytest.approx(2.0)
    assert s[(1, 1)] == pytest.approx(2.0)
    assert s[(1, 1, 1)] == pytest.approx(4.0 / 3.0)


def test_signature_single_segment_2d():
    x = PathStream([0.0, 1.0], [[0.0, 0.0], [1.0, 1.0]])
    s = signature(x, 2)
    for w in [(1,), (2,)]:
        assert s[w] == pytest.approx(1.0)
    for w in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        assert s[w] == pytest.approx(0.5)


def test_signature_matches_quadrature_oracle():
    rng = np.random.default_rng(10)
    x = random_path(rng, n_segments=5, d=2, uniform_grid=True)
    s = signature(x, 3)
    oracle = quadrature_signature(x, 3, refine=10_000)
    words = [w for w in oracle if len(w) > 0]
    diff = np.array([s[w] - oracle[w] for w in words])
    ref = np.array([oracle[w] for w in words])
    assert np.linalg.norm(diff) <= 1e-6 * np.linalg.norm(ref)


def test_signature_level_validation():
    x = PathStream([0.0, 1.0], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        signature(x, 0)


# -- Chen identity ---------------------------------------------------------------


def test_chen_with_constant_path_is_identity():
    rng = np.random.default_rng(11)
    x = random_path(rng, 4, 2)
    s = signature(x, 3)
    const = signature(PathStream([0.0, 1.0], np.zeros((2, 2))), 3)
    assert chen_concat(s, const).tensor.allclose(s.tensor)
    assert chen_concat(const, s).tensor.allclose(s.tensor)


def test_chen_1d_closed_form():
    a, b = 0.7, -1.3
    sa = signature(PathStream([0.0, 1.0], [[0.0], [a]]), 2)
    sb = signature(PathStream([0.0, 1.0], [[0.0], [b]]), 2)
    cc = chen_concat(sa, sb)
    assert cc[(1,)] == pytest.approx(a + b)
    assert cc[(1, 1)] == pytest.approx((a + b) ** 2 / 2)


def test_chen_split_anywhere():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(9, 3))
    t = np.linspace(0, 1, 9)
    whole = signature(PathStream(t, pts), 4)
    for cut in (1, 4, 7):
        left = signature(PathStream(t[: cut + 1], pts[: cut + 1]), 4)
        right = signature(PathStream(t[cut:], pts[cut:]), 4)
        glued = chen_concat(left, right)
        assert glued.tensor.allclose(whole.tensor, atol=1e-12, rtol=1e-12)


# -- invariances ------------------------------------------------------------------


def test_reparametrization_invariance():
    rng = np.random.default_rng(13)
    x = random_path(rng, 4, 2)
    # subdivide a segment: same image, extra node
    t_new = np.insert(x.times, 2, 0.5 * (x.times[1] + x.times[2]))
    mid = 0.5 * (x.points[1] + x.points[2])
    p_new = np.insert(x.points, 2, mid, axis=0)
    s1 = signature(x, 4)
    s2 = signature(PathStream(t_new, p_new), 4)
    assert s1.tensor.allclose(s2.tensor, atol=1e-12, rtol=1e-12)


def test_scaling_property_exact():
    rng = np.random.default_rng(14)
    x = random_path(rng, 4, 2)
    s1 = signature(x, 3)
    s2 = signature(PathStream(x.times, 2.0 * x.points), 3)
    for w in enumerate_words(2, 3):
        assert s2[w] == 2.0 ** len(w) * s1[w]


def test_group_like_shuffle_identity():
    rng = np.random.default_rng(15)
    x = random_path(rng, 5, 2)
    s = signature(x, 4).tensor
    u = TruncatedTensor(2, 2, {(1,): rng.normal(), (2, 1): rng.normal()})
    v = TruncatedTensor(2, 2, {(2,): rng.normal(), (1, 2): rng.normal()})
    lhs = pairing(u, s) * pairing(v, s)
    rhs = pairing(shuffle(u, v, 4), s)
    assert abs(lhs - rhs) <= 1e-10 * (1.0 + abs(rhs))


# -- transforms --------------------------------------------------------------------


def test_time_augment():
    x = PathStream([0.0, 1.0], [[5.0], [5.0]])
    out = time_augment(x)
    assert out.d == 2
    assert np.allclose(out.points[:, 0], [0.0, 1.0])
    y = PathStream([0.0, 1.0, 2.0], [[0.0], [1.0], [4.0]])
    out2 = time_augment(y)
    assert np.allclose(out2.points[:, 0], [0.0, 0.5, 1.0])
    # augmenting twice just adds a second clock channel
    assert time_augment(out).d == 3


def test_invisibility_reset_endpoint():
    x = PathStream([0.0, 1.0], [[0.0], [3.0]])
    out = invisibility_reset(x)
    assert out.d == 2
    assert np.allclose(out.points[-1], [0.0, 0.0])
    assert np.allclose(out.points[:2, 1], 1.0)
    assert np.allclose(out.times[-2:], [2.0, 3.0])
    # level-1 term in the original coordinate vanishes for origin-started paths
    s = signature(out, 2)
    assert s[(1,)] == pytest.approx(0.0, abs=1e-12)


def test_invisibility_reset_constant_zero_path():
    x = PathStream([0.0, 1.0], [[0.0], [0.0]])
    out = invisibility_reset(x)
    assert np.allclose(out.points[:, 0], 0.0)
    assert not np.allclose(np.diff(out.points[:, 1]), 0.0)


def test_apply_transforms_order_and_unknown():
    x = PathStream([0.0, 1.0], [[0.0], [1.0]])
    both = apply_transforms(x, ("invisibility", "time"))
    assert both.d == 3
    with pytest.raises(ValueError):
        apply_transforms(x, ("nope",))


# -- Hölder norm --------------------------------------------------------------------


def test_holder_norm_linear_path():
    x = PathStream(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    assert holder_norm(x, 0.5) == pytest.approx(2.0)


def test_holder_norm_constant_path():
    x = PathStream([0.0, 1.0], [[-4.0], [-4.0]])
    assert holder_norm(x, 0.3) == pytest.approx(4.0)


def test_holder_norm_bruteforce_oracle():
    rng = np.random.default_rng(16)
    x = random_path(rng, 12, 2)
    gamma = 0.4
    t = (x.times - x.times[0]) / (x.times[-1] - x.times[0])
    best = max(
        np.linalg.norm(x.points[i] - x.points[j]) / abs(t[i] - t[j]) ** gamma
        for i in range(len(t))
        for j in range(i)
    )
    expected = max(np.linalg.norm(p) for p in x.points) + best
    assert holder_norm(x, gamma) == pytest.approx(expected, rel=1e-12)
    assert holder_norms([x, x], gamma)[1] == pytest.approx(expected, rel=1e-12)


def test_holder_norm_gamma_domain():
    x = PathStream([0.0, 1.0], [[0.0], [1.0]])
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            holder_norm(x, bad)


# -- kernel -------------------------------------------------------------------------


def test_kernel_constant_path_and_self():
    rng = np.random.default_rng(17)
    x = random_path(rng, 5, 2)
    const = PathStream([0.0, 1.0], np.zeros((2, 2)))
    assert truncated_sig_kernel(x, const, 3) == pytest.approx(1.0)
    s = signature(x, 3).tensor
    assert truncated_sig_kernel(x, x, 3) == pytest.approx(pairing(s, s), rel=1e-12)
    assert truncated_sig_kernel(x, x, 3) >= 1.0


def test_kernel_dense_pairing_oracle():
    rng = np.random.default_rng(18)
    x, y = random_path(rng, 4, 2), random_path(rng, 6, 2)
    sx, sy = signature(x, 3), signature(y, 3)
    explicit = sum(sx[w] * sy[w] for w in enumerate_words(2, 3))
    assert truncated_sig_kernel(x, y, 3) == pytest.approx(explicit, rel=1e-12)


def test_kernel_gram_psd():
    rng = np.random.default_rng(19)
    paths = [random_path(rng, 4, 2) for _ in range(12)]
    rows = signature_matrix(paths, 3)
    gram = rows @ rows.T
    assert np.linalg.eigvalsh(gram).min() >= -1e-8


def test_kernel_dimension_mismatch():
    rng = np.random.default_rng(20)
    with pytest.raises(ValueError):
        truncated_sig_kernel(random_path(rng, 3, 2), random_path(rng, 3, 1), 2)


# -- batch engine ---------------------------------------------------------------------


def test_signature_matrix_matches_single_and_mixed_shapes():
    rng = np.random.default_rng(21)
    paths = [random_path(rng, n, 2) for n in (3, 5, 3, 7)]
    rows = signature_matrix(paths, 3)
    for i, p in enumerate(paths):
        assert np.allclose(rows[i], signature(p, 3).dense(), atol=1e-14)


def test_truncated_signature_invariant():
    with pytest.raises(ValueError):
        TruncatedSignature(TruncatedTensor(1, 1, {(): 0.5}))


# -- CSV ---------------------------------------------------------------------------


def test_paths_csv_roundtrip():
    rng = np.random.default_rng(22)
    paths = [random_path(rng, 4, 2) for _ in range(3)]
    buf = io.StringIO()
    write_paths_csv(paths, buf)
    buf.seek(0)
    back = read_paths_csv(buf)
    assert len(back) == 3
    for a, b in zip(paths, back):
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.points, b.points)


def test_paths_csv_bad_header():
    with pytest.raises(ValueError):
        read_paths_csv(io.StringIO("a,b,c\n1,2,3\n"))

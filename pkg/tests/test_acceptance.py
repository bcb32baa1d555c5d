"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Stated runtime budgets are asserted where the criterion
fixes one.
"""

import time

import numpy as np
from scipy.stats import norm

from signovel.algebra import TruncatedTensor, enumerate_words, pairing, shuffle
from signovel.cli import main, run_researcher_protocol, run_spike_auroc
from signovel.cvar import (
    CvarSurrogateSpec,
    empirical_cvar,
    empirical_var,
    smooth_cvar_coefficients,
)
from signovel.datasets import simulate_bm, simulate_fbm
from signovel.scores import (
    fit_expected_signature,
    fit_ocsvm_model,
    ocsvm_fit,
    ocsvm_kkt_residual,
    tamsd,
)
from signovel.signatures import (
    PathStream,
    chen_concat,
    holder_norms,
    signature,
    signature_matrix,
)
from signovel.tails import (
    DeviationFunction,
    TciParams,
    empirical_pvalues,
    estimate_tci_constants,
    parametric_pvalue,
    type1_bound,
    type1_threshold,
    type2_lower_bound,
    weibull_tail_fit,
)


def report(num: int, message: str, elapsed: float | None = None) -> None:
    timing = "" if elapsed is None else f"  [{elapsed:.1f} s]"
    print(f"\n[PASS] criterion {num:2d}: {message}{timing}")


def random_tensor(rng, d, level):
    words = [tuple(w) for w in enumerate_words(d, level)]
    return TruncatedTensor(d, level, {w: rng.normal() for w in words})


def test_criterion_01_shuffle_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        pts = rng.normal(size=(6, 2))
        x = PathStream(np.linspace(0, 1, 6), pts)
        s = signature(x, 4).tensor
        u = random_tensor(rng, 2, 2)
        v = random_tensor(rng, 2, 2)
        lhs = pairing(u, s) * pairing(v, s)
        rhs = pairing(shuffle(u, v, 4), s)
        err = abs(lhs - rhs) / (1.0 + abs(rhs))
        worst = max(worst, err)
        assert err <= 1e-10
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report(1, f"shuffle identity on 100 paths, worst scaled error {worst:.2e}", elapsed)


def test_criterion_02_chen_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        n_nodes = rng.integers(6, 12)
        pts = rng.normal(size=(n_nodes, 3))
        t = np.linspace(0, 1, n_nodes)
        whole = signature(PathStream(t, pts), 4).tensor
        cut = int(rng.integers(1, n_nodes - 1))
        left = signature(PathStream(t[: cut + 1], pts[: cut + 1]), 4)
        right = signature(PathStream(t[cut:], pts[cut:]), 4)
        glued = chen_concat(left, right).tensor
        for w in enumerate_words(3, 4):
            err = abs(glued[w] - whole[w])
            worst = max(worst, err / max(1.0, abs(whole[w])))
            assert err <= 1e-12 * max(1.0, abs(whole[w]))
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    report(2, f"Chen split-anywhere (N=4, d=3), worst relative error {worst:.2e}", elapsed)


def test_criterion_03_quadrature_oracle():
    rng = np.random.default_rng(103)
    x = PathStream(np.linspace(0, 1, 6), rng.normal(size=(6, 2)))
    s = signature(x, 3)
    # independent oracle: nested trapezoid iterated integrals on a fine grid
    grid = np.union1d(np.linspace(0.0, 1.0, 10_001), x.times)
    pts = np.column_stack([np.interp(grid, x.times, x.points[:, j]) for j in range(2)])
    dx = np.diff(pts, axis=0)
    running = {(): np.ones(len(grid))}
    for k in range(1, 4):
        for word in enumerate_words(2, k):
            if len(word) != k:
                continue
            prev = running[tuple(word[:-1])]
            integrand = 0.5 * (prev[:-1] + prev[1:]) * dx[:, word[-1] - 1]
            running[tuple(word)] = np.concatenate([[0.0], np.cumsum(integrand)])
    words = [tuple(w) for w in enumerate_words(2, 3) if len(w) > 0]
    oracle = np.array([running[w][-1] for w in words])
    mine = np.array([s[w] for w in words])
    rel = np.linalg.norm(mine - oracle) / np.linalg.norm(oracle)
    assert rel <= 1e-6
    report(3, f"signature vs 10^4-point quadrature, relative error {rel:.2e}")


def test_criterion_04_smooth_cvar_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(104)
    paths = simulate_bm(200, 50, d=1, horizon=1.0, seed=1040)
    alpha = 0.9
    worst = 0.0
    for n in (2, 3, 4):
        for level in (1, 2):
            spec = CvarSurrogateSpec.fit(n, 4.0, alpha)
            w = TruncatedTensor.from_dense(
                1, level, np.concatenate([[0.0], rng.normal(size=level)])
            )
            es = fit_expected_signature(paths, n * level).mean
            poly = smooth_cvar_coefficients(w, es, spec)
            svals = signature_matrix(paths, level) @ w.dense()
            for rho in rng.uniform(-2.0, 2.0, size=20):
                direct = rho + np.mean(spec.coefficients(svals - rho)) / (1 - alpha)
                err = abs(poly(rho) - direct) / max(1.0, abs(direct))
                worst = max(worst, err)
                assert err <= 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report(4, f"smooth-CVaR polynomial vs sample average, worst rel err {worst:.2e}", elapsed)


def test_criterion_05_empirical_cvar_sanity():
    rng = np.random.default_rng(105)
    z = rng.standard_normal(100_000)
    target = norm.pdf(norm.ppf(0.9)) / 0.1
    got = empirical_cvar(z, 0.9)
    assert abs(got - target) <= 0.03
    for _ in range(200):
        sample = rng.normal(size=int(rng.integers(1, 60))) * rng.uniform(0.1, 5)
        a = float(rng.uniform(0.0, 0.95))
        assert empirical_cvar(sample, a) >= empirical_var(sample, a) - 1e-12
    report(5, f"Gaussian CVaR(0.9) = {got:.4f} (target {target:.4f}); CVaR >= VaR on 200 suites")


def test_criterion_06_spike_benchmark():
    start = time.perf_counter()
    rows, summary = run_spike_auroc(
        n_fit=1000, n_normal=500, n_spiked=500, n_steps=200, horizon=2.0,
        level=4, transforms=("time",), stat="dist", seed=7,
    )
    aurocs = [r["auroc"] for r in rows]
    assert 0.45 <= aurocs[0] <= 0.55
    assert summary["spearman_eps_auroc"] >= 0.9
    assert aurocs[-1] >= 0.9
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    report(6, "spike AUROC " + ", ".join(f"{a:.3f}" for a in aurocs)
           + f"; spearman {summary['spearman_eps_auroc']:.2f}", elapsed)


def test_criterion_07_fdr_control():
    start = time.perf_counter()
    rows, summary = run_researcher_protocol(
        n_researchers=20, n_fit=400, n_cal=400, n_test_sets=10, n_test=200,
        outlier_frac=0.1, eps=4.0, n_steps=200, horizon=2.0, level=4,
        transforms=("time",), stat="dist", alpha_fdr=0.1, alpha_raw=0.01,
        seed=2027,
    )
    assert summary["marginal_fdr"] <= 0.12
    assert 0.005 <= summary["marginal_fpr_raw"] <= 0.02
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    report(7, f"marginal FDR {summary['marginal_fdr']:.4f} (<=0.12), "
           f"raw FPR {summary['marginal_fpr_raw']:.4f} in [0.005, 0.02], "
           f"power {summary['marginal_power']:.3f}", elapsed)


def test_criterion_08_weibull_tail_fit():
    start = time.perf_counter()
    rng = np.random.default_rng(108)
    level = 4
    scores = (-np.log(rng.uniform(size=100_000))) ** (level / 2.0)
    fit = weibull_tail_fit(scores, level)
    assert abs(fit.b - 1.0) <= 0.05
    fresh = (-np.log(rng.uniform(size=200_000))) ** (level / 2.0)
    p = parametric_pvalue(fresh, fit)
    freqs = {t: float((p <= t).mean()) for t in (0.01, 0.05, 0.1)}
    for t, f in freqs.items():
        assert f <= 1.1 * t + 0.01
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report(8, f"Weibull B = {fit.b:.4f} (true 1, within 5%); "
           + "; ".join(f"P(p<={t}) = {f:.4f}" for t, f in freqs.items()), elapsed)


def test_criterion_09_type1_machinery():
    start = time.perf_counter()
    # algebraic round trip across a parameter grid, both conventions
    for convention in ("proof", "statement"):
        for p in (0.4, 0.7, 1.0):
            for c1, c2 in ((0.5, 1.5), (1.2, 3.0)):
                tci = TciParams(p=p, c1=c1, c2=c2, convention=convention)
                for alpha in (0.01, 0.05, 0.1, 0.3):
                    for level, d in ((2, 1), (3, 2)):
                        r = type1_threshold(alpha, level, d, 2.3, tci)
                        back = type1_bound(r, level, d, 2.3, tci)
                        assert back <= alpha + 1e-12
                        assert abs(back - alpha) <= 1e-9 * alpha
    # plug-in constants from 10^4 Brownian calibration paths
    paths = simulate_bm(10_000, 100, d=1, horizon=1.0, seed=1090)
    hnorms = holder_norms(paths, gamma=0.4)
    c1, c2 = estimate_tci_constants(hnorms, p=1.0, quad_const=1.0)
    tci = TciParams(p=1.0, gamma=0.4, c1=c1, c2=c2)
    rng = np.random.default_rng(109)
    w = random_tensor(rng, 1, 2)
    w_vec = w.dense()
    w_norm = float(np.linalg.norm(w_vec))
    scores = signature_matrix(paths, 2) @ w_vec
    freqs = {}
    for alpha in (0.01, 0.05, 0.1):
        r = type1_threshold(alpha, 2, 1, w_norm, tci)
        freqs[alpha] = float((scores > r).mean())
        assert freqs[alpha] <= alpha
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    report(9, f"round-trip exact; plug-in c1={c1:.3f}, c2={c2:.3f}; exceedance "
           + ", ".join(f"{f:.4f}<=alpha={a}" for a, f in freqs.items()), elapsed)


def test_criterion_10_type2_bound():
    dev_q = DeviationFunction("rde", q=2.0)
    cases = [
        # (r, N, d, w_norm, H, E_p, p, deviation, C)
        (10.0, 2, 1, 1.0, 0.0, 0.5, 1.0, DeviationFunction("quadratic"), 1.0),
        (10.0, 2, 1, 1.0, 0.0, 2.5, 1.0, DeviationFunction("quadratic"), 1.0),
        (50.0, 3, 2, 2.0, 0.25, 0.3, 0.5, dev_q, 1.3),
        (50.0, 3, 2, 2.0, 4.0, 0.3, 0.5, dev_q, 1.3),
        (5.0, 4, 1, 0.7, 0.04, 0.1, 0.8, DeviationFunction("quadratic"), 2.0),
        (5.0, 4, 1, 0.7, 9.0, 0.1, 0.8, DeviationFunction("quadratic"), 2.0),
        (100.0, 2, 3, 1.5, 0.01, 0.8, 1.0, dev_q, 0.5),
        (100.0, 2, 3, 1.5, 16.0, 0.8, 1.0, dev_q, 0.5),
        (8.0, 5, 1, 1.0, 0.0, 0.0, 0.6, DeviationFunction("quadratic"), 1.0),
        (8.0, 5, 1, 1.0, 2.25, 3.0, 0.6, DeviationFunction("quadratic"), 1.0),
    ]
    n_small = n_large = 0
    for r, level, d, w_norm, h, e_p, p, dev, c_const in cases:
        tci = TciParams(p=p, deviation_fn=dev)
        got = type2_lower_bound(r, level, d, w_norm, h, e_p, tci, c_const=c_const)
        # independent recomputation from the displayed formula
        t = dev.inverse(h) + e_p
        factor = (1.0 - 1.0 / level + t / level) if t <= 1.0 else t
        expected = 1.0 - (w_norm / r) ** (p / level) * c_const * d**p \
            * level ** (p / (2.0 * level)) * factor
        expected = max(0.0, expected)
        assert abs(got.value - expected) <= 1e-12
        n_small += got.case == "small-shift"
        n_large += got.case == "large-shift"
    assert n_small >= 3 and n_large >= 3
    tci = TciParams(p=0.7, deviation_fn=dev_q)
    rs = np.logspace(0, 4, 25)
    vals = [type2_lower_bound(float(r), 3, 1, 1.0, 0.3, 0.4, tci).value for r in rs]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
    hs = np.linspace(0.0, 9.0, 25)
    vals_h = [type2_lower_bound(30.0, 3, 1, 1.0, float(h), 0.4, tci).value for h in hs]
    assert all(a >= b - 1e-15 for a, b in zip(vals_h, vals_h[1:]))
    report(10, f"type-II closed form on 10 tuples ({n_small} small-shift, "
           f"{n_large} large-shift) to 1e-12; monotone in r and H")


def test_criterion_11_tamsd_scaling():
    start = time.perf_counter()
    taus = [1, 2, 4, 16]
    bm = simulate_bm(1000, 2048, d=1, horizon=2.0, seed=1110)
    means_bm = [np.mean([tamsd(p, t) for p in bm]) for t in taus]
    slope_bm = float(np.polyfit(np.log(taus), np.log(means_bm), 1)[0])
    assert abs(slope_bm - 1.0) <= 0.1
    fbm = simulate_fbm(0.25, 1000, 2048, horizon=1.0, seed=1111)
    means_fbm = [np.mean([tamsd(p, t) for p in fbm]) for t in taus]
    slope_fbm = float(np.polyfit(np.log(taus), np.log(means_fbm), 1)[0])
    assert abs(slope_fbm - 0.5) <= 0.15
    elapsed = time.perf_counter() - start
    assert elapsed < 180.0
    report(11, f"TAMSD slopes: BM {slope_bm:.3f} (1 +/- 0.1), "
           f"fBM(H=0.25) {slope_fbm:.3f} (0.5 +/- 0.15)", elapsed)


def test_criterion_12_ocsvm():
    rng = np.random.default_rng(112)
    worst_kkt = 0.0
    for n in (50, 120, 200):
        a = rng.normal(size=(n, n))
        gram = a @ a.T
        gamma = float(rng.uniform(0.1, 0.9))
        alphas, _ = ocsvm_fit(gram, gamma)
        worst_kkt = max(worst_kkt, ocsvm_kkt_residual(gram, alphas, gamma))
        assert worst_kkt <= 1e-6
    # grid-search oracle at n = 4
    a = rng.normal(size=(4, 4))
    gram = a @ a.T + 0.1 * np.eye(4)
    alphas, _ = ocsvm_fit(gram, 0.5)
    obj = 0.5 * alphas @ gram @ alphas
    grid_vals = np.arange(0.0, 0.5 + 0.005, 0.01)
    g1, g2, g3 = np.meshgrid(grid_vals, grid_vals, grid_vals, indexing="ij")
    a4 = 1.0 - g1 - g2 - g3
    mask = (a4 >= -1e-12) & (a4 <= 0.5 + 1e-12)
    pts = np.stack([g1[mask], g2[mask], g3[mask], a4[mask]], axis=1)
    grid_min = float((0.5 * np.einsum("ni,ij,nj->n", pts, gram, pts)).min())
    assert obj <= grid_min + 1e-3
    # nu-property on Gaussian paths
    gamma = 0.3
    paths = simulate_bm(200, 30, d=2, horizon=1.0, seed=1120)
    model = fit_ocsvm_model(paths, 2, gamma_nu=gamma)
    train = signature_matrix(paths, 2) @ model.primal_vector - model.rho
    frac = float((train < -1e-9).mean())
    assert frac <= gamma + 0.05
    report(12, f"KKT residual {worst_kkt:.2e} <= 1e-6; objective {obj:.5f} vs grid "
           f"{grid_min:.5f}; negative-score fraction {frac:.3f} <= {gamma + 0.05}")


def test_criterion_13_conformal_super_uniformity():
    rng = np.random.default_rng(113)
    n_cal, reps, per = 999, 400, 250
    freqs = {t: np.empty(reps) for t in (0.01, 0.05, 0.1)}
    for i in range(reps):
        cal = rng.standard_normal(n_cal)
        test = rng.standard_normal(per)
        p = empirical_pvalues(test, cal)
        for t in freqs:
            freqs[t][i] = (p <= t).mean()
    msgs = []
    for t, vals in freqs.items():
        mean = float(vals.mean())
        se = float(vals.std() / np.sqrt(reps))
        assert mean <= t + 3.0 * se
        msgs.append(f"P(p<={t}) = {mean:.4f} (+3se {t + 3 * se:.4f})")
    report(13, "; ".join(msgs))


def test_criterion_14_manifest_replay(tmp_path):
    start = time.perf_counter()

    def run(argv):
        assert main([str(a) for a in argv]) == 0

    def tree(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}

    def replay(sub, first):
        second = first.parent / (first.name + "_replay")
        run([sub, "--config", first / "manifest.json", "--output", second])
        a, b = tree(first), tree(second)
        assert set(a) == set(b)
        for name in a:
            if name != "manifest.json":  # manifest records its output dir
                assert a[name] == b[name], name

    sim = tmp_path / "sim"
    run(["simulate", "--generator", "spike", "--eps", "2.0", "--n-paths", 15,
         "--steps", 30, "--horizon", "2.0", "--seed", 3, "--output", sim])
    replay("simulate", sim)

    res = tmp_path / "res"
    run(["simulate", "--generator", "researcher", "--researchers", 2, "--test-sets", 2,
         "--n-paths", 8, "--test-size", 10, "--steps", 12, "--horizon", "2.0",
         "--eps", "4.0", "--seed", 4, "--output", res])
    replay("simulate", res)

    fit = tmp_path / "fit"
    run(["fit", "--input", sim / "paths.csv", "--stat", "ocsvm", "--level", 2,
         "--gamma-nu", "0.4", "--transforms", "time", "--output", fit])
    replay("fit", fit)

    score = tmp_path / "score"
    run(["score", "--input", sim / "paths.csv", "--model", fit / "model.json",
         "--output", score])
    replay("score", score)

    test_dir = tmp_path / "test"
    run(["test", "--scores", score / "scores.csv", "--calibration", score / "scores.csv",
         "--alpha", "0.2", "--pvalue-method", "empirical", "--correction", "bh",
         "--label-prefix", "spike-", "--output", test_dir])
    replay("test", test_dir)

    bench = tmp_path / "bench"
    run(["bench", "--suite", "spike-auroc", "--scale", "0.04", "--level", 2,
         "--seed", 5, "--output", bench])
    replay("bench", bench)
    elapsed = time.perf_counter() - start
    report(14, "manifests replay byte-identically for simulate/fit/score/test/bench",
           elapsed)

"""Smoke test for the shrinkage_lab extension module.

Checks a few closed-form values through the Python API; exits nonzero on
the first failure.
"""

import math

import shrinkage_lab as sl


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    gamma = 0.5
    spec = sl.Spectrum([1.0], gamma, grid_size=256)
    lo, hi = (1 - math.sqrt(gamma)) ** 2, (1 + math.sqrt(gamma)) ** 2
    (a, b), = spec.support
    close(a, lo, 1e-10)
    close(b, hi, 1e-10)
    close(spec.total_mass(), 1.0, 1e-6)
    for x, d in zip(spec.grid, spec.density):
        mp = math.sqrt((hi - x) * (x - lo)) / (2 * math.pi * gamma * x)
        close(d, mp, 1e-8)

    # Marchenko-Pastur second moment through M with h(x) = x and Σ = I.
    close(spec.m({"family": "identity"}), 1.0, 1e-8)
    close(spec.t({"family": "identity"}), 1.0 + gamma, 1e-8)
    m = spec.boundary(1.0)
    close(1.0 * abs(m) ** 2, 1.0, 1e-8)

    risk = sl.predicted_test_risk(spec, 1.0, {"family": "constant", "c": 0.0})
    close(risk["test_risk"], 2.0, 1e-6)
    curve = sl.learning_curve(spec, 1.0, [0.1, 1.0, 10.0])
    assert all(u >= v for u, v in zip(curve["train_error"], curve["train_error"][1:]))

    two = sl.Spectrum([(1.0, 0.5), (4.0, 0.5)], gamma)
    opt = sl.optimal_shrinkage(two, 1.5)
    ridge = sl.lda_error(two, 1.5, '{"family": "ridge_inverse", "lambda": 0.5}')
    assert opt["report"]["error"] <= ridge["error"] + 1e-12
    rows = sl.compare_shrinkers(two, [1.0, 2.0])
    assert len(rows) == 2 and rows[1]["error_optimal"] < rows[0]["error_optimal"]

    eig = sl.sample_eigenvalues(200, 400, [1.0], seed=3)
    assert eig == sl.sample_eigenvalues(200, 400, [1.0], seed=3)
    close(sum(eig) / len(eig), 1.0, 0.05)
    est = sl.kernel_estimate(eig, gamma, grid=[1.0])
    close(est["g_hat"][0], m.imag, 0.15)

    sim = sl.simulate_regression(100, 200, [1.0], 1.0, [{"family": "constant", "c": 0.0}], replicates=4, seed=1)
    assert len(sim["test"]) == 4 and sim["summary"][0]["count"] == 4
    lda = sl.simulate_lda(100, 200, [1.0], [1.0, 3.0], {"family": "ridge_inverse", "lambda": 0.5}, replicates=3)
    assert lda["summary"][1]["mean"] < lda["summary"][0]["mean"]

    try:
        sl.Spectrum([1.0], -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative gamma accepted")
    try:
        spec.m({"family": "nope"})
    except ValueError:
        pass
    else:
        raise AssertionError("unknown family accepted")
    assert "ridge" in sl.shrinker_families()
    print(f"shrinkage_lab {sl.__version__}: smoke test passed ({spec!r})")


if __name__ == "__main__":
    main()

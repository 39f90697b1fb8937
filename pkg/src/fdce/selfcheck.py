"""Internal invariant suites behind the ``fdce selfcheck`` verb.

Each check re-derives an expected value through an independent route
(dense matrices, double sums, brute-force percentiles, finite
differences) and compares against the production path.
"""

from __future__ import annotations

import numpy as np

from .estimators.base import EstimatorContext
from .estimators.baselines import build_dictionary, ls_estimate, omp
from .estimators.cnn import CnnParams, loss_and_grad
from .estimators.grid import circulant_grid, gridded_estimate, structured_estimate
from .linalg import (
    Shape2D,
    circ_conv2,
    dft2_apply,
    kron,
    softmax,
    unitary_dft,
    unvec,
    vec,
)
from .rng import complex_normal, derived_rng
from .stats import boxplot_stats, empirical_cdf


def _check_unitary_dft():
    worst = max(
        float(np.max(np.abs(unitary_dft(n).conj().T @ unitary_dft(n) - np.eye(n))))
        for n in range(1, 65)
    )
    return worst < 1e-12, f"max unitarity error {worst:.2e}"


def _check_dft2_dense_agreement():
    shape = Shape2D(4, 8)
    q = kron(unitary_dft(8), unitary_dft(4))
    rng = derived_rng(101, "dft2")
    worst = 0.0
    for _ in range(5):
        x = complex_normal(rng, 32)
        worst = max(worst, float(np.max(np.abs(dft2_apply(x, shape) - q @ x))))
    return worst < 1e-10, f"max dense gap {worst:.2e}"


def _check_circ_conv_direct():
    rng = derived_rng(102, "conv")
    worst = 0.0
    for dims in ((3, 5), (4, 8)):
        shape = Shape2D(*dims)
        n, m = dims
        for _ in range(5):
            k = rng.standard_normal(shape.size)
            x = rng.standard_normal(shape.size)
            kg, xg = unvec(k, shape), unvec(x, shape)
            direct = np.zeros((n, m))
            for i in range(n):
                for j in range(m):
                    acc = 0.0
                    for a in range(n):
                        for b in range(m):
                            acc += kg[a, b] * xg[(i - a) % n, (j - b) % m]
                    direct[i, j] = acc
            worst = max(worst, float(np.max(np.abs(circ_conv2(k, x, shape) - vec(direct)))))
    return worst < 1e-9, f"max direct-sum gap {worst:.2e}"


def _check_softmax():
    rng = derived_rng(103, "softmax")
    v = rng.standard_normal(16) * 50
    out = softmax(v)
    ok = (
        abs(out.sum() - 1.0) < 1e-12
        and np.all(out > 0)
        and np.max(np.abs(softmax(v + 123.4) - out)) < 1e-12
        and np.all(np.isfinite(softmax(np.array([1e4, 1e4 + 1]))))
    )
    return ok, "sum/positivity/shift/overflow"


def _check_vec_roundtrip():
    rng = derived_rng(104, "vec")
    h = complex_normal(rng, (4, 8))
    ok = np.array_equal(unvec(vec(h), Shape2D(4, 8)), h)
    return ok, "bit-exact round trip"


def _check_ls_analytic(quick: bool):
    m = 1000 if quick else 5000
    ctx = EstimatorContext.for_snr(Shape2D(4, 8), 5.0)
    rng = derived_rng(105, "ls")
    h = complex_normal(rng, (m, 32))
    h *= np.sqrt(32 / np.mean(np.sum(np.abs(h) ** 2, axis=1)))
    y = ctx.apply_x(h) + complex_normal(rng, (m, 32), var=ctx.sigma2)
    err = ls_estimate(y, ctx) - h
    measured = np.sum(np.abs(err) ** 2) / np.sum(np.abs(h) ** 2)
    rel = abs(measured - ctx.sigma2) / ctx.sigma2
    return rel < 0.1, f"LS NMSE off by {rel:.1%}"


def _check_grid_equivalence():
    shape = Shape2D(4, 8)
    ctx = EstimatorContext.for_snr(shape, 5.0)
    dense, structured = circulant_grid(shape, 4, ctx)
    rng = derived_rng(106, "grid")
    y = complex_normal(rng, (10, 32))
    gap = float(np.max(np.abs(
        gridded_estimate(y, dense, ctx) - structured_estimate(y, structured, ctx)
    )))
    return gap < 1e-9, f"gridded/structured gap {gap:.2e}"


def _check_gradients():
    shape = Shape2D(2, 4)
    ctx = EstimatorContext.for_snr(shape, 5.0)
    rng = derived_rng(107, "grad")
    worst = 0.0
    for activation in ("relu", "softmax"):
        params = CnnParams(
            a1=rng.uniform(-0.5, 0.5, 8), b1=rng.uniform(-0.2, 0.2, 8),
            a2=rng.uniform(-0.5, 0.5, 8), b2=rng.uniform(-0.2, 0.2, 8),
            activation=activation, shape=shape,
        )
        h = complex_normal(rng, (2, 8))
        y = ctx.apply_x(h) + complex_normal(rng, (2, 8), var=ctx.sigma2)
        batch = list(zip(y, h))
        _, grads = loss_and_grad(batch, params, ctx)
        step = 1e-6
        for name in ("a1", "b1", "a2", "b2"):
            numeric = np.empty(8)
            for k in range(8):
                up, down = params.copy(), params.copy()
                getattr(up, name)[k] += step
                getattr(down, name)[k] -= step
                numeric[k] = (
                    loss_and_grad(batch, up, ctx)[0] - loss_and_grad(batch, down, ctx)[0]
                ) / (2 * step)
            scale = max(float(np.max(np.abs(numeric))), 1e-12)
            worst = max(worst, float(np.max(np.abs(getattr(grads, name) - numeric))) / scale)
    return worst < 1e-5, f"max relative gradient error {worst:.2e}"


def _check_omp():
    shape = Shape2D(4, 8)
    d = build_dictionary(shape, 2, 2).d
    y = 2.0 * d[:, 11]
    support, coef = omp(d, y, 1)
    ok = list(support) == [11] and abs(coef[0] - 2.0) < 1e-10
    rng = derived_rng(108, "omp")
    a = complex_normal(rng, (8, 24))
    a /= np.linalg.norm(a, axis=0)
    yr = complex_normal(rng, 8)
    support, coef = omp(a, yr, 4)
    residual = yr - a[:, support] @ coef
    ok = ok and float(np.max(np.abs(a[:, support].conj().T @ residual))) < 1e-8
    return ok, "exact recovery and residual orthogonality"


def _check_boxplot_oracle(quick: bool):
    rng = derived_rng(109, "box")
    trials = 30 if quick else 150
    for _ in range(trials):
        data = rng.standard_normal(int(rng.integers(1, 40))) * 10
        s = boxplot_stats(data)
        q1, med, q3 = np.percentile(data, [25, 50, 75])
        if (s.q1, s.median, s.q3) != (q1, med, q3):
            return False, "quartile mismatch"
        if not (s.q1 <= s.median <= s.q3):
            return False, "quartile ordering violated"
        values, fractions = empirical_cdf(data)
        if fractions[-1] != 1.0 or np.any(np.diff(fractions) <= 0):
            return False, "CDF not monotone to 1"
    return True, f"{trials} random lists"


def run_checks(quick: bool = False) -> list:
    """Run all invariant suites; returns (name, ok, detail) triples."""
    checks = [
        ("unitary-dft", lambda: _check_unitary_dft()),
        ("dft2-dense-agreement", lambda: _check_dft2_dense_agreement()),
        ("circular-conv-direct-sum", lambda: _check_circ_conv_direct()),
        ("softmax", lambda: _check_softmax()),
        ("vec-roundtrip", lambda: _check_vec_roundtrip()),
        ("ls-analytic-nmse", lambda: _check_ls_analytic(quick)),
        ("grid-equivalence", lambda: _check_grid_equivalence()),
        ("cnn-gradients", lambda: _check_gradients()),
        ("omp", lambda: _check_omp()),
        ("boxplot-cdf-oracle", lambda: _check_boxplot_oracle(quick)),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crash
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results

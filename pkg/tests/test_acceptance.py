"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run standalone with ``python tests/test_acceptance.py`` or through pytest.
"""
import json
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from baryfold.cli import RunConfig, main, run
from baryfold.curvature import averaged_tr_k_bound, tr_k
from baryfold.jacobi import (calculus_lemma_check, equality_profile, hess_busemann_numeric, random_profile,
                             verify_key_estimate)
from baryfold.measures import VisualFamily, normalize, sphere_quadrature, visual_measure
from baryfold.models import BallIsometry, HorosphericalSpace, HyperbolicSpace, ProductSpace
from baryfold.natural_map import Isometry, NaturalMapSetup, entropy_estimate, identity_map, jacobian_natural_map
from baryfold.straightening import (SimplexSpec, d_straighten, d_straighten_fd, jacobian_chain_check,
                                    random_spherical_point, ratio_bound_constant, solve_barycenter, straighten,
                                    tangent_basis)
from oracles import brute_envelope, ray_distance


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
    assert ok, detail


def test_criterion_01_busemann_limit(capsys):
    start = time.perf_counter()
    h3 = HyperbolicSpace(3)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        y = h3.random_point(rng)
        theta = h3.random_ideal_points(rng, 1)[0]
        limit = ray_distance(y, theta, 30.0) - 30.0
        worst = max(worst, abs(h3.busemann(y, theta)[0] - limit))
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, "Busemann consistency on H^3", worst <= 1e-6 and elapsed < 10,
            f"max |B - (d - t)| = {worst:.2e} at t = 30 over 1000 pairs, {elapsed:.1f} s")


def test_criterion_02_hessian_via_jacobi(capsys):
    start = time.perf_counter()
    worst = {}
    for model in (HyperbolicSpace(3), ProductSpace(2, 2)):
        rng = np.random.default_rng(2)
        err = 0.0
        for _ in range(100):
            x = model.random_point(rng)
            theta = model.random_ideal_points(rng, 1)[0]
            y = rng.standard_normal(model.dim)
            y /= np.linalg.norm(y)
            exact = y @ model.hess_busemann(x, theta) @ y
            numeric = hess_busemann_numeric(model, x, theta, model.from_frame(x, y), horizon=20.0)
            err = max(err, abs(numeric - exact))
        worst[model.model_id] = err
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-4 and elapsed < 60
    verdict(capsys, 2, "Hessian via Jacobi fields", ok,
            ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()) + f" over 100 samples each, {elapsed:.1f} s")


def test_criterion_03_curvature_conditions(capsys):
    h4 = run(RunConfig("check-ricci", {"kind": "hyperbolic", "n": 4}))
    prod = run(RunConfig("check-ricci", {"kind": "product", "n1": 2, "n2": 2}))
    w_h4 = h4.details["worst_value"]
    w_prod = prod.details["worst_value"]
    ok = (h4.details["holds"] and abs(w_h4 + 1) <= 1e-9 and not prod.details["holds"] and abs(w_prod) <= 1e-9
          and h4.details["consistent"] and prod.details["consistent"] and h4.details["k"] == prod.details["k"] == 2)
    verdict(capsys, 3, "curvature conditions at k = 2", ok,
            f"H^4 holds={h4.details['holds']} worst Ric_2={w_h4:.12f}; "
            f"H2xH2 holds={prod.details['holds']} worst Ric_2={w_prod:.2e}; exit codes {h4.exit_code}/{prod.exit_code}")


def test_criterion_04_tr_k_oracle(capsys):
    rng = np.random.default_rng(4)
    eig_err, violations = 0.0, 0
    for _ in range(1000):
        a = rng.standard_normal((6, 6))
        a = a @ a.T
        eig = np.sort(np.linalg.eigvals(a).real)
        q, _ = np.linalg.qr(rng.standard_normal((1000, 6, 6)))
        # traces of Q_k^T A Q_k for the first k columns, all k at once
        traces = np.cumsum(np.einsum("sik,ij,sjk->sk", q, a, q), axis=1)
        for k in range(1, 7):
            val = tr_k(a, k)
            eig_err = max(eig_err, abs(val - eig[:k].sum()))
            violations += int(np.sum(traces[:, k - 1] < val - 1e-10))
    ok = eig_err <= 1e-10 and violations == 0
    verdict(capsys, 4, "Tr_k oracle", ok,
            f"max |Tr_k - eigen-sum| = {eig_err:.1e}, {violations} violations over 1000 matrices x 1000 subspaces x 6 k")


def test_criterion_05_averaging_bound(capsys):
    rng = np.random.default_rng(5)
    violations, worst = 0, np.inf
    for _ in range(10000):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 9))
        k = int(rng.integers(1, n + 1))
        mats = rng.standard_normal((m, n, n))
        mats = mats @ mats.transpose(0, 2, 1) * rng.uniform(0.1, 3.0, (m, 1, 1))
        w = rng.dirichlet(np.ones(m))
        r = averaged_tr_k_bound(mats, w, k)
        worst = min(worst, r["lhs"] - r["rhs"])
        violations += int(r["lhs"] < r["rhs"] - 1e-10)
    verdict(capsys, 5, "averaging bound", violations == 0,
            f"{violations} violations in 10000 trials, min lhs - rhs = {worst:.3e}")


def test_criterion_06_calculus_lemma(capsys):
    rng = np.random.default_rng(6)
    violations = bad_pre = 0
    for _ in range(10000):
        t, f, L = random_profile(rng)
        r = calculus_lemma_check(f, t, L)
        bad_pre += int(not r["precondition_ok"])
        violations += int(r["lhs"] < r["rhs"] - 1e-8)
    t = np.linspace(0.0, 5.0, 5001)
    eq_violations, eq_gap = 0, 0.0
    for c in (0.25, 1.0, 4.0):
        for L in (0.5, 2.0, 8.0):
            r = calculus_lemma_check(equality_profile(c, L, t), t, L)
            eq_violations += int(r["lhs"] < r["rhs"] - 1e-8 or not r["precondition_ok"])
            eq_gap = max(eq_gap, abs(r["lhs"] - c ** 1.5 / (3 * np.sqrt(L / 2))) / r["lhs"])
    ok = violations == 0 and bad_pre == 0 and eq_violations == 0 and eq_gap <= 1e-5
    verdict(capsys, 6, "calculus lemma", ok,
            f"{violations} violations in 10000 splines ({bad_pre} precondition failures); equality family "
            f"{eq_violations} violations, relative gap to the closed integral {eq_gap:.1e}")


def test_criterion_07_key_estimate(capsys):
    parts = []
    ok = True
    for n in (3, 4):
        r = verify_key_estimate(HyperbolicSpace(n), samples=50, seed=7)
        dev = max(abs(w["ratio"] - 1.0) for w in r["witnesses"])
        ok &= dev <= 1e-4 and r["positive"]
        parts.append(f"H^{n} max |ratio - 1| = {dev:.1e}")
    for alphas in ((1.0, 0.5), (1.0, 0.5, 0.75), (1.0, 0.5, 0.0)):
        model = HorosphericalSpace(alphas)
        r = verify_key_estimate(model, samples=50, seed=7)
        dev = max(abs(w["ratio"] - alphas[w["axis"] - 1] ** -2) for w in r["axis_witnesses"])
        ok &= dev <= 1e-3 and r["empirical_C"] > 0 and r["positive"]
        parts.append(f"{model.model_id} axis dev {dev:.1e}, C = {r['empirical_C']:.3f}")
    r = verify_key_estimate(ProductSpace(2, 2), samples=50, seed=7)
    ok &= r["empirical_C"] > 0 and r["positive"]
    parts.append(f"H2xH2 C = {r['empirical_C']:.3f} ({r['n_flat']} flat witnesses)")
    verdict(capsys, 7, "key estimate", ok, "; ".join(parts))


def test_criterion_08_barycenter_fixed_point(capsys):
    start = time.perf_counter()
    worst = {}
    for n in (2, 3, 4):
        model = HyperbolicSpace(n)
        fam = VisualFamily(model)
        ref = sphere_quadrature(model)
        rng = np.random.default_rng(8)
        worst[n] = max(model.distance(solve_barycenter(normalize(visual_measure(fam, x, ref))).point, x)
                       for x in (model.random_point(rng) for _ in range(100)))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-6 and elapsed < 60
    verdict(capsys, 8, "barycenter fixed point", ok,
            ", ".join(f"H^{n}: {v:.1e}" for n, v in worst.items()) + f" over 100 points each, {elapsed:.1f} s")


def test_criterion_09_vertices_and_equivariance(capsys):
    vert_err = eq_err = 0.0
    for n in (2, 3, 4):
        model = HyperbolicSpace(n)
        rng = np.random.default_rng(9)
        for trial in range(100):
            verts = np.array([model.random_point(rng) for _ in range(n + 1)])
            spec = SimplexSpec(model, verts)
            i = trial % (n + 1)
            e = np.eye(n + 1)[i]
            vert_err = max(vert_err, model.distance(straighten(spec, e), verts[i]))
            g = BallIsometry.random(n, rng)
            a = random_spherical_point(rng, n + 1)
            x = straighten(spec, a)
            gx = straighten(SimplexSpec(model, g(verts)), a)
            eq_err = max(eq_err, model.distance(g(x[None])[0], gx))
    ok = vert_err <= 1e-6 and eq_err <= 1e-6
    verdict(capsys, 9, "straightening vertices and equivariance", ok,
            f"max vertex error {vert_err:.1e}, max equivariance error {eq_err:.1e} (100 trials in each of H^2..H^4)")


def test_criterion_10_jacobian_chain(capsys):
    violations, bound_violations, fd_err = 0, 0, 0.0
    for n in (3, 4):
        model = HyperbolicSpace(n)
        rng = np.random.default_rng(10)
        for trial in range(1000):
            spec = SimplexSpec(model, [model.random_point(rng) for _ in range(n + 1)])
            a = random_spherical_point(rng, n + 1)
            r = jacobian_chain_check(spec, a, slack=1e-8)
            violations += int(not r["holds"])
            bound_violations += int(not r["straightening_bound_holds"])
            if trial < 20:
                basis = tangent_basis(a)
                exact = d_straighten(spec, a) @ basis
                fd = np.column_stack([d_straighten_fd(spec, a, u, step=1e-4) for u in basis.T])
                fd_err = max(fd_err, np.linalg.norm(exact - fd) / np.linalg.norm(exact))
    ok = violations == 0 and bound_violations == 0 and fd_err <= 1e-3
    verdict(capsys, 10, "Jacobian chain", ok,
            f"{violations} chain violations and {bound_violations} straightening-bound violations over 1000 simplices "
            f"in each of H^3, H^4; max FD relative error {fd_err:.1e}")


def test_criterion_11_ratio_envelope(capsys):
    r = ratio_bound_constant(HyperbolicSpace(4), samples=1000, seed=11)
    oracle = brute_envelope(4)
    sup = r["empirical_sup_ratio"]
    ok = sup <= oracle * 1.01
    verdict(capsys, 11, "ratio envelope in H^4", ok,
            f"empirical sup {sup:.5f} over 1000 measures vs brute-force max {oracle:.5f} "
            f"(library envelope {r['envelope']:.5f})")


def test_criterion_12_natural_map(capsys):
    h2 = HyperbolicSpace(2)
    rng = np.random.default_rng(12)
    g = BallIsometry.random(2, rng)
    orientation = np.linalg.det(g.rotation)
    fam2 = VisualFamily(h2)
    phi = Isometry(h2, g)
    setup = NaturalMapSetup.build(phi, 3.0)
    jac_err = f_err = 0.0
    for _ in range(3):
        y = h2.random_point(rng)
        r = jacobian_natural_map(phi, fam2, y, 3.0, setup=setup)
        jac_err = max(jac_err, abs(r["jac"] - orientation))
        f_err = max(f_err, h2.distance(np.array(r["F"]), g(y[None])[0]))
    h3 = HyperbolicSpace(3)
    fam3 = VisualFamily(h3)
    ys = [np.array([0.1, 0.2, -0.15]), np.array([-0.3, 0.05, 0.2])]
    svals = [2.2, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0]
    violations, worst = 0, 0.0
    for s in svals:
        st = NaturalMapSetup.build(identity_map(h3), s)
        for y in ys:
            r = jacobian_natural_map(st.phi, fam3, y, s, setup=st)
            bound = r["C"] * (s / np.sqrt(3)) ** 3
            violations += int(abs(r["jac"]) > bound * 1.01)
            worst = max(worst, abs(r["jac"]) / bound)
    ok = jac_err <= 1e-3 and f_err <= 1e-5 and violations == 0
    verdict(capsys, 12, "natural map", ok,
            f"H^2 isometry |jac - det| = {jac_err:.1e}, |F - g| = {f_err:.1e}; H^3 identity sweep s in [2.2, 10]: "
            f"{violations} violations, max |jac| / bound = {worst:.3f}")


def test_criterion_13_entropy(capsys):
    cases = [(HyperbolicSpace(2), 1.0, 0.02), (HyperbolicSpace(3), 2.0, 0.02), (ProductSpace(2, 2), np.sqrt(2), 0.03)]
    ok, parts = True, []
    for model, target, tol in cases:
        est = entropy_estimate(model)["entropy"]
        rel = abs(est - target) / target
        ok &= rel <= tol
        parts.append(f"{model.model_id}: {est:.4f} (rel err {rel:.1e}, tol {tol})")
    verdict(capsys, 13, "entropy", ok, "; ".join(parts))


def test_criterion_14_determinism(capsys, tmp_path, monkeypatch):
    commands = [
        ["jacobian-scan", "--model", '{"kind":"hyperbolic","n":3}', "--samples", "100", "--seed", "7"],
        ["key-estimate", "--model", '{"kind":"product","n1":2,"n2":2}', "--samples", "60", "--seed", "3"],
        ["barycenter", "--model", '{"kind":"hyperbolic","n":3}', "--samples", "30", "--seed", "5"],
    ]
    mismatches, files = 0, 0
    for argv in commands:
        outputs = []
        for i, threads in enumerate(("4", "4", "1")):
            monkeypatch.setenv("BARYFOLD_THREADS", threads)
            out = tmp_path / f"{argv[0]}-{i}"
            main(argv + ["--out", str(out)])
            outputs.append({name: (out / name).read_bytes() for name in sorted(os.listdir(out))})
        files += len(outputs[0])
        mismatches += sum(o != outputs[0] for o in outputs[1:])
    ok = mismatches == 0 and files >= 5
    verdict(capsys, 14, "determinism", ok,
            f"{len(commands)} commands x 3 runs (threads 4, 4, 1): {mismatches} mismatching runs over {files} files")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

"""Acceptance suite.

One test per criterion, each printing a PASS line with its runtime and
enforcing the stated tolerance.  The Monte Carlo experiments (6, 7, 9) and
the other CLI-facing runs execute once in session fixtures via the CLI
machinery, writing real artifacts into a temp directory; criterion 10
re-runs every one of them from its embedded resolved config and compares
the CSV bytes.
"""

import math
import os
import time

import numpy as np
import pytest

from sdeldp import cli, conditions, fields, rates
from sdeldp.conditions import EnvelopeSpec, ModulusSpec, SampleConfig
from sdeldp.simulate import ExperimentConfig, batch_summaries, sample_noise, euler_maruyama
from sdeldp.skeleton import ControlPath, integrate_skeleton, integrate_skeleton_euler, skeleton_gap
from conftest import make_random_control


def phi(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def report(criterion, elapsed, budget, detail=""):
    print(f"PASS criterion {criterion}: {elapsed:.2f}s (budget {budget:.0f}s) {detail}",
          flush=True)
    assert elapsed < budget


CONFIGS = {
    "check_rotational": """\
[run]
experiment = "check"
seed = 11

[model]
name = "rotational(1)"

[check]
kind = "growth"
modulus = "u"
K = 1.0
rmax = 1000.0
count = 2500
time_count = 16
""",
    "rate_brownian": """\
[run]
experiment = "rate"
seed = 51

[model]
name = "brownian"

[rate]
x0 = [0.0]
targets = [[1.0], [0.0]]
N = 256
""",
    "ldp_brownian": """\
[run]
experiment = "ldp"
seed = 61

[model]
name = "brownian"

[ldp]
x0 = [0.0]
event = "terminal-halfspace"
a = [1.0]
c = 1.0
epsilons = [1.0, 0.5, 0.25]
n = 4096
replicas = 100000
rate_bound = 0.5
""",
    "lemma1_cubic": """\
[run]
experiment = "lemma1"
seed = 71

[model]
name = "cubic"
truncate_radius = 2.0

[lemma1]
x0 = [1.5]
epsilon = 0.04
delta0 = 0.3
ns = [4, 16, 64]
n_fine = 1024
replicas = 5000
""",
    "exit_rotational": """\
[run]
experiment = "exit"
seed = 91

[model]
name = "rotational(1)"

[exit]
x0 = [1.0, 0.0]
epsilon = 0.1
n = 1024
radii = [2.0, 3.0, 4.0]
replicas = 5000
""",
    "skeleton_ou": """\
[run]
experiment = "skeleton"

[model]
name = "ou(-1)"

[skeleton]
x0 = [1.0]
mode = "flow"
substeps = 10000
""",
    "simulate_cubic": """\
[run]
experiment = "simulate"
seed = 41

[model]
name = "cubic"

[simulate]
x0 = [0.5]
epsilon = 0.04
n = 512
""",
}


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Run every CLI experiment once; record output dirs and wall times."""
    root = tmp_path_factory.mktemp("acceptance")
    runs = {}
    for name, text in CONFIGS.items():
        cfg = root / f"{name}.toml"
        cfg.write_text(text)
        out = root / name
        t0 = time.perf_counter()
        status = cli.run(str(cfg), out_dir=str(out), quiet=True)
        elapsed = time.perf_counter() - t0
        assert status == 0, f"{name} exited with {status}"
        runs[name] = {"config": str(cfg), "out": str(out), "seconds": elapsed}
    return runs


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def test_criterion_01_rotational_identities(artifacts):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    for r in (0.5, 1.0, 2.0):
        f = fields.rotational(r)
        x = rng.standard_normal((10 ** 4, 2))
        radii = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), 10 ** 4))
        x *= (radii / np.linalg.norm(x, axis=1))[:, None]
        sig = f.diffusion(0.0, x)
        cross = np.einsum("rij,ri->rj", sig, x)[:, 0]
        scale = np.linalg.norm(sig, axis=(1, 2)) * radii
        assert np.all(np.abs(cross) <= 1e-12 * scale)
        lhs = np.sum(sig * sig, axis=(1, 2)) + 2.0 * np.einsum(
            "ri,ri->r", x, f.drift(0.0, x))
        target = -(radii ** 2) ** (r + 1.0)
        assert np.all(np.abs(lhs - target) <= 1e-10 * np.abs(target))
    header, rows = read_csv(os.path.join(artifacts["check_rotational"]["out"],
                                         "condition_report.csv"))
    assert rows[0][0] == "growth" and rows[0][2] == "0" and rows[0][3] == "pass"
    elapsed = time.perf_counter() - t0 + artifacts["check_rotational"]["seconds"]
    report(1, elapsed, 1.0, "orthogonality, norm identity, growth audit clean")


def test_criterion_02_osgood_verdicts():
    t0 = time.perf_counter()
    cuts = np.logspace(-0.25, -12, 48)
    lin = conditions.osgood_integral(ModulusSpec(fn=lambda u: u, label="u"),
                                     1.0, cuts, 20.0)
    assert lin.verdict == "diverges-heuristic"
    ulog = conditions.osgood_integral(
        ModulusSpec(fn=lambda u: u * np.log(1.0 / u), label="u log(1/u)"),
        0.1, np.logspace(-1.5, -30, 115), 3.0)
    assert ulog.verdict == "diverges-heuristic"
    root = conditions.osgood_integral(ModulusSpec(fn=np.sqrt, label="sqrt"),
                                      1.0, cuts, 20.0)
    assert root.verdict == "converges"
    assert root.integral_values[-1][1] == pytest.approx(2.0, rel=0.01)
    gamma = conditions.osgood_integral(
        ModulusSpec(fn=lambda u: u * np.log(u), kind="at-infinity",
                    lower=math.e, label="u log u"),
        math.e, np.logspace(1.0, 30, 117), 3.0)
    assert gamma.verdict == "diverges-heuristic"
    report(2, time.perf_counter() - t0, 1.0,
           "u, u log(1/u), u log u diverge; sqrt converges to 2")


STARTS = {"brownian": [0.0], "ou(-1)": [1.0], "rotational(1)": [1.0, 0.0],
          "cubic": [0.5], "sqrt-drift": [1.0]}


def test_criterion_03_zero_noise_degeneration():
    t0 = time.perf_counter()
    worst = 0.0
    for spec, x0 in STARTS.items():
        f = fields.get_model(spec)
        x0 = np.array(x0)
        for n in (10, 100, 1000):
            cfg = ExperimentConfig(epsilon=0.0, n=n, root_seed=5)
            em = euler_maruyama(f, cfg, sample_noise(n, f.m, 5, 0), x0)
            poly = integrate_skeleton_euler(f, ControlPath.zero(f.m), n, x0)
            worst = max(worst, float(np.max(np.abs(em.values - poly.values))))
    assert worst <= 1e-12
    report(3, time.perf_counter() - t0, 5.0,
           f"five models, n in (10,100,1000), max node gap {worst:.1e}")


def test_criterion_04_skeleton_euler_convergence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    grids = (50, 100, 200, 400)
    for spec, x0 in (("ou(-1)", [1.0]), ("rotational(1)", [1.0, 0.0])):
        f = fields.get_model(spec)
        x0 = np.array(x0)
        for _ in range(3):
            l = make_random_control(rng, m=f.m, intervals=10, energy_budget=4.0)
            ref = integrate_skeleton(f, l, 10 ** 4, x0)  # 1e5-step reference
            gaps = [skeleton_gap(f, l, n, 10 ** 4, x0, reference=ref) for n in grids]
            for a, b in zip(gaps, gaps[1:]):
                assert 1.6 <= a / b <= 2.4
    report(4, time.perf_counter() - t0, 30.0,
           "gap halves per doubling on ou(-1) and rotational(1)")


def test_criterion_05_rate_solver_oracles(artifacts):
    from test_rates import LQ_ORACLE_N256, lq_terminal_oracle

    t0 = time.perf_counter()
    header, rows = read_csv(os.path.join(artifacts["rate_brownian"]["out"], "rate.csv"))
    by_target = {row[0]: row for row in rows}
    assert float(by_target["1.0"][1]) == pytest.approx(0.5, abs=1e-3)
    assert float(by_target["1.0"][2]) < 1e-6
    assert by_target["1.0"][4] == "true"
    assert float(by_target["0.0"][1]) < 1e-8
    assert lq_terminal_oracle(-1.0, 1.0, 256) == pytest.approx(LQ_ORACLE_N256, abs=1e-12)
    q = rates.RateQuery(field=fields.ornstein_uhlenbeck(-1.0), x0=np.array([0.0]),
                        terminal=np.array([1.0]), N=256)
    r = rates.minimize_terminal(q)
    assert r.value == pytest.approx(LQ_ORACLE_N256, abs=1e-3)
    worst = 0.0
    for spec, x0 in STARTS.items():
        f = fields.get_model(spec)
        qq = rates.RateQuery(field=f, x0=np.array(x0), terminal=np.zeros(f.d), N=64)
        worst = max(worst, rates.gradient_check(qq, probe_count=3))
    assert worst < 1e-5
    elapsed = time.perf_counter() - t0 + artifacts["rate_brownian"]["seconds"]
    report(5, elapsed, 60.0,
           f"I(1)=0.5, zero target free, LQ oracle hit, grad check {worst:.1e}")


def test_criterion_06_monte_carlo_vs_analytic(artifacts):
    t0 = time.perf_counter()
    header, rows = read_csv(os.path.join(artifacts["ldp_brownian"]["out"],
                                         "ldp_curve.csv"))
    assert [h for h in header] == ["epsilon", "n", "replicas", "hits", "p_hat",
                                   "std_err", "eps_log_p", "rate_bound", "reliable"]
    curve = []
    for row in rows:
        eps, p_hat, se, elp = (float(row[0]), float(row[4]), float(row[5]),
                               float(row[6]))
        exact = phi(-1.0 / math.sqrt(eps))
        assert abs(p_hat - exact) <= 3.0 * se, (eps, p_hat, exact, se)
        # consistency with the exact finite-eps curve: no undercut beyond
        # twice the (delta-method) standard error of eps log p_hat
        assert elp >= eps * math.log(exact) - 2.0 * eps * se / p_hat
        assert row[8] == "true"
        curve.append((eps, elp))
    vals = [v for _, v in curve]
    # approach to the rate bound -0.5 from below as eps decreases: the
    # distance to the limit is strictly decreasing along the ladder
    dists = [abs(v - (-0.5)) for v in vals]
    assert dists[0] > dists[1] > dists[2]
    assert all(v < -0.5 for v in vals)
    elapsed = time.perf_counter() - t0 + artifacts["ldp_brownian"]["seconds"]
    report(6, elapsed, 120.0,
           "p_hat within 3se of Phi(-1/sqrt(eps)); eps log p climbs toward -1/2")


def test_criterion_07_lemma1_ordering(artifacts):
    t0 = time.perf_counter()
    header, rows = read_csv(os.path.join(artifacts["lemma1_cubic"]["out"],
                                         "lemma1.csv"))
    assert header == ["n", "n_fine", "delta0", "epsilon", "replicas", "hits",
                      "p_hat", "std_err"]
    ps = {int(row[0]): float(row[6]) for row in rows}
    assert ps[4] >= ps[16] >= ps[64]
    assert ps[64] <= ps[4] / 2.0 or (ps[64] < 1e-3 and ps[4] < 1e-3)
    assert ps[4] > 0.5  # the coarse polygon genuinely strays at these scales
    elapsed = time.perf_counter() - t0 + artifacts["lemma1_cubic"]["seconds"]
    report(7, elapsed, 120.0,
           f"P(gap>=0.3): n=4 -> {ps[4]:.3f}, n=16 -> {ps[16]:.3f}, n=64 -> {ps[64]:.3f}")


def test_criterion_08_truncation_contract():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    for spec in ("cubic", "rotational(1)"):
        f = fields.get_model(spec)
        tr = fields.truncate(f, 2.0)
        x = rng.standard_normal((1000, f.d))
        x *= (2.0 * rng.random(1000) ** (1.0 / f.d))[:, None] / np.linalg.norm(x, axis=1)[:, None]
        assert np.array_equal(tr.drift(0.0, x), f.drift(0.0, x))
        assert np.array_equal(tr.diffusion(0.0, x), f.diffusion(0.0, x))
        far = x * 1e3
        bound = tr.sup_bound(0.0)
        assert np.all(np.abs(tr.drift(0.0, far)) <= bound)
        assert np.all(np.abs(tr.diffusion(0.0, far)) <= bound)
        audit = conditions.check_bounded_integrability(
            tr, SampleConfig(count=512, seed=8, rmax=1e6))
        assert audit.passed and math.isfinite(audit.integral)
    report(8, time.perf_counter() - t0, 1.0,
           "bit-exact inside the ball, clamped beyond, bounded audit clean")


def test_criterion_09_exit_monotonicity(artifacts):
    t0 = time.perf_counter()
    header, rows = read_csv(os.path.join(artifacts["exit_rotational"]["out"],
                                         "exit.csv"))
    ps = {float(row[0]): float(row[5]) for row in rows}
    assert ps[2.0] >= ps[3.0] >= ps[4.0]
    # the CSV came from shared per-replica paths; rebuild the sups with the
    # same seed and confirm the indicators are pointwise nested
    rot = fields.get_model("rotational(1)")
    cfg = ExperimentConfig(epsilon=0.1, n=1024, replicas=5000, root_seed=91,
                           x0=np.array([1.0, 0.0]))
    s = batch_summaries(rot, cfg)
    ind = {R: s.sup_norm >= R for R in (2.0, 3.0, 4.0)}
    assert np.all(ind[3.0] <= ind[2.0]) and np.all(ind[4.0] <= ind[3.0])
    for R in (2.0, 3.0, 4.0):
        assert ps[R] == np.mean(ind[R])
    elapsed = time.perf_counter() - t0 + artifacts["exit_rotational"]["seconds"]
    report(9, elapsed, 60.0,
           f"p(2)={ps[2.0]:.4f} >= p(3)={ps[3.0]:.4f} >= p(4)={ps[4.0]:.4f}, per-replica nested")


def test_criterion_10_reproducibility(artifacts, tmp_path):
    t0 = time.perf_counter()
    for name, run in artifacts.items():
        rerun_dir = tmp_path / f"{name}.rerun"
        status = cli.run(os.path.join(run["out"], "resolved_config.toml"),
                         out_dir=str(rerun_dir), quiet=True)
        assert status == 0
        originals = sorted(f for f in os.listdir(run["out"]) if f.endswith(".csv"))
        assert originals, f"{name} produced no CSV artifacts"
        for csv in originals:
            a = open(os.path.join(run["out"], csv), "rb").read()
            b = open(rerun_dir / csv, "rb").read()
            assert a == b, f"{name}/{csv} differs on re-run"
    report(10, time.perf_counter() - t0, 600.0,
           f"{len(artifacts)} experiments re-run bit-identically from resolved configs")

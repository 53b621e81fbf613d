"""Smoke test for the varbench_py extension module.

Build and install the module first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/varbench-*.whl

With the CLI built (`cargo build`), results are also checked against
`varbench compare` and `varbench simulate` on the same inputs and seeds.
Set VARBENCH_BIN to point at a different binary.
"""

import json
import math
import os
import random
import subprocess
import sys
import tempfile
from pathlib import Path

import varbench_py as vb

ROOT = Path(__file__).resolve().parent.parent


def check(cond, msg):
    if not cond:
        print(f"FAIL {msg}")
        sys.exit(1)
    print(f"ok   {msg}")


def cli_binary():
    path = Path(os.environ.get("VARBENCH_BIN", ROOT / "target" / "debug" / "varbench"))
    return path if path.exists() else None


def run_cli(binary, *args):
    with tempfile.TemporaryDirectory() as d:
        out = Path(d) / "out.json"
        subprocess.run([str(binary), *args, "--format", "records", "--out", str(out)], check=True, capture_output=True)
        return json.loads(out.read_text())["data"]


def main():
    rng = random.Random(7)
    pairs = [(0.82 + rng.gauss(0, 0.01), 0.80 + rng.gauss(0, 0.01)) for _ in range(30)]

    check(vb.noether_sample_size() == 29, "noether sample size at defaults is 29")
    check(abs(vb.binomial_sd(0.5, 10_000) - 0.005) < 1e-15, "binomial sd at tau=0.5, n=10000")
    check(abs(vb.biased_estimator_variance(1.0, 0.5, 2) - 0.75) < 1e-15, "correlated-mean variance")

    p = vb.prob_outperform(pairs)
    q = vb.prob_outperform([(b, a) for a, b in pairs])
    check(abs(p + q - 1.0) < 1e-12, "P(A>B) + P(B>A) = 1 with half credit")

    d1 = vb.compare_pab(pairs, seed=3)
    d2 = vb.compare_pab(pairs, seed=3)
    check(d1 == d2, "compare_pab is deterministic for a seed")
    check(d1["verdict"] == "significant_and_meaningful", f"separated scores are significant ({d1['verdict']})")
    check(d1["ci_lower"] <= d1["p_a_gt_b"] <= d1["ci_upper"], "interval contains the estimate")

    lo, hi = vb.percentile_bootstrap_ci(lambda idx: sum(pairs[i][0] for i in idx) / len(idx), len(pairs), seed=1)
    check(lo < sum(a for a, _ in pairs) / len(pairs) < hi, "bootstrap interval of the mean covers the sample mean")
    try:
        vb.percentile_bootstrap_ci(lambda idx: 1 / 0, 10, seed=1)
        check(False, "statistic errors propagate")
    except ZeroDivisionError:
        check(True, "statistic errors propagate")

    split = vb.oob_split(1000, 1000, 200, seed=4)
    check(not set(split["train"]) & set(split["test"]), "out-of-bootstrap split has no overlap")

    pipe = vb.SyntheticPipeline()
    opt = pipe.config()["optimum"]
    check(abs(pipe.expected_risk(opt) - pipe.config()["base_risk"]) < 1e-15, "synthetic risk is minimal at the optimum")
    seeds = {s: i for i, s in enumerate(vb.SyntheticPipeline.sources())}
    check(pipe.train_eval(opt, seeds) == pipe.train_eval(opt, seeds), "synthetic fits are seed-deterministic")
    truth = pipe.ground_truth()
    check(math.isclose(truth["mu"], pipe.config()["base_risk"]), "ground truth mean at the optimum")

    rows = vb.estimator_study(seed=5, k_grid=[1, 5], repetitions=20, setup={"source_size": 200, "train_size": 200, "test_size": 50, "budget": 5})
    check(len(rows) == 4 and all(r["std_error"] > 0 for r in rows), "estimator study returns one row per variant and k")

    sim_cfg = {"pab_grid": [0.5, 0.8], "repetitions": 200, "bootstrap_resamples": 200}
    points = vb.detection_rates(seed=6, config=sim_cfg)
    check(len(points) == 2 * 2 * 4, "detection rates cover estimators x grid x criteria")
    try:
        vb.detection_rates(seed=6, config={"repetitons": 200})
        check(False, "unknown simulation keys are rejected")
    except ValueError:
        check(True, "unknown simulation keys are rejected")

    binary = cli_binary()
    if binary is None:
        print("skip CLI parity: build the CLI with `cargo build` or set VARBENCH_BIN")
        return
    with tempfile.TemporaryDirectory() as d:
        scores = Path(d) / "scores.csv"
        lines = ["task,algorithm,replicate,value"]
        for i, (a, b) in enumerate(pairs, start=1):
            lines += [f"t,A,{i},{a!r}", f"t,B,{i},{b!r}"]
        scores.write_text("\n".join(lines) + "\n")
        cli = run_cli(binary, "compare", str(scores), "--seed", "3")["decision"]
    same = (
        cli["p_a_gt_b"] == d1["p_a_gt_b"]
        and cli["ci"]["lower"] == d1["ci_lower"]
        and cli["ci"]["upper"] == d1["ci_upper"]
        and cli["verdict"] == d1["verdict"]
    )
    check(same, "compare matches `varbench compare` bit for bit")

    with tempfile.TemporaryDirectory() as d:
        cfg = Path(d) / "exp.toml"
        cfg.write_text("[simulation]\npab_grid = [0.5, 0.8]\nrepetitions = 200\nbootstrap_resamples = 200\n")
        cli_points = run_cli(binary, "simulate", "--config", str(cfg), "--seed", "6")
    check(
        [p["rate"] for p in cli_points["points"]] == [p["rate"] for p in points],
        "detection rates match `varbench simulate`",
    )


if __name__ == "__main__":
    main()

"""Golden CLI runs shared by the CLI tests and the determinism acceptance check.

Regenerate after an intentional output change with

    python3 tests/golden_runs.py

which rewrites tests/golden/<name>/ from the current code.
"""
import os
import shutil
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "golden")
INPUTS = os.path.join(GOLDEN, "inputs")

# name -> argv (without --out-dir); every subcommand appears at least once
RUNS = {
    "oracle": ["oracle", "--d", "3", "--seed", "11"],
    "simulate": ["simulate", "--d", "4", "--M", "40", "--seed", "5"],
    "simulate_packed": ["simulate", "--d", "2", "--M", "300", "--seed", "6", "--packed",
                        "--lambda", "0.8,-0.5,0.3"],
    "maxent": ["maxent", "--d", "3", "--K", "150", "--seed", "7"],
    "maxent_moments": ["maxent", "--config", os.path.join(INPUTS, "maxent_moments.json"),
                       "--seed", "8"],
    "mle": ["mle", "--d", "4", "--K", "150", "--seed", "9",
            "--observations", os.path.join(GOLDEN, "simulate", "observations.txt")],
    "posterior": ["posterior", "--config", os.path.join(INPUTS, "posterior.json"),
                  "--observations", os.path.join(GOLDEN, "simulate_packed", "observations.bin")],
}

# data files only; figures are compared run-to-run instead of against disk
DATA_SUFFIXES = (".json", ".csv", ".txt", ".bin")


def run(name, out_dir):
    from maxent_smc.cli import main

    code = main(RUNS[name] + ["--out-dir", str(out_dir)])
    if code != 0:
        raise RuntimeError(f"golden run {name} exited with {code}")
    return sorted(f for f in os.listdir(out_dir) if f.endswith(DATA_SUFFIXES))


def compare(name, out_dir):
    """Names of files that differ from (or are missing in) the golden copy."""
    produced = run(name, out_dir)
    expected = sorted(os.listdir(os.path.join(GOLDEN, name)))
    bad = sorted(set(produced) ^ set(expected))
    for fname in set(produced) & set(expected):
        with open(os.path.join(out_dir, fname), "rb") as a, \
                open(os.path.join(GOLDEN, name, fname), "rb") as b:
            if a.read() != b.read():
                bad.append(fname)
    return bad


def regenerate():
    # order matters: simulate outputs feed mle and posterior
    for name in RUNS:
        target = os.path.join(GOLDEN, name)
        shutil.rmtree(target, ignore_errors=True)
        os.makedirs(target)
        run(name, target)
        print(f"{name}: {sorted(os.listdir(target))}")


if __name__ == "__main__":
    sys.path.insert(0, os.path.join(HERE, "..", "src"))
    regenerate()

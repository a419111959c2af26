"""Regenerate the committed fixtures (oracle jets and the seeded measure run)."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import sympy as sp

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent / "tests"))
import oracles  # noqa: E402


def series(sig, cap, rows):
    return {"signature": sig, "cap": cap, "coeffs": [{"idx": i, "re": c, "im": 0} for i, c in rows]}


def write(name, obj):
    (HERE / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def main():
    write("siegel1d.json", {"field": [series([0, 1], 8, [([1], 1), ([2], 1)])]})
    z = sp.symbols("z0:1")
    (h,) = oracles.siegel_conjugacy([z[0] + z[0] ** 2], [1], 8)
    poly = sp.Poly(h, z[0])
    rows = sorted(([m[0]], str(c)) for m, c in zip(poly.monoms(), poly.coeffs()))
    write("siegel1d_oracle.json", {"h": [series([0, 1], 8, [(i, int(c) if "/" not in c else c) for i, c in rows])]})
    write("x2+x3.json", series([0, 1], 32, [([2], 1), ([3], 1)]))
    write("x2+y2+x3.json", series([0, 2], 32, [([2, 0], 1), ([0, 2], 1), ([3, 0], 1)]))
    write("singular_q3.json", series([0, 2], 10, [([1, 1], "3/2"), ([3, 0], 1)]))
    torus = []
    torus.append({"idx": [0, 0, 1, 0, 0], "re": 1, "im": 0})
    torus.append({"idx": [0, 0, 0, 1, 0], "re": "(1+sqrt(5))/2", "im": 0})
    for i in ([1, 0], [-1, 0], [0, 1], [0, -1]):
        for beta in ([0, 0], [1, 0], [0, 1]):
            torus.append({"idx": i + beta + [1], "re": 1, "im": 0})
    write("kam_phi.json", {"slots": {"angles": 2, "actions": 2, "t": 1}, "coeffs": torus})
    with tempfile.TemporaryDirectory() as out:
        cmd = ["echelon", "measure-demo", "--tau", "2", "--C", "0.01", "--samples", "10000",
               "--seed", "0", "--cutoff", "30", "--out", out]
        summary = json.loads(subprocess.run(cmd, check=True, capture_output=True, text=True).stdout)
    write("measure_tau2.json", {"tau": 2, "C": 0.01, "cutoff": 30, "samples": 10000, "seed": 0,
                                "fraction": summary["fractions"][0][1]})


if __name__ == "__main__":
    main()

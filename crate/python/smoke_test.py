#!/usr/bin/env python3
"""Smoke test for the mechdis Python extension.

Builds nothing itself: run `cargo build -p mechdis-py --release` (or debug)
first. The script locates the produced cdylib, exposes it as an importable
module, and exercises the main entry points end to end at toy scale.
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_mechdis():
    candidates = [
        ROOT / "target" / "release" / "libmechdis.so",
        ROOT / "target" / "debug" / "libmechdis.so",
        ROOT / "target" / "release" / "libmechdis.dylib",
        ROOT / "target" / "debug" / "libmechdis.dylib",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("build the extension first: cargo build -p mechdis-py --release")
    stage = Path(tempfile.mkdtemp(prefix="mechdis_py_"))
    suffix = ".so" if lib.suffix == ".so" else ".so"  # darwin also imports .so
    shutil.copy2(lib, stage / f"mechdis{suffix}")
    sys.path.insert(0, str(stage))
    import mechdis  # noqa: E402

    return mechdis


def main():
    m = import_mechdis()
    checks = 0

    def ok(name, cond):
        nonlocal checks
        if not cond:
            sys.exit(f"FAIL {name}")
        checks += 1
        print(f"ok {name}")

    with tempfile.TemporaryDirectory(prefix="mechdis_smoke_") as tmp:
        tmp = Path(tmp)

        # dataset generation
        data = m.generate("nt-a", 3, 6, 80, 2, 7, out=str(tmp / "data"))
        ok("generate shapes", len(data["x"]) == 80 and len(data["x"][0]) == 2 and len(data["x"][0][0]) == 6)
        ok("generate meta", data["meta"]["variant"] == "nt-a" and data["meta"]["sigma"] == 0.01)
        ok("dataset files", (tmp / "data" / "meta.json").exists() and (tmp / "data" / "x.bin").exists())

        # metrics
        truth = [[float(i + j * 0.5), float(i * i % 7)] for i, j in zip(range(30), range(30))]
        flipped = [[-row[1], 2.0 * row[0]] for row in truth]
        score, perm = m.mcc(flipped, truth)
        ok("mcc permutation invariance", abs(score - 1.0) < 1e-9 and perm == [1, 0])
        ok("linear score", abs(m.linear_score(flipped, truth) - 1.0) < 1e-6)

        # KL closed form
        ok("kl", abs(m.kl_diag_gaussians([1.0], [0.0], [0.0], [0.0]) - 0.5) < 1e-12)

        # criterion checkers
        crit = m.check_criterion([[1, 0, 1], [1, 1, 0], [0, 1, 1]], "action")
        ok("action criterion satisfied", crit["satisfied"] is True)
        crit_bad = m.check_criterion([[1, 1], [1, 1]], "temporal")
        ok("complete graph rejected", crit_bad["satisfied"] is False)
        variant = m.check_variant("t-t", 3, seed=0)
        ok("variant check", variant["satisfied"] is True)

        # lemma verifiers
        lemmas = m.verify_lemmas(dim=3, trials=20, seed=0)
        ok("lemmas pass", lemmas["passed"] is True)

        # a tiny training run end to end
        report = m.train_model(
            str(tmp / "data"),
            str(tmp / "run"),
            alpha_a=0.01,
            epochs=3,
            batch_size=16,
            lr=0.002,
            enc_hidden=16,
            enc_layers=2,
            trans_hidden=8,
            trans_layers=2,
            seed=1,
        )
        ok("train report keys", all(k in report for k in ("mcc", "linear_score", "shd_a", "shd_z", "elbo_test")))
        ok("train mcc in range", 0.0 <= report["mcc"] <= 1.0)
        ok("run artifacts", (tmp / "run" / "checkpoint.json").exists() and (tmp / "run" / "report.json").exists())

        # evaluation of the checkpoint reproduces the training report
        again = m.evaluate(str(tmp / "run" / "checkpoint.json"), str(tmp / "data"))
        ok("eval deterministic", math.isclose(again["mcc"], report["mcc"], rel_tol=0, abs_tol=0))
        on_disk = json.loads((tmp / "run" / "report.json").read_text())
        ok("report round trip", on_disk["mcc"] == report["mcc"])

    print(f"\nsmoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()

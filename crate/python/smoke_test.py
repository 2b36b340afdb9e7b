"""Smoke test for the pawp extension module.

Run after `pip install --no-build-isolation ./crates/py`:

    python python/smoke_test.py
"""

import math
import random
import sys
import tempfile
from pathlib import Path

import pawp


def check(name, cond, detail=""):
    print(f"{'ok  ' if cond else 'FAIL'} {name} {detail}".rstrip())
    if not cond:
        sys.exit(1)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def main():
    rng = random.Random(0)

    scores = [rng.randint(0, 9) / 10 for _ in range(60)]
    labels = [rng.random() < 0.4 for _ in range(60)]
    check("roc_auc", pawp.roc_auc(scores, labels) == pairwise_auc(scores, labels))

    tp, fp, tn, fn = 40, 10, 50, 5
    expected = (tp * tn - fp * fn) / math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    check("mcc", abs(pawp.mcc(tp, fp, tn, fn) - expected) < 1e-12)
    check("mcc degenerate", pawp.mcc(10, 0, 0, 0) == 0.0)

    curve = pawp.dca_curve([0.9, 0.2, 0.7, 0.4], [True, False, True, False])
    check("dca thresholds", len(curve["thresholds"]) == 99)
    check("dca treat none", all(v == 0.0 for v in curve["treat_none"]))

    dims = (6, 5, 4)
    samples = [[rng.gauss(0, 1) for _ in range(120)] for _ in range(12)]
    model = pawp.Mpca.fit(samples, dims, variance_ratio=0.9)
    hist = model.scatter_history
    check("mpca monotone", all(b >= a * (1 - 1e-12) for a, b in zip(hist, hist[1:])), repr(model))
    u = model.projection(0)
    gram = [[sum(u[i][a] * u[i][b] for i in range(len(u))) for b in range(len(u[0]))] for a in range(len(u[0]))]
    check("mpca orthonormal", all(abs(gram[a][b] - (a == b)) < 1e-10 for a in range(len(gram)) for b in range(len(gram))))
    feats = model.transform(samples[0])
    check("mpca transform", len(feats) == model.feature_count)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.bin"
        model.save(path)
        check("mpca round trip", pawp.Mpca.load(path).transform(samples[0]) == feats)

    x = [[rng.gauss(1.5 if y else -1.5, 1.0), rng.gauss(0, 1)] for y in labels]
    svm = pawp.LinearSvm.train(x, labels, c=1.0)
    check("svm converged", svm.converged and svm.relative_gap <= 1e-6)
    check("svm ranks", pawp.roc_auc(svm.decision_scores(x), labels) > 0.9)

    src = [(10.0, 10.0), (10.0, 40.0), (40.0, 20.0)]
    linear, shift = pawp.estimate_affine(src, [(r + 2.0, c - 1.0) for r, c in src])
    check("affine", all(abs(a - b) < 1e-9 for a, b in zip(shift, (2.0, -1.0))) and abs(linear[0][0] - 1) < 1e-9)

    try:
        pawp.roc_auc([0.1, 0.2], [True, True])
        check("single class raises", False)
    except ValueError:
        check("single class raises", True)

    with tempfile.TemporaryDirectory() as tmp:
        config = pawp.synthesize(tmp, preset="easy", subjects=80, size=16, phases=4, seed=3)
        out = pawp.run_pipeline(config, output_dir=str(Path(tmp) / "run"))
        hybrid = [r for r in out["report"] if r["model"] == "tri_modal_hybrid"]
        check("pipeline", out["summary"]["subjects"] == 80 and len(hybrid) == 1, f"hybrid AUC {hybrid[0]['auc']:.3f}")
        check("artifacts", (Path(out["output_dir"]) / "predictions.csv").is_file())

    print("smoke test passed")


if __name__ == "__main__":
    main()

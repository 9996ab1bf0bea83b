#!/usr/bin/env python3
"""Duration prediction on the planted corpus: baselines, trained models and the class upper bound."""

import argparse
import time

from chronocal.core import default_taxonomy
from chronocal.duration_predict import (
    TrainConfig,
    baseline_average,
    baseline_random,
    classification_upperbound,
    point_estimate,
    train_classifier,
    train_regressor,
)
from chronocal.metrics import EvalReport, logsec_mse, render_table, year_mae
from chronocal.synthetic import planted_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train", type=int, default=500, help="facts per family in the training split")
    ap.add_argument("--test", type=int, default=100, help="facts per family in the test split")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args(argv)

    tax = default_taxonomy()
    train = planted_corpus(args.train, args.seed)
    test = planted_corpus(args.test, args.seed + 1, split="test", prefix="t")
    golds = [r.gold_duration for r in test]

    def row(name, points):
        return EvalReport(name=name, ls_mse=logsec_mse(points, golds), y_mae=year_mae(points, golds))

    start = time.perf_counter()
    clf = train_classifier(train, tax, TrainConfig(seed=args.seed, epochs=args.epochs))
    reg = train_regressor(train, TrainConfig(seed=args.seed, epochs=args.epochs, learning_rate=0.1))
    rnd = baseline_random(test, args.seed)
    ub = classification_upperbound(test, tax)
    rows = [
        row("random", [rnd.predict() for _ in test]),
        row("average", [baseline_average(test).predict()] * len(test)),
        row("classifier", [point_estimate(clf.predict_text(r.statement)) for r in test]),
        row("regressor", [reg.predict_text(r.statement) for r in test]),
        row("upperbound", [point_estimate(ub[r.id]) for r in test]),
    ]
    print(render_table(rows), end="")
    print(f"trained both models in {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Calibration under misalignment on the synthetic QA set.

Prints EM, AUCROC, ECE, RC@55 and the average confidence change for the
unadjusted model, the oracle adjustment and every duration-based strategy.
Durations come from either a perfect predictor or a noisy one.
"""

import argparse

import numpy as np

from chronocal.calibration import adjust_all
from chronocal.core import YEAR_SECONDS, DurationDistribution, default_taxonomy
from chronocal.metrics import (
    EvalReport,
    auc_roc,
    avg_conf_delta,
    ece,
    em_percent,
    exact_match,
    render_table,
    risk_control,
)
from chronocal.synthetic import MISALIGNMENT_YEARS, misalignment_fixture, perfect_distributions


def noisy_distributions(examples, tax, peak, seed):
    rng = np.random.default_rng(seed)
    out = {}
    for e in examples:
        k = tax.index(e.true_class)
        probs = rng.dirichlet(np.ones(len(tax))) * (1 - peak)
        probs[k] += peak
        out[e.prediction.id] = DurationDistribution(tax, tuple((probs / probs.sum()).tolist()))
    return out


def report(name, preds, conf, target):
    now = [exact_match(p.answer, p.gold_at_query) for p in preds]
    then = [exact_match(p.answer, p.gold_at_training) for p in preds]
    rc = risk_control(list(zip([p.confidence for p in preds], then)), list(zip(conf, now)), target)
    return EvalReport(name=name, em=em_percent([p.answer for p in preds], [p.gold_at_query for p in preds]),
                      aucroc=auc_roc(conf, now), ece=ece(conf, now), rc_target=target,
                      rc_achieved=rc.achieved, rc_delta=rc.delta,
                      avg_conf_delta_pct=avg_conf_delta([p.confidence for p in preds], conf))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--changed", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--predictor", choices=["perfect", "noisy"], default="perfect")
    ap.add_argument("--peak", type=float, default=0.6, help="mass on the true class (noisy predictor)")
    ap.add_argument("--rc-target", type=float, default=55.0)
    args = ap.parse_args(argv)

    tax = default_taxonomy()
    examples = misalignment_fixture(args.n, args.changed, args.seed)
    preds = [e.prediction for e in examples]
    if args.predictor == "perfect":
        dists = perfect_distributions(examples, tax)
    else:
        dists = noisy_distributions(examples, tax, args.peak, args.seed + 1)
    m = MISALIGNMENT_YEARS * YEAR_SECONDS

    rows = [report("none", preds, [p.confidence for p in preds], args.rc_target)]
    rows.append(report("oracle", preds, [a.adjusted_confidence for a in adjust_all(preds, "oracle")],
                       args.rc_target))
    for strategy in ("cdf", "expectation", "argmax", "uniform"):
        adj = adjust_all(preds, strategy, m, dists)
        rows.append(report(strategy, preds, [a.adjusted_confidence for a in adj], args.rc_target))
    print(f"{args.n} questions, {args.changed:.0%} changed, misalignment {MISALIGNMENT_YEARS} years, "
          f"{args.predictor} durations")
    print(render_table(rows), end="")


if __name__ == "__main__":
    main()

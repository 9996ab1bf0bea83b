#!/usr/bin/env python3
"""Duration-gated routing between a closed-book and an open-book answerer.

The closed path is right on facts that did not change, the open path on facts
that did. The gate retrieves when the predicted change probability reaches
``--p-star``; a noisy predictor shows how gate quality affects EM.
"""

import argparse

import numpy as np

from chronocal.core import YEAR_SECONDS, DurationDistribution, default_taxonomy
from chronocal.ensemble import ensemble_report, run_hybrid
from chronocal.metrics import em_percent
from chronocal.synthetic import MISALIGNMENT_YEARS, hybrid_fixture, perfect_distributions


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--changed", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p-star", type=float, default=0.5)
    ap.add_argument("--noise", type=float, default=0.7, help="mass moved off the true class (noisy gate)")
    args = ap.parse_args(argv)

    tax = default_taxonomy()
    m = MISALIGNMENT_YEARS * YEAR_SECONDS
    examples, closed, open_ = hybrid_fixture(args.n, args.changed, args.seed)
    golds = [p.gold_at_query for p in closed]
    rng = np.random.default_rng(args.seed + 1)
    noisy = {}
    for e in examples:
        probs = rng.dirichlet(np.ones(len(tax))) * args.noise
        probs[tax.index(e.true_class)] += 1 - args.noise
        noisy[e.prediction.id] = DurationDistribution(tax, tuple((probs / probs.sum()).tolist()))

    rows = [("closed-book", em_percent([p.answer for p in closed], golds), 0.0),
            ("open-book", em_percent([p.answer for p in open_], golds), 100.0)]
    for name, dists in (("hybrid (perfect)", perfect_distributions(examples, tax)),
                        ("hybrid (noisy)", noisy)):
        em, used = ensemble_report(run_hybrid(closed, open_, dists, m, args.p_star))
        rows.append((name, em, used))
    print(f"{'System':<18}  {'EM':>6}  {'% open':>6}")
    print(f"{'-' * 18}  {'-' * 6}  {'-' * 6}")
    for name, em, used in rows:
        print(f"{name:<18}  {em:>6.1f}  {used:>6.1f}")


if __name__ == "__main__":
    main()

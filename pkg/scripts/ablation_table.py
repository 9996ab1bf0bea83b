#!/usr/bin/env python3
"""Per-example versus uniform confidence adjustment.

Both adjustments remove the same total confidence; only the per-example one
uses the duration predictions, so it should rank answers better (AUCROC).
Runs two synthetic systems with different confidence ranges.
"""

import argparse

from chronocal.calibration import adjust_all
from chronocal.core import YEAR_SECONDS, default_taxonomy
from chronocal.metrics import EvalReport, auc_roc, ece, exact_match, render_table
from chronocal.synthetic import MISALIGNMENT_YEARS, misalignment_fixture, perfect_distributions

SYSTEMS = {
    "system-a": dict(conf_low=0.35, conf_high=0.95),
    "system-b": dict(conf_low=0.5, conf_high=0.99),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    tax = default_taxonomy()
    m = MISALIGNMENT_YEARS * YEAR_SECONDS
    rows = []
    for name, kw in SYSTEMS.items():
        examples = misalignment_fixture(args.n, 0.5, args.seed, **kw)
        preds = [e.prediction for e in examples]
        dists = perfect_distributions(examples, tax)
        now = [exact_match(p.answer, p.gold_at_query) for p in preds]
        for strategy, label in (("cdf", "per-example"), ("uniform", "uniform")):
            conf = [a.adjusted_confidence for a in adjust_all(preds, strategy, m, dists)]
            rows.append(EvalReport(name=f"{name} {label}", aucroc=auc_roc(conf, now), ece=ece(conf, now)))
    print(render_table(rows), end="")


if __name__ == "__main__":
    main()

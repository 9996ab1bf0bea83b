#!/usr/bin/env python3
"""Regenerate the committed fixtures under tests/fixtures/.

Inputs are produced from seeded generators; the golden reports are produced by
running the CLI from inside the fixtures directory (relative input paths keep
the embedded config digests stable). tests/test_cli.py re-checks every golden
number against brute-force oracles.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from chronocal.calibration import qa_to_json
from chronocal.cli import main as cli
from chronocal.core import YEAR_SECONDS, DurationDistribution, default_taxonomy
from chronocal.duration_predict import prediction_to_json
from chronocal.ingest import fact_to_json
from chronocal.synthetic import hybrid_fixture, misalignment_fixture, planted_corpus

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


def write_jsonl(path: Path, rows) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")


def noisy_distribution(tax, true_label, rng, peak=0.6):
    """``peak`` mass on the planted class, the rest spread over its neighbours."""
    k = tax.index(true_label)
    probs = np.zeros(len(tax))
    probs[k] = peak
    nbrs = [j for j in (k - 2, k - 1, k + 1, k + 2) if 0 <= j < len(tax)]
    w = rng.dirichlet(np.ones(len(nbrs)))
    for j, wj in zip(nbrs, w):
        probs[j] += (1 - peak) * wj
    probs = np.round(probs, 6)
    probs[k] += 1.0 - probs.sum()
    return DurationDistribution(tax, tuple(float(p) for p in probs))


def facts_rows():
    rows = [fact_to_json(r) for r in planted_corpus(30, seed=11, split="train", prefix="tr")]
    rows += [fact_to_json(r) for r in planted_corpus(8, seed=12, split="test", prefix="te")]
    rows += [
        {"id": "sqa-1", "question": "Who are the judges on Asia Got Talent?", "answer": "Vanness Wu",
         "statement": "Vanness Wu is the judge on Asia Got Talent",
         "timeline": [{"answer": "Vanness Wu", "start": "2015"}, {"answer": "Jay Park", "start": "2017"}],
         "split": "dev"},
        {"id": "tqa-1", "statement": "Patrick Burns (businessman) lived in Oshawa, Ontario",
         "timeline": [{"answer": "Oshawa, Ontario", "start": "1856"},
                      {"answer": "Toronto", "start": "1878"}],
         "answer": "Oshawa, Ontario", "split": "dev"},
        {"id": "sqa-2", "question": "Who is the mayor of Springfield?", "answer": "Joe Quimby",
         "timeline": [{"answer": "Joe Quimby", "start": "2019"}, {"answer": "Lisa Simpson", "start": "2019"}],
         "split": "dev"},
        {"id": "sqa-3", "statement": "The last eruption in Iceland was at Eyjafjallajokull",
         "timeline": [{"answer": "Eyjafjallajokull", "start": "2010-01-01"},
                      {"answer": "Fagradalsfjall", "start": "2021-03-19"}],
         "answer": "Eyjafjallajokull", "split": "dev"},
        {"id": "olympics", "statement": "The last Summer Olympic Games were held in Athens.",
         "duration_seconds": 4 * YEAR_SECONDS, "split": "dev"},
    ]
    return rows


def mctaco_rows(seed, n, prefix):
    rng = np.random.default_rng(seed)
    units = [("minutes", 60), ("hours", 3600), ("days", 86400), ("weeks", 604800),
             ("months", 2592000), ("years", 31536000)]
    rows = []
    for i in range(n):
        u, secs = units[int(rng.integers(len(units)))]
        value = int(rng.integers(1, 6))
        opts = []
        for du, dsecs in units:
            for v in (value, value * 3):
                d = v * dsecs
                close = abs(np.log(d) - np.log(value * secs)) <= 1.2
                opts.append({"text": f"{v} {du}", "duration_seconds": d, "label": bool(close)})
        idx = rng.permutation(len(opts))[:5]
        chosen = [opts[j] for j in idx]
        if not any(o["label"] for o in chosen):
            chosen[0] = {"text": f"{value} {u}", "duration_seconds": value * secs, "label": True}
        rows.append({
            "id": f"{prefix}{i}", "context": f"Event {i} happened in the town.",
            "question": "How long did it take to finish the event?",
            "statement": f"It took {value} {u} to finish the event.",
            "options": chosen, "gold_seconds": value * secs,
        })
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=FIXTURES)
    args = ap.parse_args(argv)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    tax = default_taxonomy()

    write_jsonl(out / "facts.jsonl", facts_rows())

    write_jsonl(out / "oracle_qa.jsonl", [
        {"id": "a", "answer": "Drew Brees", "confidence": 0.9, "gold_at_training": ["Peyton Manning"],
         "gold_at_query": ["Drew Brees"], "changed": True},
        {"id": "b", "answer": "Paris", "confidence": 0.8, "gold_at_training": ["Paris"],
         "gold_at_query": ["Paris"], "changed": False},
        {"id": "c", "answer": "Joe Biden", "confidence": 0.6, "gold_at_training": ["Donald Trump"],
         "gold_at_query": ["Joe Biden"], "changed": True},
        {"id": "d", "answer": "16", "confidence": 0.3, "gold_at_training": ["16"],
         "gold_at_query": ["16"], "changed": False},
    ])

    examples = misalignment_fixture(400, 0.5, seed=7)
    write_jsonl(out / "calib_qa.jsonl", [qa_to_json(e.prediction) for e in examples])
    rng = np.random.default_rng(8)
    write_jsonl(out / "calib_durations.jsonl", [
        prediction_to_json(e.prediction.id, noisy_distribution(tax, e.true_class, rng))
        for e in examples])
    write_jsonl(out / "calib_perfect_durations.jsonl", [
        prediction_to_json(e.prediction.id, DurationDistribution.point_mass(tax, tax.index(e.true_class)))
        for e in examples])

    _, closed, open_ = hybrid_fixture(50, 0.4, seed=9)
    write_jsonl(out / "hybrid_closed.jsonl", [qa_to_json(p) for p in closed])
    write_jsonl(out / "hybrid_open.jsonl", [qa_to_json(p) for p in open_])
    hyb = {e.prediction.id: e for e in hybrid_fixture(50, 0.4, seed=9)[0]}
    write_jsonl(out / "hybrid_durations.jsonl", [
        prediction_to_json(pid, DurationDistribution.point_mass(tax, tax.index(e.true_class)))
        for pid, e in hyb.items()])
    corpus_a, corpus_b = [], []
    for p in closed:
        q = hyb[p.id].prediction
        corpus_a.append({"id": p.id, "answer": p.answer, "confidence": p.confidence,
                         "corpus_date": "2018", "gold_at_query": list(q.gold_at_query)})
    for p in open_:
        q = hyb[p.id].prediction
        corpus_b.append({"id": p.id, "answer": p.answer, "confidence": round(p.confidence * 0.9, 4),
                         "corpus_date": "2021", "gold_at_query": list(q.gold_at_query)})
    write_jsonl(out / "rerank_a.jsonl", corpus_a)
    write_jsonl(out / "rerank_b.jsonl", corpus_b)

    for name, seed, n in (("mctaco_dev", 21, 30), ("mctaco_test", 22, 30)):
        rows = mctaco_rows(seed, n, name[-4:] + "-")
        write_jsonl(out / f"{name}.jsonl", rows)
        write_jsonl(out / f"{name}_pred.jsonl", [
            {"id": r["id"], "point_log_seconds": float(np.log(r["gold_seconds"]))} for r in rows])

    old = os.getcwd()
    os.chdir(out)
    try:
        rc = cli(["adjust", "--qa", "calib_qa.jsonl", "--strategy", "oracle", "--out", "calib_oracle.jsonl"])
        rc |= cli(["eval-calibration", "base=calib_qa.jsonl", "oracle=calib_oracle.jsonl",
                   "--out", "golden_calibration.json", "--table", "golden_calibration.txt"])
    finally:
        os.chdir(old)
    if rc:
        sys.exit(rc)
    for sidecar in out.glob("*.config.json"):
        if sidecar.name not in ("golden_calibration.json.config.json",):
            sidecar.unlink()
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()

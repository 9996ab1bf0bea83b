"""``chronocal`` command line front-end.

Exit codes: 0 success, 1 validation error (bad flags, missing files, schema
violations, id mismatches), 2 contract violation.

Every output carries the toolkit version and the digest of the resolved run
configuration; the configuration itself is written next to each output as
``<output>.config.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .calibration import (
    QAPrediction,
    adjust_all,
    adjusted_to_json,
    parse_qa_predictions,
    qa_from_json,
)
from .config import RunConfig, load_config
from .core import CalendarDate
from .duration_predict import (
    TrainConfig,
    baseline_average,
    baseline_random,
    classification_upperbound,
    import_predictions,
    load_model,
    point_estimate,
    prediction_to_json,
    train_classifier,
    train_regressor,
)
from .ensemble import CorpusAnswer, ensemble_report, run_hybrid, run_rerank
from .errors import ChronocalError, ValidationError
from .ingest import (
    META_KEY,
    Diagnostic,
    compute_stats,
    iter_json_lines,
    masked_export,
    mctaco_masked_input,
    parse_facts,
    parse_mctaco,
)
from .metrics import (
    EvalReport,
    auc_roc,
    avg_conf_delta,
    default_threshold_grid,
    ece,
    em_percent,
    exact_match,
    logsec_mse,
    mctaco_eval,
    render_table,
    risk_control,
    tune_mctaco_threshold,
    year_mae,
)

log = logging.getLogger("chronocal")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------------- file helpers

def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except FileNotFoundError:
        raise ValidationError("file not found", source=path, rule="missing-file") from None


def _write_atomic(path: str, data: "str | bytes") -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


class Run:
    """Resolved configuration plus output writers for one command invocation."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg

    @property
    def meta(self) -> dict:
        return {"toolkit": "chronocal", "version": __version__, "command": self.command,
                "config_digest": self.cfg.digest()}

    def _config_sidecar(self, path: str) -> None:
        doc = {"meta": self.meta, "config": self.cfg.to_dict()}
        _write_atomic(f"{path}.config.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")

    def write_jsonl(self, path: str, rows: Sequence[dict]) -> None:
        lines = [_dumps({META_KEY: self.meta})] + [_dumps(r) for r in rows]
        _write_atomic(path, "\n".join(lines) + "\n")
        self._config_sidecar(path)

    def write_report(self, path: str, body: dict) -> None:
        doc = {META_KEY: self.meta, **body}
        _write_atomic(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")
        self._config_sidecar(path)

    def write_table(self, path: str | None, table: str) -> None:
        header = f"# chronocal {__version__} {self.command} config {self.cfg.digest()[:16]}\n"
        if path:
            _write_atomic(path, header + table)
        sys.stdout.write(table)

    def write_bytes(self, path: str, data: bytes) -> None:
        _write_atomic(path, data)
        self._config_sidecar(path)


def _resolve(args, command: str) -> Run:
    cfg = load_config(args.config)
    for key in ("seed", "epochs", "learning_rate", "decay", "dim", "model_kind", "average_mode",
                "strategy", "mode", "uniform_match", "training_date", "query_date", "misalignment",
                "rc_target", "p_star"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "grid", None) is not None:
        cfg.mctaco_grid = list(args.grid)
    if getattr(args, "lenient", False):
        cfg.strict = False
    if getattr(args, "taxonomy", None):
        try:
            cfg.taxonomy = json.loads("\n".join(_read_lines(args.taxonomy)))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc.msg}", source=args.taxonomy,
                                  rule="taxonomy") from None
    cfg.inputs = {k: v for k, v in sorted(vars(args).items())
                  if k in _INPUT_FLAGS and v is not None}
    return Run(command, cfg)


_INPUT_FLAGS = {"facts", "mctaco", "model", "reference", "predictions", "qa", "durations", "dev",
                "dev_predictions", "test", "test_predictions", "inputs", "closed", "open",
                "corpus_a", "corpus_b", "durations_a", "durations_b", "split", "reference_split",
                "baseline", "threshold"}


def _facts(path: str, run: Run, split: str | None = None):
    diags: list[Diagnostic] = []
    recs = parse_facts(_read_lines(path), strict=run.cfg.strict, source=path, diagnostics=diags)
    for d in diags:
        print(f"{path}: {d}", file=sys.stderr)
    if split:
        recs = [r for r in recs if r.split == split]
    return recs


def _require_split(recs, path, split):
    if not recs:
        raise ValidationError(f"no records{f' in split {split!r}' if split else ''}", source=path,
                              rule="empty")


# ---------------------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    run = _resolve(args, "ingest")
    if args.mctaco:
        records = parse_mctaco(_read_lines(args.mctaco), source=args.mctaco)
    else:
        records = _facts(args.facts, run, args.split)
    run.write_jsonl(args.out, masked_export(records))
    return 0


def cmd_stats(args) -> int:
    run = _resolve(args, "stats")
    recs = _facts(args.facts, run, args.split)
    stats = compute_stats(recs, run.cfg.tax())
    run.write_report(args.out, {"stats": stats.as_dict()})
    width = max(len(lbl) for lbl in stats.taxonomy.labels)
    rows = [f"{'Class'.ljust(width)}  {'Count':>6}  {'%':>6}", f"{'-' * width}  {'-' * 6}  {'-' * 6}"]
    for c in stats.as_dict()["classes"]:
        rows.append(f"{c['label'].ljust(width)}  {c['count']:>6}  {c['percent']:>6.1f}")
    rows.append(f"{'total'.ljust(width)}  {stats.count:>6}")
    run.write_table(args.table, "\n".join(rows) + "\n")
    return 0


def cmd_train(args) -> int:
    run = _resolve(args, "train")
    cfg = run.cfg
    recs = _facts(args.facts, run, args.split)
    _require_split(recs, args.facts, args.split)
    lr = cfg.learning_rate
    if lr is None:
        lr = 0.5 if cfg.model_kind == "classifier" else 0.1
    tc = TrainConfig(seed=cfg.seed, epochs=cfg.epochs, learning_rate=lr, decay=cfg.decay, dim=cfg.dim)
    if cfg.model_kind == "classifier":
        model = train_classifier(recs, cfg.tax(), tc)
    elif cfg.model_kind == "regressor":
        model = train_regressor(recs, tc)
    else:
        raise ValidationError(f"unknown model kind {cfg.model_kind!r}", rule="model-kind")
    model.meta.update({"toolkit_version": __version__, "config_digest": cfg.digest()})
    fd, tmp = tempfile.mkstemp(suffix=".npz")
    os.close(fd)
    try:
        model.save(tmp)
        data = Path(tmp).read_bytes()
    finally:
        os.unlink(tmp)
    run.write_bytes(args.out, data)
    losses = model.meta["epoch_losses"]
    print(f"trained {cfg.model_kind} on {len(recs)} records; final loss {losses[-1]:.6f}")
    return 0


def _predict_texts(args, run: Run):
    """``[(id, text)]`` for the records to predict, plus the fact records if any."""
    if args.mctaco:
        recs = parse_mctaco(_read_lines(args.mctaco), source=args.mctaco)
        return [(r.id, mctaco_masked_input(r)) for r in recs], None
    recs = _facts(args.facts, run, args.split)
    _require_split(recs, args.facts, args.split)
    return [(r.id, r.statement) for r in recs], recs


def cmd_predict(args) -> int:
    run = _resolve(args, "predict")
    cfg = run.cfg
    items, recs = _predict_texts(args, run)
    if args.model:
        try:
            model = load_model(args.model)
        except FileNotFoundError:
            raise ValidationError("file not found", source=args.model, rule="missing-file") from None
        preds = {rid: model.predict_text(text) for rid, text in items}
    else:
        if args.baseline == "upperbound":
            if recs is None:
                raise ValidationError("the upper bound needs a facts file with gold durations",
                                      rule="inputs")
            preds = classification_upperbound(recs, cfg.tax())
        else:
            if not args.reference:
                raise ValidationError(f"baseline {args.baseline!r} needs --reference", rule="inputs")
            ref = _facts(args.reference, run, args.reference_split)
            _require_split(ref, args.reference, args.reference_split)
            if args.baseline == "random":
                base = baseline_random(ref, cfg.seed)
            else:
                base = baseline_average(ref, cfg.average_mode)
            preds = {rid: base.predict() for rid, _ in items}
    run.write_jsonl(args.out, [prediction_to_json(rid, preds[rid]) for rid, _ in items])
    return 0


def _load_predictions(path: str, run: Run):
    return import_predictions(_read_lines(path), run.cfg.tax(), strict=run.cfg.strict, source=path)


def cmd_eval_duration(args) -> int:
    run = _resolve(args, "eval-duration")
    recs = _facts(args.facts, run, args.split)
    _require_split(recs, args.facts, args.split)
    preds = _load_predictions(args.predictions, run)
    missing = [r.id for r in recs if r.id not in preds]
    if missing:
        raise ValidationError(f"{len(missing)} records lack predictions (first: {missing[0]!r})",
                              source=args.predictions, rule="id-mismatch")
    for r in recs:
        if r.gold_duration is None:
            raise ValidationError(f"record {r.id!r} has no gold duration", source=args.facts,
                                  rule="gold-duration")
    points = [point_estimate(preds[r.id]) for r in recs]
    golds = [r.gold_duration for r in recs]
    report = EvalReport(name=args.name or Path(args.predictions).stem, n=len(recs),
                        y_mae=year_mae(points, golds), ls_mse=logsec_mse(points, golds))
    run.write_report(args.out, {"reports": [report.as_dict()]})
    run.write_table(args.table, render_table([report]))
    return 0


def cmd_eval_mctaco(args) -> int:
    run = _resolve(args, "eval-mctaco")
    test = parse_mctaco(_read_lines(args.test), source=args.test)
    test_preds = {k: point_estimate(v) for k, v in _load_predictions(args.test_predictions, run).items()}
    if args.threshold is not None:
        threshold = args.threshold
    else:
        if not (args.dev and args.dev_predictions):
            raise ValidationError("threshold tuning needs --dev and --dev-predictions "
                                  "(or pass --threshold)", rule="inputs")
        dev = parse_mctaco(_read_lines(args.dev), source=args.dev)
        dev_preds = {k: point_estimate(v) for k, v in _load_predictions(args.dev_predictions, run).items()}
        start, stop, step = run.cfg.mctaco_grid
        threshold = tune_mctaco_threshold(dev, dev_preds, default_threshold_grid(start, stop, step))
    strict, f1 = mctaco_eval(test, test_preds, threshold)
    report = EvalReport(name=args.name or Path(args.test_predictions).stem, n=len(test),
                        mctaco_strict=strict, mctaco_f1=f1, mctaco_threshold=threshold)
    run.write_report(args.out, {"reports": [report.as_dict()]})
    run.write_table(args.table, render_table([report]))
    return 0


def cmd_adjust(args) -> int:
    run = _resolve(args, "adjust")
    cfg = run.cfg
    preds = parse_qa_predictions(_read_lines(args.qa), source=args.qa)
    m = cfg.resolve_misalignment()
    durations = _load_predictions(args.durations, run) if args.durations else None
    needs_inputs = cfg.strategy in ("cdf", "binary", "expectation", "argmax") or (
        cfg.strategy == "uniform" and cfg.uniform_match not in ("oracle", "none"))
    if needs_inputs and (m is None or durations is None):
        raise ValidationError(f"strategy {cfg.strategy!r} needs --durations and a misalignment "
                              "(--training-date/--query-date or --misalignment)", rule="inputs")
    adjusted = adjust_all(preds, cfg.strategy, m, durations, cfg.mode, cfg.uniform_match)
    run.write_jsonl(args.out, [adjusted_to_json(a) for a in adjusted])
    return 0


def _calibration_report(name: str, rows: list[dict], target: float) -> EvalReport:
    preds = [(QAPrediction(r["id"], r["answer"], r["confidence"], tuple(r.get("gold_at_training", [])),
                           tuple(r.get("gold_at_query", [])), r.get("changed")),
              float(r.get("adjusted_confidence", r["confidence"]))) for r in rows]
    if not preds:
        raise ValidationError("no predictions", source=name, rule="empty")
    for p, _ in preds:
        if not p.gold_at_training or not p.gold_at_query:
            raise ValidationError(f"prediction {p.id!r} lacks gold answers", source=name,
                                  rule="gold-answers")
    base = [p.confidence for p, _ in preds]
    adj = [a for _, a in preds]
    right_then = [exact_match(p.answer, p.gold_at_training) for p, _ in preds]
    right_now = [exact_match(p.answer, p.gold_at_query) for p, _ in preds]
    rc = risk_control(list(zip(base, right_then)), list(zip(adj, right_now)), target)
    counts = {"n": len(preds), "correct_at_query": sum(right_now),
              "correct_at_training": sum(right_then),
              "em_at_training": em_percent([p.answer for p, _ in preds],
                                           [p.gold_at_training for p, _ in preds])}
    flags = [p.changed for p, _ in preds if p.changed is not None]
    if flags:
        counts.update({"changed": sum(flags), "unchanged": len(flags) - sum(flags)})
    return EvalReport(
        name=name, n=len(preds),
        em=em_percent([p.answer for p, _ in preds], [p.gold_at_query for p, _ in preds]),
        aucroc=auc_roc(adj, right_now), ece=ece(adj, right_now),
        rc_target=target, rc_achieved=rc.achieved, rc_delta=rc.delta, tau=rc.tau,
        avg_conf_delta_pct=avg_conf_delta(base, adj), counts=counts,
    )


def cmd_eval_calibration(args) -> int:
    run = _resolve(args, "eval-calibration")
    reports = []
    for spec in args.inputs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        rows = [obj for _, obj in iter_json_lines(_read_lines(path), path)]
        for row in rows:
            try:
                qa_from_json(row)
            except ValidationError as exc:
                raise ValidationError(str(exc), source=path, rule=exc.rule) from None
        reports.append(_calibration_report(name, rows, run.cfg.rc_target))
    run.write_report(args.out, {"reports": [r.as_dict() for r in reports]})
    run.write_table(args.table, render_table(reports))
    return 0


def _corpus_answers(path: str) -> list[CorpusAnswer]:
    out = []
    for lineno, obj in iter_json_lines(_read_lines(path), path):
        try:
            out.append(CorpusAnswer(obj["id"], obj["answer"], float(obj["confidence"]),
                                    CalendarDate.parse(obj["corpus_date"]), "",
                                    tuple(obj.get("gold_at_query", []))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad corpus answer: {exc}", source=path, line=lineno,
                                  rule="corpus-answer") from None
    return out


def cmd_ensemble(args) -> int:
    run = _resolve(args, "ensemble")
    cfg = run.cfg
    if args.strategy_kind == "hybrid":
        if not (args.closed and args.open and args.durations):
            raise ValidationError("hybrid needs --closed, --open and --durations", rule="inputs")
        m = cfg.resolve_misalignment()
        if m is None:
            raise ValidationError("hybrid needs a misalignment", rule="inputs")
        closed = parse_qa_predictions(_read_lines(args.closed), source=args.closed)
        open_ = parse_qa_predictions(_read_lines(args.open), source=args.open)
        decisions = run_hybrid(closed, open_, _load_predictions(args.durations, run), m, cfg.p_star)
    else:
        if not (args.corpus_a and args.corpus_b and args.durations_a and args.durations_b):
            raise ValidationError("rerank needs --corpus-a/--corpus-b and --durations-a/--durations-b",
                                  rule="inputs")
        if cfg.query_date is None:
            raise ValidationError("rerank needs --query-date", rule="inputs")
        decisions = run_rerank(_corpus_answers(args.corpus_a), _corpus_answers(args.corpus_b),
                               _load_predictions(args.durations_a, run),
                               _load_predictions(args.durations_b, run), cfg.query_date)
    em, frac = ensemble_report(decisions)
    if args.decisions_out:
        run.write_jsonl(args.decisions_out, [
            {"id": d.id, "answer": d.answer, "used_updated": d.used_updated, **d.info}
            for d in decisions])
    body = {"ensemble": {"strategy": args.strategy_kind, "n": len(decisions), "em": em,
                         "updated_pct": frac}}
    run.write_report(args.out, body)
    table = (f"{'Ensemble':<10}  {'EM':>6}  {'%':>6}\n{'-' * 10}  {'-' * 6}  {'-' * 6}\n"
             f"{args.strategy_kind:<10}  {em:>6.1f}  {frac:>6.1f}\n")
    run.write_table(args.table, table)
    return 0


# ------------------------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser, out_help: str = "output file") -> None:
    p.add_argument("--config", help="JSON run config (default: $CHRONOCAL_CONFIG)")
    p.add_argument("--taxonomy", help="JSON list of duration classes")
    p.add_argument("--lenient", action="store_true", help="skip malformed records instead of failing")
    p.add_argument("--out", required=True, help=out_help)


def _misalignment_flags(p):
    p.add_argument("--training-date", help="model training date (YYYY[-MM[-DD]])")
    p.add_argument("--query-date", help="query date (YYYY[-MM[-DD]])")
    p.add_argument("--misalignment", help="explicit span, e.g. '3 years'; dates take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chronocal", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"chronocal {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate records and export masked statements")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--facts")
    src.add_argument("--mctaco")
    p.add_argument("--split")
    _common(p, "masked-statement JSONL")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="per-class duration histogram")
    p.add_argument("--facts", required=True)
    p.add_argument("--split")
    p.add_argument("--table", help="also write the text table here")
    _common(p, "JSON report")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a hashed-feature duration model")
    p.add_argument("--facts", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--kind", dest="model_kind", choices=["classifier", "regressor"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--dim", type=int)
    _common(p, "model artifact (.npz)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write duration predictions")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--facts")
    src.add_argument("--mctaco")
    p.add_argument("--split")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--model")
    how.add_argument("--baseline", choices=["random", "average", "upperbound"])
    p.add_argument("--reference", help="facts file supplying baseline durations")
    p.add_argument("--reference-split")
    p.add_argument("--seed", type=int)
    p.add_argument("--average-mode", choices=["log", "arithmetic"])
    _common(p, "duration-prediction JSONL")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval-duration", help="Year-MAE and Log-Sec MSE")
    p.add_argument("--facts", required=True)
    p.add_argument("--split")
    p.add_argument("--predictions", required=True)
    p.add_argument("--name")
    p.add_argument("--table")
    _common(p, "JSON report")
    p.set_defaults(func=cmd_eval_duration)

    p = sub.add_parser("eval-mctaco", help="MC-TACO strict accuracy / F1 with a dev-tuned threshold")
    p.add_argument("--test", required=True)
    p.add_argument("--test-predictions", required=True)
    p.add_argument("--dev")
    p.add_argument("--dev-predictions")
    p.add_argument("--threshold", type=float, help="fixed threshold (skips tuning)")
    p.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--name")
    p.add_argument("--table")
    _common(p, "JSON report")
    p.set_defaults(func=cmd_eval_mctaco)

    p = sub.add_parser("adjust", help="misalignment-aware confidence adjustment")
    p.add_argument("--qa", required=True)
    p.add_argument("--durations", help="duration-prediction JSONL keyed by QA id")
    p.add_argument("--strategy", choices=["cdf", "binary", "expectation", "argmax", "uniform",
                                          "oracle", "none"])
    p.add_argument("--mode", choices=["survival", "literal"])
    p.add_argument("--uniform-match", choices=["cdf", "binary", "expectation", "argmax", "oracle"])
    _misalignment_flags(p)
    _common(p, "adjusted-output JSONL")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("eval-calibration", help="EM, AUCROC, ECE, RC@XX, Avg Conf % delta")
    p.add_argument("inputs", nargs="+", metavar="NAME=FILE",
                   help="QA-prediction or adjusted-output files, one table row each")
    p.add_argument("--rc-target", type=float)
    p.add_argument("--table")
    _common(p, "JSON report")
    p.set_defaults(func=cmd_eval_calibration)

    p = sub.add_parser("ensemble", help="hybrid closed/open gating or two-corpus re-ranking")
    p.add_argument("strategy_kind", choices=["hybrid", "rerank"])
    p.add_argument("--closed")
    p.add_argument("--open")
    p.add_argument("--durations")
    p.add_argument("--corpus-a")
    p.add_argument("--corpus-b")
    p.add_argument("--durations-a")
    p.add_argument("--durations-b")
    p.add_argument("--p-star", type=float)
    p.add_argument("--decisions-out")
    p.add_argument("--table")
    _misalignment_flags(p)
    _common(p, "JSON report")
    p.set_defaults(func=cmd_ensemble)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    func: Callable = args.func
    try:
        return func(args)
    except ChronocalError as exc:
        print(f"chronocal {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"chronocal {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

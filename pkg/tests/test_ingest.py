import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chronocal.core import DAY, MONTH, YEAR_SECONDS, default_taxonomy
from chronocal.errors import ValidationError
from chronocal.ingest import (
    CLOZE_SUFFIX,
    MASK,
    Diagnostic,
    EmptyAnswerError,
    cloze_format,
    compute_stats,
    derive_duration_situatedqa,
    derive_duration_timeline,
    fact_from_json,
    fact_to_json,
    iter_json_lines,
    masked_export,
    mctaco_from_json,
    mctaco_masked_input,
    parse_facts,
    parse_mctaco,
    parse_timeline,
    statement_from_qa,
)

TAX = default_taxonomy()


def lines(*objs):
    return [json.dumps(o) for o in objs]


# ------------------------------------------------------------------ derivation

def test_situatedqa_year_difference():
    assert derive_duration_situatedqa("2015", "2017").seconds == 2 * YEAR_SECONDS


def test_situatedqa_same_year_is_one_month():
    assert derive_duration_situatedqa("2019", "2019").seconds == MONTH


def test_situatedqa_rejects_reversed_dates():
    with pytest.raises(ValidationError):
        derive_duration_situatedqa("2019", "2015")


def test_timeline_day_precision():
    # 2010-01-01 to 2021-03-19: 4095 days
    t = parse_timeline([{"answer": "Eyjafjallajokull", "start": "2010-01-01"},
                        {"answer": "Fagradalsfjall", "start": "2021-03-19"}])
    spans = derive_duration_timeline(t)
    assert spans == [("Eyjafjallajokull", spans[0][1])]
    assert spans[0][1].seconds == 4095 * DAY


def test_timeline_explicit_end_and_trailing_open_entry():
    t = parse_timeline([
        {"answer": "A", "start": "2000", "end": "2004"},
        {"answer": "B", "start": "2006"},
        {"answer": "C", "start": "2010"},
    ])
    spans = derive_duration_timeline(t)
    assert [(a, d.seconds) for a, d in spans] == [("A", 4 * YEAR_SECONDS), ("B", 4 * YEAR_SECONDS)]


def test_timeline_empty_answer_raises():
    t = parse_timeline([{"answer": "  ", "start": "2000"}, {"answer": "B", "start": "2001"}])
    with pytest.raises(EmptyAnswerError):
        derive_duration_timeline(t)


def test_timeline_out_of_order():
    t = parse_timeline([{"answer": "A", "start": "2005"}, {"answer": "B", "start": "2001"}])
    with pytest.raises(ValidationError):
        derive_duration_timeline(t)


@given(st.lists(st.integers(1900, 2030), min_size=2, max_size=8))
def test_timeline_spans_are_positive(years):
    years = sorted(years)
    t = parse_timeline([{"answer": f"a{i}", "start": str(y)} for i, y in enumerate(years)])
    spans = derive_duration_timeline(t)
    assert len(spans) == len(years) - 1
    for (_, d), a, b in zip(spans, years, years[1:]):
        assert d.seconds == (MONTH if a == b else (b - a) * YEAR_SECONDS)


# ------------------------------------------------------------------- templates

def test_statement_from_qa_copula():
    assert statement_from_qa("Who is the mayor of Springfield?", "Joe Quimby") \
        == "Joe Quimby is the mayor of Springfield"
    assert statement_from_qa("When did the war end?", "1945") == "When did the war end 1945"


def test_fact_from_json_template_conversion():
    rec = fact_from_json({"id": "q", "question": "Who was the coach of X?", "answer": "Y", "split": "dev"})
    assert rec.template_converted
    assert rec.statement == "Y was the coach of X"


def test_fact_from_json_errors():
    for bad in ({"statement": "s", "split": "dev"},
                {"id": "a", "statement": "", "split": "dev"},
                {"id": "a", "statement": "s"},
                {"id": "a", "statement": "s", "split": "dev", "duration_seconds": -5},
                {"id": "a", "split": "dev"}):
        with pytest.raises(ValidationError):
            fact_from_json(bad)


def test_fact_json_roundtrip_keeps_unknown_fields():
    obj = {"id": "a", "statement": "s", "split": "train", "duration_seconds": 100.0,
           "timeline": [{"answer": "x", "start": "2001-02"}], "source": "wiki"}
    rec = fact_from_json(obj)
    assert rec.extra == {"source": "wiki"}
    assert fact_from_json(fact_to_json(rec)) == rec


# --------------------------------------------------------------------- parsing

def test_iter_json_lines_skips_meta_and_blank():
    got = list(iter_json_lines(['{"_meta": {}}', "", '{"id": "a"}']))
    assert got == [(3, {"id": "a"})]
    with pytest.raises(ValidationError) as ei:
        list(iter_json_lines(["{oops"], source="f.jsonl"))
    assert "f.jsonl:1" in str(ei.value)


def test_parse_facts_strict_vs_lenient():
    data = lines({"id": "a", "statement": "s", "split": "dev"},
                 {"id": "b", "split": "dev"},
                 {"id": "c", "statement": "t", "split": "dev"})
    with pytest.raises(ValidationError) as ei:
        parse_facts(data, source="facts.jsonl")
    assert ei.value.line == 2
    diags: list[Diagnostic] = []
    recs = parse_facts(data, strict=False, diagnostics=diags)
    assert [r.id for r in recs] == ["a", "c"]
    assert len(diags) == 1 and diags[0].line == 2


def test_parse_facts_drops_empty_answers_even_in_strict_mode():
    data = lines({"id": "a", "statement": "s", "split": "dev",
                  "timeline": [{"answer": "", "start": "2000"}, {"answer": "b", "start": "2002"}]},
                 {"id": "b", "statement": "s", "split": "dev"})
    diags = []
    assert [r.id for r in parse_facts(data, diagnostics=diags)] == ["b"]
    assert diags[0].rule == "empty-answer"


def test_parse_facts_duplicate_ids_abort():
    data = lines({"id": "a", "statement": "s", "split": "dev"}, {"id": "a", "statement": "t", "split": "dev"})
    for strict in (True, False):
        with pytest.raises(ValidationError):
            parse_facts(data, strict=strict)


def test_parse_facts_fixture(fixtures_dir):
    recs = parse_facts((fixtures_dir / "facts.jsonl").read_text().splitlines())
    by_id = {r.id: r for r in recs}
    assert by_id["sqa-1"].gold_duration.seconds == 2 * YEAR_SECONDS
    assert by_id["sqa-2"].gold_duration.seconds == MONTH
    assert by_id["sqa-2"].template_converted
    assert by_id["tqa-1"].gold_duration.seconds == 22 * YEAR_SECONDS
    assert by_id["olympics"].gold_duration.seconds == 4 * YEAR_SECONDS


# ----------------------------------------------------------------------- cloze

def test_cloze_suffix():
    assert cloze_format("Vanness Wu is the judge on Asia Got Talent.") \
        == "Vanness Wu is the judge on Asia Got Talent " + CLOZE_SUFFIX


def test_cloze_inline():
    assert cloze_format("I brushed my teeth for 2 minutes.", inline=True) \
        == f"I brushed my teeth for {MASK} {MASK}."
    with pytest.raises(ValidationError):
        cloze_format("no duration here", inline=True)
    with pytest.raises(ValidationError):
        cloze_format("already [MASK] masked")


@given(st.text(alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Zs")), min_size=1).filter(str.strip))
def test_cloze_has_exactly_two_masks(statement):
    assert cloze_format(statement).count(MASK) == 2


def test_mctaco_masked_input_templates():
    rec = mctaco_from_json({"id": "m", "context": "She left early.",
                            "question": "How long did it take to drive home?",
                            "options": [{"duration_seconds": 3600, "label": True}]})
    assert mctaco_masked_input(rec) == f"She left early. It took {MASK} {MASK} to drive home."
    rec2 = mctaco_from_json({"id": "n", "context": "c", "question": "q?", "statement": "It lasted 3 hours.",
                             "options": [{"duration_seconds": 3600, "label": False}]})
    assert masked_export([rec2]) == [{"id": "n", "masked_input": f"c It lasted {MASK} {MASK}."}]


def test_parse_mctaco_fixture(fixtures_dir):
    recs = parse_mctaco((fixtures_dir / "mctaco_dev.jsonl").read_text().splitlines())
    assert len(recs) == 30
    assert all(r.gold_set for r in recs)
    with pytest.raises(ValidationError):
        parse_mctaco(lines({"id": "x", "context": "c", "question": "q", "options": []}))


# ----------------------------------------------------------------------- stats

def test_compute_stats_percentages(fixtures_dir):
    recs = parse_facts((fixtures_dir / "facts.jsonl").read_text().splitlines())
    stats = compute_stats(recs, TAX)
    assert stats.count == len(recs)
    assert sum(stats.counts) == stats.count
    assert sum(stats.percentages) == pytest.approx(100.0)
    assert stats.counts[TAX.index("5 years")] == 30 + 8 + 1  # mayors plus the 4-year games

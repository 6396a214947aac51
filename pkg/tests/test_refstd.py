"""Reference standard assembly: agreement, disagreement, adjudication."""

import random
from datetime import date, timedelta

import pytest

from rwdval import (
    AdjudicationError,
    DisagreementCase,
    LabelRecord,
    LabelSet,
    ReferenceMode,
    SchemaError,
    Source,
    adjudicate_from_oracle,
    build_double_adjudication,
    build_duplicate_abstraction,
    build_triple_adjudication,
    find_disagreements,
    variable_metrics,
    write_disagreements,
)
from rwdval.refstd import CaseStatus, Pair, Provenance, assertions_agree

from conftest import make_schema, rec


def two_sets(schema, llm_records, a1_records):
    llm = LabelSet(schema, Source.LLM, [r for r in llm_records])
    a1 = LabelSet(
        schema,
        Source.ABSTRACTOR_1,
        [LabelRecord(r.patient_id, r.variable, r.value, r.event_date, Source.ABSTRACTOR_1) for r in a1_records],
    )
    return llm, a1


# --- assertions_agree ---


def test_agree_missing_vs_missing(schema):
    assert assertions_agree(schema, "stage", (), (), 30)


def test_missing_vs_unknown_disagrees(schema):
    a = (rec("p1", "stage", "unknown"),)
    assert not assertions_agree(schema, "stage", a, (), 30)
    assert not assertions_agree(schema, "stage", (), a, 30)


def test_unknown_vs_unknown_agrees(schema):
    a = (rec("p1", "stage", "unknown"),)
    b = (rec("p1", "stage", "unknown", source=Source.ABSTRACTOR_1),)
    assert assertions_agree(schema, "stage", a, b, 30)


def test_date_within_tolerance_agrees(schema):
    a = (rec("p1", "surgery", "yes", date(2020, 1, 1)),)
    b = (rec("p1", "surgery", "yes", date(2020, 1, 31), source=Source.ABSTRACTOR_1),)
    assert assertions_agree(schema, "surgery", a, b, 30)
    c = (rec("p1", "surgery", "yes", date(2020, 2, 1), source=Source.ABSTRACTOR_1),)
    assert not assertions_agree(schema, "surgery", a, c, 30)


def test_date_on_one_side_only_disagrees(schema):
    a = (rec("p1", "surgery", "yes", date(2020, 1, 1)),)
    b = (rec("p1", "surgery", "yes", source=Source.ABSTRACTOR_1),)
    assert not assertions_agree(schema, "surgery", a, b, 30)


def test_value_mismatch_disagrees(schema):
    a = (rec("p1", "stage", "I"),)
    b = (rec("p1", "stage", "II", source=Source.ABSTRACTOR_1),)
    assert not assertions_agree(schema, "stage", a, b, 30)


def test_event_list_matching_respects_tokens(schema):
    a = (
        rec("p1", "er_result", "positive", date(2020, 1, 1)),
        rec("p1", "er_result", "negative", date(2021, 1, 1)),
    )
    b = (
        rec("p1", "er_result", "positive", date(2020, 1, 20), source=Source.ABSTRACTOR_1),
        rec("p1", "er_result", "negative", date(2021, 1, 10), source=Source.ABSTRACTOR_1),
    )
    assert assertions_agree(schema, "er_result", a, b, 30)
    # same dates but one token flipped: the positive on side a has no partner
    c = (
        rec("p1", "er_result", "negative", date(2020, 1, 20), source=Source.ABSTRACTOR_1),
        rec("p1", "er_result", "negative", date(2021, 1, 10), source=Source.ABSTRACTOR_1),
    )
    assert not assertions_agree(schema, "er_result", a, c, 30)


def test_event_list_extra_event_disagrees(schema):
    a = (
        rec("p1", "er_result", "positive", date(2020, 1, 1)),
        rec("p1", "er_result", "positive", date(2022, 1, 1)),
    )
    b = (rec("p1", "er_result", "positive", date(2020, 1, 1), source=Source.ABSTRACTOR_1),)
    assert not assertions_agree(schema, "er_result", a, b, 30)


def test_event_list_undated_counts_must_match(schema):
    a = (rec("p1", "er_result", "unknown"),)
    b = (
        rec("p1", "er_result", "unknown", source=Source.ABSTRACTOR_1),
        rec("p1", "er_result", "unknown", source=Source.ABSTRACTOR_1),
    )
    assert not assertions_agree(schema, "er_result", a, b, 30)


# --- find_disagreements ---


def test_find_disagreements_ordering(schema):
    llm, a1 = two_sets(
        schema,
        [rec("p2", "stage", "I"), rec("p1", "stage", "II"), rec("p1", "surgery", "yes", date(2020, 1, 1))],
        [rec("p2", "stage", "II"), rec("p1", "stage", "I"), rec("p1", "surgery", "no")],
    )
    cases = find_disagreements(llm, a1)
    assert [(c.patient_id, c.variable) for c in cases] == [
        ("p1", "stage"),
        ("p1", "surgery"),
        ("p2", "stage"),
    ]
    assert all(c.pair == Pair.LLM_VS_A1 for c in cases)
    assert all(c.status == CaseStatus.OPEN for c in cases)


def test_find_disagreements_three_way_pairs(schema):
    llm = LabelSet(schema, Source.LLM, [rec("p1", "stage", "I")])
    a1 = LabelSet(schema, Source.ABSTRACTOR_1, [rec("p1", "stage", "II", source=Source.ABSTRACTOR_1)])
    a2 = LabelSet(schema, Source.ABSTRACTOR_2, [rec("p1", "stage", "II", source=Source.ABSTRACTOR_2)])
    cases = find_disagreements(llm, a1, a2)
    # LLM differs from both abstractors; the abstractors agree
    assert [c.pair for c in cases] == [Pair.LLM_VS_A1, Pair.LLM_VS_A2]


# --- duplicate abstraction ---


def test_duplicate_reference_is_second_abstraction(schema):
    llm = LabelSet(schema, Source.LLM, [rec("p1", "stage", "I")])
    a1 = LabelSet(schema, Source.ABSTRACTOR_1, [rec("p1", "stage", "I", source=Source.ABSTRACTOR_1)])
    a2 = LabelSet(
        schema,
        Source.ABSTRACTOR_2,
        [
            rec("p1", "stage", "II", source=Source.ABSTRACTOR_2),
            rec("p2", "surgery", "yes", date(2020, 5, 1), source=Source.ABSTRACTOR_2),
        ],
    )
    ref, evaluands = build_duplicate_abstraction(llm, a1, a2)
    assert ref.mode == ReferenceMode.DUPLICATE_ABSTRACTION
    assert evaluands == (llm, a1)
    assert ref.labels == a2.relabel(Source.REFERENCE)
    assert set(ref.provenance.values()) == {Provenance.SINGLE_SOURCE}
    assert ref.patients == frozenset({"p1", "p2"})


def test_duplicate_empty_reference_rejected(schema):
    llm = LabelSet(schema, Source.LLM, [rec("p1", "stage", "I")])
    a1 = LabelSet(schema, Source.ABSTRACTOR_1)
    a2 = LabelSet(schema, Source.ABSTRACTOR_2)
    with pytest.raises(ValueError):
        build_duplicate_abstraction(llm, a1, a2)


def test_scoring_the_reference_source_is_identity(schema):
    # A2 scored against the duplicate-abstraction reference must be perfect
    records = [
        rec("p1", "stage", "I", source=Source.ABSTRACTOR_2),
        rec("p1", "surgery", "yes", date(2020, 1, 1), source=Source.ABSTRACTOR_2),
        rec("p2", "stage", "II", source=Source.ABSTRACTOR_2),
    ]
    a2 = LabelSet(schema, Source.ABSTRACTOR_2, records)
    llm = LabelSet(schema, Source.LLM)
    a1 = LabelSet(schema, Source.ABSTRACTOR_1)
    ref, _ = build_duplicate_abstraction(llm, a1, a2)
    report = variable_metrics(a2, ref, "surgery", "yes")
    assert report.value("recall") == 1.0
    assert report.value("precision") == 1.0
    assert report.value("f1") == 1.0
    assert report.value("date_accuracy") == 1.0


# --- double adjudication ---


def adjudication_inputs(schema):
    llm, a1 = two_sets(
        schema,
        [rec("p1", "stage", "I"), rec("p1", "surgery", "yes", date(2020, 1, 1)), rec("p2", "stage", "II")],
        [rec("p1", "stage", "II"), rec("p1", "surgery", "yes", date(2020, 1, 1)), rec("p2", "stage", "II")],
    )
    return llm, a1


def test_double_adjudication_resolves_disagreements(schema):
    llm, a1 = adjudication_inputs(schema)
    adj = LabelSet(
        schema,
        Source.ADJUDICATOR,
        [rec("p1", "stage", "I", source=Source.ADJUDICATOR)],
    )
    ref = build_double_adjudication(llm, a1, adj)
    assert ref.labels.get_single("p1", "stage").value == "I"
    # agreed keys carry abstractor 1's records
    assert ref.labels.get_single("p2", "stage").value == "II"
    assert ref.provenance[("p1", "stage")] == Provenance.ADJUDICATED
    assert ref.provenance[("p2", "stage")] == Provenance.AGREED
    assert ref.provenance[("p1", "surgery")] == Provenance.AGREED
    assert all(c.status == CaseStatus.RESOLVED for c in ref.cases)
    summ = ref.summary()
    assert summ["disagreements"]["total"] == 1
    assert summ["provenance"] == {"adjudicated": 1, "agreed": 2}


def test_uncovered_disagreement_aborts_with_full_list(schema):
    llm, a1 = two_sets(
        schema,
        [rec("p1", "stage", "I"), rec("p2", "stage", "I")],
        [rec("p1", "stage", "II"), rec("p2", "stage", "II")],
    )
    adj = LabelSet(schema, Source.ADJUDICATOR)
    with pytest.raises(AdjudicationError) as err:
        build_double_adjudication(llm, a1, adj)
    assert err.value.uncovered == [("p1", "stage"), ("p2", "stage")]


def test_stale_adjudication_rejected(schema):
    llm, a1 = two_sets(schema, [rec("p1", "stage", "I")], [rec("p1", "stage", "I")])
    adj = LabelSet(
        schema, Source.ADJUDICATOR, [rec("p1", "stage", "II", source=Source.ADJUDICATOR)]
    )
    with pytest.raises(AdjudicationError) as err:
        build_double_adjudication(llm, a1, adj)
    assert err.value.stale == [("p1", "stage")]


def test_adjudications_must_come_from_adjudicator(schema):
    llm, a1 = adjudication_inputs(schema)
    wrong = LabelSet(schema, Source.LLM, [rec("p1", "stage", "I")])
    with pytest.raises(SchemaError):
        build_double_adjudication(llm, a1, wrong)


# --- triple adjudication ---


def test_triple_majority_does_not_shortcut_adjudication(schema):
    # A1 and A2 agree but the extraction differs: still adjudicated
    llm = LabelSet(schema, Source.LLM, [rec("p1", "stage", "I")])
    a1 = LabelSet(schema, Source.ABSTRACTOR_1, [rec("p1", "stage", "II", source=Source.ABSTRACTOR_1)])
    a2 = LabelSet(schema, Source.ABSTRACTOR_2, [rec("p1", "stage", "II", source=Source.ABSTRACTOR_2)])
    adj = LabelSet(schema, Source.ADJUDICATOR, [rec("p1", "stage", "III", source=Source.ADJUDICATOR)])
    ref = build_triple_adjudication(llm, a1, a2, adj)
    assert ref.labels.get_single("p1", "stage").value == "III"
    assert ref.provenance[("p1", "stage")] == Provenance.ADJUDICATED


def test_triple_unanimous_keys_keep_abstractor_1(schema):
    llm = LabelSet(schema, Source.LLM, [rec("p1", "surgery", "yes", date(2020, 1, 3))])
    a1 = LabelSet(
        schema, Source.ABSTRACTOR_1, [rec("p1", "surgery", "yes", date(2020, 1, 1), source=Source.ABSTRACTOR_1)]
    )
    a2 = LabelSet(
        schema, Source.ABSTRACTOR_2, [rec("p1", "surgery", "yes", date(2020, 1, 8), source=Source.ABSTRACTOR_2)]
    )
    adj = LabelSet(schema, Source.ADJUDICATOR)
    ref = build_triple_adjudication(llm, a1, a2, adj)
    assert ref.labels.get_single("p1", "surgery").event_date == date(2020, 1, 1)
    assert ref.provenance[("p1", "surgery")] == Provenance.AGREED


# --- oracle adjudication and the worklist file ---


def test_adjudicate_from_oracle_copies_and_backfills_unknown(schema):
    cases = [
        DisagreementCase("p1", "stage", Pair.LLM_VS_A1),
        DisagreementCase("p2", "stage", Pair.LLM_VS_A1),
    ]
    oracle = LabelSet(schema, Source.REFERENCE, [rec("p1", "stage", "III", source=Source.REFERENCE)])
    adj = adjudicate_from_oracle(cases, oracle)
    assert adj.source == Source.ADJUDICATOR
    assert adj.get_single("p1", "stage").value == "III"
    # the oracle never labeled p2: resolved as documented-unknown
    assert adj.get_single("p2", "stage").value == "unknown"


def test_adjudicate_from_oracle_needs_unknown_token(schema):
    cases = [DisagreementCase("p9", "tumor_size_mm", Pair.LLM_VS_A1)]
    oracle = LabelSet(schema, Source.REFERENCE)
    with pytest.raises(SchemaError):
        adjudicate_from_oracle(cases, oracle)


def test_write_disagreements_lists_every_contributing_record(tmp_path, schema):
    llm, a1 = two_sets(schema, [rec("p1", "stage", "I")], [rec("p1", "stage", "II")])
    cases = find_disagreements(llm, a1)
    path = tmp_path / "worklist.csv"
    write_disagreements(cases, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("patient_id,variable,value,event_date,source,refresh_id,pair")
    assert len(lines) == 3  # header + one row per side
    assert any(",llm," in line for line in lines[1:])
    assert any(",abstractor_1," in line for line in lines[1:])


# --- randomized: the reference never contains fabricated content ---


def _random_label_sets(seed, schema):
    rng = random.Random(seed)
    stage_values = ["I", "II", "III", "unknown"]
    out = {}
    for source in (Source.LLM, Source.ABSTRACTOR_1, Source.ABSTRACTOR_2):
        records = []
        for i in range(rng.randint(3, 10)):
            pid = f"p{i}"
            if rng.random() < 0.9:
                records.append(
                    LabelRecord(pid, "stage", rng.choice(stage_values), None, source)
                )
            if rng.random() < 0.7:
                day = date(2020, 1, 1) + timedelta(days=rng.randint(0, 300))
                records.append(LabelRecord(pid, "surgery", "yes", day, source))
        out[source] = LabelSet(schema, source, records)
    return out[Source.LLM], out[Source.ABSTRACTOR_1], out[Source.ABSTRACTOR_2]


def _assert_no_fabrication(ref_labels, *sources):
    pool = set()
    for src in sources:
        for r in src.records():
            pool.add((r.patient_id, r.variable, r.value, r.event_date))
    for r in ref_labels.records():
        assert (r.patient_id, r.variable, r.value, r.event_date) in pool, (
            f"reference fabricated {r}"
        )


def test_reference_content_traces_to_inputs_randomized(schema):
    for seed in range(40):
        llm, a1, a2 = _random_label_sets(seed, schema)
        ref, _ = build_duplicate_abstraction(llm, a1, a2)
        _assert_no_fabrication(ref.labels, a2)

        cases = find_disagreements(llm, a1)
        adj = adjudicate_from_oracle(cases, a2.relabel(Source.REFERENCE))
        ref2 = build_double_adjudication(llm, a1, adj)
        # adjudicated content comes from the oracle or is documented-unknown
        pool_sources = [a1, adj]
        _assert_no_fabrication(ref2.labels, *pool_sources)

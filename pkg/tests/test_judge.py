import json

import pytest

from convsql.judge import (
    CRITERIA,
    AllSamplesUnparseable,
    JudgeConfig,
    NoScoreLine,
    OutOfRange,
    RqsBreakdown,
    build_judge_prompt,
    judge_run,
    load_rqs_records,
    parse_judge_output,
    score_response,
)
from convsql.metrics import load_predictions


def _turn4(demo_dataset):
    return demo_dataset.dialogues[0].turns[3]


def _turn1(demo_dataset):
    return demo_dataset.dialogues[0].turns[0]


# --- prompt construction --------------------------------------------------------


def test_prompt_contains_all_criteria(demo_dataset):
    prompt = build_judge_prompt(_turn4(demo_dataset), "You're welcome!")
    for name in CRITERIA:
        assert name in prompt
    assert "SCORES:" in prompt


def test_prompt_omits_empty_history(demo_dataset):
    prompt = build_judge_prompt(_turn4(demo_dataset), "resp", history=())
    assert "Conversation so far" not in prompt
    with_history = build_judge_prompt(_turn4(demo_dataset), "resp",
                                      history=[("q", "a")])
    assert "Conversation so far" in with_history


def test_prompt_matches_golden_file(demo_dataset, fixtures_dir):
    golden = (fixtures_dir / "golden" / "judge_prompt.txt").read_text(encoding="utf-8")
    t1, t4 = _turn1(demo_dataset), _turn4(demo_dataset)
    prompt = build_judge_prompt(t4, "You're welcome!",
                                history=[(t1.question, t1.gold_response)])
    assert prompt == golden


def test_prompt_varies_with_sample_index(demo_dataset):
    p0 = build_judge_prompt(_turn4(demo_dataset), "r", sample_index=0)
    p1 = build_judge_prompt(_turn4(demo_dataset), "r", sample_index=1)
    assert p0 != p1


# --- output parsing ---------------------------------------------------------------


def test_parse_all_twos():
    out = parse_judge_output(
        "SCORES: relevance=2 clarity=2 completeness=2 accuracy=2 utility=2")
    assert out.total == 10


def test_parse_evidence_then_line():
    text = ("Evidence: relevant.\nEvidence: clear.\nsome chatter\n"
            "SCORES: relevance=2 clarity=1 completeness=2 accuracy=1 utility=0")
    out = parse_judge_output(text)
    assert (out.relevance, out.clarity, out.completeness, out.accuracy,
            out.utility) == (2, 1, 2, 1, 0)
    assert out.total == 6


def test_parse_last_line_wins():
    text = ("SCORES: relevance=0 clarity=0 completeness=0 accuracy=0 utility=0\n"
            "after reflection:\n"
            "SCORES: relevance=1 clarity=1 completeness=1 accuracy=1 utility=1")
    assert parse_judge_output(text).total == 5


def test_parse_out_of_range():
    with pytest.raises(OutOfRange):
        parse_judge_output(
            "SCORES: relevance=3 clarity=2 completeness=2 accuracy=2 utility=2")


def test_parse_no_score_line():
    with pytest.raises(NoScoreLine):
        parse_judge_output("I liked this response very much.")


def test_breakdown_invariants():
    b = RqsBreakdown(2, 1, 0, 2, 1)
    assert b.total == sum(b.to_dict()[c] for c in CRITERIA)
    with pytest.raises(OutOfRange):
        RqsBreakdown(2, 2, 2, 2, -1)


# --- sampled scoring (replay-backed) -----------------------------------------------


def test_score_all_two_transcript(demo_dataset, judge_backend):
    cfg = JudgeConfig(backend=judge_backend, samples_k=1)
    mean, samples, warnings, usage = score_response(
        cfg, _turn4(demo_dataset), "You're welcome!")
    assert mean.total == 10.0
    assert len(samples) == 1 and not warnings
    assert usage[0] > 0 and usage[1] > 0


def test_score_three_sample_mean(demo_dataset, judge_backend):
    cfg = JudgeConfig(backend=judge_backend, samples_k=3)
    mean, samples, warnings, _ = score_response(
        cfg, _turn4(demo_dataset), "You're welcome!")
    assert sorted(s.total for s in samples) == [8, 9, 10]
    assert mean.total == pytest.approx(9.0)
    assert not warnings
    # criterion means must stay consistent with the samples
    for c in CRITERIA:
        assert getattr(mean, c) == pytest.approx(
            sum(getattr(s, c) for s in samples) / 3)


def test_score_degrades_over_parseable_samples(demo_dataset, judge_backend):
    cfg = JudgeConfig(backend=judge_backend, samples_k=2)
    mean, samples, warnings, _ = score_response(
        cfg, _turn1(demo_dataset), "No departure data is stored.")
    assert len(samples) == 1 and mean.total == 7.0
    assert len(warnings) == 1


def test_score_all_unparseable(demo_dataset):
    class Garbage:
        model_id = "g"

        def complete(self, req):
            from convsql.llmio import Completion
            return Completion(text="no scores here")

    cfg = JudgeConfig(backend=Garbage(), samples_k=2)
    with pytest.raises(AllSamplesUnparseable):
        score_response(cfg, _turn4(demo_dataset), "resp")


def test_samples_k_validation(judge_backend):
    with pytest.raises(ValueError):
        JudgeConfig(backend=judge_backend, samples_k=0)


def test_replay_scoring_deterministic(demo_dataset, judge_backend):
    cfg = JudgeConfig(backend=judge_backend, samples_k=3)
    results = []
    for _ in range(3):
        mean, samples, _, _ = score_response(cfg, _turn4(demo_dataset),
                                             "You're welcome!")
        results.append(json.dumps([mean.to_dict()] + [s.to_dict() for s in samples],
                                  sort_keys=True))
    assert len(set(results)) == 1


# --- whole-run judging ---------------------------------------------------------------


def test_judge_run_over_predictions(demo_dataset, judge_backend, fixtures_dir, tmp_path):
    preds = load_predictions(fixtures_dir / "preds" / "flights_demo_perfect.jsonl")
    cfg = JudgeConfig(backend=judge_backend, samples_k=1)
    records, (tokens_in, tokens_out) = judge_run(cfg, demo_dataset, preds)
    assert len(records) == 4
    assert all(0 <= r["rqs"]["total"] <= 10 for r in records)
    assert tokens_in > 0 and tokens_out > 0
    # per-sample totals always equal the sum of their criteria
    for r in records:
        for s in r["samples"]:
            assert s["total"] == sum(s[c] for c in CRITERIA)

    out = tmp_path / "rqs.jsonl"
    with open(out, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    loaded = load_rqs_records(out)
    assert loaded[("flights-demo-1", 4)] == records[-1]["rqs"]["total"]

"""Prompt generation invariants and session-metric arithmetic."""

import pytest

from helpers import balanced_taxonomy, toy_graph
from kgexpand.graph import add_dummy_root, all_pairs_distances, parse_graph, split_dataset
from kgexpand.prompts import (
    DecisionRecord,
    PromptError,
    generate_prompts,
    load_decision_log,
    read_prompt_file,
    session_metrics,
    write_prompt_file,
)


@pytest.fixture(scope="module")
def toy():
    g = toy_graph()
    return g, all_pairs_distances(g)


@pytest.fixture(scope="module")
def taxo():
    g = add_dummy_root(parse_graph(balanced_taxonomy(4, 3)))
    return g, all_pairs_distances(g)


def _record(pre, chosen, true, elapsed_ms=1000, pid="p0000"):
    return DecisionRecord(
        session_id="s0001",
        prompt_id=pid,
        condition="HF",
        preselected_id=pre,
        chosen_id=chosen,
        true_parent_id=true,
        elapsed_ms=elapsed_ms,
        ts=0,
    )


def test_hf_incorrect_preselects_come_from_the_one_hop_ring(toy):
    g, dm = toy
    x, r, x1, x2 = g.label_to_id["x"], g.label_to_id["r"], g.label_to_id["x1"], g.label_to_id["x2"]
    picks = set()
    for seed in range(50):
        (p,) = generate_prompts([(x1, x)], "HF", g, dm, frac_correct=0.0, seed=seed)
        assert not p.support_correct
        assert dm[p.preselected, x] == 1
        assert p.preselected in {r, x1, x2}
        assert p.preselected != x1  # the query cannot be its own parent
        picks.add(p.preselected)
    assert picks == {r, x2}


def test_frac_one_every_preselect_is_the_true_parent(toy):
    g, dm = toy
    pairs = [(g.label_to_id[c], g.label_to_id[p]) for c, p in
             (("x1", "x"), ("x2", "x"), ("y1", "y"))]
    prompts = generate_prompts(pairs, "HF", g, dm, frac_correct=1.0, seed=3)
    assert all(p.support_correct and p.preselected == p.true_parent for p in prompts)


def test_82_prompts_at_half_give_exactly_41_correct(taxo):
    g, dm = taxo
    pairs = [(c, p) for c, p in g.edges if p != g.dummy_root][:82]
    assert len(pairs) == 82
    prompts = generate_prompts(pairs, "HF", g, dm, frac_correct=0.5, seed=7)
    assert sum(p.support_correct for p in prompts) == 41
    assert sum(not p.support_correct for p in prompts) == 41


def test_nhf_incorrect_preselects_sit_exactly_five_hops_away(taxo):
    g, dm = taxo
    split = split_dataset(g, seed=0)
    prompts = generate_prompts(split.test, "NHF", g, dm, frac_correct=0.5, seed=0)
    assert sum(p.support_correct for p in prompts) == len(split.test) // 2
    for p in prompts:
        if p.support_correct:
            assert p.preselected == p.true_parent
        else:
            assert dm[p.preselected, p.true_parent] == 5
            assert p.preselected != g.dummy_root


def test_nhf_on_shallow_tree_rejects_naming_the_node(toy):
    g, dm = toy
    x1, x = g.label_to_id["x1"], g.label_to_id["x"]
    with pytest.raises(PromptError, match="'x'"):
        generate_prompts([(x1, x)], "NHF", g, dm, frac_correct=0.0, seed=0)


def test_prompt_ids_sequential_and_order_shuffled(taxo):
    g, dm = taxo
    pairs = [(c, p) for c, p in g.edges if p != g.dummy_root][:82]
    prompts = generate_prompts(pairs, "HF", g, dm, seed=5)
    assert [p.prompt_id for p in prompts] == [f"p{i:04d}" for i in range(82)]
    assert [p.query for p in prompts] != [c for c, _ in pairs]
    assert sorted(p.query for p in prompts) == sorted(c for c, _ in pairs)


def test_same_seed_reproduces_different_seed_varies(taxo):
    g, dm = taxo
    pairs = [(c, p) for c, p in g.edges if p != g.dummy_root][:40]
    a = generate_prompts(pairs, "HF", g, dm, seed=11)
    b = generate_prompts(pairs, "HF", g, dm, seed=11)
    c = generate_prompts(pairs, "HF", g, dm, seed=12)
    assert a == b
    assert a != c


def test_model_condition_preselects_the_predictor_output(toy):
    g, dm = toy
    r = g.label_to_id["r"]
    x, x1, y1, y = (g.label_to_id[k] for k in ("x", "x1", "y1", "y"))
    prompts = generate_prompts(
        [(x1, x), (x, r), (y1, y)], "MODEL", g, dm, seed=0, predictor=lambda u: r
    )
    by_query = {p.query: p for p in prompts}
    assert all(p.preselected == r for p in prompts)
    assert by_query[x].support_correct  # predictor happened to be right
    assert not by_query[x1].support_correct
    assert not by_query[y1].support_correct


def test_model_condition_without_predictor_rejected(toy):
    g, dm = toy
    with pytest.raises(PromptError, match="predictor"):
        generate_prompts([(3, 0)], "MODEL", g, dm, seed=0)


def test_bad_condition_and_fraction_rejected(toy):
    g, dm = toy
    with pytest.raises(PromptError, match="condition"):
        generate_prompts([(3, 0)], "hf", g, dm, seed=0)
    with pytest.raises(PromptError, match="frac_correct"):
        generate_prompts([(3, 0)], "HF", g, dm, frac_correct=1.5, seed=0)


def test_metrics_worked_example():
    records = [
        _record(1, 1, 1, 10_000, "p0000"),
        _record(2, 2, 2, 20_000, "p0001"),
        _record(3, 3, 4, 30_000, "p0002"),
        _record(5, 6, 5, 40_000, "p0003"),
    ]
    m = session_metrics(records)
    assert m.compliance_pct == 75.0
    assert m.accuracy_pct == 50.0
    assert m.mean_time_per_prompt == 25.0
    assert m.total_score == 0
    sc = m.by_support["support_correct"]
    si = m.by_support["support_incorrect"]
    assert sc.count == 3 and si.count == 1
    assert si.compliance_pct == 100.0 and si.accuracy_pct == 0.0
    assert sc.accuracy_pct == pytest.approx(200.0 / 3.0)


def test_score_is_correct_minus_incorrect():
    records = [_record(1, 1, 1, pid=f"p{i:04d}") for i in range(10)]
    records += [_record(1, 2, 1, pid=f"p{i:04d}") for i in range(10, 13)]
    m = session_metrics(records)
    assert m.total_score == 7
    assert m.accuracy_pct == pytest.approx(100.0 * 10 / 13)


def test_full_compliance_on_correct_support_scores_perfectly():
    records = [_record(i, i, i, pid=f"p{i:04d}") for i in range(1, 6)]
    m = session_metrics(records)
    assert m.compliance_pct == 100.0
    assert m.accuracy_pct == 100.0
    assert "support_incorrect" not in m.by_support


def test_empty_log_rejected():
    with pytest.raises(PromptError, match="no decisions"):
        session_metrics([])


def test_prompt_file_roundtrip_is_byte_stable(taxo, tmp_path):
    g, dm = taxo
    pairs = split_dataset(g, seed=0).test
    prompts = generate_prompts(pairs, "NHF", g, dm, seed=9)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_prompt_file(str(a), prompts, {"seed": 9})
    write_prompt_file(str(b), prompts, {"seed": 9})
    assert a.read_bytes() == b.read_bytes()
    header, back = read_prompt_file(str(a))
    assert header["seed"] == 9 and header["count"] == len(pairs)
    assert back == prompts


def test_prompt_file_requires_format_tag(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"seed": 1}\n')
    with pytest.raises(PromptError, match="format"):
        read_prompt_file(str(p))


def test_decision_log_roundtrip(tmp_path):
    records = [
        _record(1, 1, 1, 10_000, "p0000"),
        _record(2, 3, 2, 20_000, "p0001"),
    ]
    path = tmp_path / "s.log.jsonl"
    path.write_text("".join(r.as_json_line() + "\n" for r in records))
    back = load_decision_log(str(path))
    assert back == records
    assert session_metrics(back) == session_metrics(records)

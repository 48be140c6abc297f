import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evalkit import (
    CostMatrix,
    Priors,
    TrialFormatError,
    TrialSet,
    dump_trials,
    empirical_priors,
    load_sequences,
    load_trials,
)


def test_jsonl_three_rows(write_jsonl):
    path = write_jsonl([
        {"id": "a", "label": 0, "posterior": [0.9, 0.1]},
        {"id": "b", "label": 0, "posterior": [0.6, 0.4]},
        {"id": "c", "label": 1, "posterior": [0.2, 0.8]},
    ])
    t = load_trials(path)
    assert len(t) == 3 and t.num_classes == 2
    assert t.labels.tolist() == [0, 0, 1]
    assert t.decisions is None


def test_posterior_not_normalized(write_jsonl):
    path = write_jsonl([{"id": "a", "label": 0, "posterior": [0.7, 0.2]}])
    with pytest.raises(TrialFormatError, match="posterior row does not sum to 1"):
        load_trials(path)


def test_posterior_within_tolerance_is_renormalized(write_jsonl):
    path = write_jsonl([{"id": "a", "label": 0, "posterior": [0.7, 0.3 + 5e-7]}])
    t = load_trials(path)
    assert t.posteriors.sum() == pytest.approx(1.0, abs=1e-15)


def test_duplicate_id_reports_line(write_jsonl):
    path = write_jsonl([{"id": "s1", "label": 0, "decision": 0},
                        {"id": "s1", "label": 1, "decision": 1}])
    with pytest.raises(TrialFormatError, match=r":2: duplicate sample_id 's1'"):
        load_trials(path)


def test_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "label": 0, "decision": 0}\n{"id": "b", "label":\n')
    with pytest.raises(TrialFormatError, match=r"bad.jsonl:2: malformed row"):
        load_trials(path)


def test_label_out_of_range_with_explicit_k(write_jsonl):
    path = write_jsonl([{"id": "a", "label": 2, "decision": 0}])
    with pytest.raises(TrialFormatError, match="out of range"):
        load_trials(path, num_classes=2)
    assert load_trials(path).num_classes == 3


def test_explicit_k_from_header_line(write_jsonl):
    path = write_jsonl([{"num_classes": 4}, {"id": "a", "label": 1, "decision": 1}])
    assert load_trials(path).num_classes == 4


def test_label_outside_posterior_width(write_jsonl):
    path = write_jsonl([{"id": "a", "label": 2, "posterior": [0.5, 0.5]}])
    with pytest.raises(TrialFormatError, match="out of range"):
        load_trials(path)


def test_string_labels_sorted_mapping(write_jsonl):
    path = write_jsonl([
        {"id": "1", "label": "spoof", "decision": "bonafide"},
        {"id": "2", "label": "bonafide", "decision": "bonafide"},
    ])
    t = load_trials(path)
    assert t.class_names == ("bonafide", "spoof")
    assert t.labels.tolist() == [1, 0]
    assert t.decisions.tolist() == [0, 0]


def test_mixed_label_kinds_rejected(write_jsonl):
    path = write_jsonl([{"id": "1", "label": "x", "decision": 0},
                        {"id": "2", "label": 0, "decision": 0}])
    with pytest.raises(TrialFormatError, match="mixed"):
        load_trials(path)


def test_column_missing_on_some_rows(write_jsonl):
    path = write_jsonl([{"id": "1", "label": 0, "decision": 0}, {"id": "2", "label": 0}])
    with pytest.raises(TrialFormatError, match=r":2: missing 'decision'"):
        load_trials(path)


def test_needs_some_output(write_jsonl):
    path = write_jsonl([{"id": "1", "label": 0}])
    with pytest.raises(TrialFormatError, match="at least one of"):
        load_trials(path)


def test_csv_equivalent(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text(
        "id,label,posterior_0,posterior_1,decision,prediction,group\n"
        "a,0,0.9,0.1,0,,g1\n"
        "b,1,0.3,0.7,1,,g2\n"
        "c,1,0.5,0.5,0,,\n"
    )
    t = load_trials(path)
    assert t.num_classes == 2
    assert t.decisions.tolist() == [0, 1, 0]
    assert t.predictions is None
    assert t.groups.tolist() == ["g1", "g2", "__sample__:c"]
    np.testing.assert_allclose(t.posteriors[1], [0.3, 0.7])


def test_csv_bad_number(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("id,label,posterior_0,posterior_1\na,0,0.5,0.5\nb,1,zero,1\n")
    with pytest.raises(TrialFormatError, match=r"t.csv:3: malformed row"):
        load_trials(path)


def test_regression_only_file(write_jsonl):
    path = write_jsonl([{"id": "a", "prediction": 1.5, "target": 1.0},
                        {"id": "b", "prediction": 0.0, "target": 2.0}])
    t = load_trials(path)
    assert t.labels is None and t.num_classes is None
    assert t.targets.tolist() == [1.0, 2.0]


def test_sequence_file(write_jsonl):
    path = write_jsonl([{"id": "u1", "ref": ["a", "b"], "hyp": ["a"], "group": "spk1"}], "seq.jsonl")
    s = load_sequences(path)
    assert s.references == (("a", "b"),) and s.hypotheses == (("a",),)
    assert s.groups.tolist() == ["spk1"]


def test_trials_are_read_only():
    t = TrialSet.build(["a", "b"], [0, 1], decisions=[0, 1])
    with pytest.raises(ValueError):
        t.labels[0] = 1
    with pytest.raises(AttributeError):
        t.labels = None


@pytest.mark.parametrize("labels,expected", [
    ([0, 0, 1, 1], [0.5, 0.5]),
    ([0, 0, 0, 1], [0.75, 0.25]),
    ([0, 0, 0], [1.0, 0.0]),
])
def test_empirical_priors(labels, expected):
    t = TrialSet.build([str(i) for i in range(len(labels))], labels, num_classes=2,
                       decisions=[0] * len(labels))
    p = empirical_priors(t)
    assert p.source == "empirical"
    assert p.p.tolist() == expected


def test_priors_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        Priors([0.5, 0.4])
    with pytest.raises(ValueError):
        Priors([1.2, -0.2])
    assert Priors([0.25, 0.75]).source == "user-specified"


def test_cost_matrix_validation():
    with pytest.raises(ValueError, match="diagonal"):
        CostMatrix([[1, 1], [1, 0]])
    with pytest.raises(ValueError, match="positive"):
        CostMatrix([[0, 0], [0, 0]])
    with pytest.raises(ValueError, match="non-negative"):
        CostMatrix([[0, -1], [1, 0]])
    with pytest.raises(ValueError, match="square"):
        CostMatrix([[0, 1, 1], [1, 0, 1]])


@st.composite
def trial_sets(draw):
    k = draw(st.integers(1, 4))
    n = draw(st.integers(1, 12))
    labels = draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
    kinds = draw(st.sets(st.sampled_from(["post", "dec", "pred"]), min_size=1))
    post = None
    if "post" in kinds:
        raw = draw(st.lists(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k),
                            min_size=n, max_size=n))
        post = np.asarray(raw) / np.asarray(raw).sum(axis=1, keepdims=True)
    dec = draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n)) if "dec" in kinds else None
    pred = (draw(st.lists(st.floats(-1e6, 1e6), min_size=n, max_size=n))
            if "pred" in kinds else None)
    groups = (draw(st.lists(st.sampled_from(["g1", "g2", "g3"]), min_size=n, max_size=n))
              if draw(st.booleans()) else None)
    return TrialSet.build([f"id{i}" for i in range(n)], labels, num_classes=k,
                          posteriors=post, decisions=dec, predictions=pred, groups=groups)


@settings(max_examples=60, deadline=None)
@given(trial_sets())
def test_jsonl_roundtrip_is_lossless(tmp_path_factory, trials):
    path = tmp_path_factory.mktemp("rt") / "t.jsonl"
    dump_trials(trials, path)
    again = load_trials(path)
    assert again == trials
    dump_trials(again, path)
    assert load_trials(path) == trials


@settings(max_examples=60, deadline=None)
@given(trial_sets())
def test_empirical_priors_always_valid(trials):
    p = empirical_priors(trials)
    assert abs(p.p.sum() - 1.0) <= 1e-9 and np.all(p.p >= 0)
    counts = np.bincount(trials.labels, minlength=trials.num_classes)
    np.testing.assert_allclose(p.p, counts / len(trials))


def test_roundtrip_string_labels(write_jsonl, tmp_path):
    path = write_jsonl([{"id": "1", "label": "b", "decision": "a"},
                        {"id": "2", "label": "a", "decision": "a"}])
    t = load_trials(path)
    out = tmp_path / "back.jsonl"
    dump_trials(t, out)
    assert load_trials(out) == t
    first = json.loads(out.read_text().splitlines()[0])
    assert first == {"num_classes": 2, "class_names": ["a", "b"]}

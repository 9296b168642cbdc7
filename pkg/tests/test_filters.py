import pytest

from trackkit.models import Box, Frame, Trajectory, Grounding, ChunkCandidate, PipelineConfig
from trackkit.filters import (filter_chunk, gate_grounding, gate_tracking, consistency_check,
                              rules_from_config, load_stoplist, numeral_value, DEFAULT_STOPLIST)
from trackkit.errors import MissingAnnotation, EmptyTrajectory, MissingAnchorFrame


BOX = Box(.2, .2, .4, .4)


def make_chunk(text="a dog", head="dog", tags=(("a", "DT"), ("dog", "NN")), first=0.9,
               middle_box=BOX, last_box=BOX):
    return ChunkCandidate("v", f"there is {text}", text, head, list(tags),
                          {"first": Grounding(0, BOX, first),
                           "middle": Grounding(2, middle_box, 0.9),
                           "last": Grounding(4, last_box, 0.9)})


def make_trajectory(scores=(0.9,) * 5, frames=range(5)):
    return Trajectory("v", "a dog", [Frame(i, BOX, s) for i, s in zip(frames, scores)])


@pytest.fixture
def rules():
    return rules_from_config(PipelineConfig(collective=["family", "crowd"]))


def test_filters_chunk_keeps_concrete_singular(rules):
    assert filter_chunk(make_chunk(), rules)
    assert filter_chunk(make_chunk("one dog", tags=(("one", "CD"), ("dog", "NN"))), rules)


def test_filters_chunk_rejects_virtual_plural_numeral(rules):
    assert filter_chunk(make_chunk("the time", "time"), rules).reason == "virtual"
    assert "wind" in DEFAULT_STOPLIST and "love" in DEFAULT_STOPLIST
    d = filter_chunk(make_chunk("dogs", tags=(("dogs", "NNS"),)), rules)
    assert not d and d.reason == "plural"
    assert filter_chunk(make_chunk("a family", "family"), rules).reason == "plural"
    d = filter_chunk(make_chunk("3 dog", tags=(("3", "CD"), ("dog", "NN"))), rules)
    assert d.reason == "numeral"
    d = filter_chunk(make_chunk("three dog", tags=(("three", "CD"), ("dog", "NN"))), rules)
    assert d.reason == "numeral"


def test_filters_chunk_first_failing_rule(rules):
    d = filter_chunk(make_chunk("two winds", "wind", (("two", "CD"), ("winds", "NNS"))), rules)
    assert d.reason == "virtual"


def test_filters_chunk_missing_tags(rules):
    with pytest.raises(MissingAnnotation):
        filter_chunk(make_chunk(tags=()), rules)


def test_filters_numeral_value():
    assert numeral_value("two") == 2
    assert numeral_value("1,000") == 1000
    assert numeral_value("2.5") == 2.5
    assert numeral_value("several") is None


def test_filters_load_stoplist(tmp_path):
    path = tmp_path / "stoplist.txt"
    path.write_text("# abstract nouns\nTime\n\nidea  # comment\n")
    assert load_stoplist(path) == frozenset({"time", "idea"})
    rules = rules_from_config(PipelineConfig(stoplist=str(path)))
    assert filter_chunk(make_chunk("an idea", "idea"), rules).reason == "virtual"
    assert filter_chunk(make_chunk("the sky", "sky"), rules)


def test_filters_gate_grounding_strict():
    assert gate_grounding(make_chunk(first=0.61), 0.6)
    assert not gate_grounding(make_chunk(first=0.6), 0.6)
    c = make_chunk()
    c.groundings.pop("first")
    with pytest.raises(MissingAnnotation):
        gate_grounding(c)


def test_filters_gate_tracking_strict():
    assert gate_tracking(make_trajectory(), 0.8)
    assert not gate_tracking(make_trajectory((0.9, 0.9, 0.8, 0.9, 0.9)), 0.8)
    assert not gate_tracking(make_trajectory((0.9, 0.9, 0.79, 0.9, 0.9)), 0.8)
    with pytest.raises(EmptyTrajectory):
        gate_tracking(Trajectory("v", "a dog", []))


def test_filters_consistency_check():
    decision, (iou_mid, iou_last) = consistency_check(make_trajectory(), make_chunk(), 0.3)
    assert decision and iou_mid == 1.0 and iou_last == 1.0
    low = Box(.2, .2, .26, .4)
    decision, (iou_mid, _) = consistency_check(make_trajectory(), make_chunk(middle_box=low), 0.3)
    assert iou_mid < 0.3
    assert not decision
    exact = Box(.2, .2, .26, .4)
    decision, (iou_mid, _) = consistency_check(make_trajectory(), make_chunk(middle_box=exact),
                                               iou_mid)
    assert decision


def test_filters_consistency_missing_frames():
    with pytest.raises(MissingAnchorFrame):
        consistency_check(make_trajectory(frames=(0, 1, 3, 4, 5)), make_chunk())
    c = make_chunk()
    c.groundings.pop("last")
    with pytest.raises(MissingAnnotation):
        consistency_check(make_trajectory(), c)

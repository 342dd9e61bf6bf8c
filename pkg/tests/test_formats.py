import json
from fractions import Fraction as F

import pytest
from hypothesis import given, settings

from bequiset.broadcast_sim import simulate_b_equiset, simulate_ignore_deps
from bequiset.core import InstanceError
from bequiset.formats import (
    batches_from_json,
    batches_to_json,
    instance_from_json,
    instance_to_json,
    job_trace_to_json,
    trace_from_json,
    trace_to_json,
)
from bequiset.jobsched import Batch, SeqParJob, simulate_equi_compose_a

from strategies import instances


def test_figure1_file(figure1):
    doc = instance_to_json(figure1)
    assert doc["items"][0] == {"id": "A", "length": "3/2"}
    assert doc["requests"][0] == {"id": "S1", "arrival": "0", "items": ["A", "B", "C"]}
    assert instance_from_json(json.loads(json.dumps(doc))) == figure1


@pytest.mark.parametrize(
    "doc",
    [
        {"items": [], "requests": [], "extra": 1},
        {"items": [{"id": "A", "length": "1", "color": "red"}], "requests": []},
        {"items": [{"id": "A", "length": "1.5"}], "requests": []},
        {"items": [{"id": "A"}], "requests": []},
        {"items": [], "requests": [{"id": "S", "arrival": "0", "items": "A"}]},
    ],
)
def test_instance_rejects(doc):
    with pytest.raises(InstanceError):
        instance_from_json(doc)


@settings(max_examples=30, deadline=None)
@given(instances())
def test_trace_round_trip(inst):
    for trace in (simulate_b_equiset(inst, F(3, 2)), simulate_ignore_deps(inst, 1)):
        doc = json.loads(json.dumps(trace_to_json(trace)))
        back = trace_from_json(doc, inst)
        assert back.flow == trace.flow and back.completions == trace.completions
        assert back.broadcasts == trace.broadcasts


def test_trace_rejects_tampered_flow(figure1):
    doc = trace_to_json(simulate_b_equiset(figure1, F(3, 2)))
    assert doc["flow"] == "44/3"
    assert "S1:A" in doc["rates"][0]
    doc["flow"] = "1"
    with pytest.raises(InstanceError):
        trace_from_json(doc, figure1)


def test_batch_round_trip():
    batches = [Batch("B1", F(1, 2), (SeqParJob("a", 1, F(3, 4)), SeqParJob("b", 0, 0, True)))]
    doc = batches_to_json(batches, 2)
    assert doc["batches"][0]["jobs"][0] == {"id": "a", "seq": "1", "par": "3/4"}
    back, p = batches_from_json(json.loads(json.dumps(doc)))
    assert back == batches and p == 2
    with pytest.raises(InstanceError):
        batches_from_json({"processors": "1", "batches": [], "x": 0})


def test_job_trace_json():
    batches = [Batch("B1", 0, (SeqParJob("a", 0, 1),))]
    doc = job_trace_to_json(simulate_equi_compose_a(batches, 1))
    assert doc["completions"] == {"B1": "1"} and doc["job_completions"] == {"B1:a": "1"}

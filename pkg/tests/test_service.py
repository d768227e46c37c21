import base64
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from nsgen import nsf1
from nsgen.model import ModelConfig, build, save_checkpoint
from nsgen.service import ModelRegistry, create_app


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    a_path = root / "a.ckpt"
    b_path = root / "b3.ckpt"
    save_checkpoint(
        a_path,
        build(ModelConfig(input_size=32, in_channels=3, base_width=8, seed=1)),
        {"stage": "A", "epoch": 1},
    )
    save_checkpoint(
        b_path,
        build(ModelConfig(input_size=64, in_channels=4, base_width=8, seed=2)),
        {"stage": "B3", "epoch": 1},
    )
    registry = ModelRegistry()
    registry.register("A", a_path)
    registry.register("B3", b_path)
    return TestClient(create_app(registry))


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json()["models"] == 2


def test_models_listing_matches_checkpoints(client):
    r = client.get("/models")
    assert r.status_code == 200
    listing = {e["model_id"]: e for e in r.json()}
    assert listing["A"]["grid_size"] == 32
    assert listing["A"]["ranges"]["u0"] == [0.0, 0.5]
    assert listing["B3"]["grid_size"] == 64
    assert listing["B3"]["ranges"]["obstacles"] == 3


def test_solve_in_range_returns_fields(client):
    req = {
        "model_id": "B3",
        "u0": 0.2,
        "v0": 0.5,
        "shapes": [
            {"kind": "circle", "cx": 16, "cy": 20, "radius": 5},
            {"kind": "circle", "cx": 40, "cy": 36, "radius": 6},
            {"kind": "circle", "cx": 28, "cy": 52, "radius": 4},
        ],
    }
    r = client.post("/solve", json=req)
    assert r.status_code == 200
    body = r.json()
    assert len(body["fields"]["u"]) == 64
    assert len(body["fields"]["u"][0]) == 64
    assert body["meta"]["model_id"] == "B3"
    assert body["meta"]["latency_ms"] >= 0


def test_out_of_range_rejected_naming_bound(client):
    r = client.post("/solve", json={"model_id": "B3", "u0": 0.9, "v0": 0.9})
    assert r.status_code == 400
    assert "u0=0.9" in r.json()["detail"]
    assert "[0.0, 0.5]" in r.json()["detail"]


def test_unknown_model_404(client):
    r = client.post("/solve", json={"model_id": "nope", "u0": 0.1})
    assert r.status_code == 404


def test_unrasterizable_shape_422(client):
    req = {
        "model_id": "B3",
        "u0": 0.1,
        "v0": 0.1,
        "shapes": [{"kind": "circle", "cx": 1, "cy": 32, "radius": 5}],  # touches ring
    }
    r = client.post("/solve", json=req)
    assert r.status_code == 422


def test_too_many_obstacles_400(client):
    shapes = [{"kind": "circle", "cx": 20 + 6 * i, "cy": 30, "radius": 3} for i in range(4)]
    r = client.post("/solve", json={"model_id": "B3", "u0": 0.1, "v0": 0.1, "shapes": shapes})
    assert r.status_code == 400
    assert "exceed" in r.json()["detail"]


def test_identical_requests_identical_payloads(client):
    req = {"model_id": "A", "u0": 0.35, "lid_start": 0.25, "lid_extent": 0.5}
    a = client.post("/solve", json=req)
    b = client.post("/solve", json=req)
    assert a.status_code == b.status_code == 200
    assert a.json()["fields"] == b.json()["fields"]


def test_nsf1_accept_header(client):
    req = {"model_id": "A", "u0": 0.2}
    r = client.post("/solve", json=req, headers={"Accept": "application/x-nsf1"})
    assert r.status_code == 200
    blob = base64.b64decode(r.json()["nsf1_base64"])
    channels = nsf1.decode(blob)
    assert channels.shape == (3, 32, 32)
    assert channels.dtype == np.float32


def test_oracle_solve_streams_progress(client):
    req = {"model_id": "A", "u0": 0.3, "budget_s": 30.0, "progress_every": 200}
    with client.stream("POST", "/oracle-solve", json=req) as r:
        assert r.status_code == 200
        events = []
        current = {}
        for line in r.iter_lines():
            if line.startswith("event: "):
                current = {"event": line[7:]}
            elif line.startswith("data: "):
                current["data"] = json.loads(line[6:])
                events.append(current)
    kinds = [e["event"] for e in events]
    assert kinds[-1] == "result"
    steps = [e["data"]["step"] for e in events if e["event"] == "progress"]
    assert steps == sorted(steps)
    assert events[-1]["data"]["converged"] is True
    assert "fields" in events[-1]["data"]


def test_oracle_budget_zero_408(client):
    r = client.post("/oracle-solve", json={"model_id": "A", "u0": 0.3, "budget_s": 0})
    assert r.status_code == 408

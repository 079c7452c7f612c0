import json

import pytest
from fastapi.testclient import TestClient

from procopt.data import load_dataset
from procopt.records import observations_to_csv
from procopt.service import CampaignStore, create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(CampaignStore(persist_dir=tmp_path / "campaigns"))
    return TestClient(app)


def _create(client, **overrides):
    body = {"batch_size": 20, "seed": 0, **overrides}
    resp = client.post("/campaigns", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_create_and_get(client):
    doc = _create(client)
    assert doc["status"] == "ready_to_suggest"
    assert doc["schedule"] == ["lhs", "bo", "bo", "bo", "refine"]
    assert len(doc["space"]) == 6
    got = client.get(f"/campaigns/{doc['id']}").json()
    assert got == doc


def test_get_missing_campaign(client):
    assert client.get("/campaigns/nope").status_code == 404


def test_advance_and_fetch_plan(client):
    doc = _create(client)
    plan = client.post(f"/campaigns/{doc['id']}/suggestions")
    assert plan.status_code == 200
    plan = plan.json()
    assert plan["method"] == "lhs"
    assert len(plan["conditions"]) == 20

    again = client.get(f"/campaigns/{doc['id']}/suggestions").json()
    assert again == plan

    csv_resp = client.get(
        f"/campaigns/{doc['id']}/suggestions", params={"format": "csv"}
    )
    assert csv_resp.status_code == 200
    lines = csv_resp.text.strip().split("\n")
    assert lines[0].startswith("condition_id,temperature_C,speed_cm_s")
    assert len(lines) == 21


def test_double_advance_conflict(client):
    doc = _create(client)
    assert client.post(f"/campaigns/{doc['id']}/suggestions").status_code == 200
    resp = client.post(f"/campaigns/{doc['id']}/suggestions")
    assert resp.status_code == 409


def test_ingest_rows_happy_path(client):
    doc = _create(client)
    plan = client.post(f"/campaigns/{doc['id']}/suggestions").json()
    rows = [
        {
            "condition_id": i,
            "values": c["values"],
            "pce_pct": 10.0 + 0.05 * i,
            "film_pass": True,
        }
        for i, c in enumerate(plan["conditions"])
    ]
    resp = client.post(f"/campaigns/{doc['id']}/results", json={"rows": rows})
    assert resp.status_code == 200, resp.text
    assert resp.json()["observation_count"] == 20
    assert resp.json()["status"] == "ready_to_suggest"


def test_ingest_blank_pce_with_failed_film(client):
    doc = _create(client)
    plan = client.post(f"/campaigns/{doc['id']}/suggestions").json()
    rows = [
        {"condition_id": i, "values": c["values"], "pce_pct": None,
         "film_pass": False}
        if i == 3
        else {"condition_id": i, "values": c["values"], "pce_pct": 11.0,
              "film_pass": True}
        for i, c in enumerate(plan["conditions"])
    ]
    resp = client.post(f"/campaigns/{doc['id']}/results", json={"rows": rows})
    assert resp.status_code == 200, resp.text


def test_ingest_off_plan_rejected_inline(client):
    doc = _create(client)
    client.post(f"/campaigns/{doc['id']}/suggestions")
    stranger = {"values": [125.0, 10.0, 2.0, 0.8, 15.0, 25.0], "pce_pct": 9.0,
                "film_pass": True}
    resp = client.post(f"/campaigns/{doc['id']}/results", json={"rows": [stranger]})
    assert resp.status_code == 400
    assert "UnknownConditionError" in resp.json().get("error", "") or \
        "not suggested" in resp.json()["detail"]


def test_ingest_csv_body(client, dataset):
    doc = _create(client)
    client.post(f"/campaigns/{doc['id']}/suggestions")
    csv_text = observations_to_csv([o for o in dataset if o.round_index == 0])
    resp = client.post(
        f"/campaigns/{doc['id']}/results",
        json={"csv": csv_text, "allow_off_plan": True},
    )
    assert resp.status_code == 200, resp.text
    assert resp.json()["observation_count"] == 19


def test_manifold_requires_model(client):
    doc = _create(client)
    resp = client.get(f"/campaigns/{doc['id']}/manifold", params={"xi": 0, "xj": 1})
    assert resp.status_code == 409


def test_manifold_after_data(client, dataset):
    doc = _create(client)
    client.post(f"/campaigns/{doc['id']}/suggestions")
    csv_text = observations_to_csv([o for o in dataset if o.round_index == 0])
    client.post(f"/campaigns/{doc['id']}/results",
                json={"csv": csv_text, "allow_off_plan": True})
    resp = client.get(
        f"/campaigns/{doc['id']}/manifold",
        params={"xi": 0, "xj": 1, "seed": 3, "grid": 8, "samples": 16},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert len(body["matrix"]) == 8 and len(body["matrix"][0]) == 8
    n_pass = len(body["overlays"]["pass"])
    n_fail = len(body["overlays"]["fail"])
    assert n_pass + n_fail == 19
    assert n_fail == sum(1 for o in dataset if o.round_index == 0 and not o.film_pass)
    # deterministic per seed
    again = client.get(
        f"/campaigns/{doc['id']}/manifold",
        params={"xi": 0, "xj": 1, "seed": 3, "grid": 8, "samples": 16},
    ).json()
    assert again["matrix"] == body["matrix"]


def test_history_endpoint(client, dataset):
    doc = _create(client)
    client.post(f"/campaigns/{doc['id']}/suggestions")
    csv_text = observations_to_csv([o for o in dataset if o.round_index == 0])
    client.post(f"/campaigns/{doc['id']}/results",
                json={"csv": csv_text, "allow_off_plan": True})
    hist = client.get(f"/campaigns/{doc['id']}/history").json()
    assert len(hist["best_so_far"]) == 19
    assert hist["best_so_far"][-1]["best_so_far"] == 17.7


def test_cost_endpoint(client):
    doc = _create(client)
    resp = client.get(f"/campaigns/{doc['id']}/cost", params={"batch": 20}).json()
    assert resp["total_minutes"] == 795.0
    resp = client.get(f"/campaigns/{doc['id']}/cost", params={"batch": 21}).json()
    assert resp["total_minutes"] == 1047.5


def test_persistence_across_restart(tmp_path, dataset):
    persist = tmp_path / "campaigns"
    app = create_app(CampaignStore(persist_dir=persist))
    with TestClient(app) as client:
        doc = _create(client)
        client.post(f"/campaigns/{doc['id']}/suggestions")
    app2 = create_app(CampaignStore(persist_dir=persist))
    with TestClient(app2) as client2:
        got = client2.get(f"/campaigns/{doc['id']}")
        assert got.status_code == 200
        assert got.json()["status"] == "awaiting_results"


def test_ingest_insane_pce_rejected_with_row_context(client):
    doc = _create(client)
    plan = client.post(f"/campaigns/{doc['id']}/suggestions").json()
    rows = [
        {"condition_id": 0, "values": plan["conditions"][0]["values"],
         "pce_pct": 40.0, "film_pass": True}
    ]
    resp = client.post(f"/campaigns/{doc['id']}/results", json={"rows": rows})
    assert resp.status_code == 400
    assert "row 0" in resp.json()["detail"]


def test_create_with_custom_space(client):
    space = [
        {"name": "a", "unit": "u", "lo": 0.0, "hi": 4.0, "step": 1.0},
        {"name": "b", "unit": "u", "lo": 0.0, "hi": 4.0, "step": 1.0},
    ]
    doc = _create(client, space=space, batch_size=5, schedule=["lhs", "bo"])
    assert [v["name"] for v in doc["space"]] == ["a", "b"]
    assert doc["schedule"] == ["lhs", "bo"]
    plan = client.post(f"/campaigns/{doc['id']}/suggestions").json()
    assert len(plan["conditions"]) == 5
    for c in plan["conditions"]:
        assert len(c["values"]) == 2


def test_create_rejects_bad_schedule(client):
    resp = client.post("/campaigns", json={"schedule": ["warp-drive"]})
    assert resp.status_code == 400


def test_export_endpoint(client, dataset):
    doc = _create(client)
    client.post(f"/campaigns/{doc['id']}/suggestions")
    csv_text = observations_to_csv([o for o in dataset if o.round_index == 0])
    client.post(f"/campaigns/{doc['id']}/results",
                json={"csv": csv_text, "allow_off_plan": True})
    resp = client.get(f"/campaigns/{doc['id']}/export")
    assert resp.status_code == 200
    assert resp.text.startswith("condition_id,temperature_C,speed_cm_s")
    assert len(resp.text.strip().split("\n")) == 20

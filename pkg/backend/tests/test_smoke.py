"""Smoke tests to verify the API starts and responds."""
import json
import math

from fastapi.testclient import TestClient
from main import app

from schemas import Pose
from tests.factories import with_rotation, zero_rotations

client = TestClient(app)

REST = Pose(rotations=zero_rotations())
LEFT_ELBOW, RIGHT_ELBOW = 18, 19


def as_json(pose: Pose) -> dict:
    return pose.model_dump(mode="json")


def bent() -> Pose:
    return with_rotation(REST, LEFT_ELBOW, (0.0, 0.0, 1.5))


def test_root():
    r = client.get("/")
    assert r.status_code == 200
    assert r.json()["status"] == "running"


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "healthy"


# ===== describe =====
def test_describe():
    r = client.post("/describe/", json={"pose_a": as_json(REST), "pose_b": as_json(bent()), "seed": 3})
    assert r.status_code == 200
    body = r.json()
    assert "elbow" in body["text"]
    assert any(code["subjects"] == ["left_elbow"] for code in body["plan"])


def test_describe_rejects_a_zero_cap():
    r = client.post("/describe/", json={"pose_a": as_json(REST), "pose_b": as_json(bent()), "cap": 0})
    assert r.status_code == 400


def test_describe_rejects_the_wrong_skeleton():
    short = {"rotations": [[0.0, 0.0, 0.0]] * 21}
    r = client.post("/describe/", json={"pose_a": as_json(REST), "pose_b": short})
    assert r.status_code == 400


def test_describe_validates_the_body():
    r = client.post("/describe/", json={"pose_a": as_json(REST)})
    assert r.status_code == 422


# ===== poses =====
def test_flip_pose():
    r = client.post("/poses/flip", json=as_json(bent()))
    assert r.status_code == 200
    assert r.json()["rotations"][RIGHT_ELBOW] == [0.0, 0.0, -1.5]


def test_normalize_pose():
    r = client.post("/poses/normalize", json=as_json(REST.model_copy(update={"root_yaw": math.pi / 2})))
    assert r.status_code == 200
    body = r.json()
    assert math.isclose(body["yaw"], math.pi / 2)
    assert math.isclose(body["pose"]["root_yaw"], 0.0, abs_tol=1e-12)


def test_pose_metrics():
    r = client.post("/poses/metrics", json={"pose_a": as_json(REST), "pose_b": as_json(REST)})
    assert r.status_code == 200
    assert r.json()["mpje_mm"] == 0.0
    assert math.isclose(r.json()["geodesic_deg"], 0.0, abs_tol=1e-9)

    r = client.post("/poses/metrics", json={"pose_a": as_json(REST), "pose_b": as_json(bent())})
    assert r.json()["mpje_mm"] > 0.0
    assert math.isclose(r.json()["geodesic_deg"], math.degrees(1.5) / 22)


# ===== text =====
def test_lint_text():
    r = client.post("/text/lint", json={"text": "Bend your left elbow and raise your right hand."})
    assert r.status_code == 200
    assert [v["rule"] for v in r.json()] == ["min_words", "min_body_parts"]

    r = client.post("/text/lint", json={"text": "Bend your elbow.", "profile": "nobody"})
    assert r.status_code == 422


def test_flip_text():
    r = client.post("/text/flip", json={"text": "Move your left foot to the right."})
    assert r.json() == {"text": "Move your right foot to the left."}


def test_parse_text():
    r = client.post("/text/parse", json={"text": "Raise both hands. Wave hello."})
    assert r.status_code == 200
    body = r.json()
    assert [c["subjects"] for c in body["codes"]] == [["left_hand"], ["right_hand"]]
    assert [s["text"] for s in body["unknown_spans"]] == ["Wave hello"]


# ===== datasets =====
def test_dataset_stats_upload():
    record = {
        "pair_id": 0, "kind": "IS", "way": "one", "pose_a": as_json(REST), "pose_b": as_json(REST),
        "text": "Bend your left elbow and raise your right hand.", "seed": 1,
    }
    content = (json.dumps(record) + "\nnot a record\n").encode("utf-8")
    r = client.post("/datasets/stats", files={"file": ("triplets.jsonl", content, "application/jsonl")})
    assert r.status_code == 200
    body = r.json()
    assert body["records"] == 1
    assert body["word_histogram"] == {"9": 1}
    assert [m["line"] for m in body["malformed"]] == [2]


def test_dataset_stats_needs_utf8():
    r = client.post("/datasets/stats", files={"file": ("triplets.jsonl", b"\xff\xfe\x00", "application/jsonl")})
    assert r.status_code == 400

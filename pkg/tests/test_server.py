"""HTTP API tests against a live server on an ephemeral port."""

import json
import urllib.error
import urllib.request

import pytest

from evalign.server import StudyServer, image_svg
from evalign.study import StudyCase, StudyService

OPTIONS = tuple(f"disease_{i}" for i in range(8))


def make_cases(n=6):
    cases = []
    for i in range(n):
        truth = OPTIONS[i % len(OPTIONS)]
        others = [o for o in OPTIONS if o != truth]
        rank = (i % 5) + 1 if i < 5 else 0
        top5 = others[:5] if rank == 0 else others[: rank - 1] + [truth] + others[rank - 1 : 4]
        cases.append(
            StudyCase(
                case_id=f"c{i}",
                image_ref=f"/image/c{i}",
                options=OPTIONS,
                truth=truth,
                top5=tuple(top5[:5]),
            )
        )
    return cases


def get(url):
    with urllib.request.urlopen(url) as resp:
        return resp.status, json.loads(resp.read())


def get_raw(url):
    with urllib.request.urlopen(url) as resp:
        return resp.status, resp.headers.get_content_type(), resp.read()


def post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req) as resp:
        return resp.status, json.loads(resp.read())


def post_expect_error(url, payload):
    try:
        post(url, payload)
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())
    raise AssertionError("expected an HTTP error")


@pytest.fixture()
def server(tmp_path):
    service = StudyService(make_cases(), log_path=tmp_path / "events.jsonl")
    images = {f"c{i}": [0.1 * j for j in range(8)] for i in range(6)}
    srv = StudyServer(service, images=images).start()
    yield srv
    srv.stop()


def run_round(base, reader, round, label_for, confidence=3, tier="junior"):
    while True:
        status, payload = get(f"{base}/session/{reader}/{round}?seed=5&tier={tier}")
        assert status == 200
        case = payload["next_case"]
        if case is None:
            assert payload["completed"]
            return payload
        post(
            f"{base}/response",
            {
                "reader": reader,
                "case_id": case["case_id"],
                "round": round,
                "label": label_for(case),
                "confidence": confidence,
            },
        )


class TestSessionEndpoint:
    def test_round_one_payload_is_blind(self, server):
        status, payload = get(f"{server.address}/session/alice/1?seed=1")
        assert status == 200
        assert payload["next_case"] is not None
        assert "top5" not in payload["next_case"]
        assert payload["progress"] == {"answered": 0, "total": 6}

    def test_round_two_needs_completed_round_one(self, server):
        try:
            get(f"{server.address}/session/bob/2?seed=1")
            raise AssertionError("expected 400")
        except urllib.error.HTTPError as e:
            assert e.code == 400
            assert "round 2" in json.loads(e.read())["error"]

    def test_full_two_round_flow_and_report(self, server):
        base = server.address
        truth = {c.case_id: c.truth for c in make_cases()}
        wrong = {cid: next(o for o in OPTIONS if o != t) for cid, t in truth.items()}

        run_round(base, "alice", 1, lambda case: wrong[case["case_id"]], confidence=2)
        seen_top5 = []

        def round2_answer(case):
            assert len(case["top5"]) == 5
            seen_top5.append(case["case_id"])
            return truth[case["case_id"]]

        run_round(base, "alice", 2, round2_answer, confidence=4)
        assert len(seen_top5) == 6

        status, report = get(f"{base}/report")
        assert status == 200
        assert report["n_readers_completed"] == 1
        assert report["per_reader"]["alice"]["round1_accuracy"] == 0.0
        assert report["per_reader"]["alice"]["round2_accuracy"] == 1.0
        # report over HTTP matches the in-process report byte-for-byte
        direct = json.dumps(server.service.report(), sort_keys=True)
        assert json.dumps(report, sort_keys=True) == direct


class TestResponseEndpoint:
    def test_validation_errors(self, server):
        base = server.address
        get(f"{base}/session/carl/1?seed=2")
        code, body = post_expect_error(
            f"{base}/response",
            {"reader": "carl", "case_id": "c0", "round": 1, "label": OPTIONS[0], "confidence": 6},
        )
        assert code == 400
        assert "confidence" in body["error"]

    def test_duplicate_is_conflict(self, server):
        base = server.address
        get(f"{base}/session/dee/1?seed=2")
        payload = {
            "reader": "dee",
            "case_id": "c0",
            "round": 1,
            "label": OPTIONS[0],
            "confidence": 3,
        }
        post(f"{base}/response", payload)
        code, body = post_expect_error(f"{base}/response", payload)
        assert code == 409

    def test_missing_fields(self, server):
        code, body = post_expect_error(f"{server.address}/response", {"reader": "x"})
        assert code == 400
        assert "missing" in body["error"]


class TestMiscRoutes:
    def test_report_without_completed_readers(self, server):
        try:
            get(f"{server.address}/report")
            raise AssertionError("expected 400")
        except urllib.error.HTTPError as e:
            assert e.code == 400
            assert "no completed readers" in json.loads(e.read())["error"]

    def test_image_route_serves_svg(self, server):
        status, ctype, body = get_raw(f"{server.address}/image/c0")
        assert status == 200
        assert ctype == "image/svg+xml"
        assert body.startswith(b"<svg")

    def test_unknown_routes_404(self, server):
        for path in ("/nope", "/image/zzz"):
            try:
                get(f"{server.address}{path}")
                raise AssertionError("expected 404")
            except urllib.error.HTTPError as e:
                assert e.code == 404


def test_image_svg_is_deterministic():
    a = image_svg([0.0, 0.5, 1.0])
    b = image_svg([0.0, 0.5, 1.0])
    assert a == b and a.startswith("<svg")

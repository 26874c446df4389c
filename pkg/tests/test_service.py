import pytest
from fastapi.testclient import TestClient

from granubot.dialogue import DialogueEngine
from granubot.service import create_app

OPENER = "Please help me to arrange a young woman housekeeper with low price"


@pytest.fixture
def client(fixture_registry):
    app = create_app(fixture_registry, session_ttl=60.0)
    return TestClient(app)


class TestSessionEndpoints:
    def test_worked_example_round_trip(self, client):
        created = client.post("/sessions", json={"utterance": OPENER})
        assert created.status_code == 200
        body = created.json()
        assert body["session_id"]
        assert body["reply"]["kind"] == "question"
        assert body["reply"]["text"] == "What are the experience restricts?"
        assert body["reply"]["schema_version"] == 1

        turn = client.post(
            f"/sessions/{body['session_id']}/turns",
            json={"utterance": "under 5 years experience"},
        )
        assert turn.status_code == 200
        reply = turn.json()
        assert reply["kind"] == "final_recommendation"
        assert reply["end_tag"] == 1
        assert 0 < len(reply["services"]) <= 8

    def test_chat_deflection_has_no_session(self, client):
        body = client.post("/sessions", json={"utterance": "nice weather"}).json()
        assert body["session_id"] is None
        assert body["reply"]["kind"] == "chat_deflection"

    def test_option_turn(self, client):
        body = client.post("/sessions", json={"utterance": OPENER}).json()
        reply = client.post(
            f"/sessions/{body['session_id']}/turns", json={"option": 0}
        ).json()
        assert reply["end_tag"] == 1

    def test_unknown_session_is_404(self, client):
        response = client.post("/sessions/nope/turns", json={"utterance": "hi"})
        assert response.status_code == 404

    def test_expired_session_is_404(self, fixture_registry):
        app = create_app(fixture_registry, session_ttl=-1.0)
        client = TestClient(app)
        body = client.post("/sessions", json={"utterance": OPENER}).json()
        response = client.post(
            f"/sessions/{body['session_id']}/turns", json={"utterance": "1"}
        )
        assert response.status_code == 404

    def test_malformed_body_rejected(self, client):
        assert client.post("/sessions", json={}).status_code == 422
        body = client.post("/sessions", json={"utterance": OPENER}).json()
        both = client.post(
            f"/sessions/{body['session_id']}/turns",
            json={"utterance": "x", "option": 1},
        )
        assert both.status_code == 422
        neither = client.post(f"/sessions/{body['session_id']}/turns", json={})
        assert neither.status_code == 422

    def test_turn_after_finish_conflicts(self, client):
        body = client.post("/sessions", json={"utterance": OPENER}).json()
        sid = body["session_id"]
        client.post(f"/sessions/{sid}/turns", json={"utterance": "3 years"})
        response = client.post(f"/sessions/{sid}/turns", json={"utterance": "again"})
        assert response.status_code == 409

    def test_concurrent_turn_conflicts(self, fixture_registry):
        app = create_app(fixture_registry, session_ttl=60.0)
        client = TestClient(app)
        body = client.post("/sessions", json={"utterance": OPENER}).json()
        entry = app.state.store.get(body["session_id"])
        assert entry.lock.acquire(blocking=False)
        try:
            response = client.post(
                f"/sessions/{body['session_id']}/turns", json={"utterance": "1"}
            )
            assert response.status_code == 409
        finally:
            entry.lock.release()


class TestOtherEndpoints:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert "housekeeping" in body["service_types"]

    def test_tree_document(self, client):
        body = client.get("/trees/nursery_teacher").json()
        assert body["schema_version"] == 1
        assert body["strategy"] == "grc"
        assert body["root"]["candidates"]

    def test_tree_strategy_parameter(self, client):
        body = client.get("/trees/nursery_teacher", params={"strategy": "kmeans"}).json()
        assert body["strategy"] == "kmeans"

    def test_unknown_tree_404(self, client):
        assert client.get("/trees/spaceships").status_code == 404


class TestApiPurity:
    def test_api_replies_mirror_engine_replies(self, fixture_registry):
        script = [OPENER, "under 5 years experience"]

        engine = DialogueEngine(fixture_registry)
        session, first = engine.start_session(script[0])
        engine_docs = [first.to_doc()]
        engine_docs.append(engine.handle_turn(session, script[1]).to_doc())

        client = TestClient(create_app(fixture_registry, session_ttl=60.0))
        created = client.post("/sessions", json={"utterance": script[0]}).json()
        api_docs = [created["reply"]]
        api_docs.append(
            client.post(
                f"/sessions/{created['session_id']}/turns",
                json={"utterance": script[1]},
            ).json()
        )
        assert api_docs == [doc | {"schema_version": 1} for doc in engine_docs]

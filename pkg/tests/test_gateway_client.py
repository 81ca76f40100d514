"""Agent runner end-to-end: a live server, a programmatic wizard, a user."""
import threading

import pytest

from wozlab.gateway.client import WireClient, WireTimeout, run_agent

from test_gateway_server import start_server


@pytest.fixture()
def server(tmp_path):
    server, thread = start_server(tmp_path, mode_default="evaluation")
    yield server
    server.shutdown()
    thread.join(timeout=5)


@pytest.fixture()
def agent(server):
    stop = threading.Event()
    thread = threading.Thread(
        target=run_agent,
        args=("127.0.0.1", server.port, "agent-1"),
        kwargs={"brain_name": "rule", "capacity": 2, "stop": stop},
        daemon=True,
    )
    thread.start()
    yield "agent-1"
    stop.set()
    thread.join(timeout=5)
    assert not thread.is_alive()


def join_agent_session(server, user_id="u1", scenario_id="shopping"):
    user = WireClient("127.0.0.1", server.port)
    user.hello(user_id, "user")
    user.send("EnqueueRequest", {"scenario_id": scenario_id, "mode": "evaluation"})
    user.recv_type("EnqueueRequest")
    start = user.recv_type("SessionStart", timeout=5)
    session_id = start.session_id
    user.send("SessionStartAck", {}, session_id)
    notice = user.recv_type("Chat", timeout=5)
    assert notice.payload["seat"] == "system"
    return user, session_id


class TestAgentEndToEnd:
    def test_attribute_question_answered_from_catalog(self, server, agent):
        user, session_id = join_agent_session(server)
        user.send("Chat", {"text": "what color is the sofa?"}, session_id)
        reply = user.recv_type("Chat", timeout=5)
        assert reply.payload["seat"] == "wizard"
        assert "blue" in reply.payload["text"].lower()
        user.send("SessionEnd", {}, session_id)
        assert user.recv_type("SessionEnd", timeout=5).payload["phase"] == "completed"
        user.close()

    def test_show_request_becomes_focus_delta(self, server, agent):
        user, session_id = join_agent_session(server)
        user.send("Chat", {"text": "show me the lamp"}, session_id)
        delta = user.recv_type("Delta", timeout=5)
        assert delta.payload["command"]["variant"] == "FocusItem"
        assert delta.payload["command"]["object_id"] == "o2"
        # On the wire the agent occupies the wizard seat.
        assert delta.payload["command"]["issuer_role"] == "wizard"
        user.send("SessionEnd", {}, session_id)
        user.recv_type("SessionEnd", timeout=5)
        user.close()

    def test_agent_serves_sessions_back_to_back(self, server, agent):
        first, sid1 = join_agent_session(server, user_id="u1")
        second, sid2 = join_agent_session(server, user_id="u2")
        assert sid1 != sid2
        for client, sid in ((first, sid1), (second, sid2)):
            client.send("Chat", {"text": "price of the lamp?"}, sid)
            reply = client.recv_type("Chat", timeout=5)
            assert "$" in reply.payload["text"]
            client.send("SessionEnd", {}, sid)
            client.recv_type("SessionEnd", timeout=5)
            client.close()


class TestWireClientBehavior:
    def test_hello_refusal_raises(self, server):
        first = WireClient("127.0.0.1", server.port)
        first.hello("x1", "user")
        second = WireClient("127.0.0.1", server.port)
        with pytest.raises(ConnectionError, match="hello refused"):
            second.hello("x1", "wizard")  # role change is an identity conflict
        first.close(), second.close()

    def test_recv_type_requeues_skipped_messages(self, server):
        client = WireClient("127.0.0.1", server.port)
        client.hello("x2", "user")
        client.send("Ping")
        client.send("EnqueueRequest", {"scenario_id": "shopping"})
        ack = client.recv_type("EnqueueRequest", timeout=5)
        assert ack.payload["position"] == 1
        pong = client.recv(timeout=1)  # the skipped Pong is still there
        assert pong.type == "Pong"
        client.close()

    def test_recv_times_out_when_idle(self, server):
        client = WireClient("127.0.0.1", server.port)
        client.hello("x3", "user")
        with pytest.raises(WireTimeout):
            client.recv(timeout=0.2)
        client.close()

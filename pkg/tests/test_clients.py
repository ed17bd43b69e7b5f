import json

import httpx
import pytest

from fakes import Script
from msmu_forge.clients import CassetteTransport, ChatClient, EndpointConfig, RelabelClient, clean_term, request_key
from msmu_forge.errors import ClientError, ClientOffline


def client_with(transport, **kw):
    return ChatClient(EndpointConfig(base_url="http://llm.test/v1", **kw), transport=transport)


def test_record_then_replay(tmp_path):
    script = Script(["hello"])
    cassette = tmp_path / "c.json"
    rec = CassetteTransport(cassette, "record", inner=httpx.MockTransport(script))
    with client_with(rec) as c:
        assert c.complete("hi") == "hello"
    data = json.loads(cassette.read_text())
    assert len(data["interactions"]) == 1
    # replay never reaches the inner transport
    with client_with(CassetteTransport(cassette, "replay")) as c:
        assert c.complete("hi") == "hello"
        with pytest.raises(ClientError):
            c.complete("something else")
    assert len(script.requests) == 1


def test_cassette_via_config(tmp_path):
    cassette = tmp_path / "c.json"
    rec = CassetteTransport(cassette, "record", inner=httpx.MockTransport(Script(["x"])))
    with client_with(rec) as c:
        c.complete("p")
    with ChatClient(EndpointConfig(base_url="http://llm.test/v1", cassette=str(cassette))) as c:
        assert c.complete("p") == "x"


def test_missing_cassette_in_replay(tmp_path):
    with pytest.raises(ClientError):
        CassetteTransport(tmp_path / "nope.json", "replay")


def test_request_key_ignores_headers_and_key_order():
    a = request_key("POST", "http://h/v1/chat/completions", b'{"a":1,"b":2}')
    b = request_key("post", "http://other/v1/chat/completions", b'{"b":2, "a":1}')
    assert a == b


def test_token_never_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("MSMU_API_TOKEN", "sekrit")
    script = Script(["ok"])
    seen = []

    def handler(req):
        seen.append(req.headers.get("authorization"))
        return script(req)

    cassette = tmp_path / "c.json"
    with client_with(CassetteTransport(cassette, "record", inner=httpx.MockTransport(handler))) as c:
        c.complete("p")
    assert seen == ["Bearer sekrit"]
    assert "sekrit" not in cassette.read_text()


def test_retry_once_on_5xx():
    script = Script([503, "recovered"])
    with client_with(httpx.MockTransport(script)) as c:
        assert c.complete("p") == "recovered"
    assert len(script.requests) == 2
    script = Script([500])
    with client_with(httpx.MockTransport(script)) as c:
        with pytest.raises(ClientError):
            c.complete("p")
    assert len(script.requests) == 2


def test_4xx_not_retried():
    script = Script([400])
    with client_with(httpx.MockTransport(script)) as c:
        with pytest.raises(ClientError):
            c.complete("p")
    assert len(script.requests) == 1


def test_malformed_body():
    t = httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1}))
    with client_with(t) as c:
        with pytest.raises(ClientError):
            c.complete("p")


def test_offline_raises_without_network():
    c = ChatClient(offline=True)
    with pytest.raises(ClientOffline):
        c.complete("p")
    assert RelabelClient(c).offline


def test_payload_shape():
    script = Script(["ok"])
    with client_with(httpx.MockTransport(script), model="m1") as c:
        c.complete("p", image=b"img", system="sys")
    body = script.requests[0]
    assert body["model"] == "m1" and body["temperature"] == 0
    assert body["messages"][0] == {"role": "system", "content": "sys"}
    assert body["messages"][1]["content"][0] == {"type": "text", "text": "p"}


@pytest.mark.parametrize(
    "raw,term",
    [("The white table.", "The white table"), ('"wooden chair"\nextra', "wooden chair"), ("Output: red sofa", "red sofa"), ("", "")],
)
def test_clean_term(raw, term):
    assert clean_term(raw) == term


def test_relabel_empty_term_is_error():
    with client_with(httpx.MockTransport(Script(['"."']))) as c:
        with pytest.raises(ClientError):
            RelabelClient(c).relabel(b"png")

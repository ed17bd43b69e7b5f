"""Scripted chat-completions servers built on httpx.MockTransport."""

import json

import httpx

from msmu_forge.clients import ChatClient, EndpointConfig


class Script:
    """Answers requests from a list; an int entry is returned as that HTTP status."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(json.loads(request.content))
        r = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(r, int):
            return httpx.Response(r, json={"error": "scripted"})
        return httpx.Response(200, json={"choices": [{"message": {"content": r}}]})

    def prompts(self):
        return [m["content"][0]["text"] for req in self.requests for m in req["messages"] if m["role"] == "user"]


def scripted_client(replies, **cfg):
    script = Script(replies)
    client = ChatClient(EndpointConfig(base_url="http://judge.test/v1", **cfg), transport=httpx.MockTransport(script))
    return client, script

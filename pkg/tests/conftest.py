import hashlib
import json
import random
import threading

import pytest
import requests

from niche_nas.arch_space import encode, random_cell
from niche_nas.benchmark.synthetic import SyntheticModel, synthesize


@pytest.fixture(scope="session")
def synthetic_store():
    """
    Full synthetic benchmark (seed 0), shared by the whole session. Read only.
    """
    return synthesize(SyntheticModel(seed=0))


@pytest.fixture(scope="session")
def synthetic_model():
    return SyntheticModel(seed=0)


class FakeResponse:
    def __init__(self, status_code, body):
        self.status_code = status_code
        self._body = body

    def json(self):
        if isinstance(self._body, Exception):
            raise self._body
        return self._body


class FakeSession:
    """
    Stands in for ``requests.Session``: ``handler(payload)`` returns the
    assistant text, or a ``(status, body)`` tuple for raw responses.
    """

    def __init__(self, handler):
        self.handler = handler
        self.posts = []
        self._lock = threading.Lock()

    def post(self, url, json=None, headers=None, timeout=None):
        with self._lock:
            self.posts.append({'url': url, 'json': json, 'headers': headers, 'timeout': timeout})
        out = self.handler(json)
        if isinstance(out, Exception):
            raise out
        if isinstance(out, tuple):
            return FakeResponse(*out)
        return FakeResponse(200, {'choices': [{'message': {'role': 'assistant', 'content': out}}]})


def scripted_reply(payload):
    """
    Deterministic replies keyed on the prompt: a rule list for stage 1 and
    one random cell per requested child for stage 2.
    """
    prompt = payload['messages'][0]['content']
    if "Updated_Knowledge_Base" in prompt:
        return '["Use nor_conv_3x3 early because it lifts accuracy."]'
    rng = random.Random(hashlib.sha256(prompt.encode()).hexdigest())
    children = [
        {
            "child_id": str(i + 1),
            "operation": "mutation",
            "architecture_code": encode(random_cell(rng)),
            "rationale": "scripted",
        }
        for i in range(2)
    ]
    return "Here you go:\n```json\n" + json.dumps(children) + "\n```"


@pytest.fixture
def service_token(monkeypatch):
    monkeypatch.setenv("NICHE_NAS_TEST_TOKEN", "secret")
    return "NICHE_NAS_TEST_TOKEN"


@pytest.fixture
def fake_session():
    return FakeSession(scripted_reply)


@pytest.fixture
def make_session():
    return FakeSession


@pytest.fixture
def patched_service(monkeypatch):
    """
    Routes every ``requests.Session`` the text service opens to one scripted
    `FakeSession`, with the default token variable set.
    """
    session = FakeSession(scripted_reply)
    monkeypatch.setenv("OPENAI_API_KEY", "secret")
    monkeypatch.setattr(requests, "Session", lambda: session)
    return session

from collections import defaultdict, deque
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path
import json
import os
import threading
import time

import requests

from ..errors import ConfigError, ServiceError, ServiceUnavailableError, TranscriptMissError
from ..utils import request_hash, utc_timestamp

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'TranscriptMode',
    'TextServiceConfig',
    'TextServiceClient',
    'load_transcript',
]

_RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class TranscriptMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class TextServiceConfig:
    """
    Connection settings of a chat-completion style HTTP service.

    The auth token is never stored here: it is read at call time from the
    environment variable named by ``token_env``.

    Parameters
    ----------
    endpoint : str
        URL receiving ``POST {model, messages, temperature}``.
    model : str
        Model name sent with every request.
    token_env : str
        Environment variable holding the bearer token.
    timeout : float
        Per-request timeout in seconds.
    max_retries : int
        Retries after a failed HTTP attempt.
    temperature : float
        Sampling temperature.
    transcript_mode : TranscriptMode
        ``live`` (network only), ``record`` (network + append to transcript)
        or ``replay`` (transcript only, no network).
    transcript_path : Path | None
        Transcript file; required for ``record`` and ``replay``.
    response_path : str
        Dotted path of the assistant text in the response body.
    backoff : float
        Base of the exponential wait between retries, in seconds.
    """
    endpoint : str = "https://api.openai.com/v1/chat/completions"
    model : str = "gpt-4.1"
    token_env : str = "OPENAI_API_KEY"
    timeout : float = 60.0
    max_retries : int = 3
    temperature : float = 0.7
    transcript_mode : TranscriptMode = TranscriptMode.LIVE
    transcript_path : Path | None = None
    response_path : str = "choices.0.message.content"
    backoff : float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, 'transcript_mode', TranscriptMode(self.transcript_mode))
        except ValueError:
            raise ConfigError(
                f"transcript mode must be live, record or replay, got {self.transcript_mode!r}"
            ) from None
        if self.transcript_path is not None:
            object.__setattr__(self, 'transcript_path', Path(self.transcript_path))
        if self.transcript_mode is not TranscriptMode.LIVE and self.transcript_path is None:
            raise ConfigError(f"Transcript mode {self.transcript_mode.value!r} needs a transcript path.")
        if self.transcript_mode is TranscriptMode.REPLAY and not self.transcript_path.is_file():
            msg = f"Replay transcript not found: {str(self.transcript_path)!r}"
            logger.error(msg)
            raise ConfigError(msg)
        if self.timeout <= 0 or self.max_retries < 0 or self.backoff < 0:
            raise ConfigError("timeout must be > 0, max_retries and backoff >= 0")

    @classmethod
    def from_dict(cls, data : dict) -> 'TextServiceConfig':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown [service] keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d['transcript_mode'] = self.transcript_mode.value
        d['transcript_path'] = str(self.transcript_path) if self.transcript_path else None
        return d


def load_transcript(path : str | Path) -> list[dict]:
    """
    Entries of a JSON-lines transcript, in file order.
    """
    entries = []
    with open(path, encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Invalid transcript line {line_no} in {str(path)!r}: {e.msg}") from None
            if not {'request_hash', 'response'} <= set(entry):
                raise ConfigError(f"Transcript line {line_no} in {str(path)!r} lacks request_hash/response")
            entries.append(entry)
    return entries


def _extract(body, path : str) -> str:
    node = body
    for part in path.split('.'):
        node = node[int(part)] if isinstance(node, list) else node[part]
    if not isinstance(node, str):
        raise TypeError(f"expected text at {path!r}, got {type(node).__name__}")
    return node


class TextServiceClient:
    """
    Sends prompts to the text service, recording or replaying a transcript.

    Replayed responses are matched by the hash of the request payload and
    served first-in first-out per hash, so concurrent callers get the same
    responses regardless of scheduling. Appends to the transcript are
    serialized.

    Parameters
    ----------
    config : TextServiceConfig
        Service and transcript settings.
    session : requests.Session | None
        HTTP session to use. A new one is created if None.
    """

    def __init__(self, config : TextServiceConfig, session : requests.Session | None = None):
        self.config = config
        self.session = session if session is not None else requests.Session()
        self._lock = threading.Lock()
        self._replay : dict[str, deque[str]] = defaultdict(deque)
        self.calls = 0
        self.failures = 0
        if config.transcript_mode is TranscriptMode.REPLAY:
            for entry in load_transcript(config.transcript_path):
                self._replay[entry['request_hash']].append(entry['response'])
            logger.info(
                f"Loaded {sum(len(q) for q in self._replay.values())} transcript entries "
                f"from {str(config.transcript_path)!r}"
            )

    @property
    def mode(self) -> TranscriptMode:
        return self.config.transcript_mode

    def payload(self, prompt : str) -> dict:
        return {
            'model': self.config.model,
            'messages': [{'role': 'user', 'content': prompt}],
            'temperature': self.config.temperature,
        }

    def complete(self, prompt : str) -> str:
        """
        Assistant text for ``prompt``.

        Raises
        ------
        TranscriptMissError
            In replay mode, when no unused response matches the request.
        ServiceUnavailableError
            When the service failed on every attempt.
        ServiceError
            On a missing token or a malformed response body.
        """
        payload = self.payload(prompt)
        key = request_hash(payload)
        with self._lock:
            self.calls += 1
        try:
            if self.mode is TranscriptMode.REPLAY:
                with self._lock:
                    queue = self._replay.get(key)
                    if not queue:
                        raise TranscriptMissError(f"No transcript entry for request {key[:12]}")
                    return queue.popleft()
            text = self._post(payload)
        except ServiceError:
            with self._lock:
                self.failures += 1
            raise
        if self.mode is TranscriptMode.RECORD:
            self._append(key, prompt, text)
        return text

    def _post(self, payload : dict) -> str:
        token = os.getenv(self.config.token_env)
        if not token:
            msg = f"{self.config.token_env} must be set as an environment variable."
            logger.error(msg)
            raise ServiceError(msg)
        headers = {'Authorization': f"Bearer {token}"}
        last = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                r = self.session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout,
                )
            except requests.RequestException as e:
                last = f"{e.__class__.__name__}: {e}"
                logger.warning(f"Text service attempt {attempt + 1} failed: {last}")
                continue
            if r.status_code != 200:
                last = f"HTTP {r.status_code}"
                logger.warning(f"Text service attempt {attempt + 1} returned {last}")
                if r.status_code in _RETRY_STATUS:
                    continue
                break
            try:
                return _extract(r.json(), self.config.response_path)
            except (ValueError, KeyError, IndexError, TypeError) as e:
                msg = f"Malformed text service response ({self.config.response_path!r}): {e}"
                logger.error(msg)
                raise ServiceError(msg) from e
        msg = f"Text service unavailable after {self.config.max_retries + 1} attempt(s): {last}"
        logger.error(msg)
        raise ServiceUnavailableError(msg)

    def _append(self, key : str, prompt : str, response : str):
        entry = {
            'request_hash': key,
            'prompt': prompt,
            'response': response,
            'timestamp': utc_timestamp(),
        }
        with self._lock:
            path = self.config.transcript_path
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def __repr__(self):
        return (
            f"TextServiceClient(\n"
            f"    endpoint={self.config.endpoint!r},\n"
            f"    model={self.config.model!r},\n"
            f"    mode={self.mode.value!r},\n"
            f"    calls={self.calls}\n"
            f"  )"
        )

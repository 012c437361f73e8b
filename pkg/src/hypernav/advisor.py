"""Advisor wire protocol and answer summarization.

The advisor is an external service that looks at the block-labeled context
image and answers free text; this client speaks a minimal JSON-over-HTTP
protocol to it and distills the text into a block id.

Wire protocol (POST ``<base_url>/query``)::

    request:  {"image_b64": <base64 PPM bytes>, "prompt": <string>,
               "excluded_ids": [<int>, ...]}
    response: {"text": <string>}

``HYPERNAV_ADVISOR_URL`` overrides the configured endpoint. All failures
raise AdvisorUnavailable / AdvisorProtocolError, which callers turn into a
frontier-heuristic fallback rather than an episode abort.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass
from typing import Optional

import requests

from .errors import AdvisorProtocolError, AdvisorUnavailable

# re-exported for callers that catch advisor failures broadly
from .errors import AdvisorError  # noqa: F401

DEFAULT_PROMPT_TEMPLATE = (
    "To find {goal}, which block should you go? Answer with a single block number."
)
DEFAULT_EXCLUSION_TEMPLATE = " Don't answer number [{ids}]."
DEFAULT_VERIFY_TEMPLATE = "Is there a {goal} in this image? Answer yes or no."


@dataclass(frozen=True)
class AdvisorEndpoint:
    base_url: str
    timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if self.timeout <= 0:
            raise AdvisorProtocolError("timeout must be positive")


@dataclass(frozen=True)
class AdvisorQuery:
    context_image: bytes
    goal_category: str
    excluded_ids: tuple = ()
    valid_ids: tuple = ()

    def __post_init__(self):
        if not set(self.excluded_ids) <= set(self.valid_ids):
            raise AdvisorProtocolError("excluded_ids must be a subset of valid_ids")


@dataclass(frozen=True)
class AdvisorAnswer:
    raw_text: str


def build_prompt(query: AdvisorQuery,
                 prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
                 exclusion_template: str = DEFAULT_EXCLUSION_TEMPLATE) -> str:
    prompt = prompt_template.format(goal=query.goal_category)
    if query.excluded_ids:
        ids = ", ".join(str(i) for i in query.excluded_ids)
        prompt += exclusion_template.format(ids=ids)
    return prompt


def query_to_payload(query: AdvisorQuery, prompt: str) -> dict:
    return {
        "image_b64": base64.b64encode(query.context_image).decode("ascii"),
        "prompt": prompt,
        "excluded_ids": [int(i) for i in query.excluded_ids],
    }


def payload_to_parts(payload: dict) -> tuple[bytes, str, tuple]:
    """Inverse of `query_to_payload`: (image bytes, prompt, excluded ids)."""
    try:
        image = base64.b64decode(payload["image_b64"].encode("ascii"), validate=True)
        return (image, str(payload["prompt"]), tuple(int(i) for i in payload["excluded_ids"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise AdvisorProtocolError(f"malformed advisor payload: {exc}") from exc


def _post(endpoint: AdvisorEndpoint, payload: dict) -> str:
    url = endpoint.base_url.rstrip("/") + "/query"
    last_error: Exception | None = None
    for _ in range(max(1, endpoint.max_retries)):
        try:
            resp = requests.post(url, json=payload, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if resp.status_code >= 500:
            last_error = AdvisorUnavailable(f"server error {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise AdvisorProtocolError(f"unexpected status {resp.status_code}")
        try:
            data = resp.json()
            return str(data["text"])
        except (ValueError, KeyError, TypeError) as exc:
            raise AdvisorProtocolError(f"malformed advisor response: {exc}") from exc
    raise AdvisorUnavailable(f"advisor unreachable after {endpoint.max_retries} attempts: "
                             f"{last_error}")


def query_advisor(endpoint: AdvisorEndpoint, query: AdvisorQuery,
                  prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
                  exclusion_template: str = DEFAULT_EXCLUSION_TEMPLATE) -> AdvisorAnswer:
    """POST the query and wrap the response text.

    Retries up to `endpoint.max_retries` attempts on timeouts, connection
    failures, and 5xx answers; raises AdvisorUnavailable when the budget is
    exhausted and AdvisorProtocolError on malformed responses.
    """
    prompt = build_prompt(query, prompt_template, exclusion_template)
    return AdvisorAnswer(raw_text=_post(endpoint, query_to_payload(query, prompt)))


def summarize_answer(answer: AdvisorAnswer, valid_ids, excluded_ids=()) -> Optional[int]:
    """Last integer token in the text that is a valid, non-excluded block id.

    Advisors often restate rejected options before committing ("Either 3 or
    5; I choose 5."), so the last mention is the robust pick. None when the
    text contains no usable id.
    """
    allowed = set(valid_ids) - set(excluded_ids)
    result = None
    for token in re.findall(r"\d+", answer.raw_text):
        value = int(token)
        if value in allowed:
            result = value
    return result


def verify_goal_present(endpoint: AdvisorEndpoint, image: bytes, goal_category: str,
                        fallback=None,
                        verify_template: str = DEFAULT_VERIFY_TEMPLATE) -> bool:
    """Ask the advisor whether the goal object is visible in the image.

    True iff the response contains a standalone "yes" (case-insensitive).
    When the advisor is unavailable and a `fallback` callable is given, its
    verdict is returned instead.
    """
    prompt = verify_template.format(goal=goal_category)
    payload = {
        "image_b64": base64.b64encode(image).decode("ascii"),
        "prompt": prompt,
        "excluded_ids": [],
    }
    try:
        text = _post(endpoint, payload)
    except (AdvisorUnavailable, AdvisorProtocolError):
        if fallback is None:
            raise
        return bool(fallback())
    return re.search(r"\byes\b", text, re.IGNORECASE) is not None


# ---------------------------------------------------------------------------
# episode-facing advisor objects

class HttpAdvisor:
    """Advisor backed by the wire protocol above."""

    name = "http"

    def __init__(self, endpoint: AdvisorEndpoint,
                 prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
                 exclusion_template: str = DEFAULT_EXCLUSION_TEMPLATE):
        self.endpoint = endpoint
        self.prompt_template = prompt_template
        self.exclusion_template = exclusion_template

    def answer(self, query: AdvisorQuery, context=None) -> AdvisorAnswer:
        return query_advisor(self.endpoint, query,
                             self.prompt_template, self.exclusion_template)


class ScriptedAdvisor:
    """Deterministic advisor replaying a list of canned entries.

    Entries are strings (the answer text) or dicts: {"text": ...} answers,
    {"error": "unavailable"} raises AdvisorUnavailable once. The script
    sticks at its last entry when exhausted.
    """

    name = "script"

    def __init__(self, entries):
        if not entries:
            raise AdvisorProtocolError("scripted advisor needs at least one entry")
        self.entries = list(entries)
        self.cursor = 0
        self.prompts: list = []   # prompt log, handy for tests

    @classmethod
    def from_file(cls, path: str) -> "ScriptedAdvisor":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def answer(self, query: AdvisorQuery, context=None) -> AdvisorAnswer:
        self.prompts.append(build_prompt(query))
        entry = self.entries[min(self.cursor, len(self.entries) - 1)]
        self.cursor += 1
        if isinstance(entry, dict):
            if entry.get("error") == "unavailable":
                raise AdvisorUnavailable("scripted failure")
            return AdvisorAnswer(raw_text=str(entry.get("text", "")))
        return AdvisorAnswer(raw_text=str(entry))

"""Prompt construction, digests, transcripts, clients, and the retry loops."""

import json

import pytest

from scenforge.errors import (
    ConversionFailed,
    EmptyReportError,
    ExtractionFailed,
    IllegalIpsError,
    TranscriptMissError,
)
from scenforge.ips import parse_ips, serialize_ips
from scenforge.llm import (
    LiveClient,
    LlmClientConfig,
    Prompt,
    RecordingClient,
    ReplayClient,
    Transcript,
    build_conversion_prompt,
    build_extraction_prompt,
    canonical_text,
    convert_to_template,
    extract_ips,
    make_client,
    prompt_digest,
    prompt_with_feedback,
)

LEGAL_IPS_TEXT = (
    "road: straight, lanes: 2\n"
    "V1: driving ahead of V2 in lane 1.\n"
    "V2: following V1 in lane 1.\n"
    "(V1, V2): V1 brakes suddenly, and V2 decelerates.\n"
)

# V2 has no initial line, so the pattern references an unintroduced vehicle.
ILLEGAL_IPS_TEXT = (
    "road: straight, lanes: 2\n"
    "V1: driving ahead in lane 1.\n"
    "(V1, V2): V1 brakes suddenly, and V2 decelerates.\n"
)

TEMPLATE_TEXT = (
    "road: straight, lanes: 2\n"
    "npc(V1, lane=1, offset=[20,40], speed=[5.0,15.0])\n"
    "npc(V2, lane=1, offset=[0,10], speed=10.0)\n"
    "decelerate(V1, speed=[0.0,5.0], trigger=1)\n"
)


class ScriptedClient:
    """Returns queued responses in order and keeps the prompts it saw."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        return self.responses.pop(0)


# ---------------------------------------------------------------------------
# Prompt construction


def test_extraction_prompt_contains_format_lines():
    rendered = build_extraction_prompt("Car A rear-ended car B.").render()
    assert "Vi: initial action of Vi." in rendered
    assert "road: straight|curved, lanes: <n>" in rendered


def test_extraction_prompt_contains_verb_restriction():
    prompt = build_extraction_prompt("anything")
    assert any("selected from the predefined set" in a for a in prompt.attentions)
    assert "brake, decelerate, accelerate, swerve left, swerve right" in prompt.render()


def test_extraction_prompt_embeds_report():
    report = "Vehicle one swerved into vehicle two on a curve."
    prompt = build_extraction_prompt(report)
    assert prompt.task
    assert report in prompt.render()


def test_extraction_prompt_empty_report():
    with pytest.raises(EmptyReportError):
        build_extraction_prompt("   \n  ")


def test_conversion_prompt_embeds_ips_and_example():
    ips = parse_ips(LEGAL_IPS_TEXT)
    rendered = build_conversion_prompt(ips).render()
    assert serialize_ips(ips).strip() in rendered
    assert "Example output test case:" in rendered
    assert "npc(Vk, lane=<int>, offset=<m>, speed=<m/s>)" in rendered


def test_conversion_prompt_rejects_illegal_ips():
    with pytest.raises(IllegalIpsError):
        build_conversion_prompt(parse_ips(ILLEGAL_IPS_TEXT))


def test_feedback_prompts_have_distinct_digests():
    base = build_extraction_prompt("some report")
    problems = ["R3 at pattern 1: vehicle V2 has no initial line"]
    first = prompt_with_feedback(base, 1, problems)
    second = prompt_with_feedback(base, 2, problems)
    digests = {prompt_digest(p.render()) for p in (base, first, second)}
    assert len(digests) == 3
    assert problems[0] in first.render()


# ---------------------------------------------------------------------------
# Canonicalization and digests


def test_digest_ignores_line_endings_and_trailing_space():
    a = "Task: t\nline two\n"
    variants = [
        "Task: t\r\nline two\r\n",
        "Task: t  \nline two   \n",
        "\n\nTask: t\nline two\n\n",
        "Task: t\rline two\r",
    ]
    for v in variants:
        assert canonical_text(v) == canonical_text(a)
        assert prompt_digest(v) == prompt_digest(a)


def test_digest_distinguishes_content():
    assert prompt_digest("alpha") != prompt_digest("beta")


def test_digest_keeps_interior_indentation():
    # leading whitespace of interior lines is significant, only trailing is not
    assert prompt_digest("a\n  b") != prompt_digest("a\nb")


# ---------------------------------------------------------------------------
# Transcript


def test_transcript_record_lookup_roundtrip(tmp_path):
    t = Transcript()
    t.record("d1", "hello", "test-model")
    assert t.lookup("d1") == "hello"
    path = tmp_path / "t.json"
    t.save(path)
    loaded = Transcript.load(path)
    assert loaded.lookup("d1") == "hello"
    assert loaded.entries["d1"]["model"] == "test-model"
    raw = json.loads(path.read_text())
    assert set(raw["d1"]) == {"response", "model", "timestamp"}


def test_transcript_unknown_digest_is_error():
    with pytest.raises(TranscriptMissError):
        Transcript().lookup("missing")


def test_transcript_conflicting_record_rejected():
    t = Transcript()
    t.record("d", "one", "m")
    t.record("d", "one", "m")  # idempotent re-record is fine
    with pytest.raises(ValueError):
        t.record("d", "two", "m")


# ---------------------------------------------------------------------------
# Client config and construction


def test_config_defaults():
    cfg = LlmClientConfig(mode="live")
    assert cfg.temperature == 0.8
    assert cfg.max_tokens == 1000


@pytest.mark.parametrize("kwargs", [
    {"mode": "stream"},
    {"mode": "live", "temperature": -0.1},
    {"mode": "live", "temperature": 2.5},
    {"mode": "live", "max_tokens": 0},
    {"mode": "replay", "transcript_path": None},
    {"mode": "record", "transcript_path": None},
])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        LlmClientConfig(**kwargs)


def test_make_client_modes(tmp_path):
    path = tmp_path / "t.json"
    Transcript().save(path)
    assert isinstance(make_client(LlmClientConfig(mode="replay", transcript_path=str(path))), ReplayClient)
    assert isinstance(make_client(LlmClientConfig(mode="live")), LiveClient)
    rec = make_client(LlmClientConfig(mode="record", transcript_path=str(path)))
    assert isinstance(rec, RecordingClient)


def test_make_client_record_resumes_existing_transcript(tmp_path):
    path = tmp_path / "t.json"
    t = Transcript()
    t.record("d0", "resp", "m")
    t.save(path)
    rec = make_client(LlmClientConfig(mode="record", transcript_path=str(path)))
    assert rec.transcript.lookup("d0") == "resp"


# ---------------------------------------------------------------------------
# Retry loops


def test_extract_ips_first_attempt():
    client = ScriptedClient([LEGAL_IPS_TEXT])
    result = extract_ips("a report", client)
    assert result.attempts == 1
    assert serialize_ips(result.ips) == LEGAL_IPS_TEXT
    assert result.responses == (LEGAL_IPS_TEXT,)


def test_extract_ips_retry_carries_violations():
    client = ScriptedClient([ILLEGAL_IPS_TEXT, LEGAL_IPS_TEXT])
    result = extract_ips("a report", client)
    assert result.attempts == 2
    retry_prompt = client.prompts[1].render()
    assert "Attempt 1 was rejected" in retry_prompt
    assert "V2" in retry_prompt  # the legality diagnostic names the vehicle


def test_extract_ips_retry_after_parse_error():
    client = ScriptedClient(["not an ips at all", LEGAL_IPS_TEXT])
    result = extract_ips("a report", client)
    assert result.attempts == 2
    assert "parse error" in client.prompts[1].render()


def test_extract_ips_exhaustion():
    client = ScriptedClient([ILLEGAL_IPS_TEXT] * 3)
    with pytest.raises(ExtractionFailed) as exc:
        extract_ips("a report", client, max_retries=3)
    assert exc.value.attempts == 3
    assert exc.value.problems


def test_extract_ips_requires_positive_retries():
    with pytest.raises(ValueError):
        extract_ips("a report", ScriptedClient([]), max_retries=0)


def test_extract_never_returns_illegal():
    # every returned script must pass the legality gate, whatever the order
    from scenforge.ips import check_legality
    for script in ([ILLEGAL_IPS_TEXT, ILLEGAL_IPS_TEXT, LEGAL_IPS_TEXT],
                   [LEGAL_IPS_TEXT],
                   ["garbage", ILLEGAL_IPS_TEXT, LEGAL_IPS_TEXT]):
        result = extract_ips("a report", ScriptedClient(script), max_retries=3)
        assert check_legality(result.ips).ok


def test_convert_first_attempt_collects_proposals():
    ips = parse_ips(LEGAL_IPS_TEXT)
    client = ScriptedClient([TEMPLATE_TEXT])
    result = convert_to_template(ips, client)
    assert result.attempts == 1
    proposed = result.proposed_ranges()
    assert proposed[(0, "offset")] == (20.0, 40.0)
    assert proposed[(1, "speed")] == (10.0, 10.0)  # value slots become degenerate ranges
    assert proposed[(2, "trigger")] == (1.0, 1.0)


def test_convert_retry_then_success():
    ips = parse_ips(LEGAL_IPS_TEXT)
    client = ScriptedClient(["npc(V1", TEMPLATE_TEXT])
    result = convert_to_template(ips, client)
    assert result.attempts == 2
    assert "parse error" in client.prompts[1].render()


def test_convert_exhaustion():
    ips = parse_ips(LEGAL_IPS_TEXT)
    with pytest.raises(ConversionFailed) as exc:
        convert_to_template(ips, ScriptedClient(["bad"] * 2), max_retries=2)
    assert exc.value.attempts == 2


# ---------------------------------------------------------------------------
# Record then replay, byte for byte


def test_record_then_replay_identical(tmp_path):
    path = tmp_path / "session.json"
    recorder = RecordingClient(ScriptedClient([ILLEGAL_IPS_TEXT, LEGAL_IPS_TEXT]),
                               path=path, model="scripted")
    recorded = extract_ips("a report", recorder)

    replayed = extract_ips("a report", ReplayClient.from_path(path))
    assert replayed.ips == recorded.ips
    assert replayed.attempts == recorded.attempts
    assert replayed.responses == recorded.responses


def test_replay_miss_is_error(tmp_path):
    path = tmp_path / "empty.json"
    Transcript().save(path)
    with pytest.raises(TranscriptMissError):
        extract_ips("a report", ReplayClient.from_path(path))


# ---------------------------------------------------------------------------
# Live client request shaping (stubbed HTTP)


class FakeResponse:
    def __init__(self, content):
        self._content = content

    def raise_for_status(self):
        pass

    def json(self):
        return {"choices": [{"message": {"content": self._content}}]}


def test_live_client_request_shape(monkeypatch):
    captured = {}

    def fake_post(url, headers=None, json=None, timeout=None):
        captured.update(url=url, headers=headers, body=json, timeout=timeout)
        return FakeResponse("the answer")

    import requests
    monkeypatch.setattr(requests, "post", fake_post)
    monkeypatch.setenv("SCENFORGE_API_KEY", "sk-test")

    cfg = LlmClientConfig(mode="live", endpoint="https://example.test/v1/chat",
                          model_name="m-1", max_tokens=64, temperature=0.2)
    prompt = build_extraction_prompt("a report")
    assert LiveClient(cfg).complete(prompt) == "the answer"

    assert captured["url"] == "https://example.test/v1/chat"
    assert captured["headers"]["Authorization"] == "Bearer sk-test"
    assert captured["body"]["model"] == "m-1"
    assert captured["body"]["max_tokens"] == 64
    assert captured["body"]["temperature"] == 0.2
    assert captured["body"]["messages"] == [{"role": "user", "content": prompt.render()}]


def test_live_client_requires_api_key(monkeypatch):
    monkeypatch.delenv("SCENFORGE_API_KEY", raising=False)
    client = LiveClient(LlmClientConfig(mode="live"))
    with pytest.raises(RuntimeError, match="SCENFORGE_API_KEY"):
        client.complete(Prompt("t", "f", ("a",), "P", "x"))

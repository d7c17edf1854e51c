"""Language-model bridge: prompt construction, transcripts, and the
retry-until-valid loops for the two conversion steps.

Everything the model says goes through a transcript keyed by a digest of the
canonicalized prompt text, so a pipeline run can be recorded once and then
replayed offline, byte for byte.  Replay never falls back to the network: a
prompt missing from the transcript is an error.

Clients expose a single method, ``complete(prompt) -> str``.  Three are
provided: ReplayClient (transcript only), LiveClient (chat-completions HTTP
endpoint), and RecordingClient (wraps another client and writes the
transcript as it goes).
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dsl import TestCaseTemplate, parse_template
from .errors import (
    ConversionFailed,
    DslParseError,
    EmptyReportError,
    ExtractionFailed,
    IllegalIpsError,
    IpsParseError,
    TranscriptMissError,
)
from .ips import IPS, check_legality, parse_ips, serialize_ips
from .logicalize import ProposedRanges

API_KEY_ENV = "SCENFORGE_API_KEY"


@dataclass(frozen=True)
class Prompt:
    """A structured prompt: task, format section, attentions, payload, and an
    optional one-shot example.  Rendering is deterministic; the digest of the
    rendered text is the transcript key."""

    task: str
    format_block: str
    attentions: tuple[str, ...]
    payload_label: str
    payload: str
    example_block: str | None = None
    feedback: str = ""

    def render(self) -> str:
        parts = [f"Task: {self.task}", self.format_block]
        if self.example_block:
            parts.append(self.example_block)
        parts.append("Attentions:\n" + "\n".join(f"- {a}" for a in self.attentions))
        parts.append(f"{self.payload_label}:\n{self.payload.strip()}")
        if self.feedback:
            parts.append(self.feedback)
        return "\n\n".join(parts) + "\n"


IPS_FORMAT_BLOCK = """IPS Format:
road: straight|curved, lanes: <n>
Vi: initial action of Vi.
Vj: initial action of Vj.
(Vi, Vj): interactive actions between Vi and Vj."""

EXTRACTION_ATTENTIONS = (
    "Action verbs must be selected from the predefined set {brake, decelerate, accelerate, swerve left, swerve right}.",
    "Each interactive pattern involves exactly two vehicles: one performs an active action and the other follows with a responsive action.",
    "Every vehicle named in a pattern must have its own initial-action line.",
    "List all initial actions first, then the interactive patterns in chronological order.",
    "Output only the IPS in the format above, with no commentary.",
)

TEST_CASE_MODEL_BLOCK = """Test Case Model & Example:
A test case is a road header followed by one statement per line.
Constructors come first, one per vehicle, then the timed actions:
npc(Vk, lane=<int>, offset=<m>, speed=<m/s>)
accelerate(Vk, speed=<m/s>, trigger=<ordinal>)
decelerate(Vk, speed=<m/s>, trigger=<ordinal>)
lane_change(Vk, lane=<int>, speed=<m/s>, trigger=<ordinal>)
Each parameter may be a single value, a range [lo,hi], or ? when unknown.

Example input IPS:
road: straight, lanes: 2
V1: driving ahead of V2 in lane 1
V2: following V1 in lane 1
(V1, V2): V1 brakes, V2 brakes

Example output test case:
road: straight, lanes: 2
npc(V1, lane=1, offset=[20,40], speed=[5.0,15.0])
npc(V2, lane=1, offset=[0,10], speed=[5.0,15.0])
decelerate(V1, speed=[0.0,5.0], trigger=1)
decelerate(V2, speed=[0.0,8.0], trigger=2)"""

CONVERSION_ATTENTIONS = (
    "Emit one npc(...) constructor for every vehicle before any action statement.",
    "Map each pattern verb to a statement: brake or decelerate -> decelerate, accelerate -> accelerate, swerve left or right -> lane_change toward the neighboring lane.",
    "Use the trigger ordinal to keep the chronological order of the patterns (k-th pattern -> trigger k).",
    "Prefer ranges over single values; ranges are checked against defaults later.",
    "Output only the test case in the format above, with no commentary.",
)


def canonical_text(text: str) -> str:
    """Normalize line endings, strip trailing whitespace per line, and trim
    the ends; the digest is taken over this form."""
    unified = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in unified.split("\n")).strip()


def prompt_digest(text: str) -> str:
    return hashlib.sha256(canonical_text(text).encode("utf-8")).hexdigest()


def build_extraction_prompt(report: str) -> Prompt:
    """Prompt asking for the road structure and the interactive pattern
    sequence of an accident report."""
    if not report.strip():
        raise EmptyReportError("accident report is empty")
    return Prompt(
        task=(
            "Please extract the road structure and the interactive pattern "
            "sequence (IPS) from the given accident report."
        ),
        format_block=IPS_FORMAT_BLOCK,
        attentions=EXTRACTION_ATTENTIONS,
        payload_label="Accident Report",
        payload=report,
    )


def build_conversion_prompt(ips: IPS) -> Prompt:
    """One-shot prompt asking for the test-case template of a legal script."""
    report = check_legality(ips)
    if not report.ok:
        raise IllegalIpsError("cannot build a conversion prompt from an illegal script:\n" + report.describe())
    return Prompt(
        task=(
            "Please generate the test case template corresponding to the "
            "given interactive pattern sequence."
        ),
        format_block=TEST_CASE_MODEL_BLOCK,
        attentions=CONVERSION_ATTENTIONS,
        payload_label="Interactive Pattern Sequence",
        payload=serialize_ips(ips),
        example_block=None,
    )


def prompt_with_feedback(prompt: Prompt, attempt: int, problems: list[str]) -> Prompt:
    """Derive the retry prompt: same base, rejection feedback appended.  The
    attempt number keeps repeated identical diagnostics at distinct digests."""
    lines = "\n".join(f"- {p}" for p in problems)
    feedback = (
        f"Attempt {attempt} was rejected for these reasons:\n{lines}\n"
        "Produce a corrected output in the required format."
    )
    return replace(prompt, feedback=feedback)


# ---------------------------------------------------------------------------
# Transcript and clients


@dataclass
class Transcript:
    """Digest-keyed record of model responses.  File form is a JSON map
    {digest: {"response": ..., "model": ..., "timestamp": ...}}."""

    entries: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "Transcript":
        return cls(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.entries, indent=2, sort_keys=True) + "\n")

    def lookup(self, digest: str) -> str:
        if digest not in self.entries:
            raise TranscriptMissError(f"no transcript entry for prompt digest {digest}")
        return self.entries[digest]["response"]

    def record(self, digest: str, response: str, model: str) -> None:
        existing = self.entries.get(digest)
        if existing is not None and existing["response"] != response:
            raise ValueError(f"conflicting responses recorded for digest {digest}")
        self.entries[digest] = {
            "response": response,
            "model": model,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }


@dataclass(frozen=True)
class LlmClientConfig:
    mode: str = "replay"  # replay | live | record
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4"
    max_tokens: int = 1000
    temperature: float = 0.8
    transcript_path: str | None = None

    def __post_init__(self):
        if self.mode not in ("replay", "live", "record"):
            raise ValueError(f"unknown client mode {self.mode!r}")
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.mode in ("replay", "record") and not self.transcript_path:
            raise ValueError(f"{self.mode} mode needs a transcript path")


class ReplayClient:
    """Answers only from a transcript; a missing prompt is an error, never a
    silent fallback."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    @classmethod
    def from_path(cls, path) -> "ReplayClient":
        return cls(Transcript.load(path))

    def complete(self, prompt: Prompt) -> str:
        return self.transcript.lookup(prompt_digest(prompt.render()))


class LiveClient:
    """Minimal chat-completions client.  Needs network access and an API key
    in the SCENFORGE_API_KEY environment variable; exercised only when a run
    is recorded, never by the offline test suite."""

    def __init__(self, config: LlmClientConfig):
        self.config = config

    def complete(self, prompt: Prompt) -> str:
        import requests

        key = os.environ.get(API_KEY_ENV, "")
        if not key:
            raise RuntimeError(f"live mode needs {API_KEY_ENV} set")
        response = requests.post(
            self.config.endpoint,
            headers={"Authorization": f"Bearer {key}"},
            json={
                "model": self.config.model_name,
                "messages": [{"role": "user", "content": prompt.render()}],
                "temperature": self.config.temperature,
                "max_tokens": self.config.max_tokens,
            },
            timeout=120,
        )
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]


class RecordingClient:
    """Wraps another client and records every exchange.  Replaying the saved
    transcript reproduces the wrapped client's answers exactly."""

    def __init__(self, inner, transcript: Transcript | None = None, path=None, model: str = "recorded"):
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript()
        self.path = path
        self.model = model

    def complete(self, prompt: Prompt) -> str:
        response = self.inner.complete(prompt)
        self.transcript.record(prompt_digest(prompt.render()), response, self.model)
        if self.path is not None:
            self.transcript.save(self.path)
        return response


def make_client(config: LlmClientConfig):
    if config.mode == "replay":
        return ReplayClient.from_path(config.transcript_path)
    live = LiveClient(config)
    if config.mode == "live":
        return live
    transcript = Transcript()
    if Path(config.transcript_path).exists():
        transcript = Transcript.load(config.transcript_path)
    return RecordingClient(live, transcript, config.transcript_path, config.model_name)


# ---------------------------------------------------------------------------
# Retry loops


@dataclass(frozen=True)
class ExtractionResult:
    ips: IPS
    attempts: int
    responses: tuple[str, ...]


@dataclass(frozen=True)
class ConversionResult:
    template: TestCaseTemplate
    proposed: tuple[tuple[tuple[int, str], tuple[float, float]], ...]
    attempts: int
    responses: tuple[str, ...]

    def proposed_ranges(self) -> ProposedRanges:
        return dict(self.proposed)


def extract_ips(report: str, client, max_retries: int = 3) -> ExtractionResult:
    """Ask for an interaction script until one parses and passes the legality
    check; each retry carries the rejection reasons back to the model."""
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    prompt = build_extraction_prompt(report)
    responses: list[str] = []
    problems: list[str] = []
    for attempt in range(1, max_retries + 1):
        response = client.complete(prompt)
        responses.append(response)
        try:
            ips = parse_ips(response)
        except IpsParseError as e:
            problems = [f"parse error: {e}"]
        else:
            legality = check_legality(ips)
            if legality.ok:
                return ExtractionResult(ips, attempt, tuple(responses))
            problems = [f"{v.rule} at {v.location}: {v.message}" for v in legality.violations]
        prompt = prompt_with_feedback(prompt, attempt, problems)
    raise ExtractionFailed(max_retries, tuple(problems))


def convert_to_template(ips: IPS, client, max_retries: int = 3) -> ConversionResult:
    """Ask for a test-case template until one parses.  Ranges (and single
    values, treated as degenerate ranges) found in the response are returned
    as the model's proposals, keyed by (statement index, parameter name)."""
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    prompt = build_conversion_prompt(ips)
    responses: list[str] = []
    problems: list[str] = []
    for attempt in range(1, max_retries + 1):
        response = client.complete(prompt)
        responses.append(response)
        try:
            template = parse_template(response)
        except DslParseError as e:
            problems = [f"parse error: {e}"]
            prompt = prompt_with_feedback(prompt, attempt, problems)
            continue
        proposed = []
        for ref in template.slot_refs():
            slot = ref.slot
            if slot.state == "range":
                proposed.append(((ref.stmt_index, slot.name), (float(slot.lo), float(slot.hi))))
            elif slot.state == "value":
                v = float(slot.value)
                proposed.append(((ref.stmt_index, slot.name), (v, v)))
        return ConversionResult(template, tuple(proposed), attempt, tuple(responses))
    raise ConversionFailed(max_retries, tuple(problems))

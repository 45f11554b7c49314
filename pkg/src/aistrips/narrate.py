"""Narrative generation and judging of trips through chat-completion LLMs.

The two system prompts ship as golden text files and are loaded verbatim,
never assembled in code. Responses are parsed into a plain-text narrative
plus a statistics JSON (generation) or a three-score verdict JSON
(judging); deviation statistics compare model-estimated trip figures
against the ground truth computed from raw AIS points.
"""
from __future__ import annotations

import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import export
from .segment import Trip

logger = logging.getLogger(__name__)

MALFORMED_STATS = "MALFORMED_STATS"
MALFORMED_VERDICT = "MALFORMED_VERDICT"

STATS_KEYS = (
    "traveled_distance",
    "total_duration",
    "origin_port",
    "destination_port",
    "adverse_weather_conditions",
)


class TransportError(Exception):
    """Request could not be completed after retry exhaustion."""


class MalformedVerdictError(Exception):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    base_url: str = "mock"
    api_key_env: str = ""
    temperature: float = 0.1  # low to reduce output variance
    max_retries: int = 3
    timeout_s: float = 60.0


@dataclass
class TripNarrative:
    text: str
    stats: Optional[Dict[str, object]]
    model_id: str
    latency_s: float
    raw_response: str
    error: Optional[str] = None


@dataclass(frozen=True)
class JudgeVerdict:
    relevance: int
    faithfulness: int
    correctness: int
    explanation: str
    judge_model_id: str


@dataclass(frozen=True)
class DeviationStats:
    mean: float
    stdev: float
    max: float


def _load_prompt(name: str) -> str:
    return resources.files("aistrips.prompts").joinpath(name).read_text(encoding="utf-8")


def build_generation_prompt(trip_json: str) -> Tuple[str, str]:
    """System and user messages asking for a trip description.

    The system message is the golden template byte for byte; the user
    message embeds the trip JSON in its fenced block.
    """
    system = _load_prompt("generation_system.txt")
    user = _load_prompt("generation_user.txt").format(trip_json=trip_json)
    return system, user


def build_judge_prompt(trip_json: str, description: str) -> Tuple[str, str]:
    """System and user messages asking for a quality verdict on a description."""
    if not description:
        raise ValueError("cannot judge an empty description")
    system = _load_prompt("judge_system.txt")
    user = _load_prompt("judge_user.txt").format(
        trip_json=trip_json, description=description
    )
    return system, user


# --- chat clients ------------------------------------------------------------

@dataclass
class ChatResponse:
    text: str
    latency_s: float


class ChatClient:
    """Minimal chat-completions interface: two messages in, text out."""

    def complete(self, system: str, user: str, cfg: ModelConfig) -> ChatResponse:
        raise NotImplementedError


class HttpChatClient(ChatClient):
    """POSTs the standard chat-completions wire format with bearer auth."""

    def complete(self, system: str, user: str, cfg: ModelConfig) -> ChatResponse:
        import os

        import requests

        url = cfg.base_url
        if not url.rstrip("/").endswith("/chat/completions"):
            url = url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if cfg.api_key_env:
            key = os.environ.get(cfg.api_key_env)
            if not key:
                raise TransportError(f"environment variable {cfg.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": cfg.model_id,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": cfg.temperature,
        }
        started = time.monotonic()
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=cfg.timeout_s)
            resp.raise_for_status()
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except Exception as exc:
            raise TransportError(str(exc)) from exc
        return ChatResponse(text=text, latency_s=time.monotonic() - started)


class ScriptedChatClient(ChatClient):
    """Returns queued responses in order; raises queued exceptions. Test aid."""

    def __init__(self, responses: Sequence[object]):
        self._responses = list(responses)
        self.calls: List[Tuple[str, str]] = []

    def complete(self, system: str, user: str, cfg: ModelConfig) -> ChatResponse:
        self.calls.append((system, user))
        if not self._responses:
            raise TransportError("scripted client exhausted")
        item = self._responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return ChatResponse(text=str(item), latency_s=0.0)


class ReplayChatClient(ChatClient):
    """Deterministic offline stand-in for a chat endpoint.

    Given a generation prompt it recomputes trip totals from the embedded
    JSON and answers with a stage-by-stage recitation plus the statistics
    block; judge prompts get a fixed verdict. Latency is always zero so
    artifact trees are byte-identical across runs.
    """

    _FENCE = re.compile(r"```json\n(.*?)\n?```", re.DOTALL)

    def complete(self, system: str, user: str, cfg: ModelConfig) -> ChatResponse:
        if "EVALUATION METHODOLOGY" in system:
            verdict = {
                "relevance_score": 4,
                "faithfulness_score": 5,
                "correctness_score": 4,
                "explanation": "The description covers every stage of the trip and "
                "its figures match the input representation.",
            }
            return ChatResponse(text=json.dumps(verdict), latency_s=0.0)
        m = self._FENCE.search(user)
        episodes = json.loads(m.group(1)) if m else []
        lines = []
        total_dist = 0.0
        total_dur = 0
        adverse = []
        for i, ep in enumerate(episodes, start=1):
            total_dist += float(ep.get("distance_miles", 0.0))
            total_dur += int(ep.get("duration_seconds", 0))
            place = ep.get("placemarks", "")
            suffix = f" {place}" if place else ""
            lines.append(
                f"Stage {i}: the vessel was {ep.get('movement', 'SAILING')}"
                f" {ep.get('direction', '')}{suffix}, covering"
                f" {ep.get('distance_miles', 0)} nautical miles in"
                f" {ep.get('duration_seconds', 0)} seconds."
            )
            beaufort = ep.get("wind_beaufort")
            if beaufort is not None and beaufort >= 6:
                entry = {
                    "wind_intensity": str(beaufort),
                    "wind_direction": ep.get("wind_direction"),
                }
                if entry not in adverse:
                    adverse.append(entry)
        stats = {
            "traveled_distance": round(total_dist, 2),
            "total_duration": total_dur,
            "origin_port": None,
            "destination_port": None,
            "adverse_weather_conditions": adverse,
        }
        text = "\n".join(lines) + "\n\n```json\n" + json.dumps(stats) + "\n```"
        return ChatResponse(text=text, latency_s=0.0)


def make_client(base_url: str) -> ChatClient:
    if base_url.startswith("mock"):
        return ReplayChatClient()
    return HttpChatClient()


# --- response parsing --------------------------------------------------------

_FENCED_JSON = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def _balanced_objects(text: str) -> List[Tuple[int, int]]:
    spans = []
    depth = 0
    start = -1
    in_str = False
    escape = False
    for i, ch in enumerate(text):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append((start, i + 1))
    return spans


def json_candidates(text: str, prefer_last: bool = True) -> List[Tuple[dict, Tuple[int, int]]]:
    """All JSON objects found in free-form model output, preference-ordered.

    Fenced blocks win over bare balanced braces; within each group the
    order is last-first (trailing summary blocks) or first-first.
    """
    out: List[Tuple[dict, Tuple[int, int]]] = []
    fenced = list(_FENCED_JSON.finditer(text))
    for m in reversed(fenced) if prefer_last else fenced:
        try:
            obj = json.loads(m.group(1).strip())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            out.append((obj, m.span()))
    spans = _balanced_objects(text)
    for start, end in reversed(spans) if prefer_last else spans:
        try:
            obj = json.loads(text[start:end])
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            out.append((obj, (start, end)))
    return out


def extract_json_object(text: str, prefer_last: bool = True) -> Optional[Tuple[dict, Tuple[int, int]]]:
    candidates = json_candidates(text, prefer_last)
    return candidates[0] if candidates else None


def normalize_adverse(value: object) -> Optional[List[Dict[str, object]]]:
    """Normalize the adverse-weather entry to a list of objects.

    Accepts a list of objects or a single flat object; anything else is
    malformed.
    """
    if value is None:
        return []
    if isinstance(value, dict):
        return [value]
    if isinstance(value, list):
        out = []
        for item in value:
            if not isinstance(item, dict):
                return None
            out.append(item)
        return out
    return None


def _validate_stats(obj: dict) -> Optional[Dict[str, object]]:
    if not all(k in obj for k in STATS_KEYS):
        return None
    if not isinstance(obj["traveled_distance"], (int, float)) or not isinstance(
        obj["total_duration"], (int, float)
    ):
        return None
    adverse = normalize_adverse(obj["adverse_weather_conditions"])
    if adverse is None:
        return None
    return {
        "traveled_distance": obj["traveled_distance"],
        "total_duration": obj["total_duration"],
        "origin_port": obj["origin_port"],
        "destination_port": obj["destination_port"],
        "adverse_weather_conditions": adverse,
    }


def parse_generation_response(raw: str) -> Tuple[str, Optional[Dict[str, object]], Optional[str]]:
    """Split a generation response into narrative text and validated stats.

    Returns (text, stats, error); error is MALFORMED_STATS when no object
    satisfying the summary schema can be found anywhere in the response.
    """
    for obj, span in json_candidates(raw):
        stats = _validate_stats(obj)
        if stats is not None:
            text = (raw[: span[0]] + raw[span[1]:]).strip()
            return text, stats, None
    return raw.strip(), None, MALFORMED_STATS


def _with_retries(call: Callable[[], ChatResponse], cfg: ModelConfig,
                  sleep: Callable[[float], None] = time.sleep) -> ChatResponse:
    last: Optional[Exception] = None
    for attempt in range(max(1, cfg.max_retries)):
        try:
            return call()
        except TransportError as exc:
            last = exc
            if attempt + 1 < max(1, cfg.max_retries):
                sleep(0.5 * 2 ** attempt)
    raise TransportError(f"{cfg.model_id}: {last}")


def generate_narrative(
    trip: Trip,
    cfg: ModelConfig,
    client: ChatClient,
    sleep: Callable[[float], None] = time.sleep,
) -> TripNarrative:
    """Ask one model to describe one trip; never mutates the trip.

    Transport failures retry with exponential backoff before raising;
    responses without a parseable stats block keep their narrative text
    and carry the MALFORMED_STATS marker.
    """
    trip_json = export.to_json(trip)
    system, user = build_generation_prompt(trip_json)
    resp = _with_retries(lambda: client.complete(system, user, cfg), cfg, sleep)
    text, stats, error = parse_generation_response(resp.text)
    return TripNarrative(
        text=text,
        stats=stats,
        model_id=cfg.model_id,
        latency_s=resp.latency_s,
        raw_response=resp.text,
        error=error,
    )


def judge_narrative(
    trip: Trip,
    narrative: TripNarrative,
    judge_cfg: ModelConfig,
    client: ChatClient,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeVerdict:
    """Score one description with the judge model.

    Raises MalformedVerdictError when scores are missing or outside 1..5.
    """
    trip_json = export.to_json(trip)
    system, user = build_judge_prompt(trip_json, narrative.text)
    resp = _with_retries(lambda: client.complete(system, user, judge_cfg), judge_cfg, sleep)
    found = extract_json_object(resp.text, prefer_last=False)
    if found is None:
        raise MalformedVerdictError("no JSON object in judge response", resp.text)
    obj, _ = found
    scores = {}
    for key in ("relevance_score", "faithfulness_score", "correctness_score"):
        value = obj.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
            raise MalformedVerdictError(f"bad {key}: {value!r}", resp.text)
        scores[key] = value
    return JudgeVerdict(
        relevance=scores["relevance_score"],
        faithfulness=scores["faithfulness_score"],
        correctness=scores["correctness_score"],
        explanation=str(obj.get("explanation", "")),
        judge_model_id=judge_cfg.model_id,
    )


def deviation_stats(
    pairs: Sequence[Tuple[float, float]], sample: bool = False
) -> DeviationStats:
    """Mean, standard deviation, and max of percent deviations |est-gt|/gt.

    Population standard deviation by default; ``sample`` switches to the
    n-1 denominator for comparison.
    """
    if not pairs:
        raise ValueError("no pairs to summarize")
    devs = []
    for est, gt in pairs:
        if gt <= 0:
            raise ValueError(f"ground truth must be positive, got {gt}")
        devs.append(abs(est - gt) / gt * 100.0)
    mean = sum(devs) / len(devs)
    denom = len(devs) - 1 if sample and len(devs) > 1 else len(devs)
    var = sum((d - mean) ** 2 for d in devs) / denom
    return DeviationStats(mean=mean, stdev=math.sqrt(var), max=max(devs))


# --- batch driver ------------------------------------------------------------

def run_narratives(
    trips: Sequence[Trip],
    generator_cfgs: Sequence[ModelConfig],
    judge_cfg: Optional[ModelConfig],
    jobs: int = 1,
    client_factory: Callable[[str], ChatClient] = make_client,
    sleep: Callable[[float], None] = time.sleep,
) -> List[Dict[str, object]]:
    """Describe (and optionally judge) every trip with every generator.

    One record per trip per model, in trip order regardless of completion
    order; per-trip failures are recorded, never abort the batch.
    """
    tasks = [(trip, cfg) for cfg in generator_cfgs for trip in trips]
    clients = {cfg.model_id: client_factory(cfg.base_url) for cfg in generator_cfgs}
    judge_client = client_factory(judge_cfg.base_url) if judge_cfg else None

    def run_one(task: Tuple[Trip, ModelConfig]) -> Dict[str, object]:
        trip, cfg = task
        record: Dict[str, object] = {
            "trip_id": trip.trip_id,
            "model_id": cfg.model_id,
            "narrative": None,
            "stats": None,
            "stats_error": None,
            "latency_s": None,
            "verdict": None,
            "verdict_error": None,
        }
        try:
            narrative = generate_narrative(trip, cfg, clients[cfg.model_id], sleep)
        except TransportError as exc:
            logger.warning("narrative failed for %s/%s: %s", trip.trip_id, cfg.model_id, exc)
            record["stats_error"] = "TRANSPORT"
            return record
        record["narrative"] = narrative.text
        record["stats"] = narrative.stats
        record["stats_error"] = narrative.error
        record["latency_s"] = narrative.latency_s
        if judge_cfg is not None and judge_client is not None and narrative.text:
            try:
                verdict = judge_narrative(trip, narrative, judge_cfg, judge_client, sleep)
                record["verdict"] = {
                    "relevance_score": verdict.relevance,
                    "faithfulness_score": verdict.faithfulness,
                    "correctness_score": verdict.correctness,
                    "explanation": verdict.explanation,
                    "judge_model_id": verdict.judge_model_id,
                }
            except MalformedVerdictError as exc:
                logger.warning("verdict failed for %s/%s: %s", trip.trip_id, cfg.model_id, exc)
                record["verdict_error"] = MALFORMED_VERDICT
            except TransportError:
                record["verdict_error"] = "TRANSPORT"
        return record

    if jobs <= 1:
        return [run_one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_one, tasks))


def write_results(records: Sequence[Dict[str, object]], path) -> None:
    """Line-delimited JSON, one record per trip per model."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

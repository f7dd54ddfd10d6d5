"""Local inference client: prompt construction, generate-endpoint calls, and
findings parsing.

The network policy is enforced statically before any socket is opened: with
allow_remote unset, only literal loopback hosts are accepted, so no DNS
lookup or connection attempt ever leaves the machine.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import re
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from importlib.resources import files
from typing import Optional
from urllib.parse import urlsplit

import httpx

from .errors import FindingsParseError, InferenceError, PolicyError
from .findings import DETECTOR_LLM, Finding, mask_evidence
from .ingest import MAX_SCAN_CHARS, SourceDocument
from .taxonomy import Category, Severity, TaxonomyRegistry, parse_label

DEFAULT_ENDPOINT = "http://127.0.0.1:11434"
GENERATE_PATH = "/api/generate"
PROMPT_ASSET = "system_prompt_v1.txt"

#: Seven equivalent instruction phrasings; index selects one deterministically.
INSTRUCTION_PHRASINGS = (
    "Classify the security content of the following document and list every "
    "finding as a JSON array.",
    "Review the document below and report all security findings in a JSON array.",
    "Identify any sensitive or malicious content in this document. Answer with "
    "a JSON array of findings.",
    "Scan the following text for security issues and output the findings as a "
    "JSON array.",
    "Examine this document for credentials, personal data, financial data, "
    "medical data, confidential material, or malicious content. Respond with a "
    "JSON array of findings.",
    "Label the security findings present in the document below, formatted as a "
    "JSON array.",
    "Detect and enumerate the document's security findings, returning them as "
    "a JSON array.",
)


@dataclass(frozen=True)
class InferenceOptions:
    endpoint: str = DEFAULT_ENDPOINT
    model_name: str = "torchsight"
    temperature: float = 0.0
    max_output_tokens: int = 512
    raw_mode: bool = True
    request_timeout: float = 60.0
    allow_remote: bool = False
    max_in_flight: int = 1


def host_is_loopback(endpoint: str) -> bool:
    """Static loopback check: literal loopback IPs and localhost names only.

    Hostnames that would need DNS resolution are rejected, because resolving
    them is itself network activity.
    """
    host = urlsplit(endpoint).hostname
    if not host:
        return False
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        pass
    return host == "localhost" or host.endswith(".localhost")


def enforce_local_policy(options: InferenceOptions) -> None:
    if options.allow_remote:
        return
    if not host_is_loopback(options.endpoint):
        raise PolicyError(
            f"endpoint {options.endpoint!r} is not a loopback address; "
            "pass allow_remote=True to override"
        )


@lru_cache(maxsize=4)
def _prompt_template() -> str:
    return files("torchsight").joinpath(f"data/{PROMPT_ASSET}").read_text(
        encoding="utf-8"
    )


def render_system_prompt(registry: TaxonomyRegistry) -> str:
    lines = []
    for category in registry.categories:
        ids = ", ".join(s.canonical for s in registry.subcategories(category))
        lines.append(f"  {category.value}: {ids}")
    return _prompt_template().format(taxonomy="\n".join(lines))


def prompt_hash(registry: TaxonomyRegistry) -> str:
    """Stable identifier for the exact system prompt in use."""
    digest = hashlib.sha256(render_system_prompt(registry).encode("utf-8"))
    return digest.hexdigest()


def build_prompt(
    doc: SourceDocument, phrasing_index: int, registry: TaxonomyRegistry
) -> str:
    """Render the raw Alpaca-layout prompt: system, instruction, input."""
    if not 0 <= phrasing_index < len(INSTRUCTION_PHRASINGS):
        raise ValueError(
            f"phrasing index {phrasing_index} out of range 0..{len(INSTRUCTION_PHRASINGS) - 1}"
        )
    if len(doc.text) > MAX_SCAN_CHARS:
        raise ValueError(f"document text exceeds {MAX_SCAN_CHARS} characters")
    system = render_system_prompt(registry)
    instruction = INSTRUCTION_PHRASINGS[phrasing_index]
    return (
        f"{system}\n\n"
        f"### Instruction:\n{instruction}\n\n"
        f"### Input:\n{doc.text}\n\n"
        f"### Response:\n"
    )


class InferenceClient:
    """HTTP client for the local generate endpoint.

    In-flight requests are bounded by a semaphore (default 1) so a single
    local model never sees a request pile-up. One retry on transport errors;
    parse failures are never retried.
    """

    def __init__(self, options: InferenceOptions):
        enforce_local_policy(options)
        self.options = options
        self._semaphore = threading.Semaphore(max(1, options.max_in_flight))
        self._client = httpx.Client(timeout=options.request_timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "InferenceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def complete(self, prompt: str) -> str:
        """Single deterministic completion for a fully rendered prompt."""
        enforce_local_policy(self.options)
        url = self.options.endpoint.rstrip("/") + GENERATE_PATH
        body = {
            "model": self.options.model_name,
            "prompt": prompt,
            "raw": self.options.raw_mode,
            "stream": False,
            "options": {
                "temperature": self.options.temperature,
                "num_predict": self.options.max_output_tokens,
            },
        }
        with self._semaphore:
            response = self._post_with_retry(url, body)
        if response.status_code != 200:
            excerpt = response.text[:500]
            raise InferenceError(
                f"backend returned {response.status_code}: {excerpt}"
            )
        try:
            payload = response.json()
        except json.JSONDecodeError as exc:
            raise InferenceError(f"backend response is not JSON: {exc}") from exc
        if "response" not in payload:
            raise InferenceError("backend response missing 'response' field")
        return str(payload["response"])

    def _post_with_retry(self, url: str, body: dict) -> httpx.Response:
        last: Optional[Exception] = None
        for attempt in range(2):
            try:
                return self._client.post(url, json=body)
            except httpx.TransportError as exc:
                last = exc
        raise InferenceError(f"backend unavailable at {url}: {last}") from last


# ---------------------------------------------------------------------------
# Findings wire format
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n?(.*?)```", re.DOTALL)


def _candidate_texts(raw: str) -> list[str]:
    texts = []
    for match in _FENCE_RE.finditer(raw):
        inner = match.group(1)
        if "[" in inner:
            texts.append(inner)
    texts.append(raw)
    return texts


def _extract_array(raw: str) -> Optional[list]:
    decoder = json.JSONDecoder()
    for text in _candidate_texts(raw):
        for i, ch in enumerate(text):
            if ch != "[":
                continue
            try:
                value, _ = decoder.raw_decode(text, i)
            except json.JSONDecodeError:
                continue
            if isinstance(value, list):
                return value
    return None


def _parse_severity(raw, diagnostics: list[str], where: str) -> Severity:
    if isinstance(raw, str):
        try:
            return Severity(raw.strip().lower())
        except ValueError:
            pass
    diagnostics.append(f"{where}: unknown severity {raw!r}, defaulted to medium")
    return Severity.MEDIUM


def parse_findings(
    raw: str, registry: TaxonomyRegistry, policy: str = "coerce"
) -> tuple[list[Finding], list[str]]:
    """Recover the findings array from model output.

    Tolerates code fences and surrounding prose. Elements that cannot be
    validated are dropped (or coerced to category level) with a diagnostic.
    Raises FindingsParseError when no JSON array is recoverable at all.
    """
    diagnostics: list[str] = []
    try:
        elements = _extract_array(raw)
    except Exception as exc:  # totality: decoder quirks become parse failures
        raise FindingsParseError(f"findings extraction failed: {exc}", raw=raw)
    if elements is None:
        raise FindingsParseError("no JSON findings array in model output", raw=raw)

    findings: list[Finding] = []
    for i, element in enumerate(elements):
        where = f"finding[{i}]"
        if not isinstance(element, dict):
            diagnostics.append(f"{where}: not an object, dropped")
            continue
        raw_category = element.get("category")
        if not isinstance(raw_category, str) or not raw_category.strip():
            diagnostics.append(f"{where}: missing category, dropped")
            continue
        raw_sub = element.get("subcategory")
        sub_text = raw_sub.strip() if isinstance(raw_sub, str) else ""
        label_token = raw_category.strip().lower()
        if sub_text:
            if "." in sub_text:
                label_token = sub_text
            else:
                label_token = f"{label_token}.{sub_text}"
        try:
            parsed = parse_label(label_token, registry, policy="coerce")
        except Exception:
            diagnostics.append(
                f"{where}: unknown category {raw_category!r}, dropped"
            )
            continue
        if parsed.coerced:
            if policy == "strict" and sub_text:
                diagnostics.append(
                    f"{where}: subcategory {raw_sub!r} not in taxonomy, dropped"
                )
                continue
            if sub_text:
                diagnostics.append(
                    f"{where}: subcategory {raw_sub!r} not in taxonomy, "
                    "kept at category level"
                )
        severity = _parse_severity(element.get("severity"), diagnostics, where)
        explanation = element.get("explanation")
        evidence = element.get("evidence")
        if isinstance(evidence, str) and evidence:
            # already-masked text (from a serialized finding) passes through
            if "…" not in evidence:
                evidence = mask_evidence(evidence)
        else:
            evidence = None
        findings.append(
            Finding(
                category=parsed.category,
                subcategory=parsed.subcategory,
                severity=severity,
                detectors=(DETECTOR_LLM,),
                explanation=explanation if isinstance(explanation, str) else "",
                evidence=evidence,
                span=None,
                subcategory_raw=sub_text or None,
            )
        )
    return findings, diagnostics


def finding_to_wire(finding: Finding) -> dict:
    wire = {
        "category": finding.category.value,
        "subcategory": (
            finding.subcategory.canonical
            if finding.subcategory is not None
            else finding.subcategory_raw
        ),
        "severity": finding.severity.value,
        "explanation": finding.explanation,
    }
    if finding.evidence is not None:
        wire["evidence"] = finding.evidence
    return wire


def serialize_findings(findings: list[Finding]) -> str:
    """Wire-format JSON array; parse_findings round-trips it."""
    return json.dumps([finding_to_wire(f) for f in findings], ensure_ascii=False)

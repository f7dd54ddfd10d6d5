"""Deterministic regex detection layer.

Forty-eight compiled patterns covering credential material, financial
identifiers, personal data, and malicious-content signatures. This layer has
no medical or confidential coverage by design; those categories need context
the model layer provides.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import PatternError
from .findings import DETECTOR_REGEX, Finding, mask_evidence
from .ingest import SourceDocument
from .taxonomy import Severity, SubcategoryId, TaxonomyRegistry


@dataclass(frozen=True)
class DetectionPattern:
    id: str
    expression: str
    subcategory: str  # canonical "category.name"
    severity: str
    validator: str = "none"  # none | luhn
    description: str = ""


@dataclass(frozen=True)
class PatternSet:
    patterns: tuple[DetectionPattern, ...]
    source: str  # "builtin" or a config path


def _p(
    pattern_id: str,
    expression: str,
    subcategory: str,
    severity: str,
    description: str,
    validator: str = "none",
) -> DetectionPattern:
    return DetectionPattern(
        id=pattern_id,
        expression=expression,
        subcategory=subcategory,
        severity=severity,
        validator=validator,
        description=description,
    )


BUILTIN_PATTERNS: tuple[DetectionPattern, ...] = (
    # -- credentials ------------------------------------------------------
    _p(
        "aws_access_key_id",
        r"\b(?:AKIA|ABIA|ACCA)[0-9A-Z]{16}\b",
        "credentials.api_key",
        "critical",
        "AWS access key id prefix",
    ),
    _p(
        "aws_secret_access_key",
        r"(?i)\baws[_\-]?secret[_\-]?(?:access[_\-]?)?key\b['\"]?\s*[:=]\s*['\"]?[A-Za-z0-9/+=]{40}\b",
        "credentials.api_key",
        "critical",
        "AWS secret access key assignment",
    ),
    _p(
        "aws_session_token",
        r"\bASIA[0-9A-Z]{16}\b",
        "credentials.token",
        "high",
        "AWS temporary session credential prefix",
    ),
    _p(
        "github_token",
        r"\bgh[pousr]_[A-Za-z0-9]{36,255}\b",
        "credentials.token",
        "critical",
        "GitHub personal access or app token",
    ),
    _p(
        "gitlab_pat",
        r"\bglpat-[A-Za-z0-9_\-]{20,}\b",
        "credentials.token",
        "critical",
        "GitLab personal access token",
    ),
    _p(
        "slack_token",
        r"\bxox[baprs]-[A-Za-z0-9\-]{10,}\b",
        "credentials.token",
        "critical",
        "Slack bot/user/app token",
    ),
    _p(
        "stripe_secret_key",
        r"\bsk_live_[A-Za-z0-9]{16,}\b",
        "credentials.api_key",
        "critical",
        "Stripe live secret key",
    ),
    _p(
        "google_api_key",
        r"\bAIza[0-9A-Za-z_\-]{35}\b",
        "credentials.api_key",
        "high",
        "Google Cloud API key",
    ),
    _p(
        "openai_api_key",
        r"\bsk-[A-Za-z0-9]{20}T3BlbkFJ[A-Za-z0-9]{20}\b",
        "credentials.api_key",
        "critical",
        "OpenAI API key",
    ),
    _p(
        "npm_token",
        r"\bnpm_[A-Za-z0-9]{36}\b",
        "credentials.cicd",
        "critical",
        "npm registry automation token",
    ),
    _p(
        "pypi_token",
        r"\bpypi-AgEIcHlwaS5vcmc[A-Za-z0-9_\-]{20,}\b",
        "credentials.cicd",
        "critical",
        "PyPI upload token",
    ),
    _p(
        "private_key_block",
        r"-----BEGIN(?: [A-Z0-9]+)* PRIVATE KEY-----",
        "credentials.private_key",
        "critical",
        "PEM private key header",
    ),
    _p(
        "jwt_token",
        r"\beyJ[A-Za-z0-9_\-]{8,}\.[A-Za-z0-9_\-]{8,}\.[A-Za-z0-9_\-]{8,}\b",
        "credentials.token",
        "medium",
        "signed JSON web token",
    ),
    _p(
        "database_url",
        r"\b(?:postgres(?:ql)?|mysql|mongodb(?:\+srv)?|redis|amqp|mssql)://[^\s:@/]+:[^\s@/]+@[^\s/:]+",
        "credentials.connection_string",
        "critical",
        "database URL embedding a password",
    ),
    _p(
        "password_literal",
        r"(?i)\b(?:password|passwd|pwd)\b['\"]?\s*[:=]\s*['\"]?[^\s'\"]{6,}",
        "credentials.password",
        "high",
        "hardcoded password assignment",
    ),
    _p(
        "generic_secret_assignment",
        r"(?i)\b(?:api[_\-]?key|secret[_\-]?key|access[_\-]?token|auth[_\-]?token|client[_\-]?secret)\b['\"]?\s*[:=]\s*['\"]?[A-Za-z0-9_\-/+=]{16,}",
        "credentials.api_key",
        "high",
        "generic secret-bearing assignment",
    ),
    _p(
        "azure_storage_connection",
        r"(?i)DefaultEndpointsProtocol=https?;AccountName=[^;\s]+;AccountKey=[A-Za-z0-9/+=]{40,}",
        "credentials.cloud_config",
        "critical",
        "Azure storage account connection string",
    ),
    _p(
        "docker_registry_auth",
        r"\"auth\"\s*:\s*\"[A-Za-z0-9+/=]{12,}\"",
        "credentials.container",
        "high",
        "container registry auth blob",
    ),
    # -- financial --------------------------------------------------------
    _p(
        "credit_card_visa",
        r"\b4\d{3}[ \-]?\d{4}[ \-]?\d{4}[ \-]?\d{4}\b",
        "financial.credit_card",
        "high",
        "Visa primary account number",
        validator="luhn",
    ),
    _p(
        "credit_card_mastercard",
        r"\b5[1-5]\d{2}[ \-]?\d{4}[ \-]?\d{4}[ \-]?\d{4}\b",
        "financial.credit_card",
        "high",
        "Mastercard primary account number",
        validator="luhn",
    ),
    _p(
        "credit_card_amex",
        r"\b3[47]\d{2}[ \-]?\d{6}[ \-]?\d{5}\b",
        "financial.credit_card",
        "high",
        "American Express account number",
        validator="luhn",
    ),
    _p(
        "iban",
        r"\b[A-Z]{2}\d{2}(?: ?[A-Z0-9]{4}){3,7}(?: ?[A-Z0-9]{1,3})?\b",
        "financial.bank_account",
        "high",
        "international bank account number",
    ),
    _p(
        "us_bank_routing",
        r"(?i)\b(?:routing|ABA)(?:\s+(?:number|no\.?|#))?\s*[:=#]?\s*\d{9}\b",
        "financial.bank_account",
        "medium",
        "labeled US bank routing number",
    ),
    _p(
        "ein_tax_id",
        r"(?i)\b(?:EIN|employer identification number)\s*[:#]?\s*\d{2}-\d{7}\b",
        "financial.tax",
        "medium",
        "labeled employer identification number",
    ),
    # -- pii ---------------------------------------------------------------
    _p(
        "us_ssn",
        r"\b\d{3}-\d{2}-\d{4}\b",
        "pii.government_id",
        "critical",
        "US social security number format",
    ),
    _p(
        "us_passport",
        r"(?i)\bpassport(?:\s+(?:number|no\.?|#))?\s*[:=#]\s*[A-Z0-9]{8,9}\b",
        "pii.government_id",
        "high",
        "labeled passport number",
    ),
    _p(
        "email_address",
        r"\b[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}\b",
        "pii.contact",
        "low",
        "email address",
    ),
    _p(
        "phone_number",
        r"(?i)\b(?:phone|tel|mobile|cell)(?:\s*(?:number|no\.?|#))?\s*[:=]\s*\+?\d[\d\s().\-]{7,}\d\b",
        "pii.contact",
        "low",
        "labeled phone number",
    ),
    _p(
        "ipv4_address",
        r"\b(?:(?:25[0-5]|2[0-4]\d|1\d{2}|[1-9]?\d)\.){3}(?:25[0-5]|2[0-4]\d|1\d{2}|[1-9]?\d)\b",
        "pii.metadata",
        "info",
        "IPv4 address",
    ),
    _p(
        "mac_address",
        r"\b(?:[0-9A-Fa-f]{2}[:\-]){5}[0-9A-Fa-f]{2}\b",
        "pii.metadata",
        "info",
        "hardware MAC address",
    ),
    _p(
        "date_of_birth",
        r"(?i)\b(?:date of birth|DOB|birth ?date)\s*[:=]?\s*\d{1,4}[/\-.]\d{1,2}[/\-.]\d{1,4}\b",
        "pii.identity",
        "high",
        "labeled date of birth",
    ),
    _p(
        "drivers_license",
        r"(?i)\b(?:driver'?s? licen[cs]e|DL)(?:\s*(?:number|no\.?|#))?\s*[:=#]\s*[A-Z0-9\-]{5,13}\b",
        "pii.government_id",
        "high",
        "labeled driver's license number",
    ),
    # -- malicious ---------------------------------------------------------
    _p(
        "sql_union_select",
        r"(?i)\bUNION(?:\s+ALL)?\s+SELECT\b",
        "malicious.injection",
        "high",
        "SQL UNION-based injection probe",
    ),
    _p(
        "sql_or_true",
        r"(?i)'\s*OR\s+'?1'?\s*=\s*'?1",
        "malicious.injection",
        "high",
        "SQL tautology injection probe",
    ),
    _p(
        "xss_script_tag",
        r"(?i)<script\b[^>]*>",
        "malicious.xss",
        "high",
        "inline script tag payload",
    ),
    _p(
        "xss_javascript_uri",
        r"(?i)\bjavascript:[^\s<>\"']{2,}",
        "malicious.xss",
        "medium",
        "javascript: URI payload",
    ),
    _p(
        "reverse_shell_bash",
        r"(?i)\bbash\s+-i\s+>&\s*/dev/tcp/",
        "malicious.shell",
        "critical",
        "bash reverse shell one-liner",
    ),
    _p(
        "netcat_shell",
        r"(?i)\b(?:nc|ncat|netcat)\b[^\n]{0,40}-e\s*/bin/(?:ba)?sh\b",
        "malicious.shell",
        "critical",
        "netcat shell execution",
    ),
    _p(
        "powershell_encoded",
        r"(?i)\bpowershell(?:\.exe)?\b[^\n]{0,80}?-enc(?:odedcommand)?\s+[A-Za-z0-9+/=]{16,}",
        "malicious.shell",
        "high",
        "encoded PowerShell command",
    ),
    _p(
        "ssti_probe",
        r"\{\{\s*(?:7\s*\*\s*7|config|self|request|''\.__class__)[^}]*\}\}",
        "malicious.ssti",
        "high",
        "server-side template injection probe",
    ),
    _p(
        "prompt_injection_override",
        r"(?i)\bignore\s+(?:all\s+|any\s+)?(?:previous|prior|above)\s+instructions\b",
        "malicious.prompt_injection",
        "high",
        "instruction-override prompt injection",
    ),
    _p(
        "path_traversal",
        r"(?:\.\./){2,}|(?:\.\.\\){2,}",
        "malicious.path_traversal",
        "medium",
        "repeated parent-directory traversal",
    ),
    _p(
        "log4shell_jndi",
        r"(?i)\$\{jndi:(?:ldaps?|rmi|dns|iiop|corba|nds|http)://",
        "malicious.exploit",
        "critical",
        "JNDI lookup exploit string",
    ),
    _p(
        "phishing_lure",
        r"(?i)\b(?:verify|confirm|re-?activate|unlock)\s+your\s+(?:account|password|identity|payment\s+(?:details|method))\b",
        "malicious.phishing",
        "high",
        "credential-phishing lure phrase",
    ),
    _p(
        "eicar_signature",
        r"X5O!P%@AP\[4\\PZX54\(P\^\)7CC\)7\}\$EICAR",
        "malicious.malware",
        "high",
        "EICAR antivirus test signature",
    ),
    _p(
        "ssrf_cloud_metadata",
        r"\bhttps?://169\.254\.169\.254\b|\bhttp://metadata\.google\.internal\b",
        "malicious.ssrf",
        "high",
        "cloud metadata endpoint probe",
    ),
    _p(
        "curl_pipe_shell",
        r"(?i)\b(?:curl|wget)\b[^\n|]{1,200}\|\s*(?:sudo\s+)?(?:ba|z|da)?sh\b",
        "malicious.supply_chain",
        "critical",
        "remote script piped into a shell",
    ),
    _p(
        "php_obfuscated_eval",
        r"(?i)\beval\s*\(\s*(?:base64_decode|gzinflate|str_rot13)\s*\(",
        "malicious.obfuscation",
        "high",
        "obfuscated eval payload",
    ),
)

BUILTIN_PATTERN_COUNT = 48


def builtin_pattern_set() -> PatternSet:
    return PatternSet(patterns=BUILTIN_PATTERNS, source="builtin")


def load_pattern_set(path: Union[str, Path]) -> PatternSet:
    """Read a pattern config: a JSON list of pattern entry objects."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PatternError(f"cannot load pattern config {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise PatternError(f"pattern config {path} must be a JSON list")
    patterns = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "id" not in entry or "expression" not in entry:
            raise PatternError(f"pattern config entry {i} needs 'id' and 'expression'")
        patterns.append(
            DetectionPattern(
                id=str(entry["id"]),
                expression=str(entry["expression"]),
                subcategory=str(entry.get("subcategory", "")),
                severity=str(entry.get("severity", "medium")),
                validator=str(entry.get("validator", "none")),
                description=str(entry.get("description", "")),
            )
        )
    return PatternSet(patterns=tuple(patterns), source=str(path))


def luhn_valid(digits: str) -> bool:
    """Mod-10 checksum over a digit string; spaces and hyphens are stripped."""
    cleaned = digits.replace(" ", "").replace("-", "")
    if len(cleaned) < 2:
        raise ValueError(f"need at least 2 digits, got {len(cleaned)}")
    if not cleaned.isdigit():
        raise ValueError(f"non-digit residue in {digits!r}")
    total = 0
    for i, ch in enumerate(reversed(cleaned)):
        d = int(ch)
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


@dataclass(frozen=True)
class CompiledRule:
    pattern: DetectionPattern
    regex: re.Pattern
    subcategory: SubcategoryId
    severity: Severity


class RegexEngine:
    """Immutable compiled pattern set; scan calls are thread-safe."""

    def __init__(self, rules: Sequence[CompiledRule], source: str):
        self.rules = tuple(rules)
        self.source = source

    def __len__(self) -> int:
        return len(self.rules)


def compile_patterns(
    pattern_set: Optional[PatternSet], registry: TaxonomyRegistry
) -> RegexEngine:
    """Validate and compile a pattern set against the registry."""
    if pattern_set is None:
        pattern_set = builtin_pattern_set()
    rules: list[CompiledRule] = []
    for pattern in pattern_set.patterns:
        try:
            regex = re.compile(pattern.expression)
        except re.error as exc:
            raise PatternError(
                f"pattern {pattern.id!r} does not compile: {exc}"
            ) from exc
        subcategory = registry.lookup(pattern.subcategory)
        if subcategory is None:
            raise PatternError(
                f"pattern {pattern.id!r} references unknown subcategory "
                f"{pattern.subcategory!r}"
            )
        try:
            severity = Severity(pattern.severity)
        except ValueError:
            raise PatternError(
                f"pattern {pattern.id!r} has unknown severity {pattern.severity!r}"
            ) from None
        if pattern.validator not in ("none", "luhn"):
            raise PatternError(
                f"pattern {pattern.id!r} has unknown validator {pattern.validator!r}"
            )
        rules.append(CompiledRule(pattern, regex, subcategory, severity))
    return RegexEngine(rules, pattern_set.source)


def scan_text(engine: RegexEngine, doc: SourceDocument) -> list[Finding]:
    """Run every rule over the document; validator failures yield nothing."""
    findings: list[Finding] = []
    for rule in engine.rules:
        for match in rule.regex.finditer(doc.text):
            matched = match.group(0)
            if rule.pattern.validator == "luhn":
                try:
                    if not luhn_valid(matched):
                        continue
                except ValueError:
                    continue
            findings.append(
                Finding(
                    category=rule.subcategory.category,
                    subcategory=rule.subcategory,
                    severity=rule.severity,
                    detectors=(DETECTOR_REGEX,),
                    explanation=rule.pattern.description,
                    evidence=mask_evidence(matched),
                    span=(match.start(), match.end()),
                    rule=rule.pattern.id,
                    subcategory_raw=rule.subcategory.canonical,
                )
            )
    findings.sort(key=lambda f: (f.span[0], f.rule))
    return findings

import type { FindingsSummary } from "./filters.js";
import type { SessionSnapshot } from "./session.js";
import type { FindingRow, Severity } from "./types.js";
import { SEVERITIES } from "./types.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderBanner(message: string): string {
  return `<div class="banner" role="alert">${escapeHtml(message)}</div>`;
}

export function renderProgress(snapshot: SessionSnapshot): string {
  const { done, total } = snapshot.progress;
  const label =
    snapshot.phase === "running"
      ? `scanning ${done}/${total} files`
      : snapshot.phase === "done"
        ? `done: ${total} files scanned`
        : `failed: ${escapeHtml(snapshot.error ?? "unknown error")}`;
  const percent = total > 0 ? Math.round((done / total) * 100) : 0;
  const gate =
    snapshot.exitCode !== null
      ? `<span class="gate gate-${snapshot.exitCode}">gate exit ${snapshot.exitCode}</span>`
      : "";
  return (
    `<div class="progress" data-phase="${snapshot.phase}">` +
    `<div class="progress-bar" style="width:${percent}%"></div>` +
    `<span class="progress-label">${label}</span>${gate}</div>`
  );
}

export function renderSeverityOptions(selected: Severity | null): string {
  const all = `<option value=""${selected === null ? " selected" : ""}>all severities</option>`;
  const rest = SEVERITIES.map(
    (severity) =>
      `<option value="${severity}"${severity === selected ? " selected" : ""}>&ge; ${severity}</option>`
  );
  return [all, ...rest].join("");
}

export function renderFacetOptions(
  categories: string[],
  selected: string | null
): string {
  const all = `<option value=""${selected === null ? " selected" : ""}>all categories</option>`;
  const rest = categories.map(
    (category) =>
      `<option value="${escapeHtml(category)}"${category === selected ? " selected" : ""}>${escapeHtml(category)}</option>`
  );
  return [all, ...rest].join("");
}

export function renderSummary(summary: FindingsSummary): string {
  const chips = SEVERITIES.filter(
    (severity) => summary.bySeverity[severity] > 0
  ).map(
    (severity) =>
      `<span class="chip chip-${severity}">${severity}: ${summary.bySeverity[severity]}</span>`
  );
  return (
    `<div class="summary"><span class="chip chip-total">findings: ${summary.total}</span>` +
    `${chips.join("")}<span class="chip">false positives: ${summary.byTriage.false_positive}</span></div>`
  );
}

export function renderEmptyState(): string {
  return '<p class="empty">No findings for the active filter.</p>';
}

function renderRow(row: FindingRow): string {
  const label = row.subcategory ?? row.category;
  const evidence = row.evidence ?? "";
  const detectors = row.detectors.join("+");
  return (
    `<tr data-finding-id="${escapeHtml(row.finding_id)}" data-triage="${row.triage}">` +
    `<td class="sev sev-${row.severity}">${row.severity}</td>` +
    `<td>${escapeHtml(label)}</td>` +
    `<td class="path">${escapeHtml(row.path)}</td>` +
    `<td>${escapeHtml(row.rule ?? detectors)}</td>` +
    `<td class="evidence">${escapeHtml(evidence)}</td>` +
    `<td class="triage">` +
    `<button data-verdict="confirmed" data-finding="${escapeHtml(row.finding_id)}">confirm</button>` +
    `<button data-verdict="false_positive" data-finding="${escapeHtml(row.finding_id)}">false positive</button>` +
    `</td></tr>`
  );
}

export function renderFindingsTable(rows: FindingRow[]): string {
  if (rows.length === 0) {
    return renderEmptyState();
  }
  const header =
    "<thead><tr><th>severity</th><th>label</th><th>path</th>" +
    "<th>rule</th><th>evidence</th><th>triage</th></tr></thead>";
  const body = rows.map(renderRow).join("");
  return `<table class="findings">${header}<tbody>${body}</tbody></table>`;
}

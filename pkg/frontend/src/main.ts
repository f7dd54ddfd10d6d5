import { ApiError, ServeClient } from "./api.js";
import {
  applyFilters,
  categoryFacets,
  emptyFilter,
  sortRows,
  summarize,
  type FilterState,
  type SortKey,
} from "./filters.js";
import {
  renderBanner,
  renderFacetOptions,
  renderFindingsTable,
  renderProgress,
  renderSeverityOptions,
  renderSummary,
} from "./render.js";
import { ScanSession, type SessionSnapshot } from "./session.js";
import type {
  ReportFormat,
  ScanForm,
  Severity,
  TriageVerdict,
} from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
};

let client: ServeClient | null = null;
let session: ScanSession | null = null;
let snapshot: SessionSnapshot | null = null;
let filter: FilterState = emptyFilter();
let sortKey: SortKey = "severity";

function setBanner(message: string | null): void {
  $("banner").innerHTML = message === null ? "" : renderBanner(message);
}

function redraw(): void {
  if (snapshot === null) {
    return;
  }
  $("progress").innerHTML = renderProgress(snapshot);
  const rows = sortRows(applyFilters(snapshot.findings, filter), sortKey);
  $("summary").innerHTML = renderSummary(summarize(rows));
  $("table").innerHTML = renderFindingsTable(rows);
  ($("export-controls") as HTMLElement).hidden = snapshot.phase !== "done";
}

async function connect(): Promise<ServeClient> {
  const base = ($("endpoint") as unknown as HTMLInputElement).value.trim();
  const fresh = new ServeClient(base);
  const taxonomy = await fresh.taxonomy();
  $("category-filter").innerHTML = renderFacetOptions(
    categoryFacets(taxonomy),
    filter.category
  );
  return fresh;
}

async function launch(event: Event): Promise<void> {
  event.preventDefault();
  setBanner(null);
  const form: ScanForm = {
    root: ($("root") as unknown as HTMLInputElement).value.trim(),
    mode: ($("mode") as unknown as HTMLSelectElement)
      .value as ScanForm["mode"],
    failOn:
      (($("fail-on") as unknown as HTMLSelectElement).value as Severity) ||
      null,
  };
  try {
    client = await connect();
    session = await ScanSession.launch(client, form);
    snapshot = session.snapshot();
    redraw();
    await session.run((update) => {
      snapshot = update;
      redraw();
    });
  } catch (error) {
    const message =
      error instanceof ApiError || error instanceof Error
        ? error.message
        : String(error);
    setBanner(message);
  }
}

async function triage(findingId: string, verdict: TriageVerdict): Promise<void> {
  if (session === null) {
    return;
  }
  try {
    snapshot = await session.triage(findingId, verdict);
    redraw();
  } catch (error) {
    setBanner(error instanceof Error ? error.message : String(error));
  }
}

async function exportReport(): Promise<void> {
  if (client === null || session === null) {
    return;
  }
  const format = ($("export-format") as unknown as HTMLSelectElement)
    .value as ReportFormat;
  const exclude = ($("export-exclude") as unknown as HTMLInputElement).checked;
  try {
    const body =
      format === "json"
        ? JSON.stringify(await client.report(session.jobId, "json", exclude), null, 2)
        : await client.report(session.jobId, format as "sarif" | "html", exclude);
    const types: Record<ReportFormat, string> = {
      json: "application/json",
      sarif: "application/json",
      html: "text/html",
    };
    const blob = new Blob([body], { type: types[format] });
    const url = URL.createObjectURL(blob);
    const anchor = document.createElement("a");
    anchor.href = url;
    anchor.download = `report.${format === "sarif" ? "sarif" : format}`;
    anchor.click();
    URL.revokeObjectURL(url);
  } catch (error) {
    setBanner(error instanceof Error ? error.message : String(error));
  }
}

export function wire(): void {
  $("scan-form").addEventListener("submit", (event) => {
    void launch(event);
  });
  $("severity-filter").innerHTML = renderSeverityOptions(filter.minSeverity);
  $("severity-filter").addEventListener("change", (event) => {
    const value = (event.target as HTMLSelectElement).value;
    filter = { ...filter, minSeverity: (value || null) as Severity | null };
    redraw();
  });
  $("category-filter").addEventListener("change", (event) => {
    const value = (event.target as HTMLSelectElement).value;
    filter = { ...filter, category: value || null };
    redraw();
  });
  $("path-filter").addEventListener("input", (event) => {
    filter = {
      ...filter,
      pathQuery: (event.target as HTMLInputElement).value,
    };
    redraw();
  });
  $("sort-key").addEventListener("change", (event) => {
    sortKey = (event.target as HTMLSelectElement).value as SortKey;
    redraw();
  });
  $("table").addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest("button[data-verdict]");
    if (button instanceof HTMLButtonElement) {
      void triage(
        button.dataset.finding ?? "",
        button.dataset.verdict as TriageVerdict
      );
    }
  });
  $("export-button").addEventListener("click", () => {
    void exportReport();
  });
}

if (typeof document !== "undefined" && document.getElementById("scan-form")) {
  wire();
}

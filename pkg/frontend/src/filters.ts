import type {
  FindingRow,
  ReportDocument,
  Severity,
  Taxonomy,
  TriageVerdict,
} from "./types.js";
import { SEVERITIES, severityRank } from "./types.js";

export interface FilterState {
  minSeverity: Severity | null;
  category: string | null;
  pathQuery: string;
}

export const emptyFilter = (): FilterState => ({
  minSeverity: null,
  category: null,
  pathQuery: "",
});

export function applyFilters(
  rows: FindingRow[],
  filter: FilterState
): FindingRow[] {
  const minRank =
    filter.minSeverity === null ? null : severityRank(filter.minSeverity);
  const query = filter.pathQuery.trim().toLowerCase();
  return rows.filter((row) => {
    if (minRank !== null && severityRank(row.severity) < minRank) {
      return false;
    }
    if (filter.category !== null && row.category !== filter.category) {
      return false;
    }
    if (query !== "" && !row.path.toLowerCase().includes(query)) {
      return false;
    }
    return true;
  });
}

export interface FindingsSummary {
  total: number;
  bySeverity: Record<Severity, number>;
  byCategory: Record<string, number>;
  byTriage: Record<TriageVerdict, number>;
}

/** Counts shown anywhere are recomputed from the rows, never trusted from elsewhere. */
export function summarize(rows: FindingRow[]): FindingsSummary {
  const bySeverity = Object.fromEntries(
    SEVERITIES.map((severity) => [severity, 0])
  ) as Record<Severity, number>;
  const byCategory: Record<string, number> = {};
  const byTriage: Record<TriageVerdict, number> = {
    unreviewed: 0,
    confirmed: 0,
    false_positive: 0,
  };
  for (const row of rows) {
    bySeverity[row.severity] += 1;
    byCategory[row.category] = (byCategory[row.category] ?? 0) + 1;
    byTriage[row.triage] += 1;
  }
  return { total: rows.length, bySeverity, byCategory, byTriage };
}

/** Facets come from the taxonomy endpoint, never a hardcoded list. */
export function categoryFacets(taxonomy: Taxonomy): string[] {
  return Object.keys(taxonomy.categories);
}

export type SortKey = "severity" | "label" | "path";

export function sortRows(
  rows: FindingRow[],
  key: SortKey,
  descending = false
): FindingRow[] {
  const value = (row: FindingRow): string | number => {
    if (key === "severity") {
      // ascending sort puts the most severe first
      return -severityRank(row.severity);
    }
    if (key === "label") {
      return `${row.category}.${row.subcategory ?? ""}`;
    }
    return row.path;
  };
  const sorted = [...rows].sort((a, b) => {
    const va = value(a);
    const vb = value(b);
    return va < vb ? -1 : va > vb ? 1 : 0;
  });
  return descending ? sorted.reverse() : sorted;
}

/** Finding count recomputed from the raw report body. */
export function reportFindingCount(report: ReportDocument): number {
  return report.results.reduce(
    (total, result) => total + result.findings.length,
    0
  );
}

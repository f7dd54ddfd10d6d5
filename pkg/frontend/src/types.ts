export type Severity = "critical" | "high" | "medium" | "low" | "info";
export type ScanMode = "regex_only" | "llm_only" | "hybrid";
export type JobState = "queued" | "running" | "done" | "error";
export type TriageVerdict = "unreviewed" | "confirmed" | "false_positive";
export type ReportFormat = "json" | "sarif" | "html";

export const SEVERITIES: readonly Severity[] = [
  "critical",
  "high",
  "medium",
  "low",
  "info",
];

const SEVERITY_RANK: Record<Severity, number> = {
  critical: 4,
  high: 3,
  medium: 2,
  low: 1,
  info: 0,
};

export function severityRank(severity: Severity): number {
  return SEVERITY_RANK[severity];
}

export interface Taxonomy {
  version: string;
  total: number;
  categories: Record<string, string[]>;
}

export interface TaxonomyResponse {
  schema_version: string;
  taxonomy: Taxonomy;
}

export interface ScanForm {
  root: string;
  mode: ScanMode;
  failOn?: Severity | null;
  ignore?: string[];
}

export interface JobProgress {
  done: number;
  total: number;
}

export interface JobStatus {
  schema_version: string;
  job_id: string;
  state: JobState;
  progress: JobProgress;
  error: string | null;
  exit_code?: number;
}

export interface FindingRow {
  finding_id: string;
  path: string;
  category: string;
  subcategory: string | null;
  severity: Severity;
  detectors: string[];
  rule: string | null;
  span: number[] | null;
  evidence: string | null;
  explanation: string | null;
  triage: TriageVerdict;
}

export interface FindingsResponse {
  schema_version: string;
  job_id: string;
  state: JobState;
  findings: FindingRow[];
}

export interface TriageAck {
  schema_version: string;
  job_id: string;
  finding_id: string;
  triage: TriageVerdict;
}

export interface ReportSummary {
  findings_by_category: Record<string, number>;
  findings_by_severity: Record<string, number>;
  files_by_primary_category: Record<string, number>;
}

export interface ReportResult {
  path: string;
  status: string;
  primary_category: string | null;
  primary_subcategory: string | null;
  findings: unknown[];
}

export interface ReportDocument {
  report_schema: string;
  tool: {
    name: string;
    version: string;
    taxonomy_version: string;
    prompt_hash: string | null;
  };
  started: string | null;
  finished: string | null;
  scanned_files: number;
  skipped_files: number;
  error_files: number;
  summary: ReportSummary;
  results: ReportResult[];
}

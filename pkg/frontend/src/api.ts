import type {
  FindingsResponse,
  JobStatus,
  ReportDocument,
  ReportFormat,
  ScanForm,
  Severity,
  Taxonomy,
  TaxonomyResponse,
  TriageAck,
  TriageVerdict,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit
) => Promise<Response>;

const LOOPBACK_HOSTS = new Set(["localhost", "127.0.0.1", "[::1]"]);

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

/** The serve origin must stay on loopback; remote origins are refused outright. */
export function assertLoopbackOrigin(baseUrl: string): string {
  let parsed: URL;
  try {
    parsed = new URL(baseUrl);
  } catch {
    throw new Error(`invalid serve URL: ${baseUrl}`);
  }
  if (parsed.protocol !== "http:" && parsed.protocol !== "https:") {
    throw new Error(`serve URL must be http(s), got ${parsed.protocol}`);
  }
  if (!LOOPBACK_HOSTS.has(parsed.hostname)) {
    throw new Error(
      `serve endpoint must be a loopback address, got ${parsed.hostname}`
    );
  }
  return parsed.origin;
}

async function errorFrom(response: Response): Promise<ApiError> {
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as {
      error?: unknown;
      detail?: unknown;
    };
    if (typeof body.error === "string") {
      message = body.error;
    } else if (typeof body.detail === "string") {
      message = body.detail;
    } else if (body.detail !== undefined) {
      message = JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(response.status, message);
}

export interface FindingsFilter {
  severity?: Severity;
  category?: string;
}

export class ServeClient {
  readonly origin: string;
  private readonly fetchLike: FetchLike;

  constructor(baseUrl: string, fetchLike?: FetchLike) {
    this.origin = assertLoopbackOrigin(baseUrl);
    this.fetchLike = fetchLike ?? ((input, init) => fetch(input, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchLike(`${this.origin}${path}`);
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchLike(`${this.origin}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return (await response.json()) as T;
  }

  async taxonomy(): Promise<Taxonomy> {
    const payload = await this.getJson<TaxonomyResponse>("/taxonomy");
    return payload.taxonomy;
  }

  async submitScan(form: ScanForm): Promise<string> {
    const body: Record<string, unknown> = { root: form.root, mode: form.mode };
    if (form.failOn) {
      body.fail_on = form.failOn;
    }
    if (form.ignore && form.ignore.length > 0) {
      body.ignore = form.ignore;
    }
    const payload = await this.postJson<{ job_id: string }>("/scan", body);
    return payload.job_id;
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    return this.getJson<JobStatus>(`/scan/${jobId}`);
  }

  async findings(
    jobId: string,
    filter: FindingsFilter = {}
  ): Promise<FindingsResponse> {
    const params = new URLSearchParams();
    if (filter.severity) {
      params.set("severity", filter.severity);
    }
    if (filter.category) {
      params.set("category", filter.category);
    }
    const query = params.toString();
    return this.getJson<FindingsResponse>(
      `/scan/${jobId}/findings${query ? `?${query}` : ""}`
    );
  }

  async triage(
    jobId: string,
    findingId: string,
    verdict: TriageVerdict
  ): Promise<TriageAck> {
    return this.postJson<TriageAck>(
      `/scan/${jobId}/findings/${findingId}/triage`,
      { verdict }
    );
  }

  async report(
    jobId: string,
    format: "json",
    excludeFalsePositives?: boolean
  ): Promise<ReportDocument>;
  async report(
    jobId: string,
    format: "sarif" | "html",
    excludeFalsePositives?: boolean
  ): Promise<string>;
  async report(
    jobId: string,
    format: ReportFormat,
    excludeFalsePositives = false
  ): Promise<ReportDocument | string> {
    const params = new URLSearchParams({ format });
    if (excludeFalsePositives) {
      params.set("exclude", "false_positive");
    }
    const response = await this.fetchLike(
      `${this.origin}/scan/${jobId}/report?${params.toString()}`
    );
    if (!response.ok) {
      throw await errorFrom(response);
    }
    if (format === "json") {
      return (await response.json()) as ReportDocument;
    }
    return response.text();
  }
}

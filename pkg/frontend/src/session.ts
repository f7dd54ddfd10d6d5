import { ApiError, ServeClient } from "./api.js";
import type {
  FindingRow,
  JobProgress,
  JobState,
  ScanForm,
  TriageVerdict,
} from "./types.js";

export type SessionPhase = "running" | "done" | "error";

export interface SessionSnapshot {
  jobId: string;
  phase: SessionPhase;
  jobState: JobState;
  progress: JobProgress;
  findings: FindingRow[];
  error: string | null;
  exitCode: number | null;
  config: ScanForm;
}

export interface SessionOptions {
  pollIntervalMs?: number;
  maxBackoffMs?: number;
  maxTransportRetries?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ScanSession {
  readonly jobId: string;
  private readonly client: ServeClient;
  private readonly config: ScanForm;
  private readonly pollIntervalMs: number;
  private readonly maxBackoffMs: number;
  private readonly maxTransportRetries: number;
  private readonly sleep: (ms: number) => Promise<void>;

  private phase: SessionPhase = "running";
  private jobState: JobState = "queued";
  private progress: JobProgress = { done: 0, total: 0 };
  private findings: FindingRow[] = [];
  private lastError: string | null = null;
  private exitCode: number | null = null;
  private pollInFlight = false;
  // serializes triage posts; each new verdict waits for the previous ack
  private triageChain: Promise<unknown> = Promise.resolve();

  private constructor(
    client: ServeClient,
    config: ScanForm,
    jobId: string,
    options: SessionOptions
  ) {
    this.client = client;
    this.config = config;
    this.jobId = jobId;
    this.pollIntervalMs = options.pollIntervalMs ?? 1000;
    this.maxBackoffMs = options.maxBackoffMs ?? 8000;
    this.maxTransportRetries = options.maxTransportRetries ?? 5;
    this.sleep = options.sleep ?? defaultSleep;
  }

  /** Submit the scan; a 4xx bubbles up with the server's message verbatim. */
  static async launch(
    client: ServeClient,
    form: ScanForm,
    options: SessionOptions = {}
  ): Promise<ScanSession> {
    const jobId = await client.submitScan(form);
    return new ScanSession(client, form, jobId, options);
  }

  snapshot(): SessionSnapshot {
    return {
      jobId: this.jobId,
      phase: this.phase,
      jobState: this.jobState,
      progress: { ...this.progress },
      findings: this.findings.map((row) => ({ ...row })),
      error: this.lastError,
      exitCode: this.exitCode,
      config: { ...this.config },
    };
  }

  /** One poll step: job state plus a findings refresh. Never overlaps itself. */
  async poll(): Promise<SessionSnapshot> {
    if (this.pollInFlight || this.phase !== "running") {
      return this.snapshot();
    }
    this.pollInFlight = true;
    try {
      const status = await this.client.jobStatus(this.jobId);
      this.jobState = status.state;
      this.progress = { ...status.progress };
      this.exitCode = status.exit_code ?? null;
      const page = await this.client.findings(this.jobId);
      this.findings = page.findings;
      if (status.state === "done") {
        this.phase = "done";
      } else if (status.state === "error") {
        this.phase = "error";
        this.lastError = status.error ?? "scan failed";
      }
      return this.snapshot();
    } finally {
      this.pollInFlight = false;
    }
  }

  /**
   * Poll to completion at the base cadence, doubling the delay on transport
   * failure up to a bounded retry budget; an API error ends the session.
   */
  async run(
    onUpdate?: (snapshot: SessionSnapshot) => void
  ): Promise<SessionSnapshot> {
    let transportFailures = 0;
    let delay = this.pollIntervalMs;
    while (this.phase === "running") {
      try {
        const snapshot = await this.poll();
        transportFailures = 0;
        delay = this.pollIntervalMs;
        if (this.phase === "running") {
          onUpdate?.(snapshot);
        }
      } catch (error) {
        if (error instanceof ApiError) {
          this.phase = "error";
          this.lastError = error.message;
          break;
        }
        transportFailures += 1;
        if (transportFailures >= this.maxTransportRetries) {
          this.phase = "error";
          this.lastError =
            "serve unreachable: polling gave up after repeated failures";
          break;
        }
        delay = Math.min(delay * 2, this.maxBackoffMs);
      }
      if (this.phase === "running") {
        await this.sleep(delay);
      }
    }
    const final = this.snapshot();
    onUpdate?.(final);
    return final;
  }

  /** FIFO: a second verdict waits for the first ack before posting. */
  async triage(
    findingId: string,
    verdict: TriageVerdict
  ): Promise<SessionSnapshot> {
    const next = this.triageChain.then(async () => {
      const ack = await this.client.triage(this.jobId, findingId, verdict);
      this.findings = this.findings.map((row) =>
        row.finding_id === ack.finding_id
          ? { ...row, triage: ack.triage }
          : row
      );
    });
    // keep the chain alive after a failed post
    this.triageChain = next.catch(() => undefined);
    await next;
    return this.snapshot();
  }
}

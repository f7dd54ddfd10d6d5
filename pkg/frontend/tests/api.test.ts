import { describe, expect, it } from "vitest";

import {
  ApiError,
  ServeClient,
  assertLoopbackOrigin,
  type FetchLike,
} from "../src/api.js";

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function recordingFetch(
  responder: (url: string, init?: RequestInit) => Response
): { fetchLike: FetchLike; calls: Array<{ url: string; init?: RequestInit }> } {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchLike: FetchLike = (url, init) => {
    calls.push({ url, init });
    return Promise.resolve(responder(url, init));
  };
  return { fetchLike, calls };
}

describe("assertLoopbackOrigin", () => {
  it("accepts localhost, 127.0.0.1, and [::1]", () => {
    expect(assertLoopbackOrigin("http://localhost:8300")).toBe(
      "http://localhost:8300"
    );
    expect(assertLoopbackOrigin("http://127.0.0.1:8300/")).toBe(
      "http://127.0.0.1:8300"
    );
    expect(assertLoopbackOrigin("http://[::1]:8300")).toBe("http://[::1]:8300");
  });

  it("refuses remote and malformed origins", () => {
    expect(() => assertLoopbackOrigin("http://10.0.0.5:8300")).toThrow(
      /loopback/
    );
    expect(() => assertLoopbackOrigin("http://example.com")).toThrow(
      /loopback/
    );
    expect(() => assertLoopbackOrigin("ftp://127.0.0.1")).toThrow(/http/);
    expect(() => assertLoopbackOrigin("not a url")).toThrow(/invalid/);
  });
});

describe("ServeClient", () => {
  it("unwraps the taxonomy envelope", async () => {
    const { fetchLike, calls } = recordingFetch(() =>
      jsonResponse({
        schema_version: "1",
        taxonomy: { version: "builtin-1", total: 2, categories: { pii: ["contact", "identity"] } },
      })
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    const taxonomy = await client.taxonomy();
    expect(taxonomy.total).toBe(2);
    expect(calls[0]!.url).toBe("http://127.0.0.1:9/taxonomy");
  });

  it("posts scan forms with API field names and returns the job id", async () => {
    const { fetchLike, calls } = recordingFetch(() =>
      jsonResponse({ schema_version: "1", job_id: "j1" }, 202)
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    const jobId = await client.submitScan({
      root: "/tmp/tree",
      mode: "hybrid",
      failOn: "high",
      ignore: ["*.env"],
    });
    expect(jobId).toBe("j1");
    const body = JSON.parse(String(calls[0]!.init?.body));
    expect(body).toEqual({
      root: "/tmp/tree",
      mode: "hybrid",
      fail_on: "high",
      ignore: ["*.env"],
    });
  });

  it("omits optional fields the form left empty", async () => {
    const { fetchLike, calls } = recordingFetch(() =>
      jsonResponse({ schema_version: "1", job_id: "j2" }, 202)
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    await client.submitScan({ root: "/tmp/tree", mode: "regex_only" });
    const body = JSON.parse(String(calls[0]!.init?.body));
    expect(body).toEqual({ root: "/tmp/tree", mode: "regex_only" });
  });

  it("surfaces the server error message verbatim as ApiError", async () => {
    const { fetchLike } = recordingFetch(() =>
      jsonResponse(
        { schema_version: "1", error: "root is not a readable directory: /nope" },
        400
      )
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    const failure = await client
      .submitScan({ root: "/nope", mode: "regex_only" })
      .catch((error: unknown) => error);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(400);
    expect((failure as ApiError).message).toBe(
      "root is not a readable directory: /nope"
    );
  });

  it("falls back to the status line on a non-JSON error body", async () => {
    const { fetchLike } = recordingFetch(
      () => new Response("boom", { status: 502 })
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    const failure = await client.jobStatus("j1").catch((error: unknown) => error);
    expect((failure as ApiError).message).toBe("HTTP 502");
  });

  it("encodes findings filters as query parameters", async () => {
    const { fetchLike, calls } = recordingFetch(() =>
      jsonResponse({ schema_version: "1", job_id: "j1", state: "done", findings: [] })
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    await client.findings("j1");
    await client.findings("j1", { severity: "high", category: "pii" });
    expect(calls[0]!.url).toBe("http://127.0.0.1:9/scan/j1/findings");
    expect(calls[1]!.url).toBe(
      "http://127.0.0.1:9/scan/j1/findings?severity=high&category=pii"
    );
  });

  it("requests report exports with format and exclude parameters", async () => {
    const { fetchLike, calls } = recordingFetch((url) =>
      url.includes("format=json")
        ? jsonResponse({ report_schema: "1", results: [] })
        : new Response("<!DOCTYPE html><html></html>", { status: 200 })
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    const report = await client.report("j1", "json", true);
    expect(report.report_schema).toBe("1");
    const html = await client.report("j1", "html");
    expect(html.startsWith("<!DOCTYPE html>")).toBe(true);
    expect(calls[0]!.url).toBe(
      "http://127.0.0.1:9/scan/j1/report?format=json&exclude=false_positive"
    );
    expect(calls[1]!.url).toBe("http://127.0.0.1:9/scan/j1/report?format=html");
  });

  it("posts triage verdicts and surfaces 404s", async () => {
    const { fetchLike, calls } = recordingFetch((url) =>
      url.endsWith("/ghost/triage")
        ? jsonResponse({ schema_version: "1", error: "unknown finding id: ghost" }, 404)
        : jsonResponse({
            schema_version: "1",
            job_id: "j1",
            finding_id: "f1",
            triage: "false_positive",
          })
    );
    const client = new ServeClient("http://127.0.0.1:9", fetchLike);
    const ack = await client.triage("j1", "f1", "false_positive");
    expect(ack.triage).toBe("false_positive");
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual({
      verdict: "false_positive",
    });
    const failure = await client
      .triage("j1", "ghost", "confirmed")
      .catch((error: unknown) => error);
    expect((failure as ApiError).status).toBe(404);
    expect((failure as ApiError).message).toBe("unknown finding id: ghost");
  });
});

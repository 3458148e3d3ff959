import { afterEach, describe, expect, it, vi } from "vitest";

import { Client, ServiceError } from "../src/api.js";

function mockFetch(status: number, body: unknown): void {
  vi.stubGlobal(
    "fetch",
    vi.fn(async () => new Response(JSON.stringify(body), { status })),
  );
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("client", () => {
  it("posts the generate body as-is and parses the response", async () => {
    mockFetch(200, { seed: 5, layouts: [] });
    const client = new Client("http://svc");
    const req = { n_components: 2, condition: [{ index: 0, class: "text" }], seed: 5 };
    const res = await client.generate(req);
    expect(res.seed).toBe(5);

    const fetchMock = fetch as unknown as ReturnType<typeof vi.fn>;
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("http://svc/generate");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual(req);
  });

  it("surfaces 400s as field-level errors", async () => {
    mockFetch(400, { error: "unknown class 'banner'", field: "condition[0].class" });
    const client = new Client();
    const err = await client
      .generate({ n_components: 1, condition: [{ index: 0, class: "banner" }] })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).status).toBe(400);
    expect((err as ServiceError).field).toBe("condition[0].class");
    expect((err as ServiceError).message).toContain("banner");
  });

  it("flags an unreachable service with status 0", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new TypeError("ECONNREFUSED");
    }));
    const client = new Client();
    const err = await client.health().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).status).toBe(0);
  });

  it("sends score requests with optional reference", async () => {
    mockFetch(200, { scores: [] });
    const client = new Client();
    const layout = { canvas: [100, 100] as [number, number], components: [] };
    await client.score([layout], [layout]);
    const fetchMock = fetch as unknown as ReturnType<typeof vi.fn>;
    const body = JSON.parse(fetchMock.mock.calls[0][1].body as string);
    expect(body).toHaveProperty("layouts");
    expect(body).toHaveProperty("reference");
  });
});

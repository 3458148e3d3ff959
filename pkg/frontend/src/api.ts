/** Typed fetch client for the inference service. */

import {
  ApiError,
  GenerateRequest,
  GenerateResponse,
  HealthInfo,
  SchemaInfo,
  ScoreRow,
  WireLayout,
} from "./types.js";

export class ServiceError extends Error {
  status: number;
  field?: string;

  constructor(status: number, body: ApiError | string) {
    const message = typeof body === "string" ? body : body.error;
    super(message);
    this.status = status;
    if (typeof body !== "string" && body.field) {
      this.field = body.field;
    }
  }
}

export class Client {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await fetch(this.base + path, init);
    } catch (err) {
      throw new ServiceError(0, `service unreachable: ${String(err)}`);
    }
    const text = await res.text();
    let body: unknown = text;
    try {
      body = JSON.parse(text);
    } catch {
      /* non-JSON error body; keep the raw text */
    }
    if (!res.ok) {
      throw new ServiceError(res.status, body as ApiError | string);
    }
    return body as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  schema(): Promise<SchemaInfo> {
    return this.request<SchemaInfo>("/schema");
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.request<GenerateResponse>("/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  score(layouts: WireLayout[], reference?: WireLayout[]): Promise<{ scores: ScoreRow[] }> {
    return this.request<{ scores: ScoreRow[] }>("/score", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(reference ? { layouts, reference } : { layouts }),
    });
  }
}

import type {
  ClientView,
  DomainView,
  FileView,
  Identity,
  ProcessView,
  RequestDetail,
  RequestSummary,
  RoomView,
  RunView,
  SubmitSpec,
} from "./types";

/** Error raised for any non-2xx API response, carrying the server's verdict. */
export class ApiError extends Error {
  readonly status: number;
  readonly kind: string;

  constructor(status: number, kind: string, detail: string) {
    super(detail || kind || `HTTP ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.kind = kind;
  }
}

/** Encode raw bytes as base64 without blowing the call-stack on large files. */
export function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

/**
 * Thin typed wrapper over the manager's REST endpoints.  It never caches:
 * every view the UI renders comes from a fresh response.
 */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string;

  constructor(token: string, baseUrl = "") {
    this.token = token;
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      throw await this.asError(response);
    }
    return (await response.json()) as T;
  }

  private async asError(response: Response): Promise<ApiError> {
    let kind = "";
    let detail = "";
    try {
      const payload = await response.json();
      kind = typeof payload.error === "string" ? payload.error : "";
      detail = typeof payload.detail === "string" ? payload.detail : "";
    } catch {
      // Non-JSON error body; the status code is all we have.
    }
    return new ApiError(response.status, kind, detail);
  }

  me(): Promise<Identity> {
    return this.request<Identity>("GET", "/api/v1/me");
  }

  async listClients(): Promise<ClientView[]> {
    const data = await this.request<{ clients: ClientView[] }>("GET", "/api/v1/clients");
    return data.clients;
  }

  async listRooms(): Promise<RoomView[]> {
    const data = await this.request<{ rooms: RoomView[] }>("GET", "/api/v1/rooms");
    return data.rooms;
  }

  async createRoom(name: string, restricted: boolean, members: string[]): Promise<number> {
    const data = await this.request<{ room_id: number }>("POST", "/api/v1/rooms", {
      name,
      visibility: restricted ? "restricted" : "public",
      member_users: members,
    });
    return data.room_id;
  }

  async assignClient(roomId: number, clientId: number): Promise<void> {
    await this.request("POST", `/api/v1/rooms/${roomId}/assign`, { client_id: clientId });
  }

  async listDomains(): Promise<DomainView[]> {
    const data = await this.request<{ domains: DomainView[] }>("GET", "/api/v1/domains");
    return data.domains;
  }

  async createDomain(
    name: string,
    buildRecipe: string,
    dependencyManifest: string,
    store: boolean,
  ): Promise<number> {
    const data = await this.request<{ domain_id: number }>("POST", "/api/v1/domains", {
      name,
      build_recipe: buildRecipe,
      dependency_manifest: dependencyManifest,
      store,
    });
    return data.domain_id;
  }

  async approveDomain(domainId: number, approved: boolean): Promise<void> {
    await this.request("POST", `/api/v1/domains/${domainId}/approve`, { approved });
  }

  async listProcesses(): Promise<ProcessView[]> {
    const data = await this.request<{ processes: ProcessView[] }>("GET", "/api/v1/processes");
    return data.processes;
  }

  async createProcess(
    name: string,
    entryCommand: string,
    payloadFilename: string,
    payload: Uint8Array,
  ): Promise<number> {
    const data = await this.request<{ process_id: number }>("POST", "/api/v1/processes", {
      name,
      entry_command: entryCommand,
      payload_kind: payloadFilename.toLowerCase().endsWith(".zip") ? "archive" : "single",
      payload_filename: payloadFilename,
      payload_b64: toBase64(payload),
    });
    return data.process_id;
  }

  async listFiles(): Promise<FileView[]> {
    const data = await this.request<{ files: FileView[] }>("GET", "/api/v1/files");
    return data.files;
  }

  async uploadFile(name: string, content: Uint8Array): Promise<number> {
    const data = await this.request<{ file_id: number }>("POST", "/api/v1/files", {
      name,
      content_b64: toBase64(content),
    });
    return data.file_id;
  }

  async listRequests(): Promise<RequestSummary[]> {
    const data = await this.request<{ requests: RequestSummary[] }>("GET", "/api/v1/requests");
    return data.requests;
  }

  getRequest(requestId: number): Promise<RequestDetail> {
    return this.request<RequestDetail>("GET", `/api/v1/requests/${requestId}`);
  }

  async submitRequest(spec: SubmitSpec): Promise<number> {
    const data = await this.request<{ request_id: number }>("POST", "/api/v1/requests", spec);
    return data.request_id;
  }

  async cancelRequest(requestId: number): Promise<void> {
    await this.request("POST", `/api/v1/requests/${requestId}/cancel`);
  }

  private async fetchBytes(path: string): Promise<Blob> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      headers: { Authorization: `Bearer ${this.token}` },
    });
    if (!response.ok) {
      throw await this.asError(response);
    }
    return response.blob();
  }

  requestBundle(requestId: number): Promise<Blob> {
    return this.fetchBytes(`/api/v1/requests/${requestId}/bundle`);
  }

  runBundle(runId: number): Promise<Blob> {
    return this.fetchBytes(`/api/v1/runs/${runId}/bundle`);
  }
}

export type { RunView };

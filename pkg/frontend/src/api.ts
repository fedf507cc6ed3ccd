export type DocumentRow = {
  document_id: string;
  title: string;
  format: string;
  chunk_count: number;
  table_count: number;
  degraded?: boolean;
};

export type StudySummary = {
  study_id: string;
  asset_name: string;
  asset_description: string;
  selected_document_ids: string[];
  current_step: string;
  created_at: string;
};

export type Provenance = {
  origin: "Generated" | "UserAdded" | "UserEdited";
  source_chunk_ids: string[];
};

export type TaskNode = { node_id: string; description: string; provenance: Provenance };
export type InfluenceNode = {
  node_id: string;
  name: string;
  provenance: Provenance;
  tasks: TaskNode[];
};
export type MechanismNode = {
  node_id: string;
  name: string;
  provenance: Provenance;
  influences: InfluenceNode[];
};
export type LocationNode = {
  node_id: string;
  name: string;
  provenance: Provenance;
  mechanisms: MechanismNode[];
};

export type Tree = {
  boundary: { functional_overview: string; main_parts: string[] };
  locations: LocationNode[];
};

export type StepResult = {
  step: string;
  items: string[];
  raw_response: string;
  context_refs: string[];
  parent_node_id: string | null;
};

export type EditOpInput = {
  kind: "AddItem" | "RemoveItem" | "RenameItem";
  target?: string;
  new_text?: string;
};

type ErrorBody = { code: string; message: string; details: Record<string, unknown> };

/**
 * Error raised for every failed request. `status` is 0 when the service
 * could not be reached at all, which the views treat as retryable.
 */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(private baseUrl = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let res: Response;
    try {
      res = await fetch(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch {
      throw new ApiError(0, "UNREACHABLE", "The API service could not be reached.");
    }
    if (!res.ok) {
      let parsed: Partial<ErrorBody> = {};
      try {
        parsed = (await res.json()) as ErrorBody;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(
        res.status,
        parsed.code ?? "UNKNOWN",
        parsed.message ?? `request failed with status ${res.status}`,
        parsed.details ?? {},
      );
    }
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.request("GET", "/health");
  }

  uploadDocument(title: string, content: string, format: string): Promise<DocumentRow> {
    return this.request("POST", "/documents", { title, content, format });
  }

  async listDocuments(): Promise<DocumentRow[]> {
    const res = await this.request<{ documents: DocumentRow[] }>("GET", "/documents");
    return res.documents;
  }

  createStudy(
    assetName: string,
    assetDescription: string,
    documentIds: string[],
  ): Promise<StudySummary> {
    return this.request("POST", "/studies", {
      asset_name: assetName,
      asset_description: assetDescription,
      document_ids: documentIds,
    });
  }

  async listStudies(): Promise<StudySummary[]> {
    const res = await this.request<{ studies: StudySummary[] }>("GET", "/studies");
    return res.studies;
  }

  getStudy(studyId: string): Promise<{ study: StudySummary; tree: Tree | null }> {
    return this.request("GET", `/studies/${studyId}`);
  }

  async getTree(studyId: string): Promise<Tree | null> {
    const res = await this.request<{ tree: Tree | null }>("GET", `/studies/${studyId}/tree`);
    return res.tree;
  }

  generate(
    studyId: string,
    stepSlug: string,
    body: { mode?: string; k?: number; parent_node_id?: string },
  ): Promise<{ result: StepResult; result_ref: string }> {
    return this.request("POST", `/studies/${studyId}/steps/${stepSlug}/generate`, body);
  }

  accept(
    studyId: string,
    stepSlug: string,
    body: { result_ref: string; edits: EditOpInput[]; complete_level: boolean },
  ): Promise<{ tree: Tree; study: StudySummary }> {
    return this.request("POST", `/studies/${studyId}/steps/${stepSlug}/accept`, body);
  }

  exportUrl(studyId: string, format: "csv" | "json"): string {
    return `${this.baseUrl}/studies/${studyId}/export?format=${format}`;
  }
}

// Client for the render service. Every sound and spectrogram the editor
// shows comes through here; the editor itself never synthesizes audio.

import {
    PatchDocument,
    PatchInfo,
    RenderRequest,
    RenderSidecar,
    SegmentInfo,
    Violation,
} from "./types.js";

export const SIDECAR_HEADER = "X-Render-Sidecar";

export interface RenderResponse {
    wav: ArrayBuffer;
    sidecar: RenderSidecar;
}

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

export class ApiClient {
    constructor(
        private baseUrl: string = "",
        private fetchImpl: typeof fetch = globalThis.fetch?.bind(globalThis),
    ) {}

    private async getJson<T>(path: string): Promise<T> {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`);
        if (!response.ok) {
            throw new ApiError(response.status, await response.text());
        }
        return (await response.json()) as T;
    }

    private async postJson<T>(path: string, body: unknown): Promise<T> {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!response.ok) {
            throw new ApiError(response.status, await response.text());
        }
        return (await response.json()) as T;
    }

    listPatches(): Promise<PatchInfo[]> {
        return this.getJson("/api/patches");
    }

    getPatch(id: string): Promise<PatchDocument> {
        return this.getJson(`/api/patches/${id}`);
    }

    listSegments(): Promise<SegmentInfo[]> {
        return this.getJson("/api/segments");
    }

    async validate(doc: PatchDocument): Promise<Violation[]> {
        const body = await this.postJson<{ violations: Violation[] }>("/api/validate", doc);
        return body.violations;
    }

    async render(request: RenderRequest): Promise<RenderResponse> {
        const response = await this.fetchImpl(`${this.baseUrl}/api/render`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(request),
        });
        if (!response.ok) {
            throw new ApiError(response.status, await response.text());
        }
        const sidecarHeader = response.headers.get(SIDECAR_HEADER);
        return {
            wav: await response.arrayBuffer(),
            sidecar: sidecarHeader
                ? (JSON.parse(sidecarHeader) as RenderSidecar)
                : { duration: 0, peak: 0, f0_summary: { min: 0, max: 0, mean: 0 } },
        };
    }
}

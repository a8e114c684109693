// The editor's state machine. All mutation goes through EditorSession so the
// invariants hold everywhere: pending edits always validate before a render
// can start, renders always go through the service, stale responses are
// dropped, and an A/B pair plus its spectrogram difference is the only
// render state kept.

import { ApiClient, RenderResponse } from "./api.js";
import { Spectrogram, spectrogram, spectrogramDifference } from "./spectrogram.js";
import { PatchDocument, RatioEdit, Violation } from "./types.js";
import { decodeWav } from "./wav.js";

export interface RenderSlot {
    wav: ArrayBuffer;
    samples: Float32Array;
    sampleRate: number;
    spectrogram: Spectrogram;
    sidecar: RenderResponse["sidecar"];
    editsKey: string;
}

export interface SessionEvents {
    onChange?: () => void;
}

function editsKey(edits: Map<number, number>): string {
    return [...edits.entries()].sort((a, b) => a[0] - b[0])
        .map(([id, ratio]) => `${id}:${ratio.toFixed(6)}`).join(",");
}

export class EditorSession {
    patchId: string | null = null;
    patch: PatchDocument | null = null;
    segmentId: string | null = null;
    performanceId: string | null = null;

    pendingEdits = new Map<number, number>();
    private undoStack: Map<number, number>[] = [];

    renderA: RenderSlot | null = null;      // baseline, no edits
    renderB: RenderSlot | null = null;      // with the edits of its editsKey
    activeSlot: "A" | "B" = "A";
    busy = false;
    lastError: string | null = null;

    private renderToken = 0;

    constructor(private api: ApiClient, private events: SessionEvents = {}) {}

    private notify() {
        this.events.onChange?.();
    }

    async loadPatch(id: string): Promise<void> {
        const doc = await this.api.getPatch(id);
        const violations = await this.api.validate(doc);
        if (violations.length > 0) {
            throw new Error(`stored patch ${id} is invalid: ${violations[0].message}`);
        }
        this.patchId = id;
        this.patch = doc;
        this.pendingEdits = new Map();
        this.undoStack = [];
        this.renderA = null;
        this.renderB = null;
        this.lastError = null;
        this.notify();
    }

    selectSegment(id: string | null) {
        this.segmentId = id;
        if (id !== null) this.performanceId = null;
        this.renderA = null;    // baseline depends on the source
        this.renderB = null;
        this.notify();
    }

    selectPerformance(id: string | null) {
        this.performanceId = id;
        if (id !== null) this.segmentId = null;
        this.renderA = null;
        this.renderB = null;
        this.notify();
    }

    currentRatio(oscId: number): number {
        const pending = this.pendingEdits.get(oscId);
        if (pending !== undefined) return pending;
        const osc = this.patch?.oscillators.find((o) => o.id === oscId);
        return osc ? osc.ratio : 0;
    }

    /** Snap a slider value to the patch granularity and stage it. Returns
     * false for a no-op (same value as current) which changes nothing. */
    stageRatio(oscId: number, value: number): boolean {
        if (!this.patch) return false;
        const osc = this.patch.oscillators.find((o) => o.id === oscId);
        if (!osc) return false;
        const g = this.patch.granularity;
        const steps = Math.max(1, Math.round(value / g));
        const snapped = Number((steps * g).toFixed(9));
        if (snapped === this.currentRatio(oscId)) {
            return false;
        }
        this.undoStack.push(new Map(this.pendingEdits));
        if (snapped === osc.ratio) {
            this.pendingEdits.delete(oscId);    // back to the stored value
        } else {
            this.pendingEdits.set(oscId, snapped);
        }
        this.notify();
        return true;
    }

    undo(): boolean {
        const previous = this.undoStack.pop();
        if (!previous) return false;
        this.pendingEdits = previous;
        this.notify();
        return true;
    }

    revertEdits() {
        if (this.pendingEdits.size === 0) return;
        this.undoStack.push(new Map(this.pendingEdits));
        this.pendingEdits = new Map();
        this.notify();
    }

    effectiveEdits(): RatioEdit[] {
        return [...this.pendingEdits.entries()]
            .sort((a, b) => a[0] - b[0])
            .map(([id, ratio]) => ({ id, ratio }));
    }

    /** Local layer-rule check of the patch with pending edits applied;
     * ratio edits cannot break connectivity, but the gate stays explicit. */
    editsAreLegal(): boolean {
        if (!this.patch) return false;
        const g = this.patch.granularity;
        for (const [id, ratio] of this.pendingEdits) {
            const osc = this.patch.oscillators.find((o) => o.id === id);
            if (!osc || ratio <= 0) return false;
            const steps = Math.round(ratio / g);
            if (Math.abs(ratio - steps * g) > 1e-9 || steps < 1) return false;
        }
        return true;
    }

    hasSource(): boolean {
        return this.segmentId !== null || this.performanceId !== null;
    }

    /** The render button: enabled once something would change slot B. */
    canRender(): boolean {
        if (!this.patch || !this.hasSource() || this.busy || !this.editsAreLegal()) {
            return false;
        }
        const key = editsKey(this.pendingEdits);
        if (this.renderB === null) {
            return this.pendingEdits.size > 0;      // first B needs an actual edit
        }
        return this.renderB.editsKey !== key;
    }

    private async renderSlot(edits: RatioEdit[]): Promise<RenderSlot> {
        const response = await this.api.render({
            patch_id: this.patchId ?? undefined,
            segment_id: this.segmentId ?? undefined,
            performance_id: this.performanceId ?? undefined,
            ratio_edits: edits.length ? edits : undefined,
        });
        const decoded = decodeWav(response.wav);
        return {
            wav: response.wav,
            samples: decoded.samples,
            sampleRate: decoded.sampleRate,
            spectrogram: spectrogram(decoded.samples),
            sidecar: response.sidecar,
            editsKey: editsKey(new Map(edits.map((e) => [e.id, e.ratio]))),
        };
    }

    /** Render the A/B pair: A is the unedited baseline (reused when fresh),
     * B applies the pending edits. Stale responses are discarded. */
    async renderPair(): Promise<void> {
        if (!this.patch || !this.patchId || !this.hasSource()) {
            throw new Error("load a patch and pick a segment or performance first");
        }
        if (!this.editsAreLegal()) {
            throw new Error("pending edits are not legal for this patch");
        }
        const violations: Violation[] = await this.api.validate(this.patch);
        if (violations.length > 0) {
            throw new Error(`refusing to render an invalid patch: ${violations[0].message}`);
        }
        const token = ++this.renderToken;
        this.busy = true;
        this.lastError = null;
        this.notify();
        try {
            const edits = this.effectiveEdits();
            const needA = this.renderA === null;
            const [a, b] = await Promise.all([
                needA ? this.renderSlot([]) : Promise.resolve(this.renderA!),
                this.renderSlot(edits),
            ]);
            if (token !== this.renderToken) {
                return;     // a newer render superseded this one
            }
            this.renderA = a;
            this.renderB = b;
        } catch (error) {
            if (token === this.renderToken) {
                this.lastError = error instanceof Error ? error.message : String(error);
                throw error;
            }
        } finally {
            if (token === this.renderToken) {
                this.busy = false;
                this.notify();
            }
        }
    }

    abDifference(): number | null {
        if (!this.renderA || !this.renderB) return null;
        return spectrogramDifference(this.renderA.spectrogram, this.renderB.spectrogram);
    }

    toggleSlot(): "A" | "B" {
        this.activeSlot = this.activeSlot === "A" ? "B" : "A";
        this.notify();
        return this.activeSlot;
    }
}

// Wire types mirrored from the render service's documented JSON schemas.

export type Target = number | "output" | null;

export interface OscillatorEntry {
    id: number;
    layer: number;
    ratio: number;
    target: Target;
}

export interface PatchDocument {
    format: string;
    version: number;
    sample_rate: number;
    granularity: number;
    oscillators: OscillatorEntry[];
}

export interface Violation {
    oscillator_id: number | null;
    rule: string;
    message: string;
}

export interface PatchInfo {
    id: string;
    oscillators: number;
    sample_rate: number;
    granularity: number;
}

export interface SegmentInfo {
    id: string;
    frames: number;
    hop_size: number;
    sample_rate: number;
    f0_median: number;
}

export interface RenderSidecar {
    duration: number;
    peak: number;
    f0_summary: { min: number; max: number; mean: number };
}

export interface RatioEdit {
    id: number;
    ratio: number;
}

export interface RenderRequest {
    patch_id?: string;
    patch?: PatchDocument;
    performance_id?: string;
    segment_id?: string;
    ratio_edits?: RatioEdit[];
}

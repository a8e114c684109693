// Layered layout of a patch topology for the SVG view: carriers along the
// bottom in green, modulator layers stacked above in blue, oscillators with
// no path to the output dimmed.

import { PatchDocument } from "./types.js";

export interface GraphNode {
    id: number;
    layer: number;
    ratio: number;
    x: number;          // unit coordinates, scale in the view
    y: number;
    color: "green" | "blue";
    dimmed: boolean;
    toOutput: boolean;
}

export interface GraphEdge {
    from: number;       // modulator id
    to: number;         // target id
    dimmed: boolean;
}

export interface GraphLayout {
    nodes: GraphNode[];
    edges: GraphEdge[];
    layers: number;
}

export function reachableIds(doc: PatchDocument): Set<number> {
    const reach = new Set<number>();
    const sorted = [...doc.oscillators].sort((a, b) => a.layer - b.layer);
    for (const osc of sorted) {
        if (osc.layer === 0) {
            if (osc.target === "output") reach.add(osc.id);
        } else if (typeof osc.target === "number" && reach.has(osc.target)) {
            reach.add(osc.id);
        }
    }
    return reach;
}

export function layoutTopology(doc: PatchDocument): GraphLayout {
    const reach = reachableIds(doc);
    const layers = Math.max(...doc.oscillators.map((o) => o.layer), 0) + 1;
    const byLayer = new Map<number, typeof doc.oscillators>();
    for (const osc of doc.oscillators) {
        const bucket = byLayer.get(osc.layer) ?? [];
        bucket.push(osc);
        byLayer.set(osc.layer, bucket);
    }
    const nodes: GraphNode[] = [];
    for (const [layer, members] of byLayer) {
        members.forEach((osc, index) => {
            nodes.push({
                id: osc.id,
                layer,
                ratio: osc.ratio,
                x: (index + 1) / (members.length + 1),
                y: 1 - layer / Math.max(layers, 1),     // carriers at the bottom
                color: layer === 0 ? "green" : "blue",
                dimmed: !reach.has(osc.id),
                toOutput: osc.target === "output",
            });
        });
    }
    const edges: GraphEdge[] = [];
    for (const osc of doc.oscillators) {
        if (typeof osc.target === "number") {
            edges.push({ from: osc.id, to: osc.target, dimmed: !reach.has(osc.id) });
        }
    }
    nodes.sort((a, b) => a.id - b.id);
    return { nodes, edges, layers };
}

/** Number of independent trees feeding the output. */
export function outputSubtreeCount(doc: PatchDocument): number {
    return doc.oscillators.filter((o) => o.layer === 0 && o.target === "output").length;
}

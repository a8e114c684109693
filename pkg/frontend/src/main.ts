// DOM wiring: patch picker, ratio sliders, topology view, A/B transport,
// spectrogram canvases. All logic lives in EditorSession; this file only
// translates between DOM events and session calls.

import { ApiClient } from "./api.js";
import { layoutTopology } from "./graph.js";
import { differenceMap, Spectrogram } from "./spectrogram.js";
import { EditorSession, RenderSlot } from "./state.js";

const NODE_COLORS = { green: "#2e8b57", blue: "#4169b0" };

export interface EditorHandles {
    session: EditorSession;
    root: HTMLElement;
    refresh: () => Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, attrs: Record<string, string> = {}, text = "",
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
    if (text) node.textContent = text;
    return node;
}

function drawSpectrogram(canvas: HTMLCanvasElement, spec: Spectrogram | null) {
    const ctx = canvas.getContext?.("2d");
    if (!ctx || !spec || spec.frames === 0) return;
    const image = ctx.createImageData(spec.frames, spec.bins);
    let lo = Infinity;
    let hi = -Infinity;
    for (const v of spec.values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    const span = Math.max(hi - lo, 1e-9);
    for (let f = 0; f < spec.frames; f++) {
        for (let k = 0; k < spec.bins; k++) {
            const level = (spec.values[f * spec.bins + k] - lo) / span;
            const px = ((spec.bins - 1 - k) * spec.frames + f) * 4;
            image.data[px] = 40 + 180 * level;
            image.data[px + 1] = 20 + 200 * level * level;
            image.data[px + 2] = 90 + 120 * (1 - level);
            image.data[px + 3] = 255;
        }
    }
    canvas.width = spec.frames;
    canvas.height = spec.bins;
    ctx.putImageData(image, 0, 0);
}

function drawTopology(svg: SVGSVGElement, session: EditorSession) {
    while (svg.firstChild) svg.removeChild(svg.firstChild);
    if (!session.patch) return;
    const layout = layoutTopology(session.patch);
    const width = 420;
    const height = 60 + layout.layers * 70;
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    const positions = new Map(layout.nodes.map((n) => [n.id,
        { x: 30 + n.x * (width - 60), y: 20 + n.y * (height - 60) }]));
    const ns = "http://www.w3.org/2000/svg";
    for (const edge of layout.edges) {
        const from = positions.get(edge.from)!;
        const to = positions.get(edge.to)!;
        const line = document.createElementNS(ns, "line");
        line.setAttribute("x1", String(from.x));
        line.setAttribute("y1", String(from.y));
        line.setAttribute("x2", String(to.x));
        line.setAttribute("y2", String(to.y));
        line.setAttribute("stroke", edge.dimmed ? "#ccc" : "#666");
        svg.appendChild(line);
    }
    for (const node of layout.nodes) {
        const pos = positions.get(node.id)!;
        const group = document.createElementNS(ns, "g");
        group.setAttribute("opacity", node.dimmed ? "0.35" : "1");
        const rect = document.createElementNS(ns, "rect");
        rect.setAttribute("x", String(pos.x - 26));
        rect.setAttribute("y", String(pos.y - 14));
        rect.setAttribute("width", "52");
        rect.setAttribute("height", "28");
        rect.setAttribute("rx", "5");
        rect.setAttribute("fill", NODE_COLORS[node.color]);
        const label = document.createElementNS(ns, "text");
        label.setAttribute("x", String(pos.x));
        label.setAttribute("y", String(pos.y + 4));
        label.setAttribute("text-anchor", "middle");
        label.setAttribute("fill", "white");
        label.setAttribute("font-size", "11");
        label.textContent = `#${node.id} r${session.currentRatio(node.id)}`;
        group.appendChild(rect);
        group.appendChild(label);
        svg.appendChild(group);
    }
}

function audioUrl(slot: RenderSlot): string | null {
    if (typeof URL === "undefined" || !URL.createObjectURL) return null;
    return URL.createObjectURL(new Blob([slot.wav], { type: "audio/wav" }));
}

export async function mountEditor(root: HTMLElement, api: ApiClient): Promise<EditorHandles> {
    const session = new EditorSession(api, { onChange: () => sync() });

    const patchSelect = el("select", { id: "patch-select" });
    const segmentSelect = el("select", { id: "segment-select" });
    const sliders = el("div", { id: "sliders" });
    const renderButton = el("button", { id: "render" }, "render A/B") as HTMLButtonElement;
    const undoButton = el("button", { id: "undo" }, "undo") as HTMLButtonElement;
    const revertButton = el("button", { id: "revert" }, "revert all") as HTMLButtonElement;
    const playA = el("button", { id: "play-a" }, "play A") as HTMLButtonElement;
    const playB = el("button", { id: "play-b" }, "play B") as HTMLButtonElement;
    const slotLabel = el("span", { id: "slot" }, "A");
    const diffLabel = el("span", { id: "diff" }, "difference: -");
    const status = el("div", { id: "status" });
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("id", "topology");
    const canvasA = el("canvas", { id: "spec-a" });
    const canvasB = el("canvas", { id: "spec-b" });
    const canvasDiff = el("canvas", { id: "spec-diff" });

    const controls = el("div", { class: "controls" });
    controls.append("patch: ", patchSelect, " segment: ", segmentSelect, renderButton,
        undoButton, revertButton, playA, playB, slotLabel, diffLabel);
    root.append(controls, svg, sliders, canvasA, canvasB, canvasDiff, status);

    function rebuildSliders() {
        while (sliders.firstChild) sliders.removeChild(sliders.firstChild);
        if (!session.patch) return;
        for (const osc of session.patch.oscillators) {
            const row = el("div", { class: "slider-row" });
            const max = osc.layer === 0 ? 15 : 5;
            const input = el("input", {
                type: "range",
                id: `ratio-${osc.id}`,
                min: String(session.patch.granularity),
                max: String(max),
                step: String(session.patch.granularity),
                value: String(session.currentRatio(osc.id)),
            }) as HTMLInputElement;
            const label = el("label", { for: `ratio-${osc.id}` },
                `osc ${osc.id} (layer ${osc.layer}) ratio `);
            const value = el("span", { id: `ratio-value-${osc.id}` },
                String(session.currentRatio(osc.id)));
            input.addEventListener("input", () => {
                session.stageRatio(osc.id, Number(input.value));
            });
            row.append(label, input, value);
            sliders.appendChild(row);
        }
    }

    function sync() {
        renderButton.disabled = !session.canRender();
        undoButton.disabled = session.busy;
        playA.disabled = !session.renderA;
        playB.disabled = !session.renderB;
        slotLabel.textContent = session.activeSlot;
        const diff = session.abDifference();
        diffLabel.textContent = diff === null ? "difference: -" : `difference: ${diff.toFixed(1)}`;
        status.textContent = session.lastError ?? (session.busy ? "rendering..." : "");
        if (session.patch) {
            for (const osc of session.patch.oscillators) {
                const value = document.getElementById(`ratio-value-${osc.id}`);
                if (value) value.textContent = String(session.currentRatio(osc.id));
            }
        }
        drawTopology(svg, session);
        drawSpectrogram(canvasA, session.renderA?.spectrogram ?? null);
        drawSpectrogram(canvasB, session.renderB?.spectrogram ?? null);
        if (session.renderA && session.renderB
            && session.renderA.spectrogram.frames === session.renderB.spectrogram.frames) {
            drawSpectrogram(canvasDiff,
                differenceMap(session.renderA.spectrogram, session.renderB.spectrogram));
        }
    }

    function play(slot: RenderSlot | null) {
        if (!slot) return;
        const url = audioUrl(slot);
        if (url && typeof Audio !== "undefined") {
            void new Audio(url).play?.();
        }
    }

    renderButton.addEventListener("click", () => void session.renderPair().catch(() => undefined));
    undoButton.addEventListener("click", () => session.undo());
    revertButton.addEventListener("click", () => session.revertEdits());
    playA.addEventListener("click", () => play(session.renderA));
    playB.addEventListener("click", () => play(session.renderB));
    document.addEventListener("keydown", (event) => {
        if (event.key === "t") {
            const slot = session.toggleSlot();
            play(slot === "A" ? session.renderA : session.renderB);
        }
    });
    patchSelect.addEventListener("change", () => {
        void session.loadPatch(patchSelect.value).then(rebuildSliders);
    });
    segmentSelect.addEventListener("change", () => session.selectSegment(segmentSelect.value || null));

    async function refresh() {
        const patches = await api.listPatches();
        while (patchSelect.firstChild) patchSelect.removeChild(patchSelect.firstChild);
        for (const patch of patches) {
            patchSelect.appendChild(el("option", { value: patch.id },
                `${patch.id} (${patch.oscillators} osc)`));
        }
        const segments = await api.listSegments();
        while (segmentSelect.firstChild) segmentSelect.removeChild(segmentSelect.firstChild);
        segmentSelect.appendChild(el("option", { value: "" }, "pick a segment"));
        for (const segment of segments) {
            segmentSelect.appendChild(el("option", { value: segment.id },
                `${segment.id} (~${Math.round(segment.f0_median)} Hz)`));
        }
        if (patches.length > 0) {
            await session.loadPatch(patches[0].id);
            rebuildSliders();
        }
        sync();
    }

    await refresh();
    return { session, root, refresh };
}

// browser entry point; tests import mountEditor directly
if (typeof document !== "undefined" && document.getElementById("editor-root")) {
    const base = (document.getElementById("editor-root") as HTMLElement).dataset.api ?? "";
    void mountEditor(document.getElementById("editor-root") as HTMLElement, new ApiClient(base));
}

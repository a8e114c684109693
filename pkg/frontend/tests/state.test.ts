import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EditorSession } from "../src/state.js";
import { createFakeService, nestedPatchDocument } from "./fake_service.js";

async function freshSession() {
    const fake = createFakeService({ demo: nestedPatchDocument() });
    const session = new EditorSession(new ApiClient("http://svc", fake.fetchImpl));
    await session.loadPatch("demo");
    session.selectSegment("seg0");
    return { session, fake };
}

describe("EditorSession", () => {
    it("starts with render disabled until a real edit exists", async () => {
        const { session } = await freshSession();
        expect(session.canRender()).toBe(false);
        // a no-op edit (same value) changes nothing
        expect(session.stageRatio(0, 1.0)).toBe(false);
        expect(session.canRender()).toBe(false);
        // a real edit enables the render button
        expect(session.stageRatio(0, 2.0)).toBe(true);
        expect(session.canRender()).toBe(true);
    });

    it("snaps staged ratios to the granularity grid", async () => {
        const { session } = await freshSession();
        session.stageRatio(1, 3.4);         // granularity 1.0
        expect(session.currentRatio(1)).toBe(3);
        session.stageRatio(1, 0.2);         // clamps to the smallest step
        expect(session.currentRatio(1)).toBe(1);
        expect(session.editsAreLegal()).toBe(true);
    });

    it("undo restores the previous pending edits", async () => {
        const { session } = await freshSession();
        session.stageRatio(0, 2.0);
        session.stageRatio(1, 4.0);
        expect(session.effectiveEdits()).toEqual([{ id: 0, ratio: 2 }, { id: 1, ratio: 4 }]);
        session.undo();
        expect(session.effectiveEdits()).toEqual([{ id: 0, ratio: 2 }]);
        session.undo();
        expect(session.effectiveEdits()).toEqual([]);
        expect(session.undo()).toBe(false);
    });

    it("staging the stored value drops the pending edit", async () => {
        const { session } = await freshSession();
        session.stageRatio(0, 2.0);
        expect(session.effectiveEdits()).toHaveLength(1);
        session.stageRatio(0, 1.0);         // back to the stored ratio
        expect(session.effectiveEdits()).toHaveLength(0);
    });

    it("renders an A/B pair and disables the button until the edits change", async () => {
        const { session } = await freshSession();
        session.stageRatio(0, 2.0);
        await session.renderPair();
        expect(session.renderA).not.toBeNull();
        expect(session.renderB).not.toBeNull();
        expect(session.abDifference()).toBeGreaterThan(0);
        expect(session.canRender()).toBe(false);    // nothing new to render
        session.stageRatio(1, 3.0);
        expect(session.canRender()).toBe(true);
    });

    it("requires a performance source", async () => {
        const fake = createFakeService({ demo: nestedPatchDocument() });
        const session = new EditorSession(new ApiClient("http://svc", fake.fetchImpl));
        await session.loadPatch("demo");
        session.stageRatio(0, 2.0);
        expect(session.canRender()).toBe(false);
        await expect(session.renderPair()).rejects.toThrow(/segment or performance/);
    });

    it("drops stale render responses", async () => {
        const { session } = await freshSession();
        session.stageRatio(0, 2.0);
        const first = session.renderPair();
        session.stageRatio(0, 3.0);
        const second = session.renderPair();
        await Promise.all([first, second]);
        // only the latest request's edits may own slot B
        expect(session.renderB?.editsKey).toBe("0:3.000000");
        expect(session.busy).toBe(false);
    });

    it("refuses to render a patch the validator rejects", async () => {
        const broken = nestedPatchDocument();
        broken.oscillators[2].target = "output";
        const fake = createFakeService({ demo: broken });
        const session = new EditorSession(new ApiClient("http://svc", fake.fetchImpl));
        await expect(session.loadPatch("demo")).rejects.toThrow(/invalid/);
        expect(session.patch).toBeNull();
        // no render request ever reached the service
        expect(fake.log.filter((c) => c.path === "/api/render")).toHaveLength(0);
    });

    it("keyboard slot toggle flips between A and B", async () => {
        const { session } = await freshSession();
        expect(session.activeSlot).toBe("A");
        expect(session.toggleSlot()).toBe("B");
        expect(session.toggleSlot()).toBe("A");
    });
});

import { afterEach, describe, expect, it, vi } from "vitest";

import { TeachingApi } from "../src/api";

function mockFetch(status: number, body: unknown) {
  return vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })) as unknown as typeof fetch;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("TeachingApi", () => {
  it("posts actions as the wire format", async () => {
    const fetcher = mockFetch(200, { session_id: "x" });
    vi.stubGlobal("fetch", fetcher);
    const api = new TeachingApi("http://host");
    await api.submitAction("x", { name: "pick", args: ["milk0"] });
    const [url, init] = (fetcher as any).mock.calls[0];
    expect(url).toBe("http://host/sessions/x/actions");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body)).toEqual({ name: "pick", args: ["milk0"] });
  });

  it("creates sessions with domain, seed, and goal", async () => {
    const fetcher = mockFetch(200, { session_id: "y" });
    vi.stubGlobal("fetch", fetcher);
    await new TeachingApi().createSession("mini-home", 3, "store_milk");
    const [url, init] = (fetcher as any).mock.calls[0];
    expect(url).toBe("/sessions");
    expect(JSON.parse(init.body)).toEqual(
      { domain: "mini-home", scene_seed: 3, goal_id: "store_milk" });
  });

  it("throws with the status on errors", async () => {
    vi.stubGlobal("fetch", mockFetch(409, { detail: "session is goal_reached" }));
    const api = new TeachingApi();
    await expect(api.submitAction("x", { name: "moveTo", args: ["a"] }))
      .rejects.toThrow(/409/);
  });

  it("builds suggestion and finish urls", async () => {
    const fetcher = mockFetch(200, { source: "policy", suggestions: [] });
    vi.stubGlobal("fetch", fetcher);
    const api = new TeachingApi();
    await api.suggestions("abc", 5);
    expect((fetcher as any).mock.calls[0][0]).toBe("/sessions/abc/suggestions?k=5");
    await api.finish("abc");
    expect((fetcher as any).mock.calls[1][0]).toBe("/sessions/abc/finish");
  });
});

// Fetch client for the teaching service; one method per endpoint.

import type { ActionWire, CatalogView, SessionView, Suggestion } from "./types";

export class TeachingApi {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      const detail = await res.json().catch(() => ({}));
      throw new Error(`${res.status}: ${JSON.stringify(detail)}`);
    }
    return res.json() as Promise<T>;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  catalog(domain: string): Promise<CatalogView> {
    return this.request(`/catalog/${encodeURIComponent(domain)}`);
  }

  createSession(domain: string, sceneSeed: number, goalId?: string): Promise<SessionView> {
    return this.post("/sessions", { domain, scene_seed: sceneSeed, goal_id: goalId });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request(`/sessions/${id}`);
  }

  submitAction(id: string, action: ActionWire): Promise<SessionView> {
    return this.post(`/sessions/${id}/actions`, action);
  }

  suggestions(id: string, k = 3): Promise<{ source: string; suggestions: Suggestion[] }> {
    return this.request(`/sessions/${id}/suggestions?k=${k}`);
  }

  finish(id: string, provenance = "human-ui"): Promise<{ trace: unknown; path: string; status: string }> {
    return this.post(`/sessions/${id}/finish`, { provenance });
  }
}

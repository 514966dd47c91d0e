// Entry point: session lifecycle, composer wiring, tutorial gating.

import { TeachingApi } from "./api";
import { buildAction, composerState, formatAction } from "./model";
import { SceneRenderer, renderHistory, renderStatus } from "./render";
import {
  TUTORIAL_DOMAIN, TUTORIAL_GOAL, TUTORIAL_PROVENANCE, TUTORIAL_SCENE_SEED,
  TutorialFlow, markTutorialCompleted, tutorialCompleted,
} from "./tutorial";
import type { CatalogView, SessionView } from "./types";

const api = new TeachingApi("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error("missing element #" + id);
  return node as T;
}

class App {
  private catalog!: CatalogView;
  private view: SessionView | null = null;
  private renderer!: SceneRenderer;
  private inFlight = false;
  private tutorial: TutorialFlow | null = null;

  async start(): Promise<void> {
    this.catalog = await api.catalog(TUTORIAL_DOMAIN);
    this.renderer = new SceneRenderer(
      el<HTMLCanvasElement>("scene"), el("inspector"),
      (name) => this.onObjectSelected(name));
    this.populateStatic();
    el<HTMLButtonElement>("new-session").onclick = () => void this.newSession();
    el<HTMLButtonElement>("submit").onclick = () => void this.submit();
    el<HTMLButtonElement>("suggest").onclick = () => void this.suggest();
    el<HTMLButtonElement>("finish").onclick = () => void this.finish();
    el<HTMLSelectElement>("interaction").onchange = () => this.refreshComposer();
    el<HTMLSelectElement>("first").onchange = () => this.refreshComposer();
    el<HTMLSelectElement>("second").onchange = () => this.refreshComposer();
    if (!tutorialCompleted(window.localStorage)) {
      this.tutorial = new TutorialFlow();
      el("tutorial-box").classList.remove("hidden");
      await this.openSession(TUTORIAL_DOMAIN, TUTORIAL_SCENE_SEED, TUTORIAL_GOAL);
    } else {
      await this.newSession();
    }
  }

  private populateStatic(): void {
    const select = el<HTMLSelectElement>("interaction");
    select.textContent = "";
    for (const name of Object.keys(this.catalog.interactions).sort()) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      select.appendChild(opt);
    }
    const goals = el<HTMLSelectElement>("goal-select");
    goals.textContent = "";
    for (const g of this.catalog.goals) {
      const opt = document.createElement("option");
      opt.value = g.id;
      opt.textContent = g.text;
      goals.appendChild(opt);
    }
  }

  private async newSession(): Promise<void> {
    const seed = Number(el<HTMLInputElement>("scene-seed").value) || 0;
    const goal = el<HTMLSelectElement>("goal-select").value || undefined;
    this.tutorial = null;
    el("tutorial-box").classList.add("hidden");
    await this.openSession(TUTORIAL_DOMAIN, seed, goal);
  }

  private async openSession(domain: string, seed: number, goal?: string): Promise<void> {
    this.view = await api.createSession(domain, seed, goal);
    this.refresh();
  }

  private onObjectSelected(name: string): void {
    const first = el<HTMLSelectElement>("first");
    if ([...first.options].some((o) => o.value === name)) {
      first.value = name;
      this.refreshComposer();
    }
  }

  private refresh(): void {
    if (!this.view) return;
    this.renderer.draw(this.view);
    renderStatus(this.view, {
      goal: el("goal"), timer: el("timer"), outcome: el("outcome"), banner: el("banner"),
    });
    renderHistory(this.view, el("history"));
    if (this.tutorial) {
      el("tutorial-hint").textContent = this.tutorial.hint(this.view);
      el("tutorial-progress").textContent = this.tutorial.progress(this.view);
    }
    this.refreshComposer();
  }

  private refreshComposer(): void {
    if (!this.view) return;
    const interaction = el<HTMLSelectElement>("interaction").value || "moveTo";
    const firstSel = el<HTMLSelectElement>("first");
    const secondSel = el<HTMLSelectElement>("second");
    const state = composerState(this.view, this.catalog, interaction,
                                firstSel.value || null, secondSel.value || null,
                                this.inFlight);
    syncOptions(firstSel, state.firstOptions);
    syncOptions(secondSel, state.secondOptions);
    secondSel.parentElement!.classList.toggle("hidden", !state.showSecond);
    el<HTMLButtonElement>("submit").disabled = !state.canSubmit;
  }

  private async submit(): Promise<void> {
    if (!this.view || this.inFlight) return;
    const interaction = el<HTMLSelectElement>("interaction").value;
    const arity = this.catalog.interactions[interaction] ?? 1;
    const action = buildAction(interaction, arity,
                               el<HTMLSelectElement>("first").value,
                               el<HTMLSelectElement>("second").value || null);
    this.inFlight = true;
    this.refreshComposer();
    try {
      this.view = await api.submitAction(this.view.session_id, action);
    } catch (err) {
      el("outcome").textContent = String(err);
    } finally {
      this.inFlight = false;
    }
    this.refresh();
  }

  private async suggest(): Promise<void> {
    if (!this.view) return;
    const body = await api.suggestions(this.view.session_id, 3);
    const target = el("suggestions");
    target.textContent = "";
    for (const s of body.suggestions) {
      const row = document.createElement("div");
      const score = s.score === null ? "" : ` (${s.score.toFixed(3)})`;
      row.textContent = `${formatAction(s.action)}${score}`;
      target.appendChild(row);
    }
  }

  private async finish(): Promise<void> {
    if (!this.view) return;
    const provenance = this.tutorial ? TUTORIAL_PROVENANCE : "human-ui";
    const result = await api.finish(this.view.session_id, provenance);
    el("outcome").textContent = `saved demonstration (${result.status}) to ${result.path}`;
    if (this.tutorial && this.view.goal_reached) {
      markTutorialCompleted(window.localStorage);
      this.tutorial = null;
      el("tutorial-box").classList.add("hidden");
    }
  }
}

function syncOptions(select: HTMLSelectElement, options: string[]): void {
  const current = select.value;
  const existing = [...select.options].map((o) => o.value);
  if (existing.length === options.length && existing.every((v, i) => v === options[i])) {
    return;
  }
  select.textContent = "";
  for (const name of options) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    select.appendChild(opt);
  }
  if (options.includes(current)) select.value = current;
}

window.addEventListener("DOMContentLoaded", () => {
  new App().start().catch((err) => {
    document.body.textContent = "failed to start: " + String(err);
  });
});

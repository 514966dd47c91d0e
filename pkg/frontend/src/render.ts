// DOM layer: draws the top-down scene on a canvas and fills the side panels.
// All content comes straight from the current SessionView.

import { Glyph, describeObject, formatAction, outcomeMessage, sceneLayout, tierColor, timerLabel } from "./model";
import type { SessionView } from "./types";

export class SceneRenderer {
  private selected: string | null = null;

  constructor(private canvas: HTMLCanvasElement,
              private inspector: HTMLElement,
              private onSelect: (name: string) => void = () => undefined) {
    this.canvas.addEventListener("click", (ev) => this.handleClick(ev));
  }

  private glyphs: Glyph[] = [];
  private view: SessionView | null = null;

  draw(view: SessionView): void {
    this.view = view;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#f4f1ea";
    ctx.fillRect(0, 0, width, height);
    this.glyphs = sceneLayout(view, width, height);
    for (const g of this.glyphs) {
      ctx.beginPath();
      ctx.arc(g.x, g.y, g.radius, 0, Math.PI * 2);
      ctx.fillStyle = g.isRobot ? "#444" : tierColor(g.tier);
      ctx.globalAlpha = g.name === this.selected ? 1.0 : 0.85;
      ctx.fill();
      ctx.globalAlpha = 1.0;
      if (g.name === this.selected) {
        ctx.lineWidth = 3;
        ctx.strokeStyle = "#d03c3c";
        ctx.stroke();
      }
      ctx.fillStyle = "#222";
      ctx.font = "11px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(g.name, g.x, g.y - g.radius - 3);
    }
    this.renderInspector();
  }

  private handleClick(ev: MouseEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const x = (ev.clientX - rect.left) * (this.canvas.width / rect.width);
    const y = (ev.clientY - rect.top) * (this.canvas.height / rect.height);
    let best: Glyph | null = null;
    for (const g of this.glyphs) {
      const d = Math.hypot(g.x - x, g.y - y);
      if (d <= g.radius + 6 && (!best || d < Math.hypot(best.x - x, best.y - y))) {
        best = g;
      }
    }
    if (best) {
      this.selected = best.name;
      this.onSelect(best.name);
      if (this.view) this.draw(this.view);
    }
  }

  select(name: string): void {
    this.selected = name;
    if (this.view) this.draw(this.view);
  }

  private renderInspector(): void {
    if (!this.view) return;
    this.inspector.textContent = "";
    const lines = this.selected
      ? describeObject(this.view, this.selected)
      : ["click an object to inspect it"];
    for (const line of lines) {
      const div = document.createElement("div");
      div.textContent = line;
      this.inspector.appendChild(div);
    }
  }
}

export function renderStatus(view: SessionView, els: {
  goal: HTMLElement; timer: HTMLElement; outcome: HTMLElement; banner: HTMLElement;
}): void {
  els.goal.textContent = view.goal_text;
  els.timer.textContent = timerLabel(view.timer_remaining);
  els.outcome.textContent = outcomeMessage(view.outcome ?? view.last_outcome);
  if (view.goal_reached) {
    els.banner.textContent = "Goal reached! Press Finish to save the demonstration.";
    els.banner.className = "banner success";
  } else {
    els.banner.textContent = "";
    els.banner.className = "banner";
  }
}

export function renderHistory(view: SessionView, list: HTMLElement): void {
  list.textContent = "";
  for (const entry of view.history) {
    const li = document.createElement("li");
    li.textContent = formatAction(entry.action)
      + (entry.status === "Rejected" ? ` [rejected: ${entry.reason}]` : "");
    li.className = entry.status === "Rejected" ? "rejected" : "applied";
    list.appendChild(li);
  }
}

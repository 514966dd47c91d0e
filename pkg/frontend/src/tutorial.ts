// Guided first session, video-game style: a fixed simple goal, one hint per
// step, free play unlocks on completion. Gating is purely client-side.

import type { SessionView } from "./types";
import { formatAction } from "./model";

export interface TutorialStep {
  hint: string;
  expectName: string;  // interaction the hint suggests
}

export const TUTORIAL_DOMAIN = "mini-home";
export const TUTORIAL_SCENE_SEED = 4;
export const TUTORIAL_GOAL = "clear_dirt";
export const TUTORIAL_PROVENANCE = "human-ui-tutorial";

const STORAGE_KEY = "tooluse-tutorial-done";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function tutorialCompleted(store: KeyValueStore): boolean {
  return store.getItem(STORAGE_KEY) === "yes";
}

export function markTutorialCompleted(store: KeyValueStore): void {
  store.setItem(STORAGE_KEY, "yes");
}

export class TutorialFlow {
  private steps: TutorialStep[] = [
    { hint: "Walk to a cleaning tool: try moveTo(mop0).", expectName: "moveTo" },
    { hint: "Grab it with pick - remember, one gripper.", expectName: "pick" },
    { hint: "Walk over to the dirt with moveTo.", expectName: "moveTo" },
    { hint: "Now clean(dirt0) to scrub it away.", expectName: "clean" },
    { hint: "If dirt remains, repeat: moveTo, then clean.", expectName: "clean" },
  ];

  /** Current hint given how far the taught session has progressed. */
  hint(view: SessionView): string {
    if (view.goal_reached) {
      return "Goal reached - finish the session to complete the tutorial.";
    }
    const applied = view.history.filter((h) => h.status !== "Rejected");
    const idx = Math.min(applied.length, this.steps.length - 1);
    const last = view.history[view.history.length - 1];
    const prefix = last && last.status === "Rejected"
      ? `That was rejected (${last.reason}). `
      : "";
    return prefix + this.steps[idx].hint;
  }

  done(view: SessionView): boolean {
    return view.goal_reached;
  }

  progress(view: SessionView): string {
    const applied = view.history.filter((h) => h.status !== "Rejected");
    const latest = applied.length
      ? "last: " + formatAction(applied[applied.length - 1].action)
      : "no actions yet";
    return `${applied.length} action(s) taken, ${latest}`;
  }
}

import { describe, expect, it } from "vitest";

import {
  buildAction, bannerState, composerState, describeObject, formatAction,
  outcomeMessage, sceneLayout, tierColor, timerLabel,
} from "../src/model";
import type { CatalogView, SessionView } from "../src/types";

function makeView(overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: "s1",
    domain: "mini-home",
    scene_seed: 0,
    goal_text: "Put the milk in the fridge",
    goal_reached: false,
    status: "active",
    timer_remaining: 600,
    room: [10, 8],
    objects: [
      { id: 0, name: "robot", class: "robot", position: [5, 4, 0.7], extent: [0.5, 0.5, 1.4],
        tier: 0, states: [], affordances: [], is_robot: true },
      { id: 1, name: "milk0", class: "milk", position: [2, 2, 0.9], extent: [0.12, 0.12, 0.25],
        tier: 1, states: [], affordances: ["movable", "graspable"], is_robot: false },
      { id: 2, name: "fridge0", class: "fridge", position: [1, 1.5, 0.95], extent: [1, 1, 1.9],
        tier: 0, states: ["open"], affordances: ["container", "openable", "surface"],
        is_robot: false },
    ],
    relations: [["Near", "milk0", "robot"], ["OnTop", "milk0", "fridge0"]],
    history: [],
    last_outcome: null,
    time_step: 0,
    ...overrides,
  };
}

const catalog: CatalogView = {
  name: "mini-home",
  room: [10, 8],
  classes: [],
  tools: ["stool"],
  goals: [{ id: "store_milk", text: "Put the milk in the fridge" }],
  interactions: { moveTo: 1, pick: 1, placeInside: 2, open: 1 },
};

describe("composerState", () => {
  it("hides the second slot for arity-1 interactions", () => {
    const state = composerState(makeView(), catalog, "moveTo", "milk0", null, false);
    expect(state.showSecond).toBe(false);
    expect(state.canSubmit).toBe(true);
  });

  it("shows the second slot and requires both args for arity 2", () => {
    const view = makeView();
    const missing = composerState(view, catalog, "placeInside", "milk0", null, false);
    expect(missing.showSecond).toBe(true);
    expect(missing.canSubmit).toBe(false);
    const ready = composerState(view, catalog, "placeInside", "milk0", "fridge0", false);
    expect(ready.canSubmit).toBe(true);
  });

  it("never offers the robot as an argument", () => {
    const state = composerState(makeView(), catalog, "pick", null, null, false);
    expect(state.firstOptions).not.toContain("robot");
  });

  it("excludes the first pick from second options", () => {
    const state = composerState(makeView(), catalog, "placeInside", "milk0", null, false);
    expect(state.secondOptions).not.toContain("milk0");
  });

  it("disables submit while a request is in flight or session closed", () => {
    expect(composerState(makeView(), catalog, "moveTo", "milk0", null, true).canSubmit)
      .toBe(false);
    const closed = makeView({ status: "goal_reached", goal_reached: true });
    expect(composerState(closed, catalog, "moveTo", "milk0", null, false).canSubmit)
      .toBe(false);
  });
});

describe("buildAction", () => {
  it("drops the second argument for arity-1", () => {
    expect(buildAction("moveTo", 1, "milk0", "fridge0")).toEqual(
      { name: "moveTo", args: ["milk0"] });
    expect(buildAction("placeInside", 2, "milk0", "fridge0")).toEqual(
      { name: "placeInside", args: ["milk0", "fridge0"] });
  });
});

describe("sceneLayout", () => {
  it("maps world coordinates into the canvas with y flipped", () => {
    const glyphs = sceneLayout(makeView(), 640, 512);
    const robot = glyphs.find((g) => g.isRobot)!;
    expect(robot.x).toBeCloseTo(5 * 64);
    expect(robot.y).toBeCloseTo(512 - 4 * 64);
    const milk = glyphs.find((g) => g.name === "milk0")!;
    expect(milk.radius).toBeGreaterThanOrEqual(4);
  });

  it("one glyph per object", () => {
    expect(sceneLayout(makeView(), 100, 100)).toHaveLength(3);
  });
});

describe("describeObject", () => {
  it("echoes states and relations from the view", () => {
    const lines = describeObject(makeView(), "fridge0");
    expect(lines[0]).toContain("fridge0");
    expect(lines.join("\n")).toContain("states: open");
    expect(lines.join("\n")).toContain("OnTop(milk0, fridge0)");
  });

  it("handles unknown objects", () => {
    expect(describeObject(makeView(), "ghost")[0]).toContain("unknown");
  });
});

describe("outcomeMessage", () => {
  it("is quiet with no outcome and verbatim on rejection", () => {
    expect(outcomeMessage(null)).toBe("");
    const message = outcomeMessage({ status: "Rejected", reason: "GripperBusy" });
    expect(message).toContain("GripperBusy");
    expect(message).toContain("one gripper");
    expect(outcomeMessage({ status: "Applied", reason: null })).toBe("applied");
  });
});

describe("misc formatting", () => {
  it("formats timers and actions", () => {
    expect(timerLabel(605)).toBe("10:05");
    expect(timerLabel(59)).toBe("0:59");
    expect(formatAction({ name: "pick", args: ["milk0"] })).toBe("pick(milk0)");
  });

  it("tier colors clamp to the palette", () => {
    expect(tierColor(0)).not.toBe(tierColor(1));
    expect(tierColor(99)).toBe(tierColor(2));
  });

  it("banner follows goal state", () => {
    expect(bannerState(makeView())).toBe("active");
    expect(bannerState(makeView({ goal_reached: true }))).toBe("success");
    expect(bannerState(makeView({ status: "abandoned" }))).toBe("abandoned");
  });
});

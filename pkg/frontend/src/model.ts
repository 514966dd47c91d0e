// Pure view-model logic: everything here is a function of server payloads,
// so it is unit-testable without a DOM. The client never simulates; it only
// reshapes what the service said.

import type { ActionWire, CatalogView, ObjectView, Outcome, SessionView } from "./types";

export interface ComposerState {
  interaction: string;
  arity: number;
  firstOptions: string[];
  secondOptions: string[];
  showSecond: boolean;
  canSubmit: boolean;
}

/** Dropdown state for the action composer; the second object slot follows the
 * interaction's arity (the grammar lives server-side, this is UX echo). */
export function composerState(
  view: SessionView,
  catalog: CatalogView,
  interaction: string,
  first: string | null,
  second: string | null,
  requestInFlight: boolean,
): ComposerState {
  const arity = catalog.interactions[interaction] ?? 1;
  const names = view.objects.filter((o) => !o.is_robot).map((o) => o.name).sort();
  const firstOptions = names;
  const secondOptions = names.filter((n) => n !== first);
  const haveArgs = first !== null && (arity === 1 || (second !== null && second !== first));
  return {
    interaction,
    arity,
    firstOptions,
    secondOptions,
    showSecond: arity === 2,
    canSubmit: !requestInFlight && view.status === "active" && haveArgs,
  };
}

export function buildAction(interaction: string, arity: number, first: string,
                            second: string | null): ActionWire {
  const args = arity === 2 && second ? [first, second] : [first];
  return { name: interaction, args };
}

export interface Glyph {
  name: string;
  cls: string;
  x: number;       // canvas px
  y: number;
  radius: number;  // canvas px
  tier: number;
  isRobot: boolean;
  states: string[];
}

/** Top-down layout: world floor coordinates mapped into a canvas rectangle,
 * glyph size from the object footprint. */
export function sceneLayout(view: SessionView, width: number, height: number): Glyph[] {
  const [roomW, roomH] = view.room;
  const sx = width / roomW;
  const sy = height / roomH;
  return view.objects.map((o) => ({
    name: o.name,
    cls: o.class,
    x: o.position[0] * sx,
    y: height - o.position[1] * sy,
    radius: Math.max(4, (Math.max(o.extent[0], o.extent[1]) / 2) * Math.min(sx, sy)),
    tier: o.tier,
    isRobot: o.is_robot,
    states: o.states,
  }));
}

export const TIER_COLORS = ["#7db9e8", "#e8a87d", "#c38fff"];

export function tierColor(tier: number): string {
  return TIER_COLORS[Math.max(0, Math.min(tier, TIER_COLORS.length - 1))];
}

/** Inspector lines for a clicked object: class, states, relations it is in. */
export function describeObject(view: SessionView, name: string): string[] {
  const obj = view.objects.find((o) => o.name === name);
  if (!obj) return ["unknown object " + name];
  const lines = [
    `${obj.name} (${obj.class})`,
    `tier ${obj.tier}, at (${obj.position[0].toFixed(1)}, ${obj.position[1].toFixed(1)})`,
  ];
  if (obj.states.length) lines.push("states: " + obj.states.join(", "));
  if (obj.affordances.length) lines.push("can: " + obj.affordances.join(", "));
  const related = view.relations
    .filter(([, a, b]) => a === name || b === name)
    .map(([kind, a, b]) => `${kind}(${a}, ${b})`);
  return lines.concat(related.length ? ["relations:", ...related] : ["no relations"]);
}

const REASON_HINTS: Record<string, string> = {
  GripperBusy: "the robot has only one gripper - drop or place what it holds first",
  GripperEmpty: "the robot is not holding the right object",
  ObjectUnreachable: "move closer first, or climb something to reach higher",
  ObjectEnclosed: "that object is shut inside a container - open it first",
  NotAffordance: "that object does not support this interaction",
  ElevationMismatch: "climb state does not allow that",
  ArityMismatch: "that action needs different arguments",
};

/** Outcome banner text; rejection reasons are echoed verbatim plus a hint. */
export function outcomeMessage(outcome: Outcome | null): string {
  if (!outcome) return "";
  if (outcome.status === "Applied") return "applied";
  if (outcome.status === "AppliedWithPerturbation") return "applied, but something slipped";
  const hint = outcome.reason ? REASON_HINTS[outcome.reason] ?? "" : "";
  return `rejected: ${outcome.reason}${hint ? " - " + hint : ""}`;
}

export function timerLabel(seconds: number): string {
  const m = Math.floor(seconds / 60);
  const s = seconds % 60;
  return `${m}:${s.toString().padStart(2, "0")}`;
}

export function formatAction(a: ActionWire): string {
  return `${a.name}(${a.args.join(", ")})`;
}

export function bannerState(view: SessionView): "success" | "abandoned" | "active" {
  if (view.goal_reached) return "success";
  return view.status === "abandoned" ? "abandoned" : "active";
}

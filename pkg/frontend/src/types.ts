// Wire types mirroring the session service's JSON payloads.

export interface ActionWire {
  name: string;
  args: string[];
}

export interface ObjectView {
  id: number;
  name: string;
  class: string;
  position: number[];
  extent: number[];
  tier: number;
  states: string[];
  affordances: string[];
  is_robot: boolean;
}

export interface HistoryEntry {
  action: ActionWire;
  tokens: string[];
  status: string;
  reason: string | null;
  time_step: number;
}

export interface Outcome {
  status: string;
  reason: string | null;
}

export interface SessionView {
  session_id: string;
  domain: string;
  scene_seed: number;
  goal_text: string;
  goal_reached: boolean;
  status: string;
  timer_remaining: number;
  room: number[];
  objects: ObjectView[];
  relations: [string, string, string][];
  history: HistoryEntry[];
  last_outcome: Outcome | null;
  time_step: number;
  outcome?: Outcome;
}

export interface CatalogView {
  name: string;
  room: number[];
  classes: { token: string; affordances: string[]; states: string[]; category: string }[];
  tools: string[];
  goals: { id: string; text: string }[];
  interactions: Record<string, number>;
}

export interface Suggestion {
  action: ActionWire;
  score: number | null;
}

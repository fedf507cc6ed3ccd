import type { DocumentRow, EditOpInput, StudySummary, Tree } from "./api";
import type { StepName } from "./steps";

export type View = "documents" | "workbench" | "export";

export type Staged = {
  token: string;
  step: StepName;
  parentNodeId: string | null;
  items: string[];
  rawResponse: string;
  contextRefs: string[];
  ops: EditOpInput[];
};

export type Banner = { message: string; retry: () => void };

export type AppState = {
  view: View;
  documents: DocumentRow[];
  studies: StudySummary[];
  study: StudySummary | null;
  tree: Tree | null;

  staged: Staged | null;
  selectedParentId: string | null;
  mode: "zero-shot" | "chunks" | "long";
  k: number;
  renameTarget: string | null;

  // Exactly one request may be in flight for the open study.
  pending: boolean;
  banner: Banner | null;
  docError: string | null;
  stepError: string | null;
  stepLocked: string | null;
  rawPanel: string | null;
};

export function initialState(): AppState {
  return {
    view: "documents",
    documents: [],
    studies: [],
    study: null,
    tree: null,
    staged: null,
    selectedParentId: null,
    mode: "chunks",
    k: 5,
    renameTarget: null,
    pending: false,
    banner: null,
    docError: null,
    stepError: null,
    stepLocked: null,
    rawPanel: null,
  };
}

export type Store = {
  get: () => AppState;
  set: (patch: Partial<AppState>) => void;
  subscribe: (fn: () => void) => () => void;
};

export function createStore(initial: AppState): Store {
  let state = initial;
  const listeners = new Set<() => void>();
  return {
    get: () => state,
    set(patch) {
      state = { ...state, ...patch };
      for (const fn of listeners) fn();
    },
    subscribe(fn) {
      listeners.add(fn);
      return () => listeners.delete(fn);
    },
  };
}

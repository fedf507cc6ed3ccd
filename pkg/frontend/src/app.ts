import { ApiClient, ApiError } from "./api";
import type { EditOpInput } from "./api";
import { clear, el } from "./dom";
import { createStore, initialState } from "./state";
import type { AppState, Store, View } from "./state";
import { CHILD_STEPS, STEP_SLUGS, asStepName } from "./steps";
import { replayEdits } from "./edits";
import { renderDocuments } from "./views/documents";
import { renderWorkbench } from "./views/workbench";
import { renderExport } from "./views/exports";

const FRIENDLY: Record<string, string> = {
  UNREACHABLE: "The API service could not be reached.",
  SERVICE_UNAVAILABLE: "The text service is not responding.",
  EMPTY_DOCUMENT: "The document is empty.",
  EMPTY_TREE: "Nothing has been committed for this study yet.",
  STEP_ORDER_VIOLATION: "This step is locked until its predecessor is committed.",
  UNPARSEABLE: "The model reply could not be parsed into a list.",
};

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    const friendly = FRIENDLY[err.code];
    return friendly ? `${friendly} (${err.message})` : err.message;
  }
  return String(err);
}

export type Actions = {
  bootstrap: () => Promise<void>;
  setView: (view: View) => void;
  refreshDocuments: () => Promise<void>;
  uploadDocument: (title: string, content: string, format: string) => Promise<void>;
  createStudy: (name: string, description: string, documentIds: string[]) => Promise<void>;
  openStudy: (studyId: string) => Promise<void>;
  setMode: (mode: AppState["mode"]) => void;
  setK: (k: number) => void;
  selectParent: (nodeId: string | null) => void;
  generate: () => Promise<void>;
  recordOp: (op: EditOpInput) => void;
  undoOp: () => void;
  startRename: (target: string) => void;
  cancelRename: () => void;
  acceptStaged: (completeLevel: boolean) => Promise<void>;
};

export type App = {
  store: Store;
  actions: Actions;
  api: ApiClient;
  root: HTMLElement;
  start: () => Promise<void>;
};

export function createApp(root: HTMLElement, api: ApiClient): App {
  const store = createStore(initialState());

  function networkBanner(err: unknown, retry: () => void): boolean {
    if (err instanceof ApiError && err.status === 0) {
      store.set({ banner: { message: describeError(err), retry }, pending: false });
      return true;
    }
    return false;
  }

  const actions: Actions = {
    async bootstrap() {
      try {
        const [documents, studies] = await Promise.all([
          api.listDocuments(),
          api.listStudies(),
        ]);
        store.set({ documents, studies, banner: null });
      } catch (err) {
        if (!networkBanner(err, () => void actions.bootstrap())) {
          store.set({ docError: describeError(err) });
        }
      }
    },

    setView(view) {
      store.set({ view });
    },

    async refreshDocuments() {
      try {
        const documents = await api.listDocuments();
        store.set({ documents, banner: null, docError: null });
      } catch (err) {
        if (!networkBanner(err, () => void actions.refreshDocuments())) {
          store.set({ docError: describeError(err) });
        }
      }
    },

    async uploadDocument(title, content, format) {
      if (store.get().pending) return;
      store.set({ pending: true, docError: null });
      try {
        const receipt = await api.uploadDocument(title, content, format);
        store.set({
          documents: [...store.get().documents, receipt],
          pending: false,
          banner: null,
        });
      } catch (err) {
        if (!networkBanner(err, () => void actions.uploadDocument(title, content, format))) {
          store.set({ docError: describeError(err), pending: false });
        }
      }
    },

    async createStudy(name, description, documentIds) {
      if (store.get().pending) return;
      store.set({ pending: true, docError: null });
      try {
        const study = await api.createStudy(name, description, documentIds);
        store.set({
          studies: [...store.get().studies, study],
          study,
          tree: null,
          staged: null,
          selectedParentId: null,
          stepError: null,
          stepLocked: null,
          rawPanel: null,
          view: "workbench",
          pending: false,
          banner: null,
        });
      } catch (err) {
        if (!networkBanner(err, () => void actions.createStudy(name, description, documentIds))) {
          store.set({ docError: describeError(err), pending: false });
        }
      }
    },

    async openStudy(studyId) {
      if (store.get().pending) return;
      store.set({ pending: true });
      try {
        const { study, tree } = await api.getStudy(studyId);
        store.set({
          study,
          tree,
          staged: null,
          selectedParentId: null,
          stepError: null,
          stepLocked: null,
          rawPanel: null,
          view: "workbench",
          pending: false,
          banner: null,
        });
      } catch (err) {
        if (!networkBanner(err, () => void actions.openStudy(studyId))) {
          store.set({ docError: describeError(err), pending: false });
        }
      }
    },

    setMode(mode) {
      store.set({ mode });
    },

    setK(k) {
      if (Number.isFinite(k) && k >= 1) store.set({ k: Math.floor(k) });
    },

    selectParent(nodeId) {
      store.set({ selectedParentId: nodeId });
    },

    async generate() {
      const s = store.get();
      if (!s.study || s.pending) return;
      const step = asStepName(s.study.current_step);
      const isChild = CHILD_STEPS.has(step);
      if (isChild && !s.selectedParentId) {
        store.set({ stepError: "Pick the parent node to generate under first." });
        return;
      }
      const mode = s.mode === "chunks" ? `chunks:${s.k}` : s.mode;
      store.set({ pending: true, stepError: null });
      try {
        const res = await api.generate(s.study.study_id, STEP_SLUGS[step], {
          mode,
          parent_node_id: isChild ? s.selectedParentId ?? undefined : undefined,
        });
        store.set({
          staged: {
            token: res.result_ref,
            step,
            parentNodeId: res.result.parent_node_id,
            items: res.result.items,
            rawResponse: res.result.raw_response,
            contextRefs: res.result.context_refs,
            ops: [],
          },
          renameTarget: null,
          rawPanel: null,
          stepError: null,
          pending: false,
          banner: null,
        });
      } catch (err) {
        // A failed generate never touches the staged result or its edit
        // buffer; whatever the user was reviewing stays on screen.
        if (networkBanner(err, () => void actions.generate())) return;
        if (err instanceof ApiError && err.code === "UNPARSEABLE") {
          const raw = typeof err.details.raw_response === "string" ? err.details.raw_response : "";
          store.set({ rawPanel: raw, stepError: describeError(err), pending: false });
          return;
        }
        if (err instanceof ApiError && err.code === "STEP_ORDER_VIOLATION") {
          store.set({ stepLocked: err.message, stepError: describeError(err), pending: false });
          void actions.openStudy(s.study.study_id);
          return;
        }
        store.set({ stepError: describeError(err), pending: false });
      }
    },

    recordOp(op) {
      const s = store.get();
      if (!s.staged) return;
      store.set({
        staged: { ...s.staged, ops: [...s.staged.ops, op] },
        renameTarget: null,
        stepError: null,
      });
    },

    undoOp() {
      const s = store.get();
      if (!s.staged || s.staged.ops.length === 0) return;
      store.set({
        staged: { ...s.staged, ops: s.staged.ops.slice(0, -1) },
        stepError: null,
      });
    },

    startRename(target) {
      store.set({ renameTarget: target });
    },

    cancelRename() {
      store.set({ renameTarget: null });
    },

    async acceptStaged(completeLevel) {
      const s = store.get();
      if (!s.study || !s.staged || s.pending) return;
      if (replayEdits(s.staged.items, s.staged.ops).error !== null) return;
      store.set({ pending: true, stepError: null });
      try {
        const res = await api.accept(s.study.study_id, STEP_SLUGS[s.staged.step], {
          result_ref: s.staged.token,
          edits: s.staged.ops,
          complete_level: completeLevel,
        });
        const studies = store.get().studies.map((row) =>
          row.study_id === res.study.study_id ? res.study : row,
        );
        store.set({
          study: res.study,
          studies,
          tree: res.tree,
          staged: null,
          selectedParentId: null,
          renameTarget: null,
          rawPanel: null,
          stepError: null,
          stepLocked: null,
          pending: false,
          banner: null,
        });
      } catch (err) {
        // The staged token survives a rejected accept on the server, and
        // the ops stay recorded here, so the user just fixes and retries.
        if (networkBanner(err, () => void actions.acceptStaged(completeLevel))) return;
        store.set({ stepError: describeError(err), pending: false });
      }
    },
  };

  function render() {
    const s = store.get();
    clear(root);

    const shell = el("div", { class: "shell" });

    if (s.banner) {
      const banner = el("div", { class: "banner", role: "alert" }, [
        el("span", { text: s.banner.message }),
      ]);
      const retryBtn = el("button", { type: "button", class: "banner-retry", text: "Retry" });
      const retry = s.banner.retry;
      retryBtn.addEventListener("click", () => {
        store.set({ banner: null });
        retry();
      });
      banner.append(retryBtn);
      shell.append(banner);
    }

    const tabs = el("nav", { class: "tabs" });
    const entries: Array<[View, string, boolean]> = [
      ["documents", "Documents", true],
      ["workbench", "Workbench", s.study !== null],
      ["export", "Export", s.study !== null],
    ];
    for (const [view, label, enabled] of entries) {
      const tab = el("button", {
        type: "button",
        class: view === s.view ? "tab active" : "tab",
        id: `tab-${view}`,
        disabled: !enabled,
        text: label,
      });
      tab.addEventListener("click", () => actions.setView(view));
      tabs.append(tab);
    }
    shell.append(tabs);

    const main = el("main", { class: "view" });
    if (s.view === "documents") {
      renderDocuments(main, store, actions);
    } else if (s.view === "workbench") {
      renderWorkbench(main, store, actions);
    } else {
      renderExport(main, store, actions, api);
    }
    shell.append(main);
    root.append(shell);
  }

  store.subscribe(render);

  return {
    store,
    actions,
    api,
    root,
    async start() {
      render();
      await actions.bootstrap();
    },
  };
}

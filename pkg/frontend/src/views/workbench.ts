import { button, el } from "../dom";
import type { Actions } from "../app";
import type { Store } from "../state";
import {
  CHILD_STEPS,
  ITEM_NOUNS,
  STEP_LABELS,
  STEP_ORDER,
  asStepName,
  parentChoices,
  stepIndex,
} from "../steps";
import { replayEdits } from "../edits";

export function renderWorkbench(container: HTMLElement, store: Store, actions: Actions): void {
  const s = store.get();
  if (!s.study) {
    container.append(el("p", { text: "Create or open a study first." }));
    return;
  }

  const currentStep = asStepName(s.study.current_step);
  const currentIdx = stepIndex(currentStep);

  container.append(el("h2", { text: s.study.asset_name }));
  if (s.study.asset_description) {
    container.append(el("p", { class: "hint", text: s.study.asset_description }));
  }

  // Step rail. Only the study's current step carries a Generate control;
  // completed and future steps render locked, with the reason as tooltip.
  const rail = el("ol", { class: "step-rail" });
  for (const step of STEP_ORDER) {
    const idx = stepIndex(step);
    let cls: string;
    let tooltip: string;
    if (idx < currentIdx) {
      cls = "step done";
      tooltip = "Committed.";
    } else if (idx === currentIdx) {
      cls = s.stepLocked ? "step locked" : "step active";
      tooltip = s.stepLocked ?? "Current step.";
    } else {
      cls = "step future";
      const prev = STEP_ORDER[idx - 1];
      tooltip = prev ? `Complete ${STEP_LABELS[prev]} first.` : "";
    }
    rail.append(el("li", { class: cls, title: tooltip, text: STEP_LABELS[step] }));
  }
  container.append(rail);

  const controls = el("section", { class: "panel" });
  controls.append(el("h3", { text: `Generate ${STEP_LABELS[currentStep].toLowerCase()}` }));

  const modeRow = el("div", { class: "form-row" });
  const modeSelect = el("select", { id: "mode-select" });
  for (const [value, label] of [
    ["zero-shot", "Zero-shot (no context)"],
    ["chunks", "Retrieved chunks"],
    ["long", "Whole documents"],
  ] as const) {
    const opt = el("option", { value, text: label });
    if (s.mode === value) opt.selected = true;
    modeSelect.append(opt);
  }
  modeSelect.addEventListener("change", () => {
    actions.setMode(modeSelect.value as "zero-shot" | "chunks" | "long");
  });
  modeRow.append(el("label", { for: "mode-select", text: "Context" }), modeSelect);

  if (s.mode === "chunks") {
    const kInput = el("input", { type: "number", id: "k-input", min: "1", value: String(s.k) });
    kInput.addEventListener("change", () => actions.setK(Number(kInput.value)));
    modeRow.append(el("label", { for: "k-input", text: "Chunks" }), kInput);
  }
  controls.append(modeRow);

  if (CHILD_STEPS.has(currentStep)) {
    const choices = parentChoices(currentStep, s.tree);
    const parentSelect = el("select", { id: "parent-select" });
    parentSelect.append(el("option", { value: "", text: "Pick a parent node" }));
    for (const choice of choices) {
      const opt = el("option", { value: choice.nodeId, text: choice.label });
      if (s.selectedParentId === choice.nodeId) opt.selected = true;
      parentSelect.append(opt);
    }
    parentSelect.addEventListener("change", () => {
      actions.selectParent(parentSelect.value || null);
    });
    controls.append(
      el("div", { class: "form-row" }, [
        el("label", { for: "parent-select", text: "Parent" }),
        parentSelect,
      ]),
    );
  }

  const generateBtn = button(
    "Generate",
    { id: "generate", disabled: s.pending || s.stepLocked !== null },
    () => void actions.generate(),
  );
  controls.append(generateBtn);
  container.append(controls);

  if (s.stepError) {
    container.append(el("p", { class: "error", id: "step-error", text: s.stepError }));
  }

  if (s.rawPanel !== null) {
    const panel = el("details", { class: "raw-panel", id: "raw-panel" });
    panel.append(el("summary", { text: "Raw model reply" }));
    panel.append(el("pre", { text: s.rawPanel }));
    container.append(panel);
  }

  if (s.staged) {
    const replay = replayEdits(s.staged.items, s.staged.ops);
    const noun = ITEM_NOUNS[s.staged.step];

    const staged = el("section", { class: "panel staged" });
    const headBits: string[] = [`Staged ${STEP_LABELS[s.staged.step].toLowerCase()}`];
    if (s.staged.contextRefs.length > 0) {
      headBits.push(`grounded on ${s.staged.contextRefs.length} chunk(s)`);
    }
    staged.append(el("h3", { text: headBits.join(", ") }));

    const list = el("ul", { class: "staged-list" });
    for (const item of replay.items) {
      const row = el("li", { class: "staged-item" });
      row.append(
        el("span", { class: "item-text", text: item.text }),
        el("span", { class: `badge origin-${item.origin.toLowerCase()}`, text: item.origin }),
      );
      if (s.renameTarget === item.text) {
        const renameInput = el("input", {
          type: "text",
          class: "rename-input",
          value: item.text,
        });
        const target = item.text;
        row.append(
          renameInput,
          button("Apply", { class: "rename-apply" }, () => {
            actions.recordOp({ kind: "RenameItem", target, new_text: renameInput.value });
          }),
          button("Cancel", { class: "rename-cancel" }, () => actions.cancelRename()),
        );
      } else {
        const target = item.text;
        row.append(
          button("Rename", { class: "item-rename", disabled: s.pending }, () =>
            actions.startRename(target),
          ),
          button("Remove", { class: "item-remove", disabled: s.pending }, () =>
            actions.recordOp({ kind: "RemoveItem", target }),
          ),
        );
      }
      list.append(row);
    }
    staged.append(list);

    const addInput = el("input", {
      type: "text",
      id: "staged-add-input",
      placeholder: `Add a ${noun}`,
    });
    const addBtn = button("Add", { id: "staged-add", disabled: s.pending }, () => {
      actions.recordOp({ kind: "AddItem", new_text: addInput.value });
    });
    staged.append(el("div", { class: "form-row" }, [addInput, addBtn]));

    if (replay.error) {
      staged.append(el("p", { class: "error", id: "edit-error", text: replay.error }));
    }
    if (s.staged.ops.length > 0) {
      staged.append(
        button(`Undo last edit (${s.staged.ops.length})`, { id: "undo-edit" }, () =>
          actions.undoOp(),
        ),
      );
    }

    const acceptRow = el("div", { class: "form-row accept-row" });
    let completeBox: HTMLInputElement | null = null;
    if (CHILD_STEPS.has(s.staged.step)) {
      completeBox = el("input", { type: "checkbox", id: "complete-level" });
      completeBox.checked = true;
      acceptRow.append(
        el("label", { for: "complete-level", text: "Mark this level complete" }),
        completeBox,
      );
    }
    const acceptBtn = button(
      "Accept",
      { id: "accept", disabled: s.pending || replay.error !== null },
      () => void actions.acceptStaged(completeBox ? completeBox.checked : true),
    );
    acceptRow.append(acceptBtn);
    staged.append(acceptRow);
    container.append(staged);
  }

  if (s.tree) {
    const recap = el("section", { class: "panel recap" });
    recap.append(el("h3", { text: "Committed so far" }));
    recap.append(el("p", { class: "hint", text: s.tree.boundary.functional_overview }));
    recap.append(
      el("p", {
        id: "recap-counts",
        text:
          `${s.tree.boundary.main_parts.length} main part(s), ` +
          `${s.tree.locations.length} failure location(s)`,
      }),
    );
    container.append(recap);
  }
}

import { button, el } from "../dom";
import type { Actions } from "../app";
import type { Store } from "../state";
import { STEP_LABELS, asStepName } from "../steps";

export function renderDocuments(container: HTMLElement, store: Store, actions: Actions): void {
  const s = store.get();

  container.append(el("h2", { text: "Documents" }));

  if (s.docError) {
    container.append(el("p", { class: "error", id: "doc-error", text: s.docError }));
  }

  const table = el("table", { class: "doc-table" });
  const head = el("tr", {}, [
    el("th"),
    el("th", { text: "Title" }),
    el("th", { text: "Format" }),
    el("th", { text: "Chunks" }),
    el("th", { text: "Tables" }),
    el("th"),
  ]);
  table.append(head);
  for (const doc of s.documents) {
    const check = el("input", {
      type: "checkbox",
      class: "doc-select",
      value: doc.document_id,
    });
    const badge = doc.degraded
      ? el("span", {
          class: "badge warn",
          title: "Parts of this document fell back to rule-based cleaning.",
          text: "degraded",
        })
      : el("span");
    table.append(
      el("tr", { class: "doc-row" }, [
        el("td", {}, [check]),
        el("td", { class: "doc-title", text: doc.title }),
        el("td", { text: doc.format }),
        el("td", { class: "doc-chunks", text: String(doc.chunk_count) }),
        el("td", { text: String(doc.table_count) }),
        el("td", {}, [badge]),
      ]),
    );
  }
  container.append(table);

  // Upload form: content is pasted as text, matching the ingestion contract.
  const uploadBox = el("section", { class: "panel" });
  uploadBox.append(el("h3", { text: "Upload a document" }));
  const titleInput = el("input", { type: "text", id: "doc-title", placeholder: "Title" });
  const formatSelect = el("select", { id: "doc-format" });
  for (const fmt of ["PlainText", "Markdown"]) {
    formatSelect.append(el("option", { value: fmt, text: fmt }));
  }
  const contentArea = el("textarea", {
    id: "doc-content",
    rows: "6",
    placeholder: "Paste the manual or guide text here",
  });
  const uploadBtn = button("Upload", { id: "doc-upload", disabled: s.pending }, () => {
    void actions.uploadDocument(titleInput.value, contentArea.value, formatSelect.value);
  });
  uploadBox.append(
    el("div", { class: "form-row" }, [titleInput, formatSelect]),
    contentArea,
    uploadBtn,
  );
  container.append(uploadBox);

  const studyBox = el("section", { class: "panel" });
  studyBox.append(el("h3", { text: "Start a study" }));
  studyBox.append(
    el("p", {
      class: "hint",
      text: "Tick the documents above to ground generation on, then describe the asset.",
    }),
  );
  const nameInput = el("input", { type: "text", id: "study-name", placeholder: "Asset name" });
  const descInput = el("input", {
    type: "text",
    id: "study-desc",
    placeholder: "Asset description (optional)",
  });
  const createBtn = button("Create study", { id: "study-create", disabled: s.pending }, () => {
    const ids = Array.from(
      container.querySelectorAll<HTMLInputElement>(".doc-select:checked"),
    ).map((box) => box.value);
    void actions.createStudy(nameInput.value, descInput.value, ids);
  });
  studyBox.append(el("div", { class: "form-row" }, [nameInput, descInput]), createBtn);
  container.append(studyBox);

  if (s.studies.length > 0) {
    const listBox = el("section", { class: "panel" });
    listBox.append(el("h3", { text: "Studies" }));
    const list = el("ul", { class: "study-list" });
    for (const study of s.studies) {
      const open = button(
        `${study.asset_name} (${STEP_LABELS[asStepName(study.current_step)]})`,
        { class: "study-open", disabled: s.pending },
        () => void actions.openStudy(study.study_id),
      );
      list.append(el("li", {}, [open]));
    }
    listBox.append(list);
    container.append(listBox);
  }
}

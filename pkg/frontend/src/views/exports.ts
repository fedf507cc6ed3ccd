import type { ApiClient } from "../api";
import { el } from "../dom";
import type { Actions } from "../app";
import type { Store } from "../state";

export function renderExport(
  container: HTMLElement,
  store: Store,
  _actions: Actions,
  api: ApiClient,
): void {
  const s = store.get();
  if (!s.study) {
    container.append(el("p", { text: "Create or open a study first." }));
    return;
  }

  container.append(el("h2", { text: `Export: ${s.study.asset_name}` }));

  if (!s.tree) {
    container.append(
      el("p", {
        class: "error",
        id: "export-empty",
        text: "Nothing has been committed for this study yet, so there is nothing to export.",
      }),
    );
    return;
  }

  const links = el("div", { class: "form-row" }, [
    el("a", {
      class: "button",
      id: "export-csv",
      href: api.exportUrl(s.study.study_id, "csv"),
      download: `fmea_${s.study.study_id}.csv`,
      text: "Download CSV",
    }),
    el("a", {
      class: "button",
      id: "export-json",
      href: api.exportUrl(s.study.study_id, "json"),
      download: `fmea_${s.study.study_id}.json`,
      text: "Download JSON",
    }),
  ]);
  container.append(links);

  const outline = el("section", { class: "panel outline", id: "outline" });
  outline.append(el("h3", { text: "Tree preview" }));
  outline.append(el("p", { class: "hint", text: s.tree.boundary.functional_overview }));

  const boundary = el("details", { class: "outline-level", open: true });
  boundary.append(el("summary", { text: `Boundary (${s.tree.boundary.main_parts.length} parts)` }));
  const partList = el("ul");
  for (const part of s.tree.boundary.main_parts) {
    partList.append(el("li", { class: "outline-part", text: part }));
  }
  boundary.append(partList);
  outline.append(boundary);

  for (const loc of s.tree.locations) {
    const locNode = el("details", { class: "outline-level" });
    locNode.append(el("summary", { class: "outline-location", text: loc.name }));
    for (const mech of loc.mechanisms) {
      const mechNode = el("details", { class: "outline-level" });
      mechNode.append(el("summary", { class: "outline-mechanism", text: mech.name }));
      for (const infl of mech.influences) {
        const inflNode = el("details", { class: "outline-level" });
        inflNode.append(el("summary", { class: "outline-influence", text: infl.name }));
        const tasks = el("ul");
        for (const task of infl.tasks) {
          tasks.append(el("li", { class: "outline-task", text: task.description }));
        }
        if (infl.tasks.length === 0) {
          tasks.append(el("li", { class: "hint", text: "No preventive tasks yet." }));
        }
        inflNode.append(tasks);
        mechNode.append(inflNode);
      }
      locNode.append(mechNode);
    }
    outline.append(locNode);
  }
  container.append(outline);
}

import { readFileSync } from "node:fs";
import { ApiClient } from "../src/api";
import { createApp } from "../src/app";
import type { App } from "../src/app";

export function baseUrl(): string {
  const fromEnv = process.env.FMEA_UI_TEST_BASE;
  if (fromEnv) return fromEnv;
  const raw = readFileSync(new URL("./.server.json", import.meta.url), "utf-8");
  return (JSON.parse(raw) as { baseUrl: string }).baseUrl;
}

export async function mountApp(base: string = baseUrl()): Promise<App> {
  const root = document.createElement("div");
  document.body.append(root);
  const app = createApp(root, new ApiClient(base));
  await app.start();
  return app;
}

export function q<T extends Element = HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`no element matches ${selector}`);
  return node as T;
}

export function setValue(input: HTMLInputElement | HTMLTextAreaElement, value: string): void {
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

export function setSelect(select: HTMLSelectElement, value: string): void {
  select.value = value;
  select.dispatchEvent(new Event("change", { bubbles: true }));
}

export async function until(cond: () => boolean, what: string, timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (cond()) return;
    await new Promise((r) => setTimeout(r, 10));
  }
  throw new Error(`timed out waiting for ${what}`);
}

export function stagedTexts(root: HTMLElement): string[] {
  return Array.from(root.querySelectorAll(".staged-item .item-text")).map(
    (node) => node.textContent ?? "",
  );
}

export function itemRow(root: HTMLElement, text: string): HTMLElement {
  for (const row of Array.from(root.querySelectorAll<HTMLElement>(".staged-item"))) {
    if (row.querySelector(".item-text")?.textContent === text) return row;
  }
  throw new Error(`no staged item with text "${text}"`);
}

export function clickItemButton(root: HTMLElement, text: string, selector: string): void {
  q<HTMLButtonElement>(itemRow(root, text), selector).click();
}

/** Remove one item, add one, rename one: the edit set every level exercises. */
export function editStaged(
  root: HTMLElement,
  edits: { remove: string; add: string; renameFrom: string; renameTo: string },
): void {
  clickItemButton(root, edits.remove, ".item-remove");
  setValue(q<HTMLInputElement>(root, "#staged-add-input"), edits.add);
  q<HTMLButtonElement>(root, "#staged-add").click();
  clickItemButton(root, edits.renameFrom, ".item-rename");
  const row = itemRow(root, edits.renameFrom);
  setValue(q<HTMLInputElement>(row, ".rename-input"), edits.renameTo);
  q<HTMLButtonElement>(row, ".rename-apply").click();
}

export function selectParentByLabel(root: HTMLElement, label: string): void {
  const select = q<HTMLSelectElement>(root, "#parent-select");
  for (const option of Array.from(select.options)) {
    if (option.textContent === label) {
      setSelect(select, option.value);
      return;
    }
  }
  throw new Error(`no parent option labelled "${label}"`);
}

export async function generateAndWait(app: App): Promise<void> {
  const before = app.store.get().staged?.token;
  q<HTMLButtonElement>(app.root, "#generate").click();
  await until(() => {
    const token = app.store.get().staged?.token;
    return token !== undefined && token !== before && !app.store.get().pending;
  }, "a staged result");
}

export async function acceptAndWait(app: App): Promise<void> {
  q<HTMLButtonElement>(app.root, "#accept").click();
  await until(
    () => app.store.get().staged === null && !app.store.get().pending,
    "the accept to commit",
  );
}

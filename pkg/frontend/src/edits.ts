import type { EditOpInput } from "./api";

export type WorkingItem = {
  text: string;
  origin: "Generated" | "UserAdded" | "UserEdited";
};

export type ReplayResult = {
  items: WorkingItem[];
  // First rule the op list breaks, or null. While non-null the Accept
  // control stays disabled; the server would reject the same ops anyway.
  error: string | null;
};

function itemKey(text: string): string {
  return text.trim().toLowerCase();
}

/**
 * Replays recorded edit ops over the staged items, the same way the server
 * applies them on accept: in order, targets matched case-insensitively on
 * trimmed text, and the final list free of case-insensitive duplicates.
 * Keeping both sides on one rule means the preview never shows a list the
 * commit would reject, and vice versa.
 */
export function replayEdits(items: string[], ops: EditOpInput[]): ReplayResult {
  const entries: WorkingItem[] = items.map((text) => ({
    text: text.trim(),
    origin: "Generated",
  }));

  const locate = (target: string): number => {
    const key = itemKey(target);
    return entries.findIndex((entry) => itemKey(entry.text) === key);
  };

  for (const op of ops) {
    if (op.kind === "RemoveItem") {
      const idx = locate(op.target ?? "");
      if (idx < 0) return { items: entries, error: `no staged item matches "${op.target}"` };
      entries.splice(idx, 1);
    } else if (op.kind === "RenameItem") {
      const idx = locate(op.target ?? "");
      if (idx < 0) return { items: entries, error: `no staged item matches "${op.target}"` };
      const text = (op.new_text ?? "").trim();
      if (!text) return { items: entries, error: "the new name must not be empty" };
      entries[idx] = { text, origin: "UserEdited" };
    } else {
      const text = (op.new_text ?? "").trim();
      if (!text) return { items: entries, error: "the new item must not be empty" };
      entries.push({ text, origin: "UserAdded" });
    }
  }

  const seen = new Set<string>();
  for (const entry of entries) {
    const key = itemKey(entry.text);
    if (seen.has(key)) {
      return { items: entries, error: `duplicate item: "${entry.text}"` };
    }
    seen.add(key);
  }
  return { items: entries, error: null };
}

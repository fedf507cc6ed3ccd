import type { Tree } from "./api";

export type StepName =
  | "Boundary"
  | "FailureLocations"
  | "DegradationMechanisms"
  | "DegradationInfluences"
  | "PreventiveTasks";

export const STEP_ORDER: StepName[] = [
  "Boundary",
  "FailureLocations",
  "DegradationMechanisms",
  "DegradationInfluences",
  "PreventiveTasks",
];

export const STEP_LABELS: Record<StepName, string> = {
  Boundary: "Boundary",
  FailureLocations: "Failure locations",
  DegradationMechanisms: "Degradation mechanisms",
  DegradationInfluences: "Degradation influences",
  PreventiveTasks: "Preventive tasks",
};

// URL path segment for the generate/accept endpoints.
export const STEP_SLUGS: Record<StepName, string> = {
  Boundary: "boundary",
  FailureLocations: "failure-locations",
  DegradationMechanisms: "degradation-mechanisms",
  DegradationInfluences: "degradation-influences",
  PreventiveTasks: "preventive-tasks",
};

// What one staged item is called at each level, for form labels.
export const ITEM_NOUNS: Record<StepName, string> = {
  Boundary: "main part",
  FailureLocations: "failure location",
  DegradationMechanisms: "degradation mechanism",
  DegradationInfluences: "degradation influence",
  PreventiveTasks: "preventive task",
};

// Steps whose items attach under a node the user picks first.
export const CHILD_STEPS: ReadonlySet<StepName> = new Set([
  "DegradationMechanisms",
  "DegradationInfluences",
  "PreventiveTasks",
]);

export function stepIndex(step: StepName): number {
  return STEP_ORDER.indexOf(step);
}

export function asStepName(value: string): StepName {
  if ((STEP_ORDER as string[]).includes(value)) return value as StepName;
  throw new Error(`unknown step: ${value}`);
}

export type ParentChoice = { nodeId: string; label: string };

/**
 * Committed nodes a child-level generation can attach under, labelled with
 * their path so same-named nodes in different branches stay telling apart.
 */
export function parentChoices(step: StepName, tree: Tree | null): ParentChoice[] {
  if (tree === null) return [];
  const out: ParentChoice[] = [];
  if (step === "DegradationMechanisms") {
    for (const loc of tree.locations) {
      out.push({ nodeId: loc.node_id, label: loc.name });
    }
  } else if (step === "DegradationInfluences") {
    for (const loc of tree.locations) {
      for (const mech of loc.mechanisms) {
        out.push({ nodeId: mech.node_id, label: `${loc.name} > ${mech.name}` });
      }
    }
  } else if (step === "PreventiveTasks") {
    for (const loc of tree.locations) {
      for (const mech of loc.mechanisms) {
        for (const infl of mech.influences) {
          out.push({
            nodeId: infl.node_id,
            label: `${loc.name} > ${mech.name} > ${infl.name}`,
          });
        }
      }
    }
  }
  return out;
}

import { ParameterWire, ProjectDraft } from "./types.js";

/** Raw form values as the user typed them. */
export interface DraftInput {
  name: string;
  description: string;
  tool: string;
  algorithm: string;
  participants: string;
  hyperparameters: string;
}

export interface DraftCheck {
  ok: boolean;
  /** Field name -> inline message; empty when ok. */
  errors: Record<string, string>;
  /** Present only when ok. */
  draft?: ProjectDraft;
}

const MIN_PARTICIPANTS = 3;

/**
 * Parses one "name=value" hyperparameter line. Non-negative integers keep
 * exact precision on the wire; anything else numeric travels as a float.
 */
function parseParameter(line: string): { name: string; value: ParameterWire } | null {
  const eq = line.indexOf("=");
  if (eq < 1) {
    return null;
  }
  const name = line.slice(0, eq).trim();
  const raw = line.slice(eq + 1).trim();
  if (!name || !raw) {
    return null;
  }
  if (/^\d+$/.test(raw)) {
    return { name, value: { t: "nni", v: raw } };
  }
  const num = Number(raw);
  if (!Number.isFinite(num)) {
    return null;
  }
  return { name, value: { t: "flt", v: num } };
}

/**
 * Validates the create-project form before anything is sent.
 * The participant floor mirrors the server's rule: splitting a value into
 * additive shares needs at least three members, or a single share plus the
 * noise total would identify someone's input.
 */
export function checkDraft(input: DraftInput): DraftCheck {
  const errors: Record<string, string> = {};

  const name = input.name.trim();
  if (!name) {
    errors.name = "project name is required";
  }

  const algorithm = input.algorithm.trim();
  if (!algorithm) {
    errors.algorithm = "pick an algorithm";
  }

  let participants = 0;
  const rawCount = input.participants.trim();
  if (!/^\d+$/.test(rawCount)) {
    errors.participants = "participant count must be a whole number";
  } else {
    participants = parseInt(rawCount, 10);
    if (participants < MIN_PARTICIPANTS) {
      errors.participants = `at least ${MIN_PARTICIPANTS} participants are required for masking`;
    }
  }

  const hyperparameters: Record<string, ParameterWire> = {};
  for (const line of input.hyperparameters.split("\n")) {
    if (!line.trim()) {
      continue;
    }
    const parsed = parseParameter(line);
    if (!parsed) {
      errors.hyperparameters = `cannot read "${line.trim()}"; use name=number lines`;
      break;
    }
    hyperparameters[parsed.name] = parsed.value;
  }

  if (Object.keys(errors).length > 0) {
    return { ok: false, errors };
  }
  return {
    ok: true,
    errors: {},
    draft: {
      name,
      description: input.description.trim(),
      tool: input.tool.trim(),
      algorithm,
      participant_count: participants,
      hyperparameters,
    },
  };
}

/** Wire shapes exchanged with the coordination server's JSON API. */

export interface SyncState {
  step: string;
  round: number;
}

/** One hyperparameter on the wire: tagged by value kind. */
export type ParameterWire =
  | { t: "nni"; v: string }
  | { t: "flt"; v: number }
  | { t: "arr"; shape: number[]; data: string };

export interface ProjectConfigWire {
  id: string;
  name: string;
  description: string;
  tool: string;
  algorithm: string;
  hyperparameters: Record<string, ParameterWire>;
  participant_count: number;
  modulus: string;
  noise_variance: number;
}

/** Response of POST /projects and GET /projects/{id}/info. */
export interface ProjectSummary {
  project: ProjectConfigWire;
  creator: string;
  created_at: number;
  status: string;
  failure: string;
  joined: number;
  tokens_issued: number;
  sync: SyncState;
}

/** One row of the creator's project list. */
export interface ProjectRow {
  id: string;
  name: string;
  algorithm: string;
  participant_count: number;
  joined: number;
  status: string;
  created_at: number;
}

/** Response of GET /projects/{id}/status: anonymous counters only. */
export interface StatusSnapshot {
  status: string;
  failure: string;
  sync: SyncState;
  participant_count: number;
  joined: number;
  submitted: number;
  compensated: boolean;
  result_ready: boolean;
}

/** Body of POST /projects. */
export interface ProjectDraft {
  name: string;
  description: string;
  tool: string;
  algorithm: string;
  participant_count: number;
  hyperparameters: Record<string, ParameterWire>;
}

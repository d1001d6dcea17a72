// Wire shapes served by the gateway HTTP API. The UI never invents SQL or
// state of its own: everything rendered comes from these payloads.

export type QuestionTypeLabel =
  | "answerable"
  | "unanswerable"
  | "ambiguous"
  | "improper";

export interface PreviewTable {
  columns: string[];
  rows: unknown[][];
  row_count: number;
  truncated: boolean;
}

export interface PreviewError {
  error: { kind: string; message: string };
}

export type Preview = PreviewTable | PreviewError;

export function isPreviewError(p: Preview): p is PreviewError {
  return (p as PreviewError).error !== undefined;
}

export interface TraceEntry {
  agent: string;
  input_digest: string;
  output_digest: string;
  retries: number;
  note?: string;
}

export interface TurnOutcomePayload {
  detected_type: QuestionTypeLabel;
  candidate_sqls: string[];
  rewrites: string[];
  previews: Preview[];
  response: string;
  trace?: TraceEntry[];
}

export interface ApiTurn {
  question: string;
  outcome: TurnOutcomePayload;
}

export interface TranscriptView {
  session_id: string;
  db_id: string;
  turns: ApiTurn[];
}

export interface DatabaseInfo {
  db_id: string;
  table_count: number;
}

export interface SessionCreated {
  session_id: string;
  db_id: string;
}

/**
 * Wire types for the review service.
 *
 * CasePayload mirrors the server's blinded queue-head payload exactly.
 * Nothing here is derived client-side; if the server schema grows a field,
 * it must be added both to the interface and to PAYLOAD_FIELDS, and the
 * schema-diff test will fail the build until the two agree.
 */

export interface TrendPoint {
  t: string; // RFC 3339 UTC instant
  v: number;
}

export interface DatedLabel {
  label: string;
  since: string;
}

export interface EncounterRecord {
  reason: string;
  admitted_at: string;
  discharged_at: string;
}

export interface NoteRecord {
  summary: string;
  at: string;
}

export interface CallRecord {
  at: string;
}

export interface ReadingRecord {
  reading_id: string;
  patient_id: string;
  device: string;
  timestamp: string;
  measurements: Record<string, number>;
}

export interface PatientRecord {
  patient_id: string;
  age_years?: number;
  sex?: string;
  enrolled_at?: string | null;
  problem_list: DatedLabel[];
  medications: DatedLabel[];
}

export interface CasePayload {
  presentation_id: string;
  position: number;
  queue_length: number;
  reading: ReadingRecord;
  trends: Record<string, TrendPoint[]>;
  patient: PatientRecord;
  encounters: EncounterRecord[];
  notes: NoteRecord[];
  calls: CallRecord[];
  guidelines: string;
}

export const PAYLOAD_FIELDS = [
  "presentation_id",
  "position",
  "queue_length",
  "reading",
  "trends",
  "patient",
  "encounters",
  "notes",
  "calls",
  "guidelines",
] as const;

export interface QueueHeadResponse {
  done: boolean;
  graded: number;
  total: number;
  case: CasePayload | null;
}

export interface GradeSubmission {
  presentation_id: string;
  severity: number;
  action: string;
  duration_s: number;
}

export interface GradeResponse {
  accepted: boolean;
  duplicate: boolean;
  graded: number;
}

// the four ordinal levels; keyboard shortcut = code + 1
export const SEVERITIES = [
  { code: 0, label: "Not an issue" },
  { code: 1, label: "Monitor" },
  { code: 2, label: "Urgent" },
  { code: 3, label: "Emergency" },
] as const;

export const ACTIONS = [
  { value: "no_action", label: "No action" },
  { value: "equipment_resolution", label: "Equipment resolution" },
  { value: "patient_education", label: "Patient education" },
  { value: "clinical_review", label: "Clinical review" },
  { value: "urgent_review", label: "Urgent review" },
  { value: "care_coordination", label: "Care coordination" },
] as const;

export interface GradeFormState {
  severity: number | null;
  action: string;
}

/** Submission stays blocked until a severity level is chosen. */
export function canSubmit(form: GradeFormState): boolean {
  return form.severity !== null;
}

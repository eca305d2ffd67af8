/**
 * CaseViewModel: the payload reshaped for rendering, one-to-one.
 *
 * Only presentation concerns are added (units, display labels, merged
 * series aliases, sort order). No thresholds, no severity hints, no
 * derived clinical judgment of any kind.
 */

import {
  CallRecord,
  CasePayload,
  DatedLabel,
  EncounterRecord,
  NoteRecord,
  TrendPoint,
} from "./types";

export const UNITS: Record<string, string> = {
  systolic: "mmHg",
  diastolic: "mmHg",
  pulse: "bpm",
  pulse_rate: "bpm",
  spo2: "%",
  bodyweight: "kg",
};

export const DEVICE_LABELS: Record<string, string> = {
  blood_pressure_cuff: "Blood pressure cuff",
  pulse_oximeter: "Pulse oximeter",
  weight_scale: "Weight scale",
};

// the cuff reports "pulse_rate", the oximeter "pulse"; one chart for both
const poolName = (name: string): string => (name === "pulse_rate" ? "pulse" : name);

export const seriesLabel = (name: string): string => name.replace(/_/g, " ");

export interface MeasurementView {
  name: string;
  value: number;
  unit: string;
}

export interface TrendSeries {
  name: string;
  unit: string;
  points: { at: string; value: number }[];
}

export interface CaseViewModel {
  presentationId: string;
  position: number; // zero-based slot in this reviewer's queue
  queueLength: number;
  device: string;
  takenAt: string;
  values: MeasurementView[];
  trends: TrendSeries[];
  patientId: string;
  ageYears: number | null;
  sex: string | null;
  enrolledAt: string | null;
  problemList: DatedLabel[];
  medications: DatedLabel[];
  encounters: EncounterRecord[];
  notes: NoteRecord[];
  calls: CallRecord[];
  guidelines: string;
}

export function toViewModel(payload: CasePayload): CaseViewModel {
  const values: MeasurementView[] = Object.keys(payload.reading.measurements)
    .sort()
    .map((name) => ({
      name: seriesLabel(name),
      value: payload.reading.measurements[name],
      unit: UNITS[name] ?? "",
    }));

  const merged = new Map<string, TrendPoint[]>();
  for (const name of Object.keys(payload.trends)) {
    const pooled = poolName(name);
    merged.set(pooled, (merged.get(pooled) ?? []).concat(payload.trends[name]));
  }
  const trends: TrendSeries[] = [...merged.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([name, points]) => ({
      name: seriesLabel(name),
      unit: UNITS[name] ?? "",
      points: points
        .slice()
        .sort((p, q) => p.t.localeCompare(q.t)) // RFC 3339 sorts lexically
        .map((p) => ({ at: p.t, value: p.v })),
    }));

  return {
    presentationId: payload.presentation_id,
    position: payload.position,
    queueLength: payload.queue_length,
    device: DEVICE_LABELS[payload.reading.device] ?? payload.reading.device,
    takenAt: payload.reading.timestamp,
    values,
    trends,
    patientId: payload.patient.patient_id,
    ageYears: payload.patient.age_years ?? null,
    sex: payload.patient.sex ?? null,
    enrolledAt: payload.patient.enrolled_at ?? null,
    problemList: payload.patient.problem_list,
    medications: payload.patient.medications,
    encounters: payload.encounters,
    notes: payload.notes,
    calls: payload.calls,
    guidelines: payload.guidelines,
  };
}

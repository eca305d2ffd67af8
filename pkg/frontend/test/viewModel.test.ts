import { describe, expect, it } from "vitest";

import { renderCase, renderDone } from "../src/render";
import { canSubmit, CasePayload } from "../src/types";
import { toViewModel } from "../src/viewModel";
import minimalFixture from "./fixtures/payload_minimal.json";
import weightFixture from "./fixtures/payload_weight.json";

const minimal = minimalFixture as CasePayload;
const weight = weightFixture as CasePayload;

describe("toViewModel", () => {
  it("keeps every trend point and sorts them by time", () => {
    const vm = toViewModel(weight);
    const body = vm.trends.find((s) => s.name === "bodyweight")!;
    expect(body.points).toHaveLength(31); // 30 priors + the reading itself
    expect(body.unit).toBe("kg");
    const stamps = body.points.map((p) => p.at);
    expect(stamps).toEqual([...stamps].sort());
    expect(body.points[body.points.length - 1].value).toBe(86.4);
  });

  it("pools the cuff's pulse_rate with the pulse series", () => {
    const vm = toViewModel(minimal);
    const pulse = vm.trends.find((s) => s.name === "pulse")!;
    expect(pulse.points.map((p) => p.value)).toEqual([72.0, 72.0, 88.0]);
    expect(vm.trends.some((s) => s.name === "pulse rate")).toBe(false);
  });

  it("renders measurement values with their units", () => {
    const vm = toViewModel(minimal);
    expect(vm.values).toEqual([
      { name: "diastolic", value: 94.0, unit: "mmHg" },
      { name: "pulse rate", value: 88.0, unit: "bpm" },
      { name: "systolic", value: 161.0, unit: "mmHg" },
    ]);
    expect(vm.device).toBe("Blood pressure cuff");
  });

  it("carries the patient context through untouched", () => {
    const vm = toViewModel(weight);
    expect(vm.ageYears).toBe(74.0);
    expect(vm.problemList.map((p) => p.label)).toEqual(["heart_failure", "hypertension"]);
    expect(vm.notes[0].summary).toContain("diuretic dose adjusted");
    expect(vm.calls).toHaveLength(2);
  });

  it("leaves optional demographics null when the payload has none", () => {
    const vm = toViewModel(minimal);
    expect(vm.ageYears).toBeNull();
    expect(vm.sex).toBeNull();
    expect(vm.enrolledAt).toBeNull();
  });
});

describe("case screen", () => {
  it("shows queue position and the reading values", () => {
    const html = renderCase(toViewModel(minimal));
    expect(html).toContain("Case 1 of 2");
    expect(html).toContain("161");
    expect(html).toContain("mmHg");
  });

  it("shows 'none' for empty notes, encounters, and contacts", () => {
    const html = renderCase(toViewModel(minimal));
    expect(html.match(/>none</g)?.length).toBeGreaterThanOrEqual(3);
  });

  it("lists real notes instead of the placeholder", () => {
    const html = renderCase(toViewModel(weight));
    expect(html).toContain("diuretic dose adjusted");
    expect(html).toContain("heart failure exacerbation");
  });

  it("includes the four severity buttons and six actions", () => {
    const html = renderCase(toViewModel(minimal));
    expect(html.match(/severity-btn/g)?.length).toBe(4);
    expect(html.match(/<option/g)?.length).toBe(6);
    expect(html).toContain('id="submit"');
    expect(html).toContain("disabled");
  });
});

describe("grade form state", () => {
  it("blocks submission until a severity is chosen", () => {
    expect(canSubmit({ severity: null, action: "no_action" })).toBe(false);
    expect(canSubmit({ severity: 0, action: "no_action" })).toBe(true);
    expect(canSubmit({ severity: 3, action: "urgent_review" })).toBe(true);
  });
});

describe("completion screen", () => {
  it("states how many cases were graded", () => {
    expect(renderDone(330)).toContain("330");
    expect(renderDone(330)).toContain("Queue complete");
  });
});

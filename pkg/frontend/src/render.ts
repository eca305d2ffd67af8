/**
 * HTML renderers for every screen. Pure string builders so the grading
 * views can be tested without a browser; app.ts owns DOM insertion and
 * event wiring.
 */

import { trendChartSvg } from "./chart";
import { renderGuidance } from "./guidance";
import { ACTIONS, SEVERITIES } from "./types";
import { CaseViewModel } from "./viewModel";

export const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

const day = (instant: string): string => instant.slice(0, 10);

const none = '<p class="empty">none</p>';

function panel(title: string, body: string): string {
  return `<section class="panel"><h2>${esc(title)}</h2>${body}</section>`;
}

function datedList(items: { label: string; since: string }[]): string {
  if (items.length === 0) return none;
  return `<ul>${items
    .map((i) => `<li>${esc(i.label)} <span class="since">since ${day(i.since)}</span></li>`)
    .join("")}</ul>`;
}

export function renderLogin(error?: string): string {
  return `
    <div class="login">
      <h1>Case review</h1>
      <p>Paste the session token you were issued to begin grading.</p>
      ${error ? `<p class="error">${esc(error)}</p>` : ""}
      <form id="login-form">
        <input id="token" type="password" autocomplete="off" placeholder="session token"/>
        <button type="submit">Start</button>
      </form>
    </div>`;
}

export function renderDone(graded: number): string {
  return `
    <div class="done">
      <h1>Queue complete</h1>
      <p>You graded <strong>${graded}</strong> case${graded === 1 ? "" : "s"}. Thank you.</p>
    </div>`;
}

function readingPanel(vm: CaseViewModel): string {
  const rows = vm.values
    .map(
      (m) =>
        `<tr><td>${esc(m.name)}</td><td class="value">${m.value}</td>` +
        `<td class="unit">${esc(m.unit)}</td></tr>`,
    )
    .join("");
  return panel(
    "Reading",
    `<p>${esc(vm.device)} at ${esc(vm.takenAt)}</p><table>${rows}</table>`,
  );
}

function patientPanel(vm: CaseViewModel): string {
  const facts: string[] = [];
  if (vm.ageYears !== null) facts.push(`${vm.ageYears} years`);
  if (vm.sex !== null) facts.push(esc(vm.sex));
  if (vm.enrolledAt !== null) facts.push(`enrolled ${day(vm.enrolledAt)}`);
  return panel(
    "Patient",
    `<p>${facts.length ? facts.join(", ") : "no demographics on file"}</p>` +
      `<h3>Problem list</h3>${datedList(vm.problemList)}` +
      `<h3>Medications</h3>${datedList(vm.medications)}`,
  );
}

function encountersPanel(vm: CaseViewModel): string {
  const body =
    vm.encounters.length === 0
      ? none
      : `<ul>${vm.encounters
          .map(
            (e) =>
              `<li>${esc(e.reason)} <span class="since">${day(e.admitted_at)} to ${day(
                e.discharged_at,
              )}</span></li>`,
          )
          .join("")}</ul>`;
  return panel("Encounters", body);
}

function notesPanel(vm: CaseViewModel): string {
  const body =
    vm.notes.length === 0
      ? none
      : `<ul>${vm.notes
          .map((n) => `<li><span class="since">${day(n.at)}</span> ${esc(n.summary)}</li>`)
          .join("")}</ul>`;
  return panel("Clinical notes", body);
}

function callsPanel(vm: CaseViewModel): string {
  const body =
    vm.calls.length === 0
      ? none
      : `<ul>${vm.calls.map((c) => `<li>${day(c.at)}</li>`).join("")}</ul>`;
  return panel("Recent contacts", body);
}

function gradeForm(): string {
  const buttons = SEVERITIES.map(
    (s) =>
      `<button type="button" class="severity-btn" data-code="${s.code}">` +
      `<kbd>${s.code + 1}</kbd> ${esc(s.label)}</button>`,
  ).join("");
  const options = ACTIONS.map(
    (a) => `<option value="${a.value}">${esc(a.label)}</option>`,
  ).join("");
  return `
    <section class="panel grade-form">
      <h2>Your grade</h2>
      <div class="severity-row">${buttons}</div>
      <label>Action <select id="action">${options}</select></label>
      <button id="submit" type="button" disabled>Submit and next</button>
      <p class="hint">Keys 1 to 4 pick a level. Submission unlocks once a level is chosen.</p>
    </section>`;
}

export function renderCase(vm: CaseViewModel): string {
  const charts = vm.trends.map((series) => trendChartSvg(series)).join("");
  return `
    <header class="queue-bar">Case ${vm.position + 1} of ${vm.queueLength}</header>
    <main class="case">
      ${readingPanel(vm)}
      ${panel("30-day trends", charts || none)}
      ${patientPanel(vm)}
      ${encountersPanel(vm)}
      ${notesPanel(vm)}
      ${callsPanel(vm)}
      ${renderGuidance(vm.guidelines)}
      ${gradeForm()}
    </main>`;
}

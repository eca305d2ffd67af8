/**
 * Headless grading loop: one case in view at a time, server-authoritative.
 *
 * All transitions the UI can take live here so the flow is testable
 * without a DOM. Submission rules:
 *   - no severity chosen: blocked client-side, nothing sent;
 *   - a submit already in flight: ignored (double clicks collapse);
 *   - out-of-order rejection: our head was stale, reload it;
 *   - network failure: retried with the same presentation id.
 */

import { OutOfOrder, ReviewApi } from "./api";
import { GradeTimer } from "./timer";
import { canSubmit, GradeFormState } from "./types";
import { CaseViewModel, toViewModel } from "./viewModel";

export type SessionState =
  | { kind: "case"; vm: CaseViewModel }
  | { kind: "done"; graded: number; total: number };

export class GradingSession {
  readonly timer: GradeTimer;
  private current: CaseViewModel | null = null;
  private inFlight = false;

  constructor(
    private readonly api: ReviewApi,
    now?: () => number,
  ) {
    this.timer = new GradeTimer(now);
  }

  get caseInView(): CaseViewModel | null {
    return this.current;
  }

  async loadNext(): Promise<SessionState> {
    const head = await this.api.queueHead();
    if (head.done || head.case === null) {
      this.current = null;
      return { kind: "done", graded: head.graded, total: head.total };
    }
    this.current = toViewModel(head.case);
    this.timer.reset();
    return { kind: "case", vm: this.current };
  }

  /** Returns the next state, or null when the submit was blocked/ignored. */
  async submit(form: GradeFormState): Promise<SessionState | null> {
    if (this.current === null) throw new Error("no case in view");
    if (!canSubmit(form) || this.inFlight) return null;
    this.inFlight = true;
    try {
      await this.api.submitWithRetry({
        presentation_id: this.current.presentationId,
        severity: form.severity as number,
        action: form.action,
        duration_s: this.timer.elapsedSeconds(),
      });
      return await this.loadNext();
    } catch (err) {
      if (err instanceof OutOfOrder) return await this.loadNext();
      throw err;
    } finally {
      this.inFlight = false;
    }
  }
}

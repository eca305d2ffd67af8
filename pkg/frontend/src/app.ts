/** DOM shell: binds the headless session to the page and the keyboard. */

import { AuthFailure, FetchLike, ReviewApi } from "./api";
import { renderCase, renderDone, renderLogin } from "./render";
import { GradingSession, SessionState } from "./session";
import { GradeFormState } from "./types";

export class App {
  private session: GradingSession | null = null;
  private form: GradeFormState = { severity: null, action: "no_action" };

  constructor(
    private readonly root: HTMLElement,
    private readonly fetchImpl: FetchLike = (...a) => fetch(...a),
  ) {
    document.addEventListener("keydown", (event) => this.onKey(event));
  }

  mount(): void {
    const fromUrl = new URLSearchParams(window.location.search).get("token");
    if (fromUrl) {
      void this.start(fromUrl);
    } else {
      this.showLogin();
    }
  }

  private showLogin(error?: string): void {
    this.session = null;
    this.root.innerHTML = renderLogin(error);
    const form = this.root.querySelector<HTMLFormElement>("#login-form")!;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const token = this.root.querySelector<HTMLInputElement>("#token")!.value.trim();
      if (token) void this.start(token);
    });
  }

  private async start(token: string): Promise<void> {
    this.session = new GradingSession(new ReviewApi(token, this.fetchImpl));
    try {
      this.show(await this.session.loadNext());
    } catch (err) {
      if (err instanceof AuthFailure) {
        this.showLogin("That token was not accepted.");
        return;
      }
      throw err;
    }
  }

  private show(state: SessionState): void {
    if (state.kind === "done") {
      this.root.innerHTML = renderDone(state.graded);
      return;
    }
    this.form = { severity: null, action: "no_action" };
    this.root.innerHTML = renderCase(state.vm);
    for (const btn of this.root.querySelectorAll<HTMLButtonElement>(".severity-btn")) {
      btn.addEventListener("click", () => this.pickSeverity(Number(btn.dataset.code)));
    }
    this.root
      .querySelector<HTMLSelectElement>("#action")!
      .addEventListener("change", (event) => {
        this.form.action = (event.target as HTMLSelectElement).value;
      });
    this.root
      .querySelector<HTMLButtonElement>("#submit")!
      .addEventListener("click", () => void this.submit());
  }

  private pickSeverity(code: number): void {
    this.form.severity = code;
    for (const btn of this.root.querySelectorAll<HTMLButtonElement>(".severity-btn")) {
      btn.classList.toggle("selected", Number(btn.dataset.code) === code);
    }
    const submit = this.root.querySelector<HTMLButtonElement>("#submit");
    if (submit) submit.disabled = false;
  }

  private onKey(event: KeyboardEvent): void {
    if (!this.session?.caseInView) return;
    if (event.target instanceof HTMLInputElement) return;
    if (event.key >= "1" && event.key <= "4") {
      this.pickSeverity(Number(event.key) - 1);
    } else if (event.key === "Enter" && this.form.severity !== null) {
      void this.submit();
    }
  }

  private async submit(): Promise<void> {
    if (!this.session) return;
    try {
      const next = await this.session.submit(this.form);
      if (next) this.show(next);
    } catch (err) {
      if (err instanceof AuthFailure) {
        this.showLogin("Session expired; sign in again.");
        return;
      }
      const submit = this.root.querySelector<HTMLButtonElement>("#submit");
      if (submit) submit.disabled = false;
      console.error(err);
    }
  }
}

/** Per-case grading stopwatch. Reported seconds never decrease, even if the
 * underlying clock is adjusted backwards mid-case. */
export class GradeTimer {
  private started: number;
  private high = 0;

  constructor(private readonly now: () => number = () => performance.now()) {
    this.started = this.now();
  }

  reset(): void {
    this.started = this.now();
    this.high = 0;
  }

  elapsedSeconds(): number {
    const elapsed = Math.max(0, (this.now() - this.started) / 1000);
    this.high = Math.max(this.high, elapsed);
    return this.high;
  }
}

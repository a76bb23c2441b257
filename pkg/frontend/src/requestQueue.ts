/** At most one request in flight; a newer submission supersedes anything
 * still waiting. Stale responses are dropped. */
export class LatestRequestQueue<T> {
  private inFlight = false;
  private queued: (() => Promise<T>) | null = null;
  private generation = 0;

  get busy(): boolean {
    return this.inFlight;
  }

  submit(task: () => Promise<T>,
         onResult: (value: T) => void,
         onError: (err: unknown) => void): void {
    this.queued = task;
    if (!this.inFlight) {
      void this.drain(onResult, onError);
    }
  }

  private async drain(onResult: (value: T) => void,
                      onError: (err: unknown) => void): Promise<void> {
    this.inFlight = true;
    try {
      while (this.queued) {
        const task = this.queued;
        this.queued = null;
        const gen = ++this.generation;
        try {
          const value = await task();
          if (gen === this.generation && !this.queued) {
            onResult(value);
          }
        } catch (err) {
          if (gen === this.generation && !this.queued) {
            onError(err);
          }
        }
      }
    } finally {
      this.inFlight = false;
    }
  }
}

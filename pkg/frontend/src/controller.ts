import type { ReviewApiLike } from './api.js'
import type { Candidate, SessionState, Verdict } from './types.js'

interface HistoryEntry {
  candidate: Candidate
  verdict: Verdict
}

/**
 * Review session state machine, independent of the DOM.
 *
 * A verdict is only counted once the server acknowledges it; request
 * failures surface as a retry banner without losing the current candidate.
 * Undo re-presents the previously decided candidate; deciding it again emits
 * a superseding decision event on the server (history is never deleted).
 */
export class ReviewSession {
  private state: SessionState = {
    phase: 'loading',
    candidate: null,
    progress: null,
    error: null,
    revisiting: false,
  }
  private history: HistoryEntry[] = []
  private busy = false

  constructor(
    private readonly api: ReviewApiLike,
    private readonly annotator: string,
    private readonly onChange: (state: SessionState) => void = () => {},
  ) {}

  getState(): SessionState {
    return { ...this.state }
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch }
    this.onChange(this.getState())
  }

  /** Load the first candidate and the current progress. */
  async start(): Promise<void> {
    this.update({ phase: 'loading', error: null, revisiting: false })
    try {
      const [candidate, progress] = await Promise.all([
        this.api.nextCandidate(),
        this.api.progress(),
      ])
      this.update({
        phase: candidate ? 'reviewing' : 'empty',
        candidate,
        progress,
        error: null,
      })
    } catch (err) {
      this.update({ error: describe(err) })
    }
  }

  /**
   * Submit a verdict for the current candidate, then advance.
   * No state changes happen before the server acknowledges the write.
   */
  async decide(verdict: Verdict): Promise<void> {
    const candidate = this.state.candidate
    if (!candidate || this.busy || this.state.phase !== 'reviewing') {
      return
    }
    this.busy = true
    try {
      await this.api.submitDecision(candidate.id, verdict, this.annotator)
    } catch (err) {
      this.update({ error: describe(err) })
      this.busy = false
      return
    }
    this.history.push({ candidate, verdict })
    try {
      const [next, progress] = await Promise.all([
        this.api.nextCandidate(),
        this.api.progress(),
      ])
      this.update({
        phase: next ? 'reviewing' : 'empty',
        candidate: next,
        progress,
        error: null,
        revisiting: false,
      })
    } catch (err) {
      // The verdict is recorded; only the refresh failed.
      this.update({ error: describe(err) })
    } finally {
      this.busy = false
    }
  }

  /** Re-present the most recently decided candidate of this session. */
  undo(): void {
    const last = this.history.pop()
    if (!last || this.busy) {
      if (last) this.history.push(last)
      return
    }
    this.update({
      phase: 'reviewing',
      candidate: last.candidate,
      error: null,
      revisiting: true,
    })
  }

  /** Retry after a failed request, keeping the current candidate. */
  async retry(): Promise<void> {
    if (this.state.phase === 'reviewing' && this.state.candidate) {
      this.update({ error: null })
      return
    }
    await this.start()
  }

  decidedThisSession(): number {
    return this.history.length
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err)
}

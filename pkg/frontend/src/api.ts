import type { Candidate, Progress, Verdict } from './types.js'

/** Surface the session logic needs; ReviewApi is the HTTP implementation. */
export interface ReviewApiLike {
  nextCandidate(): Promise<Candidate | null>
  submitDecision(candidateId: string, verdict: Verdict, annotator: string): Promise<void>
  progress(): Promise<Progress>
  imageUrl(candidateId: string, which: 'original' | 'edited'): string
}

/** Typed client for the review HTTP API served by `review-serve`. */
export class ReviewApi implements ReviewApiLike {
  private readonly base: string
  private readonly fetchFn: typeof fetch

  constructor(baseUrl = '', fetchFn: typeof fetch = globalThis.fetch.bind(globalThis)) {
    this.base = baseUrl.replace(/\/$/, '')
    this.fetchFn = fetchFn
  }

  /** Next undecided candidate, or null when the queue is empty (204). */
  async nextCandidate(): Promise<Candidate | null> {
    const response = await this.fetchFn(`${this.base}/api/candidates/next`)
    if (response.status === 204) {
      return null
    }
    if (!response.ok) {
      throw new Error(`next candidate failed: ${response.status}`)
    }
    return (await response.json()) as Candidate
  }

  /** Resolves only after the server has durably recorded the verdict. */
  async submitDecision(candidateId: string, verdict: Verdict, annotator: string): Promise<void> {
    const response = await this.fetchFn(
      `${this.base}/api/candidates/${encodeURIComponent(candidateId)}/decision`,
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ verdict, annotator }),
      },
    )
    if (!response.ok) {
      const text = await response.text()
      throw new Error(text || `decision failed: ${response.status}`)
    }
  }

  async progress(): Promise<Progress> {
    const response = await this.fetchFn(`${this.base}/api/progress`)
    if (!response.ok) {
      throw new Error(`progress failed: ${response.status}`)
    }
    return (await response.json()) as Progress
  }

  imageUrl(candidateId: string, which: 'original' | 'edited'): string {
    return `${this.base}/api/candidates/${encodeURIComponent(candidateId)}/image/${which}`
  }
}

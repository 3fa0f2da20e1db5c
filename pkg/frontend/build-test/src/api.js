/** Typed client for the review HTTP API served by `review-serve`. */
export class ReviewApi {
    constructor(baseUrl = '', fetchFn = globalThis.fetch.bind(globalThis)) {
        this.base = baseUrl.replace(/\/$/, '');
        this.fetchFn = fetchFn;
    }
    /** Next undecided candidate, or null when the queue is empty (204). */
    async nextCandidate() {
        const response = await this.fetchFn(`${this.base}/api/candidates/next`);
        if (response.status === 204) {
            return null;
        }
        if (!response.ok) {
            throw new Error(`next candidate failed: ${response.status}`);
        }
        return (await response.json());
    }
    /** Resolves only after the server has durably recorded the verdict. */
    async submitDecision(candidateId, verdict, annotator) {
        const response = await this.fetchFn(`${this.base}/api/candidates/${encodeURIComponent(candidateId)}/decision`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ verdict, annotator }),
        });
        if (!response.ok) {
            const text = await response.text();
            throw new Error(text || `decision failed: ${response.status}`);
        }
    }
    async progress() {
        const response = await this.fetchFn(`${this.base}/api/progress`);
        if (!response.ok) {
            throw new Error(`progress failed: ${response.status}`);
        }
        return (await response.json());
    }
    imageUrl(candidateId, which) {
        return `${this.base}/api/candidates/${encodeURIComponent(candidateId)}/image/${which}`;
    }
}

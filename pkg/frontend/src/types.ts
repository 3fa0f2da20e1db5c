export interface Candidate {
  id: string
  original_image_ref: string
  edited_image_ref: string
  task_goal: string
  steps: string[]
  strategy: string
  edit_prompt: string
}

export type Verdict = 'keep' | 'discard'

export interface Progress {
  decided: number
  remaining: number
  keep_rate: number
}

export interface SessionState {
  phase: 'loading' | 'reviewing' | 'empty'
  candidate: Candidate | null
  progress: Progress | null
  /** Retry-banner text after a failed request; the current candidate is kept. */
  error: string | null
  /** True while re-deciding an undone candidate. */
  revisiting: boolean
}

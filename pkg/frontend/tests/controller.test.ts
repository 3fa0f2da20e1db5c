import assert from 'node:assert/strict'
import { test } from 'node:test'

import type { ReviewApiLike } from '../src/api.js'
import { ReviewSession } from '../src/controller.js'
import type { Candidate, Progress, Verdict } from '../src/types.js'

function candidate(i: number): Candidate {
  return {
    id: `cand-${i}`,
    original_image_ref: `orig-${i}.png`,
    edited_image_ref: `edit-${i}.png`,
    task_goal: 'stack the cubes',
    steps: ['grasp the cube', 'place the cube'],
    strategy: 'Object Replacement',
    edit_prompt: 'replace the cube with a sphere',
  }
}

/** In-memory server double with the same decided/undecided semantics. */
class FakeApi implements ReviewApiLike {
  decided = new Map<string, Verdict>()
  events: Array<{ id: string; verdict: Verdict; annotator: string }> = []
  failNextDecision = false

  constructor(public candidates: Candidate[]) {}

  async nextCandidate(): Promise<Candidate | null> {
    return this.candidates.find((c) => !this.decided.has(c.id)) ?? null
  }

  async submitDecision(id: string, verdict: Verdict, annotator: string): Promise<void> {
    if (this.failNextDecision) {
      this.failNextDecision = false
      throw new Error('network down')
    }
    if (!this.candidates.some((c) => c.id === id)) {
      throw new Error(`unknown candidate ${id}`)
    }
    this.decided.set(id, verdict)
    this.events.push({ id, verdict, annotator })
  }

  async progress(): Promise<Progress> {
    const decided = this.decided.size
    const keeps = [...this.decided.values()].filter((v) => v === 'keep').length
    return {
      decided,
      remaining: this.candidates.length - decided,
      keep_rate: decided ? keeps / decided : 0,
    }
  }

  imageUrl(id: string, which: 'original' | 'edited'): string {
    return `/api/candidates/${id}/image/${which}`
  }
}

test('start loads the first candidate and progress', async () => {
  const api = new FakeApi([candidate(0), candidate(1)])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  const state = session.getState()
  assert.equal(state.phase, 'reviewing')
  assert.equal(state.candidate?.id, 'cand-0')
  assert.deepEqual(state.progress, { decided: 0, remaining: 2, keep_rate: 0 })
})

test('deciding advances to the next candidate and posts the verdict', async () => {
  const api = new FakeApi([candidate(0), candidate(1)])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  await session.decide('keep')
  assert.deepEqual(api.events, [{ id: 'cand-0', verdict: 'keep', annotator: 'alice' }])
  assert.equal(session.getState().candidate?.id, 'cand-1')
})

test('no verdict counts as recorded before the server acknowledges it', async () => {
  const api = new FakeApi([candidate(0)])
  let release: () => void = () => {}
  const gate = new Promise<void>((resolve) => {
    release = resolve
  })
  const gatedSubmit = api.submitDecision.bind(api)
  api.submitDecision = async (id, verdict, annotator) => {
    await gate
    return gatedSubmit(id, verdict, annotator)
  }
  const session = new ReviewSession(api, 'alice')
  await session.start()
  const pending = session.decide('keep')
  assert.equal(session.decidedThisSession(), 0)
  assert.equal(api.events.length, 0)
  release()
  await pending
  assert.equal(session.decidedThisSession(), 1)
  assert.equal(api.events.length, 1)
})

test('queue drain shows the completion state with final keep rate', async () => {
  const api = new FakeApi([candidate(0), candidate(1)])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  await session.decide('keep')
  await session.decide('discard')
  const state = session.getState()
  assert.equal(state.phase, 'empty')
  assert.equal(state.candidate, null)
  assert.deepEqual(state.progress, { decided: 2, remaining: 0, keep_rate: 0.5 })
})

test('failed decision shows a retry banner and keeps the candidate', async () => {
  const api = new FakeApi([candidate(0), candidate(1)])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  api.failNextDecision = true
  await session.decide('keep')
  let state = session.getState()
  assert.equal(state.error, 'network down')
  assert.equal(state.candidate?.id, 'cand-0') // not lost
  assert.equal(api.events.length, 0)

  await session.retry()
  await session.decide('keep')
  state = session.getState()
  assert.equal(state.error, null)
  assert.equal(state.candidate?.id, 'cand-1')
  assert.equal(api.events.length, 1)
})

test('undo re-presents the last candidate; re-deciding supersedes', async () => {
  const api = new FakeApi([candidate(0), candidate(1)])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  await session.decide('keep')
  session.undo()
  let state = session.getState()
  assert.equal(state.candidate?.id, 'cand-0')
  assert.equal(state.revisiting, true)

  await session.decide('discard')
  assert.deepEqual(
    api.events.map((e) => [e.id, e.verdict]),
    [
      ['cand-0', 'keep'],
      ['cand-0', 'discard'], // superseding event, history intact
    ],
  )
  assert.equal(api.decided.get('cand-0'), 'discard')
  state = session.getState()
  assert.equal(state.candidate?.id, 'cand-1')
  assert.equal(state.revisiting, false)
})

test('undo with no history is a no-op', async () => {
  const api = new FakeApi([candidate(0)])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  session.undo()
  assert.equal(session.getState().candidate?.id, 'cand-0')
})

test('empty queue from the start shows completion', async () => {
  const api = new FakeApi([])
  const session = new ReviewSession(api, 'alice')
  await session.start()
  assert.equal(session.getState().phase, 'empty')
})

test('onChange observers see every transition', async () => {
  const api = new FakeApi([candidate(0)])
  const phases: string[] = []
  const session = new ReviewSession(api, 'alice', (s) => phases.push(s.phase))
  await session.start()
  await session.decide('keep')
  assert.deepEqual(phases, ['loading', 'reviewing', 'empty'])
})

import type { ReviewApiLike } from './api.js'
import type { ReviewSession } from './controller.js'
import type { SessionState } from './types.js'

const IGNORED_TAGS = new Set(['INPUT', 'TEXTAREA', 'SELECT'])

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) {
    throw new Error(`missing element #${id}`)
  }
  return node as T
}

export function render(state: SessionState, api: ReviewApiLike): void {
  const loading = el('loading')
  const reviewer = el('reviewer')
  const empty = el('empty')
  loading.hidden = state.phase !== 'loading'
  reviewer.hidden = state.phase !== 'reviewing'
  empty.hidden = state.phase !== 'empty'

  const banner = el('error-banner')
  banner.hidden = state.error === null
  if (state.error !== null) {
    el('error-text').textContent = state.error
  }

  if (state.progress) {
    const { decided, remaining, keep_rate } = state.progress
    const total = decided + remaining
    el('progress-text').textContent =
      `${decided} / ${total} decided — keep rate ${(100 * keep_rate).toFixed(1)}%`
    const bar = el<HTMLProgressElement>('progress-bar')
    bar.max = total || 1
    bar.value = decided
  }

  if (state.phase === 'reviewing' && state.candidate) {
    const c = state.candidate
    el<HTMLImageElement>('image-original').src = api.imageUrl(c.id, 'original')
    el<HTMLImageElement>('image-edited').src = api.imageUrl(c.id, 'edited')
    el('task-goal').textContent = c.task_goal
    el('strategy').textContent = c.strategy
    el('edit-prompt').textContent = c.edit_prompt
    const steps = el('steps')
    steps.replaceChildren(
      ...c.steps.map((text) => {
        const li = document.createElement('li')
        li.textContent = text
        return li
      }),
    )
    el('revisit-note').hidden = !state.revisiting
  }

  if (state.phase === 'empty' && state.progress) {
    el('final-keep-rate').textContent = `${(100 * state.progress.keep_rate).toFixed(1)}%`
  }
}

export function bind(session: ReviewSession): void {
  el('btn-keep').addEventListener('click', () => void session.decide('keep'))
  el('btn-discard').addEventListener('click', () => void session.decide('discard'))
  el('btn-undo').addEventListener('click', () => session.undo())
  el('btn-retry').addEventListener('click', () => void session.retry())

  window.addEventListener('keydown', (event: KeyboardEvent) => {
    const target = event.target as HTMLElement | null
    if (target && (IGNORED_TAGS.has(target.tagName) || target.isContentEditable)) {
      return
    }
    switch (event.key.toLowerCase()) {
      case 'k':
        event.preventDefault()
        void session.decide('keep')
        break
      case 'd':
        event.preventDefault()
        void session.decide('discard')
        break
      case 'u':
        event.preventDefault()
        session.undo()
        break
    }
  })
}

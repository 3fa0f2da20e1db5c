import { ReviewApi } from './api.js'
import { ReviewSession } from './controller.js'
import { bind, render } from './dom.js'

const params = new URLSearchParams(window.location.search)
const annotator = params.get('annotator') ?? 'anonymous'

const api = new ReviewApi('')
const session = new ReviewSession(api, annotator, (state) => render(state, api))

bind(session)
void session.start()

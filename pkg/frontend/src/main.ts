// Bootstrap: connect the feed, render on every state change, translate
// DOM events into actions. The broker base URL comes from ?api=... or
// defaults to the serving origin (hyperwire serve --ui serves this page).

import { Api, streamUrl } from './api.js'
import { LiveFeed } from './live.js'
import {
  applicableSelection, candidatesFor, initialModel, reduce, type Action,
  type UiModel,
} from './model.js'
import type { ApplyResult } from './types.js'
import { renderHtml } from './view.js'

const base = new URLSearchParams(location.search).get('api')
  ?? location.origin
const api = new Api(base)
const root = document.getElementById('app')!

let model: UiModel = initialModel()

function dispatch(action: Action): void {
  model = reduce(model, action)
  if (model.needsRefresh) {
    model = reduce(model, { kind: 'refresh_started' })
    void refresh()
  }
  root.innerHTML = renderHtml(model)
}

async function refresh(): Promise<void> {
  try {
    const snapshot = await api.state()
    dispatch({ kind: 'feed', msg: { kind: 'snapshot', ...snapshot } })
  } catch {
    // feed status drives the banner; the next delta retries anyway
  }
}

async function applyClicked(appId: string, reqId: string): Promise<void> {
  const wiring = applicableSelection(model, appId, reqId)
  if (wiring === null) return // nothing valid selected, or already in flight
  dispatch({ kind: 'apply_started', app_id: appId, requirement_id: reqId })
  let result: ApplyResult
  try {
    result = await api.apply(appId, reqId, wiring)
  } catch (err) {
    result = { ok: false, error: { code: 'network', path: '',
                                   detail: String(err) } }
  }
  dispatch({ kind: 'apply_finished', app_id: appId, requirement_id: reqId,
             result })
}

root.addEventListener('click', (ev) => {
  const target = (ev.target as HTMLElement).closest('[data-apply]')
  if (target === null) return
  void applyClicked(target.getAttribute('data-app')!,
                    target.getAttribute('data-req')!)
})

root.addEventListener('change', (ev) => {
  const target = (ev.target as HTMLElement).closest('[data-pick]')
  if (target === null) return
  const appId = target.getAttribute('data-app')!
  const reqId = target.getAttribute('data-req')!
  const idx = Number(target.getAttribute('data-idx'))
  const wiring = candidatesFor(model, appId, reqId)[idx] ?? null
  dispatch({ kind: 'select', app_id: appId, requirement_id: reqId, wiring })
})

const feed = new LiveFeed(
  streamUrl(base, true),
  (msg) => dispatch({ kind: 'feed', msg }),
  (up) => dispatch({ kind: 'feed_status', up }))
feed.start()

void refresh()

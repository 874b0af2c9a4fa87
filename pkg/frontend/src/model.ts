// Pure UI state. The model is a function of the feed message stream and
// user actions only, so every behavior here is replayable in tests
// without a browser or a live broker.

import type {
  ApplyError, ApplyResult, FeedMessage, Snapshot, WiringDoc, WiringRow,
} from './types.js'

// no timestamp on purpose: the model must replay identically from the
// same feed + actions, and notices are ordered by position anyway
export interface Notice {
  tone: 'info' | 'warn' | 'error'
  text: string
}

export interface Sample {
  ts_ns: number
  payload: unknown[]
}

export interface UiModel {
  connected: boolean
  snapshot: Snapshot | null
  /** requirement key -> JSON of the chosen candidate (must exist in snapshot) */
  selected: Record<string, string>
  /** requirement key -> an apply is in flight; gates the POST, not just the button */
  applying: Record<string, boolean>
  applyErrors: Record<string, ApplyError>
  samples: Record<string, Sample[]>
  notices: Notice[]
  /** set by deltas that invalidate the snapshot; cleared when a refresh starts */
  needsRefresh: boolean
}

export type Action =
  | { kind: 'feed'; msg: FeedMessage }
  | { kind: 'feed_status'; up: boolean }
  | { kind: 'select'; app_id: string; requirement_id: string;
      wiring: WiringDoc | null }
  | { kind: 'apply_started'; app_id: string; requirement_id: string }
  | { kind: 'apply_finished'; app_id: string; requirement_id: string;
      result: ApplyResult }
  | { kind: 'refresh_started' }

export const MAX_NOTICES = 50
export const MAX_SAMPLES = 30

export function reqKey(appId: string, reqId: string): string {
  return `${appId}/${reqId}`
}

export function initialModel(): UiModel {
  return {
    connected: false,
    snapshot: null,
    selected: {},
    applying: {},
    applyErrors: {},
    samples: {},
    notices: [],
    needsRefresh: false,
  }
}

export function candidatesFor(
    model: UiModel, appId: string, reqId: string): WiringDoc[] {
  return model.snapshot?.candidates[appId]?.[reqId] ?? []
}

export function activeWiringFor(
    model: UiModel, appId: string, reqId: string):
    { wiringId: string; row: WiringRow } | null {
  const wirings = model.snapshot?.wirings ?? {}
  for (const [wiringId, row] of Object.entries(wirings)) {
    if (row.app_id === appId && row.requirement_id === reqId) {
      return { wiringId, row }
    }
  }
  return null
}

export function selectedWiring(
    model: UiModel, appId: string, reqId: string): WiringDoc | null {
  const chosen = model.selected[reqKey(appId, reqId)]
  if (chosen === undefined) return null
  const match = candidatesFor(model, appId, reqId)
    .find((c) => JSON.stringify(c) === chosen)
  return match ?? null
}

/** The one gate for POSTing an apply: a live selection and nothing in flight. */
export function applicableSelection(
    model: UiModel, appId: string, reqId: string): WiringDoc | null {
  if (model.applying[reqKey(appId, reqId)]) return null
  return selectedWiring(model, appId, reqId)
}

function withNotice(model: UiModel, tone: Notice['tone'], text: string): UiModel {
  const notices = [{ tone, text }, ...model.notices]
  return { ...model, notices: notices.slice(0, MAX_NOTICES) }
}

function keyIsValid(snapshot: Snapshot, key: string): boolean {
  const [appId, reqId] = key.split('/', 2)
  if (appId === undefined || reqId === undefined) return false
  const app = snapshot.apps.find((a) => a.app_id === appId)
  return app !== undefined && app.requirements.some((r) => r.id === reqId)
}

function pruneByKey<T>(table: Record<string, T>,
                       keep: (key: string) => boolean): Record<string, T> {
  return Object.fromEntries(Object.entries(table).filter(([k]) => keep(k)))
}

function acceptSnapshot(model: UiModel, snapshot: Snapshot): UiModel {
  // stale selections are cleared: a selection must name a wiring that the
  // latest snapshot still offers for its requirement
  const selected: Record<string, string> = {}
  for (const [key, chosen] of Object.entries(model.selected)) {
    const [appId, reqId] = key.split('/', 2)
    if (appId === undefined || reqId === undefined) continue
    const stillThere = (snapshot.candidates[appId]?.[reqId] ?? [])
      .some((c) => JSON.stringify(c) === chosen)
    if (stillThere) selected[key] = chosen
  }
  const valid = (key: string) => keyIsValid(snapshot, key)
  return {
    ...model,
    snapshot,
    selected,
    applying: pruneByKey(model.applying, valid),
    applyErrors: pruneByKey(model.applyErrors, valid),
    samples: pruneByKey(model.samples, valid),
    needsRefresh: false,
  }
}

function applyFeed(model: UiModel, msg: FeedMessage): UiModel {
  switch (msg.kind) {
    case 'snapshot': {
      const { kind: _kind, ...snapshot } = msg
      return acceptSnapshot(model, snapshot)
    }
    case 'counters': {
      if (model.snapshot === null) return model
      const wirings = { ...model.snapshot.wirings }
      for (const [wid, row] of Object.entries(msg.wirings)) {
        const known = wirings[wid]
        if (known !== undefined) wirings[wid] = { ...known, ...row }
      }
      const snapshot = { ...model.snapshot, wirings,
                         version: msg.version,
                         unrouted_drops: msg.unrouted_drops }
      return { ...model, snapshot }
    }
    case 'wiring_applied':
      return withNotice({ ...model, needsRefresh: true }, 'info',
                        `wiring ${msg.wiring_id} applied for `
                        + `${msg.app_id}/${msg.requirement_id}`)
    case 'wiring_degraded': {
      // flip the badge immediately; the refresh fills in the rest
      let next = { ...model, needsRefresh: true }
      if (next.snapshot !== null) {
        const wirings = { ...next.snapshot.wirings }
        for (const wid of msg.wiring_ids) {
          const row = wirings[wid]
          if (row !== undefined) wirings[wid] = { ...row, status: 'degraded' }
        }
        next = { ...next, snapshot: { ...next.snapshot, wirings } }
      }
      return withNotice(next, 'warn',
                        `wiring ${msg.wiring_ids.join(', ')} degraded`)
    }
    case 'device_joined':
      return withNotice({ ...model, needsRefresh: true }, 'info',
                        `device ${msg.device_id} (${msg.name}) joined`)
    case 'device_left': {
      let next = { ...model, needsRefresh: true }
      if (next.snapshot !== null) {
        const devices = next.snapshot.devices
          .filter((d) => d.device_id !== msg.device_id)
        next = { ...next, snapshot: { ...next.snapshot, devices } }
      }
      return withNotice(next, 'warn',
                        `device ${msg.device_id} left (${msg.reason})`)
    }
    case 'app_joined':
      return withNotice({ ...model, needsRefresh: true }, 'info',
                        `app ${msg.app_id} (${msg.name}) joined`)
    case 'app_left': {
      let next = { ...model, needsRefresh: true }
      if (next.snapshot !== null) {
        const apps = next.snapshot.apps.filter((a) => a.app_id !== msg.app_id)
        const wirings = Object.fromEntries(
          Object.entries(next.snapshot.wirings)
            .filter(([, row]) => row.app_id !== msg.app_id))
        const candidates = pruneByKey(next.snapshot.candidates,
                                      (appId) => appId !== msg.app_id)
        next = { ...next, snapshot: { ...next.snapshot, apps, wirings, candidates } }
        const keep = (key: string) => !key.startsWith(`${msg.app_id}/`)
        next = { ...next,
                 selected: pruneByKey(next.selected, keep),
                 applying: pruneByKey(next.applying, keep),
                 applyErrors: pruneByKey(next.applyErrors, keep),
                 samples: pruneByKey(next.samples, keep) }
      }
      return withNotice(next, 'warn', `app ${msg.app_id} left (${msg.reason})`)
    }
    case 'device_updated':
    case 'app_updated':
      return { ...model, needsRefresh: true }
    case 'event_sample': {
      const key = reqKey(msg.app_id, msg.requirement_id)
      const ring = [...(model.samples[key] ?? []),
                    { ts_ns: msg.ts_ns, payload: msg.payload }]
      return { ...model,
               samples: { ...model.samples,
                          [key]: ring.slice(-MAX_SAMPLES) } }
    }
  }
}

export function reduce(model: UiModel, action: Action): UiModel {
  switch (action.kind) {
    case 'feed':
      return applyFeed(model, action.msg)
    case 'feed_status': {
      // a reconnect needs no refresh flag: every new subscription is
      // greeted with a fresh snapshot by the server
      const next = { ...model, connected: action.up }
      if (!action.up && model.connected) {
        return withNotice(next, 'warn', 'live feed lost, reconnecting')
      }
      return next
    }
    case 'select': {
      const key = reqKey(action.app_id, action.requirement_id)
      const selected = { ...model.selected }
      const applyErrors = pruneByKey(model.applyErrors, (k) => k !== key)
      if (action.wiring === null) {
        delete selected[key]
        return { ...model, selected, applyErrors }
      }
      const json = JSON.stringify(action.wiring)
      const offered = candidatesFor(model, action.app_id, action.requirement_id)
        .some((c) => JSON.stringify(c) === json)
      if (!offered) return model // never select what the snapshot does not offer
      selected[key] = json
      return { ...model, selected, applyErrors }
    }
    case 'apply_started': {
      const key = reqKey(action.app_id, action.requirement_id)
      return { ...model, applying: { ...model.applying, [key]: true } }
    }
    case 'apply_finished': {
      const key = reqKey(action.app_id, action.requirement_id)
      const applying = pruneByKey(model.applying, (k) => k !== key)
      if (action.result.ok) {
        const next = { ...model, applying, needsRefresh: true,
                       applyErrors: pruneByKey(model.applyErrors,
                                               (k) => k !== key) }
        return withNotice(next, 'info',
                          `applied ${action.result.wiring_id} `
                          + `(table v${action.result.version})`)
      }
      const err = action.result.error
      const next = { ...model, applying,
                     applyErrors: { ...model.applyErrors, [key]: err } }
      return withNotice(next, 'error',
                        `apply failed: ${err.code} at ${err.path}: ${err.detail}`)
    }
    case 'refresh_started':
      return { ...model, needsRefresh: false }
  }
}

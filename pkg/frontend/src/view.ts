// HTML for the whole page as a pure function of the model. main.ts swaps
// it into the DOM and wires delegated listeners; nothing here touches
// document, so the markup is testable in node.

import { wiringSvgOrError } from './graph.js'
import {
  activeWiringFor, applicableSelection, candidatesFor, reqKey,
  selectedWiring, type UiModel,
} from './model.js'
import { isOpNode, type WiringDoc, type WiringNode } from './types.js'

const MAX_LISTED_CANDIDATES = 24

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;')
    .replace(/>/g, '&gt;').replace(/"/g, '&quot;')
}

function leafCaps(node: WiringNode, into: Set<string>): Set<string> {
  if (isOpNode(node)) node.children.forEach((c) => leafCaps(c, into))
  else into.add(node.cap)
  return into
}

export function candidateSummary(doc: WiringDoc): string {
  const leaves = [...leafCaps(doc.root, new Set())].sort()
  return `cost ${doc.cost}: ${leaves.join(' + ')}`
}

function badge(status: string): string {
  return `<span class="badge badge-${esc(status)}">${esc(status)}</span>`
}

function sparkline(samples: { payload: unknown[] }[]): string {
  const values = samples
    .map((s) => s.payload[0])
    .filter((v): v is number => typeof v === 'number')
  if (values.length < 2) return ''
  const min = Math.min(...values, -1)
  const span = Math.max(...values, 1) - min || 1
  const points = values
    .map((v, i) => `${(i / (values.length - 1)) * 100},`
      + `${24 - ((v - min) / span) * 24}`)
    .join(' ')
  return `<svg class="spark" viewBox="0 0 100 24" preserveAspectRatio="none">`
    + `<polyline points="${points}"/></svg>`
}

function requirementCard(model: UiModel, appId: string, reqId: string,
                         type: string, label: string): string {
  const key = reqKey(appId, reqId)
  const active = activeWiringFor(model, appId, reqId)
  const chosen = selectedWiring(model, appId, reqId)
  const shown = chosen ?? active?.row.wiring ?? null
  const candidates = candidatesFor(model, appId, reqId)
  const applyError = model.applyErrors[key]

  const header = `<div class="req-head"><strong>${esc(reqId)}</strong>`
    + ` <code>${esc(type)}</code>`
    + (label ? ` <em>${esc(label)}</em>` : '')
    + (active !== null
       ? ` ${badge(active.row.status)}`
         + `<span class="counters">in ${active.row.events_in}`
         + ` / out ${active.row.events_out}`
         + ` / drops ${active.row.drops}</span>`
       : ` ${badge('unwired')}`)
    + sparkline(model.samples[key] ?? [])
    + `</div>`

  const activeJson = active === null ? null
    : JSON.stringify(active.row.wiring)
  const options = candidates.slice(0, MAX_LISTED_CANDIDATES)
    .map((cand, i) => {
      const json = JSON.stringify(cand)
      const picked = model.selected[key] === json
      const isActive = json === activeJson
      return `<li><label>`
        + `<input type="radio" name="cand-${esc(key)}" data-pick `
        + `data-app="${esc(appId)}" data-req="${esc(reqId)}" data-idx="${i}"`
        + `${picked ? ' checked' : ''}/>`
        + ` ${esc(candidateSummary(cand))}`
        + (isActive ? ' <span class="active-mark">(active)</span>' : '')
        + `</label></li>`
    }).join('')
  const more = candidates.length > MAX_LISTED_CANDIDATES
    ? `<li class="more">and ${candidates.length - MAX_LISTED_CANDIDATES} more</li>`
    : ''

  const applyDisabled = applicableSelection(model, appId, reqId) === null
  const applying = model.applying[key] === true

  return `<div class="requirement" data-reqcard="${esc(key)}">`
    + header
    + `<ol class="candidates">${options}${more}</ol>`
    + `<button data-apply data-app="${esc(appId)}" data-req="${esc(reqId)}"`
    + `${applyDisabled ? ' disabled' : ''}>`
    + (applying ? 'applying…' : 'apply selected') + `</button>`
    + (applyError !== undefined
       ? `<div class="apply-error">${esc(applyError.code)}`
         + ` at ${esc(applyError.path)}: ${esc(applyError.detail)}</div>`
       : '')
    + (shown !== null
       ? `<div class="graph">${wiringSvgOrError(shown)}</div>`
       : '')
    + `</div>`
}

export function renderHtml(model: UiModel): string {
  const snap = model.snapshot
  const banner = model.connected ? ''
    : `<div class="banner">live feed down, showing last known state</div>`
  if (snap === null) {
    return banner + `<p class="empty">waiting for the broker…</p>`
  }

  const devices = snap.devices.map((d) =>
    `<li><strong>${esc(d.name)}</strong> <code>${esc(d.device_id)}</code><ul>`
    + d.capabilities.map((c) =>
        `<li><code>${esc(d.device_id)}.${esc(c.id)}</code>`
        + ` ${esc(c.type)}</li>`).join('')
    + `</ul></li>`).join('')

  const apps = snap.apps.map((a) =>
    `<section class="app"><h2>${esc(a.name)}`
    + ` <code>${esc(a.app_id)}</code></h2>`
    + a.requirements.map((r) =>
        requirementCard(model, a.app_id, r.id, r.type, r.label)).join('')
    + `</section>`).join('')

  const notices = model.notices.slice(0, 8).map((n) =>
    `<li class="notice-${n.tone}">${esc(n.text)}</li>`).join('')

  return banner
    + `<header><h1>hyperwire</h1>`
    + `<span class="meta">table v${snap.version}`
    + ` · unrouted drops ${snap.unrouted_drops}</span></header>`
    + `<main>`
    + `<section class="devices"><h2>devices</h2>`
    + (devices ? `<ul>${devices}</ul>` : `<p class="empty">none connected</p>`)
    + `</section>`
    + (apps || `<section class="app"><p class="empty">no apps connected</p></section>`)
    + `<section class="notices"><h2>activity</h2><ul>${notices}</ul></section>`
    + `</main>`
}

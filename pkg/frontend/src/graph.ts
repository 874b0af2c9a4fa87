// SVG rendering of a laid-out wiring. Pure string in, string out, so the
// drawing is testable without a DOM.

import { layoutWiring, LayoutError, type GraphNode, type Layout } from './layout.js'
import type { WiringDoc } from './types.js'

const COL_W = 190
const ROW_H = 72
const NODE_W = 150
const NODE_H = 46
const PAD = 24

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;')
    .replace(/>/g, '&gt;').replace(/"/g, '&quot;')
}

function center(node: GraphNode): { x: number; y: number } {
  return {
    x: PAD + node.col * COL_W + NODE_W / 2,
    y: PAD + node.row * ROW_H + NODE_H / 2,
  }
}

function renderNode(node: GraphNode): string {
  const x = PAD + node.col * COL_W
  const y = PAD + node.row * ROW_H
  const rx = node.kind === 'op' ? 6 : 16
  return `<g class="node node-${node.kind}">`
    + `<rect x="${x}" y="${y}" width="${NODE_W}" height="${NODE_H}" rx="${rx}"/>`
    + `<text class="name" x="${x + NODE_W / 2}" y="${y + 19}">${esc(node.name)}</text>`
    + `<text class="type" x="${x + NODE_W / 2}" y="${y + 36}">${esc(node.type)}</text>`
    + `</g>`
}

function renderEdge(layout: Layout, from: string, to: string,
                    lane: number | null): string {
  const a = center(layout.nodes.find((n) => n.id === from)!)
  const b = center(layout.nodes.find((n) => n.id === to)!)
  const x1 = a.x + NODE_W / 2
  const x2 = b.x - NODE_W / 2
  const bend = (x2 - x1) / 2
  const path = `M ${x1} ${a.y} C ${x1 + bend} ${a.y}, `
    + `${x2 - bend} ${b.y}, ${x2} ${b.y}`
  const label = lane === null ? ''
    : `<text class="lane" x="${x1 + 10}" y="${a.y - 5}">${lane}</text>`
  return `<g class="edge"><path d="${path}"/>${label}</g>`
}

/** Draw one wiring; the whole drawn path is the chosen route, highlighted. */
export function wiringSvg(doc: WiringDoc): string {
  const layout = layoutWiring(doc)
  const width = PAD * 2 + (layout.cols - 1) * COL_W + NODE_W
  const height = PAD * 2 + (layout.rows - 1) * ROW_H + NODE_H
  const edges = layout.edges
    .map((e) => renderEdge(layout, e.from, e.to, e.lane)).join('')
  const nodes = layout.nodes.map(renderNode).join('')
  return `<svg class="wiring" viewBox="0 0 ${width} ${height}" `
    + `width="${width}" height="${height}" xmlns="http://www.w3.org/2000/svg">`
    + edges + nodes + `</svg>`
}

/** Same, but malformed input becomes an error card instead of a throw. */
export function wiringSvgOrError(doc: WiringDoc): string {
  try {
    return wiringSvg(doc)
  } catch (err) {
    if (err instanceof LayoutError) {
      return `<div class="error-card">cannot draw wiring: ${esc(err.message)}</div>`
    }
    throw err
  }
}

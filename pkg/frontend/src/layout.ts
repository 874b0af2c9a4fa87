// Deterministic left-to-right layout for a wiring derivation.
//
// The wiring JSON is a tree in which shared subtrees are duplicated, but
// the broker runs one operator instance per distinct (op, children), so
// the layout first collapses identical subtrees back into a DAG. Columns:
// capability leaves in column 0, the requirement in the rightmost column,
// operator instances between, each one column right of its deepest input.

import { isOpNode, type WiringDoc, type WiringNode } from './types.js'

export class LayoutError extends Error {}

export type NodeKind = 'leaf' | 'op' | 'requirement'

export interface GraphNode {
  id: string
  kind: NodeKind
  /** capability id, operator rule, or requirement id */
  name: string
  /** canonical event type string */
  type: string
  col: number
  row: number
}

export interface GraphEdge {
  from: string
  to: string
  /** output lane of `from` feeding `to`; only split outputs carry one */
  lane: number | null
}

export interface Layout {
  nodes: GraphNode[]
  edges: GraphEdge[]
  cols: number
  rows: number
}

function opRule(opId: string): string {
  // "split:{type}" -> split, "merge:{type}" -> merge,
  // "cast:{rule}:{type}" -> the rule name
  const parts = opId.split(':')
  if (parts[0] === 'cast' && parts.length >= 2) return parts[1] ?? 'cast'
  return parts[0] ?? opId
}

function checkNode(n: unknown): asserts n is WiringNode {
  if (typeof n !== 'object' || n === null || Array.isArray(n)) {
    throw new LayoutError('wiring node is not an object')
  }
  const node = n as Record<string, unknown>
  if (typeof node['type'] !== 'string') {
    throw new LayoutError('wiring node has no type string')
  }
  if (typeof node['cap'] === 'string') return
  if (typeof node['op'] !== 'string' || !Array.isArray(node['children'])) {
    throw new LayoutError('wiring node is neither a leaf nor an operator')
  }
  if (typeof node['lane'] !== 'number') {
    throw new LayoutError(`operator ${node['op']} has no output lane`)
  }
  if (node['children'].length === 0) {
    throw new LayoutError(`operator ${node['op']} has no inputs`)
  }
}

interface Visited {
  id: string
  col: number
  /** output lane of this node the parent consumes; 0 for leaves */
  lane: number
  /** lane shown on the edge; only split outputs are worth labeling */
  label: number | null
}

/**
 * Lay out one wiring as columns of nodes plus left-to-right edges.
 * Throws LayoutError on malformed input; never returns overlapping nodes.
 */
export function layoutWiring(doc: WiringDoc, depthLimit = 64): Layout {
  if (typeof doc !== 'object' || doc === null
      || typeof doc.requirement_id !== 'string' || !('root' in doc)) {
    throw new LayoutError('wiring document needs requirement_id and root')
  }

  const nodes = new Map<string, GraphNode>()
  const edges: GraphEdge[] = []
  const seenEdges = new Set<string>()

  const visit = (raw: WiringNode, depth: number): Visited => {
    if (depth > depthLimit) throw new LayoutError('wiring too deep')
    checkNode(raw)
    if (!isOpNode(raw)) {
      const id = `leaf:${raw.cap}`
      if (!nodes.has(id)) {
        nodes.set(id, { id, kind: 'leaf', name: raw.cap, type: raw.type,
                        col: 0, row: -1 })
      }
      return { id, col: 0, lane: 0, label: null }
    }

    const children = raw.children.map((c) => visit(c, depth + 1))
    // one instance per (op, input ports); a port is child id plus the
    // consumed lane, so casts over different split lanes stay distinct
    const ports = children.map((c) => `${c.id}#${c.lane}`)
    const id = `op:${raw.op}(${ports.join(',')})`
    const col = 1 + Math.max(...children.map((c) => c.col))
    if (!nodes.has(id)) {
      nodes.set(id, { id, kind: 'op', name: opRule(raw.op), type: raw.type,
                      col, row: -1 })
    }
    for (const child of children) {
      const key = `${child.id}#${child.lane}>${id}`
      if (!seenEdges.has(key)) {
        seenEdges.add(key)
        edges.push({ from: child.id, to: id, lane: child.label })
      }
    }
    // only splits fan out, so only their lane is worth labeling
    const label = raw.op.startsWith('split:') ? raw.lane : null
    return { id, col, lane: raw.lane, label }
  }

  const root = visit(doc.root, 0)

  // the requirement sits alone in the rightmost column
  const maxCol = Math.max(...[...nodes.values()].map((n) => n.col))
  const reqId = `req:${doc.requirement_id}`
  const rootNode = nodes.get(root.id)!
  nodes.set(reqId, { id: reqId, kind: 'requirement',
                     name: doc.requirement_id, type: rootNode.type,
                     col: maxCol + 1, row: -1 })
  edges.push({ from: root.id, to: reqId, lane: root.label })

  // rows: first-visit order within each column, top down
  const byCol = new Map<number, GraphNode[]>()
  for (const node of nodes.values()) {
    const bucket = byCol.get(node.col)
    if (bucket === undefined) byCol.set(node.col, [node])
    else bucket.push(node)
  }
  let rows = 0
  for (const bucket of byCol.values()) {
    bucket.forEach((node, i) => { node.row = i })
    rows = Math.max(rows, bucket.length)
  }

  return { nodes: [...nodes.values()], edges, cols: maxCol + 2, rows }
}

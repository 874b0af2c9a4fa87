// JSON shapes served by the broker's HTTP and WS endpoints. These mirror
// the wire format exactly; nothing here is invented client side.

export interface CapabilityRow {
  id: string
  type: string
  direction: string
}

export interface DeviceRow {
  device_id: string
  name: string
  capabilities: CapabilityRow[]
}

export interface RequirementRow {
  id: string
  type: string
  label: string
}

export interface AppRow {
  app_id: string
  name: string
  requirements: RequirementRow[]
}

// A wiring derivation: leaves name device capabilities, inner nodes name
// operator output lanes. Shared subtrees appear duplicated in the JSON.
export interface LeafNode {
  cap: string
  type: string
}

export interface OpNode {
  op: string
  lane: number
  type: string
  children: WiringNode[]
}

export type WiringNode = LeafNode | OpNode

export function isOpNode(n: WiringNode): n is OpNode {
  return 'op' in n
}

export interface WiringDoc {
  requirement_id: string
  cost: number
  root: WiringNode
}

export interface WiringCounters {
  events_in: number
  events_out: number
  drops: number
}

export interface WiringRow extends WiringCounters {
  status: string
  app_id: string
  requirement_id: string
  wiring: WiringDoc
}

export interface Snapshot {
  version: number
  unrouted_drops: number
  devices: DeviceRow[]
  apps: AppRow[]
  wirings: Record<string, WiringRow>
  candidates: Record<string, Record<string, WiringDoc[]>>
}

// WS feed messages. The first message is always {kind: "snapshot", ...}.
export type FeedMessage =
  | ({ kind: 'snapshot' } & Snapshot)
  | { kind: 'counters'; version: number; unrouted_drops: number;
      wirings: Record<string, WiringCounters & { status: string }> }
  | { kind: 'wiring_applied'; app_id: string; requirement_id: string;
      wiring_id: string; version: number }
  | { kind: 'wiring_degraded'; wiring_ids: string[]; version: number }
  | { kind: 'device_joined'; device_id: string; name: string }
  | { kind: 'device_updated'; device_id: string }
  | { kind: 'device_left'; device_id: string; reason: string }
  | { kind: 'app_joined'; app_id: string; name: string }
  | { kind: 'app_updated'; app_id: string }
  | { kind: 'app_left'; app_id: string; reason: string }
  | { kind: 'event_sample'; app_id: string; requirement_id: string;
      type: string; ts_ns: number; payload: unknown[] }

export interface ApplyError {
  code: string
  path: string
  detail: string
}

export type ApplyResult =
  | { ok: true; wiring_id: string; version: number }
  | { ok: false; error: ApplyError }

// Wiring and snapshot fixtures mirroring what the broker actually serves.

import type { Snapshot, WiringDoc, WiringNode } from '../src/types.js'

export const AX1R = 'axis/1/unit_signed/relative'
export const AX3R = 'axis/3/unit_signed/relative'
export const POS1R = 'position/1/unit_signed/relative'
export const POS2R = 'position/2/unit_signed/relative'
export const BTN = 'button/1/discrete/absolute'
export const ROT1 = 'rotation/1/unit_signed/absolute'
export const ROT3 = 'rotation/3/unit_signed/absolute'

/** swipe lanes x/y plus an arrow-key pair, merged into 3-axis motion */
export function swipeArrowsWiring(): WiringDoc {
  const swipe: WiringNode = { cap: 'd1.swipe', type: POS2R }
  const splitLane = (lane: number): WiringNode => ({
    op: `split:${POS2R}`, lane, type: POS1R, children: [swipe],
  })
  const toAxis = (child: WiringNode): WiringNode => ({
    op: `cast:position_to_axis:${AX1R}`, lane: 0, type: AX1R,
    children: [child],
  })
  const pair: WiringNode = {
    op: `cast:button_pair_to_axis:${AX1R}`, lane: 0, type: AX1R,
    children: [{ cap: 'd2.left', type: BTN }, { cap: 'd2.right', type: BTN }],
  }
  return {
    requirement_id: 'motion3d',
    cost: 6,
    root: {
      op: `merge:${AX3R}`, lane: 0, type: AX3R,
      children: [toAxis(splitLane(0)), toAxis(splitLane(1)), pair],
    },
  }
}

export function directWiring(): WiringDoc {
  return {
    requirement_id: 'rotation3d',
    cost: 1,
    root: { cap: 'd1.orient', type: ROT3 },
  }
}

export function stickOnlyWiring(): WiringDoc {
  return {
    requirement_id: 'spin',
    cost: 2,
    root: {
      op: `cast:axis_to_rotation:${ROT1}`, lane: 0, type: ROT1,
      children: [{ cap: 'd2.stick', type: 'axis/1/unit_signed/absolute' }],
    },
  }
}

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    version: 1,
    unrouted_drops: 0,
    devices: [
      { device_id: 'd1', name: 'phone-swipe', capabilities: [
        { id: 'swipe', type: POS2R, direction: 'produces' }] },
      { device_id: 'd2', name: 'keyboard-arrows', capabilities: [
        { id: 'left', type: BTN, direction: 'produces' },
        { id: 'right', type: BTN, direction: 'produces' }] },
    ],
    apps: [
      { app_id: 'a1', name: 'demo', requirements: [
        { id: 'motion3d', type: AX3R, label: 'camera' }] },
    ],
    wirings: {},
    candidates: { a1: { motion3d: [swipeArrowsWiring()] } },
    ...overrides,
  }
}

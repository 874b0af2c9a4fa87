import { describe, expect, it } from 'vitest'

import { LiveFeed, type SocketLike } from '../src/live.js'
import type { FeedMessage } from '../src/types.js'

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null
  onmessage: ((ev: { data: unknown }) => void) | null = null
  onclose: ((ev?: unknown) => void) | null = null
  onerror: ((ev?: unknown) => void) | null = null
  closedByUs = false

  close(): void {
    this.closedByUs = true
    this.onclose?.()
  }

  serverOpen(): void { this.onopen?.() }
  serverSend(data: unknown): void { this.onmessage?.({ data }) }
  serverDrop(): void { this.onclose?.() }
}

interface PendingTimer {
  fn: () => void
  delay: number
}

/** Deterministic stand-ins for the feed's injectable clock and socket. */
function rig() {
  const sockets: FakeSocket[] = []
  const timers = new Map<number, PendingTimer>()
  let nextTimer = 1
  const messages: FeedMessage[] = []
  const statuses: boolean[] = []

  const feed = new LiveFeed('ws://t/v1/events/stream',
                            (m) => messages.push(m),
                            (up) => statuses.push(up), {
    factory: () => {
      const s = new FakeSocket()
      sockets.push(s)
      return s
    },
    setTimeoutFn: ((fn: () => void, delay: number) => {
      timers.set(nextTimer, { fn, delay })
      return nextTimer++
    }) as unknown as typeof setTimeout,
    clearTimeoutFn: ((id: number) => {
      timers.delete(id)
    }) as unknown as typeof clearTimeout,
  })

  const fireTimer = () => {
    const [id, t] = [...timers.entries()][0]!
    timers.delete(id)
    t.fn()
    return t.delay
  }

  return { feed, sockets, timers, messages, statuses, fireTimer }
}

describe('connection lifecycle', () => {
  it('reports up on open and delivers parsed JSON frames', () => {
    const r = rig()
    r.feed.start()
    expect(r.sockets).toHaveLength(1)
    r.sockets[0]!.serverOpen()
    expect(r.statuses).toEqual([true])

    r.sockets[0]!.serverSend('{"kind":"counters","version":3}')
    r.sockets[0]!.serverSend('definitely not json')
    r.sockets[0]!.serverSend(Buffer.from('{"kind":"device_left","device_id":"d2","reason":"gone"}'))
    expect(r.messages).toEqual([
      { kind: 'counters', version: 3 },
      { kind: 'device_left', device_id: 'd2', reason: 'gone' },
    ])
  })

  it('reports down on drop and reconnects with doubling, capped delays', () => {
    const r = rig()
    r.feed.start()

    const delays: number[] = []
    for (let i = 0; i < 7; i++) {
      r.sockets[r.sockets.length - 1]!.serverDrop()
      expect(r.timers.size).toBe(1)
      delays.push(r.fireTimer())
    }
    expect(delays).toEqual([500, 1000, 2000, 4000, 8000, 10_000, 10_000])
    expect(r.sockets).toHaveLength(8) // initial + one per retry
    expect(r.statuses.filter((s) => !s)).toHaveLength(7)
  })

  it('resets the backoff once a connection succeeds', () => {
    const r = rig()
    r.feed.start()
    r.sockets[0]!.serverDrop()
    expect(r.fireTimer()).toBe(500)
    r.sockets[1]!.serverDrop()
    expect(r.fireTimer()).toBe(1000)

    r.sockets[2]!.serverOpen() // healthy again
    r.sockets[2]!.serverDrop()
    expect(r.fireTimer()).toBe(500)
  })

  it('stop closes the socket silently and cancels any pending retry', () => {
    const r = rig()
    r.feed.start()
    r.sockets[0]!.serverOpen()
    r.statuses.length = 0

    r.feed.stop()
    expect(r.sockets[0]!.closedByUs).toBe(true)
    expect(r.statuses).toEqual([]) // no down report for our own close
    expect(r.timers.size).toBe(0)

    const r2 = rig()
    r2.feed.start()
    r2.sockets[0]!.serverDrop() // retry pending
    expect(r2.timers.size).toBe(1)
    r2.feed.stop()
    expect(r2.timers.size).toBe(0)
  })
})

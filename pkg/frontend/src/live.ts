// WS event feed with automatic reconnect. The socket is injectable so the
// reconnect behavior is testable without a server (and so node tests can
// pass in the `ws` package where browsers use the WebSocket global).

import type { FeedMessage } from './types.js'

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null
  onmessage: ((ev: { data: unknown }) => void) | null
  onclose: ((ev?: unknown) => void) | null
  onerror: ((ev?: unknown) => void) | null
  close(): void
}

export type SocketFactory = (url: string) => SocketLike

export interface LiveFeedOptions {
  factory?: SocketFactory
  baseDelayMs?: number
  maxDelayMs?: number
  setTimeoutFn?: typeof setTimeout
  clearTimeoutFn?: typeof clearTimeout
}

const defaultFactory: SocketFactory = (url) =>
  new WebSocket(url) as unknown as SocketLike

export class LiveFeed {
  private socket: SocketLike | null = null
  private timer: ReturnType<typeof setTimeout> | null = null
  private attempts = 0
  private stopped = true

  private readonly factory: SocketFactory
  private readonly baseDelayMs: number
  private readonly maxDelayMs: number
  private readonly setTimeoutFn: typeof setTimeout
  private readonly clearTimeoutFn: typeof clearTimeout

  constructor(private readonly url: string,
              private readonly onMessage: (msg: FeedMessage) => void,
              private readonly onStatus: (up: boolean) => void,
              opts: LiveFeedOptions = {}) {
    this.factory = opts.factory ?? defaultFactory
    this.baseDelayMs = opts.baseDelayMs ?? 500
    this.maxDelayMs = opts.maxDelayMs ?? 10_000
    this.setTimeoutFn = opts.setTimeoutFn ?? setTimeout
    this.clearTimeoutFn = opts.clearTimeoutFn ?? clearTimeout
  }

  /** Delay before reconnect attempt n (0-based): doubling, capped. */
  delayFor(attempt: number): number {
    return Math.min(this.baseDelayMs * 2 ** attempt, this.maxDelayMs)
  }

  start(): void {
    this.stopped = false
    this.connect()
  }

  stop(): void {
    this.stopped = true
    if (this.timer !== null) {
      this.clearTimeoutFn(this.timer)
      this.timer = null
    }
    const socket = this.socket
    this.socket = null
    if (socket !== null) {
      socket.onclose = null
      socket.close()
    }
  }

  private connect(): void {
    if (this.stopped) return
    const socket = this.factory(this.url)
    this.socket = socket
    socket.onopen = () => {
      this.attempts = 0
      this.onStatus(true)
    }
    socket.onmessage = (ev) => {
      let msg: FeedMessage
      try {
        msg = JSON.parse(String(ev.data)) as FeedMessage
      } catch {
        return // not ours; the server only sends JSON
      }
      this.onMessage(msg)
    }
    socket.onerror = () => { /* the close that follows handles it */ }
    socket.onclose = () => {
      if (this.socket === socket) this.socket = null
      this.onStatus(false)
      this.scheduleReconnect()
    }
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.timer !== null) return
    const delay = this.delayFor(this.attempts)
    this.attempts += 1
    this.timer = this.setTimeoutFn(() => {
      this.timer = null
      this.connect()
    }, delay)
  }
}

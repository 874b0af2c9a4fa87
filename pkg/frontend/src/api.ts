// Thin typed client for the broker's HTTP endpoints. The UI talks to the
// server exclusively through this surface and the WS feed.

import type { ApplyResult, Snapshot, WiringDoc } from './types.js'

export type FetchFn = typeof fetch

export class Api {
  constructor(private readonly base: string,
              private readonly fetchFn: FetchFn = fetch) {}

  async state(): Promise<Snapshot> {
    const res = await this.fetchFn(`${this.base}/v1/state`)
    if (!res.ok) throw new Error(`GET /v1/state: ${res.status}`)
    return await res.json() as Snapshot
  }

  /**
   * Apply one wiring. Validation failures (404/422) come back as a value,
   * not a throw: the server reports the first failure as {code, path,
   * detail} and the UI shows it inline. Network errors still throw.
   */
  async apply(appId: string, requirementId: string,
              wiring: WiringDoc): Promise<ApplyResult> {
    const res = await this.fetchFn(`${this.base}/v1/wirings/apply`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ app_id: appId, requirement_id: requirementId,
                             wiring }),
    })
    const body = await res.json() as Record<string, unknown>
    if (res.ok) {
      return { ok: true, wiring_id: String(body['wiring_id']),
               version: Number(body['version']) }
    }
    const err = (body['error'] ?? {}) as Record<string, unknown>
    return {
      ok: false,
      error: {
        code: String(err['code'] ?? `http_${res.status}`),
        path: String(err['path'] ?? ''),
        detail: String(err['detail'] ?? ''),
      },
    }
  }
}

/** ws:// URL of the event stream for a given http(s) base URL. */
export function streamUrl(base: string, samples = false): string {
  const url = new URL(`${base}/v1/events/stream`)
  url.protocol = url.protocol === 'https:' ? 'wss:' : 'ws:'
  if (samples) url.searchParams.set('sample', '1')
  return url.toString()
}

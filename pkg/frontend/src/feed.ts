/**
 * Cursor-tracking consumer of the monitor's sequenced event feed
 * (`monitor.subscribe` long-poll). Events are delivered to the handler
 * exactly once in seq order; falling behind the retention window resets
 * the cursor to live.
 */

import { GatewayClient, RpcError } from './rpc.js';
import type { MonitoringEvent, SubscribeResult } from './types.js';

export type EventHandler = (event: MonitoringEvent) => void;

export class EventFeed {
  private cursor = 0;
  private lastSeen = 0;

  constructor(
    private readonly client: GatewayClient,
    private readonly handler: EventHandler,
  ) {}

  get position(): number {
    return this.cursor;
  }

  /** One long-poll round trip; returns the number of new events delivered. */
  async poll(waitSeconds = 0): Promise<number> {
    let result: SubscribeResult;
    try {
      result = await this.client.call<SubscribeResult>('monitor.subscribe', {
        from_seq: this.cursor,
        wait: waitSeconds,
      });
    } catch (err) {
      if (err instanceof RpcError && err.errorName === 'SeqExpired') {
        // Fell out of the retention window: jump to live and resume.
        // lastSeen is kept so replayed events are not delivered twice.
        this.cursor = 0;
        result = await this.client.call<SubscribeResult>('monitor.subscribe', {
          from_seq: 0,
          wait: 0,
        });
      } else {
        throw err;
      }
    }
    let delivered = 0;
    for (const event of result.events) {
      if (event.seq <= this.lastSeen) continue; // duplicate after a resync
      this.lastSeen = event.seq;
      this.handler(event);
      delivered++;
    }
    this.cursor = Math.max(this.cursor, result.next_seq);
    return delivered;
  }

  /** Poll until `stop` resolves; intended for the live dashboard loop. */
  async run(stop: Promise<void>, waitSeconds = 25): Promise<void> {
    let running = true;
    void stop.then(() => {
      running = false;
    });
    while (running) {
      await this.poll(waitSeconds);
    }
  }
}

import { describe, expect, it } from 'vitest';

import { EventFeed } from '../src/feed.js';
import { GatewayClient } from '../src/rpc.js';
import { AppError, StubGateway, makeEvent } from './stub.js';
import type { MonitoringEvent } from '../src/types.js';

function collector(): { seen: MonitoringEvent[]; handler: (e: MonitoringEvent) => void } {
  const seen: MonitoringEvent[] = [];
  return { seen, handler: (e) => seen.push(e) };
}

describe('EventFeed', () => {
  it('advances its cursor and hands events over in seq order', async () => {
    const batches = [
      [makeEvent({ seq: 1 }), makeEvent({ seq: 2, old_status: 'RUNNING', new_status: 'COMPLETED' })],
      [makeEvent({ seq: 3, task_id: 'job2' })],
    ];
    const stub = new StubGateway().on('monitor.subscribe', (params) => {
      const from = params['from_seq'] as number;
      const events = batches.flat().filter((e) => e.seq > from);
      return { events, next_seq: events.length ? events.at(-1)!.seq : from };
    });
    const { seen, handler } = collector();
    const feed = new EventFeed(new GatewayClient(stub.transport()), handler);

    expect(await feed.poll()).toBe(3);
    expect(feed.position).toBe(3);
    expect(seen.map((e) => e.seq)).toEqual([1, 2, 3]);

    expect(await feed.poll()).toBe(0);
    expect(seen).toHaveLength(3);
  });

  it('passes the long-poll wait through to the gateway', async () => {
    const stub = new StubGateway().on('monitor.subscribe', () => ({ events: [], next_seq: 0 }));
    const feed = new EventFeed(new GatewayClient(stub.transport()), collector().handler);
    await feed.poll(25);
    expect(stub.calls[0]!.params).toMatchObject({ from_seq: 0, wait: 25 });
  });

  it('resyncs from live after falling out of the retention window', async () => {
    let expiredOnce = false;
    const stub = new StubGateway().on('monitor.subscribe', (params) => {
      if (!expiredOnce && (params['from_seq'] as number) > 0) {
        expiredOnce = true;
        throw new AppError('SeqExpired', 1010, 'seq before retention window');
      }
      return { events: [makeEvent({ seq: 5000 })], next_seq: 5000 };
    });
    const { seen, handler } = collector();
    const feed = new EventFeed(new GatewayClient(stub.transport()), handler);

    await feed.poll(); // delivers seq 5000, cursor 5000
    expect(await feed.poll()).toBe(0); // 5000 expired -> resync, 5000 deduped
    expect(seen.map((e) => e.seq)).toEqual([5000]);
    expect(feed.position).toBe(5000);
  });
});

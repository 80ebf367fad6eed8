import { describe, expect, it } from 'vitest';

import { Dashboard } from '../src/dashboard.js';
import { GatewayClient } from '../src/rpc.js';
import { StubGateway, makeEvent, makeRecord } from './stub.js';

describe('Dashboard', () => {
  it('loads a snapshot and renders the running task at 50% progress', async () => {
    const stub = new StubGateway().on('monitor.list', () => [
      makeRecord({ elapsed_time: 141, estimated_run_time: 283 }),
      makeRecord({ task_id: 'done1', status: 'COMPLETED', completion_time: 60 }),
    ]);
    const dash = new Dashboard(new GatewayClient(stub.transport()));
    await dash.load();

    const rows = dash.rows();
    expect(rows.map((r) => r.taskId)).toEqual(['job1', 'done1']);
    expect(rows[0]!.progress).toBe('50%');
    expect(dash.renderText()).toContain('job1        alice     A     RUNNING    50%');
  });

  it('applies feed events to known records in place', async () => {
    const stub = new StubGateway()
      .on('monitor.list', () => [makeRecord()])
      .on('monitor.subscribe', () => ({
        events: [
          makeEvent({ seq: 1, old_status: 'RUNNING', new_status: 'COMPLETED', site_id: 'B' }),
        ],
        next_seq: 1,
      }));
    const dash = new Dashboard(new GatewayClient(stub.transport()));
    await dash.load();
    await dash.feed.poll();

    const row = dash.rows()[0]!;
    expect(row.status).toBe('COMPLETED');
    expect(row.site).toBe('B');
  });

  it('tracks site reachability flags from the feed', async () => {
    const stub = new StubGateway()
      .on('monitor.list', () => [makeRecord()])
      .on('monitor.subscribe', (params) =>
        (params['from_seq'] as number) === 0
          ? {
              events: [
                makeEvent({ seq: 1, kind: 'unreachable', old_status: 'RUNNING', new_status: 'RUNNING' }),
              ],
              next_seq: 1,
            }
          : {
              events: [
                makeEvent({ seq: 2, kind: 'reachable', task_id: '', old_status: '', new_status: '' }),
              ],
              next_seq: 2,
            },
      );
    const dash = new Dashboard(new GatewayClient(stub.transport()));
    await dash.load();

    await dash.feed.poll();
    expect(dash.unreachableSites).toEqual(new Set(['A']));
    expect(dash.rows()[0]!.status).toBe('RUNNING'); // status is preserved, never forged

    await dash.feed.poll();
    expect(dash.unreachableSites.size).toBe(0);
  });

  it('pulls full records for tasks that first appear on the feed', async () => {
    const stub = new StubGateway()
      .on('monitor.list', () => [])
      .on('monitor.subscribe', () => ({
        events: [makeEvent({ seq: 1, task_id: 'new1', old_status: 'PLANNED', new_status: 'QUEUED' })],
        next_seq: 1,
      }))
      .on('monitor.query', (params) =>
        makeRecord({ task_id: params['task_id'] as string, status: 'QUEUED', queue_position: 1 }),
      );
    const dash = new Dashboard(new GatewayClient(stub.transport()));
    await dash.load();
    await dash.feed.poll();
    await new Promise((r) => setTimeout(r, 0)); // let the lazy refresh settle

    expect(dash.rows().map((r) => r.taskId)).toEqual(['new1']);
    expect(dash.rows()[0]!.queuePosition).toBe('#1');
  });
});

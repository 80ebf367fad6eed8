/**
 * Dashboard view-model: a snapshot of monitoring records kept current by
 * the event feed, rendered as plain text rows (the terminal UI) or handed
 * to a component layer as structured TaskRows.
 */

import { GatewayClient } from './rpc.js';
import { EventFeed } from './feed.js';
import { taskTable, type TaskRow } from './progress.js';
import type { MonitoringEvent, MonitoringRecord } from './types.js';

export class Dashboard {
  private records = new Map<string, MonitoringRecord>();
  readonly feed: EventFeed;
  /** Sites currently flagged unreachable by the feed. */
  readonly unreachableSites = new Set<string>();

  constructor(private readonly client: GatewayClient) {
    this.feed = new EventFeed(client, (event) => this.applyEvent(event));
  }

  /** Full resync from `monitor.list`. */
  async load(): Promise<void> {
    const records = await this.client.call<MonitoringRecord[]>('monitor.list');
    this.records = new Map(records.map((r) => [r.task_id, r]));
  }

  /** Re-query one task (refresh=true recomputes its runtime estimate). */
  async refresh(taskId: string, refresh = false): Promise<MonitoringRecord> {
    const record = await this.client.call<MonitoringRecord>('monitor.query', {
      task_id: taskId,
      refresh,
    });
    this.records.set(taskId, record);
    return record;
  }

  private applyEvent(event: MonitoringEvent): void {
    if (event.kind === 'unreachable' && event.site_id) {
      this.unreachableSites.add(event.site_id);
      return;
    }
    if (event.kind === 'reachable' && event.site_id) {
      this.unreachableSites.delete(event.site_id);
      return;
    }
    const record = this.records.get(event.task_id);
    if (record) {
      record.status = event.new_status;
      if (event.site_id) record.environment['site'] = event.site_id;
    } else {
      // New task appeared on the feed; pull its full record lazily.
      void this.refresh(event.task_id).catch(() => undefined);
    }
  }

  rows(): TaskRow[] {
    return taskTable([...this.records.values()]);
  }

  renderText(): string {
    const header = 'TASK        OWNER     SITE  STATUS     PROGRESS  REMAINING  QUEUE';
    const lines = this.rows().map(
      (r) =>
        `${r.taskId.padEnd(12)}${r.owner.padEnd(10)}${r.site.padEnd(6)}` +
        `${r.status.padEnd(11)}${r.progress.padEnd(10)}${r.remaining.padEnd(11)}${r.queuePosition}`,
    );
    return [header, ...lines].join('\n');
  }
}

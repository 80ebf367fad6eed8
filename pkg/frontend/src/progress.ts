/**
 * Presentation helpers for monitoring records. All numbers come straight
 * from the gateway; the only arithmetic here is display formatting.
 */

import type { MonitoringRecord } from './types.js';

const TERMINAL = new Set(['COMPLETED', 'FAILED', 'KILLED']);

/** Fraction complete in [0, 1], or null when no estimate exists yet. */
export function progressFraction(record: MonitoringRecord): number | null {
  if (record.status === 'COMPLETED') return 1;
  const estimate = record.estimated_run_time;
  if (estimate === null || estimate <= 0) return null;
  return Math.min(1, record.elapsed_time / estimate);
}

/** Whole-percent progress label, e.g. 141/283 elapsed renders as "50%". */
export function formatProgress(record: MonitoringRecord): string {
  const fraction = progressFraction(record);
  return fraction === null ? '—' : `${Math.round(fraction * 100)}%`;
}

export function formatDuration(seconds: number | null): string {
  if (seconds === null) return '—';
  if (seconds < 60) return `${Math.round(seconds)}s`;
  const m = Math.floor(seconds / 60);
  const s = Math.round(seconds % 60);
  return `${m}m${s.toString().padStart(2, '0')}s`;
}

export interface TaskRow {
  taskId: string;
  owner: string;
  site: string;
  status: string;
  progress: string;
  remaining: string;
  queuePosition: string;
}

/** One dashboard table row per record. */
export function taskRow(record: MonitoringRecord): TaskRow {
  return {
    taskId: record.task_id,
    owner: record.owner,
    site: record.environment['site'] ?? '',
    status: record.status,
    progress: formatProgress(record),
    remaining: TERMINAL.has(record.status) ? '—' : formatDuration(record.remaining_time),
    queuePosition: record.queue_position === null ? '—' : `#${record.queue_position}`,
  };
}

/** Stable dashboard ordering: live tasks first, then by task id. */
export function taskTable(records: MonitoringRecord[]): TaskRow[] {
  return [...records]
    .sort((a, b) => {
      const at = TERMINAL.has(a.status) ? 1 : 0;
      const bt = TERMINAL.has(b.status) ? 1 : 0;
      return at - bt || a.task_id.localeCompare(b.task_id);
    })
    .map(taskRow);
}

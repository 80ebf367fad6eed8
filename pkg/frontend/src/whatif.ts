/**
 * What-if panel: shows the stay-vs-move score table the steering service
 * would act on (`steering.whatif`), and cross-checks it against the table
 * the optimizer recorded in the audit log when it actually decided.
 */

import { GatewayClient } from './rpc.js';
import type { AuditEntry, ScoreTable } from './types.js';

export interface WhatIfRow {
  site: string;
  score: number;
  label: string;
  isCurrent: boolean;
  isBest: boolean;
}

export async function fetchWhatIf(
  client: GatewayClient,
  taskId: string,
): Promise<ScoreTable | null> {
  return client.call<ScoreTable | null>('steering.whatif', { task_id: taskId });
}

/** Flatten a score table into display rows, stay option included. */
export function whatIfRows(table: ScoreTable): WhatIfRow[] {
  const rows = [
    { site: table.current_site, score: table.stay_score, isCurrent: true },
    ...table.candidates.map((c) => ({ site: c.site, score: c.score, isCurrent: false })),
  ].sort((a, b) => a.score - b.score || a.site.localeCompare(b.site));
  return rows.map((row, i) => ({
    ...row,
    isBest: i === 0,
    label: `${row.site}${row.isCurrent ? ' (current)' : ''}: ${row.score.toFixed(2)}`,
  }));
}

/** The score of the site the panel would recommend (lowest wins). */
export function recommendedScore(table: ScoreTable): number {
  const best = whatIfRows(table)[0];
  if (!best) throw new Error(`score table for ${table.task_id} has no options`);
  return best.score;
}

/**
 * Score table from the most recent optimizer decision (move or stay) for a
 * task, as recorded in the audit log; null when it never decided.
 */
export async function latestDecisionTable(
  client: GatewayClient,
  taskId: string,
): Promise<ScoreTable | null> {
  const log = await client.call<AuditEntry[]>('steering.audit_log');
  for (let i = log.length - 1; i >= 0; i--) {
    const entry = log[i]!;
    if (entry.target === taskId && entry.score_table && entry.outcome === 'ok') {
      return entry.score_table;
    }
  }
  return null;
}

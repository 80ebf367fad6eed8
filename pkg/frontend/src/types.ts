/**
 * Document shapes served by the gateway over JSON-RPC. These mirror the
 * wire format exactly; the dashboard never recomputes any of these values.
 */

export interface Session {
  session_id: string;
  user: string;
  role: 'user' | 'admin';
  expires_at: number;
}

export interface MonitoringRecord {
  task_id: string;
  job_id: string | null;
  status: string;
  remaining_time: number | null;
  elapsed_time: number;
  estimated_run_time: number | null;
  queue_position: number | null;
  priority: number;
  submission_time: number | null;
  execution_time: number | null;
  completion_time: number | null;
  cpu_time_used: number;
  input_io_bytes: number;
  output_io_bytes: number;
  owner: string;
  environment: Record<string, string>;
}

export interface MonitoringEvent {
  seq: number;
  at: number;
  task_id: string;
  old_status: string;
  new_status: string;
  site_id: string | null;
  kind: 'status_change' | 'unreachable' | 'reachable';
}

export interface SubscribeResult {
  events: MonitoringEvent[];
  next_seq: number;
}

export interface ScoreRow {
  site: string;
  score: number;
}

/** Stay-vs-move score table; also embedded in optimizer audit entries. */
export interface ScoreTable {
  task_id: string;
  current_site: string;
  stay_score: number;
  objective: string;
  candidates: ScoreRow[];
}

export interface AuditEntry {
  time: number;
  session: string;
  verb: string;
  target: string | null;
  outcome: string;
  score_table?: ScoreTable;
  args?: Record<string, unknown>;
}

export interface OptimizerPolicy {
  objective: string;
  check_interval: number;
  slowdown_threshold: number;
  enabled: boolean;
}

export interface SiteView {
  site_id: string;
  alive: boolean;
  cpu_slots: number;
  load_factor: number;
  cost_rate: number;
  queued: string[];
  running: string[];
}

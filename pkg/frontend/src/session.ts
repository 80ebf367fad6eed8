/**
 * Login/logout flow around `steering.login` / `steering.logout`, with
 * transparent re-login when the gateway reports an expired session.
 */

import { GatewayClient, RpcError } from './rpc.js';
import type { Session } from './types.js';

export class SessionManager {
  private session: Session | null = null;

  constructor(
    private readonly client: GatewayClient,
    private readonly user: string,
    private readonly credential: string,
  ) {}

  get current(): Session | null {
    return this.session;
  }

  async login(): Promise<Session> {
    this.session = await this.client.call<Session>('steering.login', {
      user: this.user,
      credential: this.credential,
    });
    return this.session;
  }

  async logout(): Promise<void> {
    if (this.session) {
      await this.client.call('steering.logout', { session_id: this.session.session_id });
      this.session = null;
    }
  }

  /**
   * Run a session-scoped call, logging in on first use and retrying once
   * after a fresh login if the gateway says the session expired.
   */
  async withSession<T>(fn: (sessionId: string) => Promise<T>): Promise<T> {
    const session = this.session ?? (await this.login());
    try {
      return await fn(session.session_id);
    } catch (err) {
      if (err instanceof RpcError && err.errorName === 'SessionExpired') {
        const fresh = await this.login();
        return fn(fresh.session_id);
      }
      throw err;
    }
  }

  /** Issue a steering command (pause/resume/kill/set_priority/move). */
  async command(
    verb: string,
    taskId: string,
    extra: { priority?: number; target_site?: string } = {},
  ): Promise<unknown> {
    return this.withSession((sessionId) =>
      this.client.call('steering.command', {
        verb,
        task_id: taskId,
        session_id: sessionId,
        ...extra,
      }),
    );
  }
}

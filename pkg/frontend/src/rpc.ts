/**
 * Minimal JSON-RPC 2.0 client for the gateway's POST /rpc endpoint.
 *
 * The HTTP transport is injectable so tests can run against a stubbed
 * gateway without a network.
 */

export interface RpcErrorBody {
  code: number;
  message: string;
  data?: { error?: string };
}

interface RpcEnvelope {
  jsonrpc: '2.0';
  id: number | null;
  result?: unknown;
  error?: RpcErrorBody;
}

export class RpcError extends Error {
  readonly code: number;
  /** Symbolic application error name (e.g. "UnknownTask", "SessionExpired"). */
  readonly errorName: string | null;

  constructor(body: RpcErrorBody) {
    super(`rpc error ${body.code}: ${body.message}`);
    this.name = 'RpcError';
    this.code = body.code;
    this.errorName = body.data?.error ?? null;
  }
}

export type Transport = (payload: string) => Promise<string>;

export function fetchTransport(baseUrl: string): Transport {
  const endpoint = `${baseUrl.replace(/\/$/, '')}/rpc`;
  return async (payload: string) => {
    const res = await fetch(endpoint, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: payload,
    });
    return res.text();
  };
}

export class GatewayClient {
  private nextId = 1;

  constructor(private readonly transport: Transport) {}

  static connect(baseUrl: string): GatewayClient {
    return new GatewayClient(fetchTransport(baseUrl));
  }

  async call<T>(method: string, params: Record<string, unknown> = {}): Promise<T> {
    const id = this.nextId++;
    const payload = JSON.stringify({ jsonrpc: '2.0', method, params, id });
    const envelope = JSON.parse(await this.transport(payload)) as RpcEnvelope;
    if (envelope.error) {
      throw new RpcError(envelope.error);
    }
    return envelope.result as T;
  }
}

/**
 * Progress stream subscription with reconnect.
 *
 * The server sends the latest snapshot first to late subscribers, so a
 * reconnect never produces duplicate or regressed bar state as long as the
 * consumer applies events monotonically (state.applyStreamEvent does).
 */

import type { StreamEvent } from './api.js';
import { progressUrl } from './api.js';

export interface WsLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;

export interface ProgressSubscription {
  close(): void;
}

export function subscribeProgress(
  jobId: string,
  onEvent: (event: StreamEvent) => void,
  options: {
    factory?: WsFactory;
    maxReconnects?: number;
    reconnectDelayMs?: number;
    base?: string;
  } = {},
): ProgressSubscription {
  const factory =
    options.factory ??
    ((url: string) => new WebSocket(url) as unknown as WsLike);
  const maxReconnects = options.maxReconnects ?? 5;
  const delay = options.reconnectDelayMs ?? 500;

  let closed = false;
  let terminal = false;
  let attempts = 0;
  let socket: WsLike | null = null;

  const connect = () => {
    if (closed || terminal) return;
    socket = factory(progressUrl(jobId, options.base ?? wsBase()));
    socket.onmessage = (ev) => {
      let parsed: StreamEvent;
      try {
        parsed = JSON.parse(ev.data) as StreamEvent;
      } catch {
        return; // tolerate malformed frames
      }
      if (parsed.type === 'terminal') terminal = true;
      onEvent(parsed);
    };
    socket.onclose = () => {
      if (closed || terminal) return;
      if (attempts++ < maxReconnects) {
        setTimeout(connect, delay);
      }
    };
    socket.onerror = () => {
      /* onclose follows; reconnect handled there */
    };
  };

  connect();
  return {
    close() {
      closed = true;
      socket?.close();
    },
  };
}

function wsBase(): string {
  if (typeof location === 'undefined') return '';
  const proto = location.protocol === 'https:' ? 'wss:' : 'ws:';
  return `${proto}//${location.host}`;
}

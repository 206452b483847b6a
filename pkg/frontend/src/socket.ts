// WebSocket client with reconnect; dispatches parsed messages into the
// view-state store.

import { ViewState } from "./store";
import { parseServerMessage, WireError } from "./wire";

export interface SocketHandle {
  send(text: string): boolean;
  close(): void;
}

export function connectSocket(url: string, store: ViewState, onUpdate: () => void): SocketHandle {
  let ws: WebSocket | null = null;
  let closed = false;

  function open(): void {
    store.connection = "connecting";
    ws = new WebSocket(url);
    ws.onopen = () => {
      store.connection = "open";
      onUpdate();
    };
    ws.onmessage = (ev: MessageEvent) => {
      try {
        store.apply(parseServerMessage(String(ev.data)), performance.now());
      } catch (e) {
        if (e instanceof WireError) {
          store.lastError = e.message;
        } else {
          throw e;
        }
      }
      onUpdate();
    };
    ws.onclose = () => {
      store.connection = "closed";
      onUpdate();
      if (!closed) setTimeout(open, 1000);
    };
    ws.onerror = () => {
      ws?.close();
    };
  }

  open();
  return {
    send(text: string): boolean {
      if (ws && ws.readyState === WebSocket.OPEN) {
        ws.send(text);
        return true;
      }
      return false;
    },
    close(): void {
      closed = true;
      ws?.close();
    },
  };
}

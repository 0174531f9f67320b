// WebSocket session: validates outbound messages, parses inbound ones,
// and keeps only the latest state/depth/map frames (drop-stale policy --
// the render loop reads whatever is newest).

import {
  DepthBody,
  MapBody,
  StateBody,
  decodePayload,
  encodePayload,
} from "./protocol.js";

export interface SessionEvents {
  onConnection?: (connected: boolean) => void;
  onAck?: (body: { for: string; path?: string }) => void;
  onErr?: (reason: string) => void;
}

export class Session {
  private ws: WebSocket | null = null;
  private url: string;
  private events: SessionEvents;
  private closed = false;

  latestState: StateBody | null = null;
  latestDepth: DepthBody | null = null;
  latestMap: MapBody | null = null;
  connected = false;
  framesReceived = 0;

  constructor(url: string, events: SessionEvents = {}) {
    this.url = url;
    this.events = events;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
      this.events.onConnection?.(true);
      this.send("reset");
    };
    ws.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      let parsed;
      try {
        parsed = decodePayload(ev.data);
      } catch {
        return; // ignore frames we cannot validate
      }
      this.framesReceived += 1;
      switch (parsed.type) {
        case "state":
          this.latestState = parsed.body as unknown as StateBody;
          break;
        case "depth":
          this.latestDepth = parsed.body as unknown as DepthBody;
          break;
        case "map":
          this.latestMap = parsed.body as unknown as MapBody;
          break;
        case "ack":
          this.events.onAck?.(parsed.body as { for: string; path?: string });
          break;
        case "err":
          this.events.onErr?.((parsed.body as { reason: string }).reason);
          break;
      }
    };
    ws.onclose = () => {
      this.connected = false;
      this.events.onConnection?.(false);
      if (!this.closed) setTimeout(() => this.connect(), 1000);
    };
    ws.onerror = () => ws.close();
  }

  send(type: string, body: Record<string, unknown> = {}): boolean {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return false;
    // every outbound message is validated before send
    this.ws.send(encodePayload(type, body));
    return true;
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}

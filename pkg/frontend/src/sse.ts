import type { Reply } from './api';

export type Frame = { event: string; data: string };

/**
 * Incremental parser for a text/event-stream body. Frames are separated by
 * a blank line; chunk boundaries can land anywhere, so leftover bytes stay
 * in the buffer until the terminator arrives.
 */
export class FrameParser {
  private buffer = '';

  push(chunk: string): Frame[] {
    this.buffer += chunk;
    const parts = this.buffer.split(/\r?\n\r?\n/);
    this.buffer = parts.pop() ?? '';
    const frames: Frame[] = [];
    for (const part of parts) {
      let event = 'message';
      const dataLines: string[] = [];
      for (const rawLine of part.split(/\r?\n/)) {
        if (rawLine.startsWith(':')) continue; // comment, e.g. ": connected"
        if (rawLine.startsWith('event:')) {
          event = rawLine.slice(6).trim();
        } else if (rawLine.startsWith('data:')) {
          dataLines.push(rawLine.slice(5).trim());
        }
      }
      if (dataLines.length === 0) continue;
      frames.push({ event, data: dataLines.join('\n') });
    }
    return frames;
  }
}

/**
 * Subscribe to the reply change feed. Uses fetch streaming rather than
 * EventSource so the same code runs in browsers and in node-based tests.
 *
 * No automatic reconnect: when the stream drops, onDown fires once and the
 * caller decides whether to resubscribe (a visible control, not a retry loop).
 * Returns a function that cancels the subscription.
 */
export function subscribeReplies(
  base: string,
  onReply: (reply: Reply) => void,
  onDown: (err: Error) => void,
): () => void {
  const controller = new AbortController();

  (async () => {
    const resp = await fetch(`${base}/v1/events`, { signal: controller.signal });
    if (!resp.ok || !resp.body) throw new Error(`event stream HTTP ${resp.status}`);
    const reader = resp.body.getReader();
    const decoder = new TextDecoder('utf-8');
    const parser = new FrameParser();
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
        if (frame.event !== 'reply') continue;
        try {
          onReply(JSON.parse(frame.data) as Reply);
        } catch {
          // skip unparseable frames; the next full-state fetch resyncs
        }
      }
    }
    throw new Error('event stream closed by server');
  })().catch((err: unknown) => {
    if (controller.signal.aborted) return;
    onDown(err instanceof Error ? err : new Error(String(err)));
  });

  return () => controller.abort();
}

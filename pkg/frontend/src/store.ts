import type { Reply } from './api';

/**
 * Client-side session state. Every Reply held here arrived verbatim from
 * the API (initial list, event stream, or a mutation response); panels
 * render from the store and never fabricate a state transition themselves.
 */
export class ConsoleStore {
  groupId = 'demo';
  banner: string | null = null;

  private replies = new Map<string, Reply>();
  private listeners: Array<() => void> = [];

  upsert(reply: Reply): void {
    this.replies.set(reply.reply_id, reply);
    this.emit();
  }

  replaceAll(replies: Reply[]): void {
    this.replies = new Map(replies.map((r) => [r.reply_id, r]));
    this.emit();
  }

  get(replyId: string): Reply | undefined {
    return this.replies.get(replyId);
  }

  list(groupId?: string): Reply[] {
    const all = [...this.replies.values()].sort((a, b) =>
      a.reply_id < b.reply_id ? -1 : a.reply_id > b.reply_id ? 1 : 0,
    );
    return groupId ? all.filter((r) => r.group_id === groupId) : all;
  }

  setGroup(groupId: string): void {
    this.groupId = groupId;
    this.emit();
  }

  setBanner(message: string | null): void {
    this.banner = message;
    this.emit();
  }

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of [...this.listeners]) listener();
  }
}

/** The gate that stopped a withheld reply, e.g. 'rejection.similarity'. */
export function refusalGate(reply: Reply): string | null {
  for (let i = reply.trace.length - 1; i >= 0; i--) {
    if (reply.trace[i].outcome === 'fail') return reply.trace[i].gate;
  }
  return null;
}

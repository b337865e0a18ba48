export type GateEntry = {
  gate: string;
  outcome: 'pass' | 'fail' | 'info';
  detail: string;
  timestamp: string;
};

export type ReplyState = 'pending' | 'sent' | 'withheld' | 'withdrawn';

export type Reply = {
  reply_id: string;
  user_key: string;
  group_id: string;
  query_text: string;
  answer: string | null;
  citations: string[];
  trace: GateEntry[];
  state: ReplyState;
};

export type Submission = {
  message_id: string;
  accepted: boolean;
  reason: string | null;
  reply_ids: string[];
};

export type Thresholds = {
  theta_sim: number;
  theta_q: number;
  theta_rel: number;
  theta_ans: number;
  theta_sec: number;
};

export type WorkingHours = {
  start_minute: number;
  end_minute: number;
  timezone: string;
};

export type Tunables = {
  thresholds: Thresholds;
  working_hours: WorkingHours | null;
};

export type KnowledgeResult = {
  doc_id: string;
  chunks: number;
  rejection_chunks: number;
};

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

/** The slice of the client the panels actually use; tests substitute fakes. */
export interface Api {
  submitMessage(msg: {
    message_id: string;
    group_id: string;
    user_id: string;
    content: string;
  }): Promise<Submission>;
  listReplies(groupId?: string, state?: ReplyState): Promise<Reply[]>;
  withdraw(replyId: string): Promise<Reply>;
  getConfig(): Promise<Tunables>;
  putConfig(tunables: Tunables): Promise<Tunables>;
  addKnowledge(
    text: string,
    sourcePath: string,
    includeRejection: boolean,
  ): Promise<KnowledgeResult>;
}

export class ApiClient implements Api {
  constructor(readonly base: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const resp = await fetch(this.base + path, init);
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(
        resp.status,
        typeof payload.error === 'string' ? payload.error : 'http',
        typeof payload.detail === 'string' ? payload.detail : `HTTP ${resp.status}`,
      );
    }
    return payload as T;
  }

  submitMessage(msg: {
    message_id: string;
    group_id: string;
    user_id: string;
    content: string;
  }): Promise<Submission> {
    return this.request('POST', '/v1/messages', msg);
  }

  async listReplies(groupId?: string, state?: ReplyState): Promise<Reply[]> {
    const params = new URLSearchParams();
    if (groupId) params.set('group_id', groupId);
    if (state) params.set('state', state);
    const qs = params.toString();
    const data = await this.request<{ replies: Reply[] }>(
      'GET',
      '/v1/replies' + (qs ? `?${qs}` : ''),
    );
    return data.replies;
  }

  withdraw(replyId: string): Promise<Reply> {
    return this.request('POST', `/v1/withdraw/${replyId}`);
  }

  getConfig(): Promise<Tunables> {
    return this.request('GET', '/v1/config');
  }

  putConfig(tunables: Tunables): Promise<Tunables> {
    return this.request('PUT', '/v1/config', tunables);
  }

  addKnowledge(
    text: string,
    sourcePath: string,
    includeRejection: boolean,
  ): Promise<KnowledgeResult> {
    return this.request('POST', '/v1/knowledge', {
      text,
      source_path: sourcePath,
      include_rejection: includeRejection,
    });
  }
}

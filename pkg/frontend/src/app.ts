import { Api, ApiClient, Reply } from './api';
import { ConsoleStore } from './store';
import { subscribeReplies } from './sse';
import { chatPanel } from './panels/chat';
import { moderationPanel } from './panels/moderation';
import { settingsPanel } from './panels/settings';

export type Console = {
  store: ConsoleStore;
  api: Api;
  stop: () => void;
};

/**
 * Mount the whole console into `root`. One store, one event-stream
 * subscription; the panels are plain renderers over the store.
 */
export function createConsole(root: HTMLElement, apiBase: string): Console {
  const api = new ApiClient(apiBase);
  const store = new ConsoleStore();

  root.innerHTML = `
    <div class="banner" hidden></div>
    <header class="topbar">
      <h1>groupdesk console</h1>
      <label>group <input class="group-input" value="${store.groupId}"></label>
      <button class="reconnect-btn" hidden>reconnect</button>
    </header>
    <main>
      <section class="panel chat-panel"></section>
      <section class="panel moderation-panel"></section>
      <section class="panel settings-panel"></section>
    </main>
  `;

  const banner = root.querySelector('.banner') as HTMLElement;
  const reconnectBtn = root.querySelector('.reconnect-btn') as HTMLButtonElement;
  const groupInput = root.querySelector('.group-input') as HTMLInputElement;

  store.subscribe(() => {
    banner.hidden = store.banner === null;
    banner.textContent = store.banner ?? '';
  });

  groupInput.addEventListener('change', () => {
    store.setGroup(groupInput.value.trim() || 'demo');
  });

  chatPanel(root.querySelector('.chat-panel') as HTMLElement, store, api);
  moderationPanel(root.querySelector('.moderation-panel') as HTMLElement, store, api);
  settingsPanel(root.querySelector('.settings-panel') as HTMLElement, store, api);

  const refresh = () =>
    api
      .listReplies()
      .then((replies: Reply[]) => {
        store.replaceAll(replies);
        store.setBanner(null);
      })
      .catch((err: Error) => store.setBanner(`cannot reach the service: ${err.message}`));

  let unsubscribe = () => {};
  const connect = () => {
    reconnectBtn.hidden = true;
    unsubscribe();
    unsubscribe = subscribeReplies(
      apiBase,
      (reply) => store.upsert(reply),
      (err) => {
        store.setBanner(`event stream lost: ${err.message}`);
        reconnectBtn.hidden = false;
      },
    );
    void refresh();
  };
  reconnectBtn.addEventListener('click', connect);
  connect();

  return { store, api, stop: () => unsubscribe() };
}

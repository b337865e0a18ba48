import type { Api, Reply } from '../api';
import { ConsoleStore } from '../store';

function row(reply: Reply, api: Api, store: ConsoleStore): HTMLTableRowElement {
  const tr = document.createElement('tr');
  tr.className = `mod-row state-${reply.state}`;
  tr.dataset.replyId = reply.reply_id;
  if (reply.state === 'withdrawn') tr.classList.add('withdrawn');

  for (const text of [
    reply.reply_id,
    reply.group_id,
    reply.state,
    reply.query_text,
    reply.answer ?? '',
  ]) {
    const td = document.createElement('td');
    td.textContent = text;
    tr.append(td);
  }

  const actions = document.createElement('td');
  const button = document.createElement('button');
  button.textContent = 'withdraw';
  button.className = 'withdraw-btn';
  // only a sent reply can be pulled back; everything else is not live
  button.disabled = reply.state !== 'sent';
  if (button.disabled) {
    button.title =
      reply.state === 'withdrawn' ? 'already withdrawn' : `cannot withdraw a ${reply.state} reply`;
  }
  button.addEventListener('click', () => {
    button.disabled = true;
    api
      .withdraw(reply.reply_id)
      .then((updated) => {
        store.upsert(updated);
        store.setBanner(null);
      })
      .catch((err: Error) => {
        button.disabled = false;
        store.setBanner(`withdraw failed: ${err.message}`);
      });
  });
  actions.append(button);
  tr.append(actions);
  return tr;
}

export function moderationPanel(root: HTMLElement, store: ConsoleStore, api: Api): void {
  root.innerHTML = `
    <h2>Moderation</h2>
    <table class="mod-table">
      <thead>
        <tr><th>id</th><th>group</th><th>state</th><th>query</th><th>answer</th><th></th></tr>
      </thead>
      <tbody></tbody>
    </table>
  `;
  const body = root.querySelector('tbody') as HTMLElement;

  const render = () => {
    body.replaceChildren(...store.list().map((reply) => row(reply, api, store)));
  };
  store.subscribe(render);
  render();
}

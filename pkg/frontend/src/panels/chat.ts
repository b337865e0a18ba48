import type { Api, Reply } from '../api';
import { ConsoleStore, refusalGate } from '../store';

let sequence = 0;

function nextMessageId(): string {
  sequence += 1;
  return `web-${Date.now()}-${sequence}`;
}

function traceDetails(reply: Reply): HTMLElement {
  const details = document.createElement('details');
  details.className = 'trace';
  const summary = document.createElement('summary');
  summary.textContent = 'gate trace';
  details.append(summary);
  const table = document.createElement('table');
  for (const entry of reply.trace) {
    const row = document.createElement('tr');
    row.className = `gate-row gate-${entry.outcome}`;
    for (const cell of [entry.gate, entry.outcome, entry.detail]) {
      const td = document.createElement('td');
      td.textContent = cell;
      row.append(td);
    }
    table.append(row);
  }
  details.append(table);
  return details;
}

function replyCard(reply: Reply): HTMLElement {
  const card = document.createElement('article');
  card.className = `reply-card state-${reply.state}`;
  card.dataset.replyId = reply.reply_id;

  const head = document.createElement('header');
  const badge = document.createElement('span');
  badge.className = 'badge';
  badge.textContent = reply.state;
  const query = document.createElement('span');
  query.className = 'query';
  query.textContent = reply.query_text;
  head.append(badge, query);
  card.append(head);

  if (reply.state === 'withheld') {
    const notice = document.createElement('p');
    notice.className = 'withheld-reason';
    const gate = refusalGate(reply);
    notice.textContent = gate ? `withheld: ${gate}` : 'withheld';
    card.append(notice);
  } else if (reply.answer !== null) {
    const answer = document.createElement('p');
    answer.className = 'answer';
    answer.textContent = reply.answer;
    card.append(answer);
    const chips = document.createElement('div');
    chips.className = 'citations';
    for (const citation of reply.citations) {
      const chip = document.createElement('span');
      chip.className = 'citation';
      chip.textContent = citation;
      chips.append(chip);
    }
    card.append(chips);
  } else {
    const waiting = document.createElement('p');
    waiting.className = 'pending-note';
    waiting.textContent = 'waiting for the pipeline…';
    card.append(waiting);
  }

  card.append(traceDetails(reply));
  return card;
}

export function chatPanel(root: HTMLElement, store: ConsoleStore, api: Api): void {
  root.innerHTML = `
    <h2>Chat</h2>
    <form class="ask-form">
      <textarea name="question" rows="2" placeholder="Ask the assistant…"></textarea>
      <button type="submit">Ask</button>
      <span class="submit-note"></span>
    </form>
    <div class="replies"></div>
  `;
  const form = root.querySelector('form') as HTMLFormElement;
  const textarea = root.querySelector('textarea') as HTMLTextAreaElement;
  const note = root.querySelector('.submit-note') as HTMLElement;
  const list = root.querySelector('.replies') as HTMLElement;

  form.addEventListener('submit', (ev) => {
    ev.preventDefault();
    const content = textarea.value.trim();
    if (!content) return;
    note.textContent = '';
    api
      .submitMessage({
        message_id: nextMessageId(),
        group_id: store.groupId,
        user_id: 'console',
        content,
      })
      .then((result) => {
        if (!result.accepted) {
          note.textContent = `dropped before the pipeline: ${result.reason}`;
        } else {
          textarea.value = '';
        }
        store.setBanner(null);
      })
      .catch((err: Error) => store.setBanner(`message submit failed: ${err.message}`));
  });

  const render = () => {
    list.replaceChildren(...store.list(store.groupId).reverse().map(replyCard));
  };
  store.subscribe(render);
  render();
}

import type { Api, Thresholds, Tunables, WorkingHours } from '../api';
import { ApiError } from '../api';
import { ConsoleStore } from '../store';
import {
  hhmmFromMinutes,
  minutesFromHhmm,
  validateThresholds,
  validateWorkingHours,
} from '../validate';

const THRESHOLD_FIELDS: Array<{ name: keyof Thresholds; label: string; step: string }> = [
  { name: 'theta_sim', label: 'similarity gate', step: '0.01' },
  { name: 'theta_q', label: 'question score', step: '1' },
  { name: 'theta_rel', label: 'document relevance', step: '1' },
  { name: 'theta_ans', label: 'answer relevance', step: '1' },
  { name: 'theta_sec', label: 'security topic', step: '1' },
];

export function settingsPanel(root: HTMLElement, store: ConsoleStore, api: Api): void {
  const thresholdInputs = THRESHOLD_FIELDS.map(
    ({ name, label, step }) => `
      <label class="field" data-field="${name}">
        <span>${label} (${name})</span>
        <input name="${name}" type="number" step="${step}">
        <small class="field-error"></small>
      </label>`,
  ).join('');

  root.innerHTML = `
    <h2>Settings</h2>
    <form class="settings-form">
      <fieldset class="thresholds">
        <legend>Thresholds</legend>
        ${thresholdInputs}
      </fieldset>
      <fieldset class="hours">
        <legend>Working hours</legend>
        <label class="field"><input name="hours_enabled" type="checkbox"> limit replies to working hours</label>
        <label class="field" data-field="start_minute">
          <span>start</span><input name="start" placeholder="09:00">
          <small class="field-error"></small>
        </label>
        <label class="field" data-field="end_minute">
          <span>end</span><input name="end" placeholder="18:00">
          <small class="field-error"></small>
        </label>
        <label class="field" data-field="timezone">
          <span>timezone</span><input name="timezone" placeholder="UTC">
          <small class="field-error"></small>
        </label>
      </fieldset>
      <button type="submit">Save</button>
      <span class="save-note"></span>
    </form>
    <form class="knowledge-form">
      <h3>Add knowledge</h3>
      <input type="file" name="doc">
      <label class="field"><span>source path</span><input name="source_path" placeholder="docs/notes.md"></label>
      <label class="field"><input name="include_rejection" type="checkbox"> also index for the rejection gate</label>
      <button type="submit">Upload</button>
      <span class="upload-note"></span>
    </form>
  `;

  const form = root.querySelector('.settings-form') as HTMLFormElement;
  const saveNote = root.querySelector('.save-note') as HTMLElement;
  const input = (name: string) => form.querySelector(`[name="${name}"]`) as HTMLInputElement;

  const showErrors = (errors: Record<string, string>) => {
    for (const field of form.querySelectorAll<HTMLElement>('.field[data-field]')) {
      const slot = field.querySelector('.field-error') as HTMLElement;
      slot.textContent = errors[field.dataset.field ?? ''] ?? '';
    }
  };

  const fill = (tunables: Tunables) => {
    for (const { name } of THRESHOLD_FIELDS) {
      input(name).value = String(tunables.thresholds[name]);
    }
    const hours = tunables.working_hours;
    input('hours_enabled').checked = hours !== null;
    input('start').value = hours ? hhmmFromMinutes(hours.start_minute) : '';
    input('end').value = hours ? hhmmFromMinutes(hours.end_minute) : '';
    input('timezone').value = hours ? hours.timezone : '';
    showErrors({});
    saveNote.textContent = '';
  };

  form.addEventListener('submit', (ev) => {
    ev.preventDefault();
    saveNote.textContent = '';

    const thresholds = Object.fromEntries(
      THRESHOLD_FIELDS.map(({ name }) => [name, Number(input(name).value)]),
    ) as Thresholds;
    const errors = validateThresholds(thresholds);

    let hours: WorkingHours | null = null;
    if (input('hours_enabled').checked) {
      const start = minutesFromHhmm(input('start').value);
      const end = minutesFromHhmm(input('end').value);
      if (start === null) errors.start_minute = 'use HH:MM';
      if (end === null) errors.end_minute = 'use HH:MM';
      if (start !== null && end !== null) {
        hours = { start_minute: start, end_minute: end, timezone: input('timezone').value.trim() };
        Object.assign(errors, validateWorkingHours(hours));
      }
    }

    showErrors(errors);
    if (Object.keys(errors).length > 0) return; // invalid edits never reach the server

    api
      .putConfig({ thresholds, working_hours: hours })
      .then((saved) => {
        fill(saved);
        saveNote.textContent = 'saved';
        store.setBanner(null);
      })
      .catch((err: Error) => {
        if (err instanceof ApiError) {
          saveNote.textContent = `rejected: ${err.message}`;
        } else {
          store.setBanner(`config save failed: ${err.message}`);
        }
      });
  });

  const knowledgeForm = root.querySelector('.knowledge-form') as HTMLFormElement;
  const uploadNote = knowledgeForm.querySelector('.upload-note') as HTMLElement;
  knowledgeForm.addEventListener('submit', (ev) => {
    ev.preventDefault();
    const picker = knowledgeForm.querySelector('[name="doc"]') as HTMLInputElement;
    const file = picker.files?.[0];
    if (!file) {
      uploadNote.textContent = 'pick a file first';
      return;
    }
    const sourcePath = (knowledgeForm.querySelector('[name="source_path"]') as HTMLInputElement)
      .value;
    const includeRejection = (
      knowledgeForm.querySelector('[name="include_rejection"]') as HTMLInputElement
    ).checked;
    file
      .text()
      .then((text) => api.addKnowledge(text, sourcePath || file.name, includeRejection))
      .then((result) => {
        uploadNote.textContent = `indexed ${result.chunks} chunks (${result.rejection_chunks} rejection)`;
        store.setBanner(null);
      })
      .catch((err: Error) => store.setBanner(`knowledge upload failed: ${err.message}`));
  });

  api
    .getConfig()
    .then(fill)
    .catch((err: Error) => store.setBanner(`config load failed: ${err.message}`));
}

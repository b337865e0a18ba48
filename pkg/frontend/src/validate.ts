import type { Thresholds, WorkingHours } from './api';

// Mirrors the server's ranges so a bad edit fails inline before any
// request is sent. The server stays the authority; anything it still
// rejects (an unknown timezone, say) comes back as a 400 we display.

export function validateThresholds(t: Thresholds): Record<string, string> {
  const errors: Record<string, string> = {};
  if (typeof t.theta_sim !== 'number' || !Number.isFinite(t.theta_sim)) {
    errors.theta_sim = 'must be a number';
  } else if (t.theta_sim < -1 || t.theta_sim > 1) {
    errors.theta_sim = 'must be within [-1, 1]';
  }
  for (const name of ['theta_q', 'theta_rel', 'theta_ans', 'theta_sec'] as const) {
    const value = t[name];
    if (!Number.isInteger(value)) {
      errors[name] = 'must be an integer';
    } else if (value < 0 || value > 10) {
      errors[name] = 'must be within [0, 10]';
    }
  }
  return errors;
}

export function validateWorkingHours(h: WorkingHours): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!Number.isInteger(h.start_minute) || h.start_minute < 0 || h.start_minute > 1439) {
    errors.start_minute = 'start must be a minute in [0, 1439]';
  }
  if (!Number.isInteger(h.end_minute) || h.end_minute < 1 || h.end_minute > 1440) {
    errors.end_minute = 'end must be a minute in [1, 1440]';
  }
  if (!errors.start_minute && !errors.end_minute && h.start_minute >= h.end_minute) {
    errors.end_minute = 'end must be after start';
  }
  if (typeof h.timezone !== 'string' || h.timezone.trim() === '') {
    errors.timezone = 'timezone is required';
  }
  return errors;
}

/** '09:30' -> 570. Accepts 00:00 through 24:00; anything else is null. */
export function minutesFromHhmm(text: string): number | null {
  const match = /^(\d{1,2}):(\d{2})$/.exec(text.trim());
  if (!match) return null;
  const hours = Number(match[1]);
  const minutes = Number(match[2]);
  if (minutes > 59) return null;
  if (hours > 24 || (hours === 24 && minutes !== 0)) return null;
  return hours * 60 + minutes;
}

export function hhmmFromMinutes(total: number): string {
  const hours = Math.floor(total / 60);
  const minutes = total % 60;
  return `${String(hours).padStart(2, '0')}:${String(minutes).padStart(2, '0')}`;
}

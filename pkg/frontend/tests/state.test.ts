import { describe, expect, it } from 'vitest';

import type { ProgressEvent, TerminalEvent } from '../src/api.js';
import {
  applyStreamEvent,
  formatElapsed,
  formatLoss,
  initialView,
  progressFraction,
  startUpload,
  uploadAccepted,
  uploadRejected,
} from '../src/state.js';

function progress(evaluations: number, best: number, frac: number): ProgressEvent {
  return {
    schema_version: 1,
    type: 'progress',
    evaluations,
    best_loss: best,
    elapsed_ms: evaluations,
    progress_fraction: frac,
  };
}

const doneEvent: TerminalEvent = {
  schema_version: 1,
  type: 'terminal',
  state: 'done',
  final_loss: 0.42,
};

describe('job view state machine', () => {
  it('walks landing -> uploading -> optimizing -> done', () => {
    let v = initialView();
    expect(v.phase).toBe('landing');
    v = startUpload(v);
    expect(v.phase).toBe('uploading');
    v = uploadAccepted(v, 'abc');
    expect(v.phase).toBe('optimizing');
    expect(v.jobId).toBe('abc');
    v = applyStreamEvent(v, progress(40, 3.2, 0.2));
    v = applyStreamEvent(v, doneEvent);
    expect(v.phase).toBe('done');
    expect(v.finalLoss).toBe(0.42);
  });

  it('rejected upload returns to landing with the server reason', () => {
    let v = startUpload(initialView());
    v = uploadRejected(v, 'upload exceeds 50 MB');
    expect(v.phase).toBe('landing');
    expect(v.error).toBe('upload exceeds 50 MB');
  });

  it('never leaves done for the same job', () => {
    let v = uploadAccepted(startUpload(initialView()), 'j');
    v = applyStreamEvent(v, doneEvent);
    const after = applyStreamEvent(v, progress(80, 1.0, 0.5));
    expect(after.phase).toBe('done');
    expect(after).toBe(v);
  });

  it('displays monotone progress even if a snapshot replays', () => {
    let v = uploadAccepted(startUpload(initialView()), 'j');
    v = applyStreamEvent(v, progress(400, 2.0, 0.4));
    // reconnect snapshot arrives with an older cursor
    const replay = applyStreamEvent(v, progress(200, 2.5, 0.2));
    expect(replay.latest?.evaluations).toBe(400);
    // later event with a worse loss cannot raise the display
    const worse = applyStreamEvent(v, progress(440, 2.6, 0.44));
    expect(worse.latest?.best_loss).toBe(2.0);
    expect(worse.latest?.evaluations).toBe(440);
  });

  it('failed terminal carries the error', () => {
    let v = uploadAccepted(startUpload(initialView()), 'j');
    v = applyStreamEvent(v, {
      schema_version: 1,
      type: 'terminal',
      state: 'failed',
      error: 'no voiced note segments found',
    });
    expect(v.phase).toBe('failed');
    expect(v.error).toContain('voiced');
  });

  it('progress fraction saturates at done', () => {
    let v = uploadAccepted(startUpload(initialView()), 'j');
    expect(progressFraction(v)).toBe(0);
    v = applyStreamEvent(v, progress(40, 3.0, 0.25));
    expect(progressFraction(v)).toBe(0.25);
    v = applyStreamEvent(v, doneEvent);
    expect(progressFraction(v)).toBe(1);
  });
});

describe('formatters', () => {
  it('loss renders 4 significant digits', () => {
    expect(formatLoss(2.091234)).toBe('2.091');
    expect(formatLoss(0.00012345)).toBe('0.0001234');
    expect(formatLoss(null)).toBe('--');
  });

  it('elapsed renders m:ss', () => {
    expect(formatElapsed(0)).toBe('0:00');
    expect(formatElapsed(61_500)).toBe('1:01');
    expect(formatElapsed(600_000)).toBe('10:00');
  });
});

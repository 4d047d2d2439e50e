/**
 * UI state machine for one matching job.
 *
 * phases: landing -> uploading -> optimizing -> done | failed
 * A finished job never transitions back to optimizing; the displayed
 * progress is monotone even if the stream replays a snapshot.
 */

import type { ProgressEvent, StreamEvent } from './api.js';

export type Phase = 'landing' | 'uploading' | 'optimizing' | 'done' | 'failed';

export interface UiJobView {
  phase: Phase;
  jobId: string | null;
  latest: ProgressEvent | null;
  error: string | null;
  finalLoss: number | null;
}

export function initialView(): UiJobView {
  return { phase: 'landing', jobId: null, latest: null, error: null, finalLoss: null };
}

export function startUpload(view: UiJobView): UiJobView {
  if (view.phase === 'uploading' || view.phase === 'optimizing') return view;
  return { ...initialView(), phase: 'uploading' };
}

export function uploadAccepted(view: UiJobView, jobId: string): UiJobView {
  return { ...view, phase: 'optimizing', jobId, latest: null, error: null };
}

export function uploadRejected(view: UiJobView, reason: string): UiJobView {
  return { ...initialView(), error: reason };
}

export function applyStreamEvent(view: UiJobView, event: StreamEvent): UiJobView {
  if (view.phase === 'done' || view.phase === 'failed') return view;
  if (event.type === 'terminal') {
    if (event.state === 'done') {
      return { ...view, phase: 'done', finalLoss: event.final_loss ?? null };
    }
    return { ...view, phase: 'failed', error: event.error ?? 'optimization failed' };
  }
  // monotone display: never regress the bar or raise the best loss
  const prev = view.latest;
  if (prev && event.evaluations < prev.evaluations) return view;
  const merged: ProgressEvent = prev
    ? { ...event, best_loss: Math.min(prev.best_loss, event.best_loss) }
    : event;
  return { ...view, latest: merged };
}

export function progressFraction(view: UiJobView): number {
  if (view.phase === 'done') return 1;
  return view.latest?.progress_fraction ?? 0;
}

export function formatLoss(loss: number | null): string {
  if (loss === null || !isFinite(loss)) return '--';
  return loss.toPrecision(4);
}

export function formatElapsed(ms: number): string {
  const s = Math.floor(ms / 1000);
  const mm = Math.floor(s / 60);
  const ss = s % 60;
  return `${mm}:${String(ss).padStart(2, '0')}`;
}

/** Single-page app: drop zone -> live optimization -> playable keyboard. */

import { ApiClient } from './api.js';
import { WebAudioPlayer } from './audio.js';
import { KeyboardController, keyboardLayout } from './keyboard.js';
import {
  UiJobView,
  applyStreamEvent,
  formatElapsed,
  formatLoss,
  initialView,
  progressFraction,
  startUpload,
  uploadAccepted,
  uploadRejected,
} from './state.js';
import { drawWaveform } from './waveform.js';
import { subscribeProgress, ProgressSubscription } from './ws.js';

const api = new ApiClient();
const player = new WebAudioPlayer();

let view: UiJobView = initialView();
let subscription: ProgressSubscription | null = null;
let keyboard: KeyboardController | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setView(next: UiJobView): void {
  view = next;
  render();
}

function render(): void {
  for (const phase of ['landing', 'optimizing', 'result'] as const) {
    el(`panel-${phase}`).hidden =
      phase === 'landing'
        ? !(view.phase === 'landing' || view.phase === 'uploading' || view.phase === 'failed')
        : phase === 'optimizing'
          ? view.phase !== 'optimizing'
          : view.phase !== 'done';
  }
  const banner = el('error-banner');
  banner.hidden = !view.error;
  banner.textContent = view.error ?? '';
  el('drop-zone').classList.toggle('busy', view.phase === 'uploading');

  if (view.phase === 'optimizing') {
    const latest = view.latest;
    const frac = progressFraction(view);
    el<HTMLDivElement>('bar-fill').style.width = `${(frac * 100).toFixed(1)}%`;
    el('eval-count').textContent = latest ? String(latest.evaluations) : '0';
    el('best-loss').textContent = formatLoss(latest ? latest.best_loss : null);
    el('elapsed').textContent = latest ? formatElapsed(latest.elapsed_ms) : '0:00';
  }
  if (view.phase === 'done') {
    el('final-loss').textContent = formatLoss(view.finalLoss);
  }
}

async function beginJob(file: File): Promise<void> {
  setView(startUpload(view));
  try {
    const jobId = await api.createJob(file, { tier: tierChoice(), budget: budgetChoice() });
    setView(uploadAccepted(view, jobId));
    watch(jobId);
  } catch (err) {
    setView(uploadRejected(view, err instanceof Error ? err.message : String(err)));
  }
}

function watch(jobId: string): void {
  subscription?.close();
  subscription = subscribeProgress(jobId, (event) => {
    setView(applyStreamEvent(view, event));
    if (event.type === 'terminal' && event.state === 'done') {
      void showResult(jobId);
    }
  });
}

async function showResult(jobId: string): Promise<void> {
  const result = await api.jobResult(jobId);
  drawWaveform(el<HTMLCanvasElement>('waveform'), result.waveform_peaks);
  el('result-tier').textContent = result.report.tier;
  buildKeyboard(jobId);
  render();
}

async function showBestPreset(): Promise<void> {
  const best = await api.bestPreset();
  setView({ ...initialView(), phase: 'done', finalLoss: best.meta.round_trip_loss });
  drawWaveform(el<HTMLCanvasElement>('waveform'), best.waveform_peaks);
  el('result-tier').textContent = best.tier;
  buildKeyboard(null);
  render();
}

function buildKeyboard(jobId: string | null): void {
  keyboard?.reset();
  keyboard = new KeyboardController(
    (midi) => api.fetchNote(jobId, midi),
    player,
    (midi) => flashError(midi),
  );
  const host = el('keyboard');
  host.innerHTML = '';
  const keys = keyboardLayout();
  const whiteCount = keys.filter((k) => !k.black).length;
  const whiteWidth = 100 / whiteCount;
  for (const key of keys) {
    const button = document.createElement('button');
    button.className = key.black ? 'key black' : 'key white';
    button.dataset.midi = String(key.midi);
    button.title = key.name;
    if (key.black) {
      button.style.left = `${(key.whiteIndex + 0.7) * whiteWidth}%`;
      button.style.width = `${whiteWidth * 0.6}%`;
    } else {
      button.style.left = `${key.whiteIndex * whiteWidth}%`;
      button.style.width = `${whiteWidth}%`;
    }
    button.addEventListener('pointerdown', () => {
      void keyboard?.press(key.midi);
    });
    host.appendChild(button);
  }
}

function flashError(midi: number): void {
  const key = document.querySelector<HTMLButtonElement>(`[data-midi="${midi}"]`);
  if (!key) return;
  key.classList.add('error');
  setTimeout(() => key.classList.remove('error'), 600);
}

function tierChoice(): string {
  return el<HTMLSelectElement>('tier-select').value;
}

function budgetChoice(): number {
  return Number(el<HTMLSelectElement>('budget-select').value);
}

function wireDropZone(): void {
  const zone = el('drop-zone');
  const picker = el<HTMLInputElement>('file-input');
  zone.addEventListener('click', () => picker.click());
  picker.addEventListener('change', () => {
    const file = picker.files?.[0];
    if (file) void beginJob(file);
    picker.value = '';
  });
  zone.addEventListener('dragover', (ev) => {
    ev.preventDefault();
    zone.classList.add('dragging');
  });
  zone.addEventListener('dragleave', () => zone.classList.remove('dragging'));
  zone.addEventListener('drop', (ev) => {
    ev.preventDefault();
    zone.classList.remove('dragging');
    const file = ev.dataTransfer?.files?.[0];
    if (file) void beginJob(file);
  });
}

export function boot(): void {
  wireDropZone();
  el('best-preset-button').addEventListener('click', () => {
    void showBestPreset();
  });
  el('again-button').addEventListener('click', () => {
    subscription?.close();
    keyboard?.reset();
    setView(initialView());
  });
  // sequence mode is visible but out of scope
  const seq = el<HTMLInputElement>('mode-sequence');
  seq.disabled = true;
  seq.title = 'Sequence mode is not available; single-sound matching only.';
  render();
}

if (typeof document !== 'undefined' && document.getElementById('panel-landing')) {
  boot();
}

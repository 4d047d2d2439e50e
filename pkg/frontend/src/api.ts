/**
 * Typed client for the job service HTTP endpoints.
 *
 * All synthesis happens server-side; the UI only moves bytes and JSON.
 */

export const MIDI_LO = 48; // C3
export const MIDI_HI = 72; // C5

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface JobStatus {
  schema_version: number;
  id: string;
  state: JobState;
  tier: string;
  budget: number;
  seed: number;
  error: string | null;
}

export interface ProgressEvent {
  schema_version: number;
  type: 'progress';
  evaluations: number;
  best_loss: number;
  elapsed_ms: number;
  progress_fraction: number;
}

export interface TerminalEvent {
  schema_version: number;
  type: 'terminal';
  state: 'done' | 'failed';
  final_loss?: number;
  error?: string;
}

export type StreamEvent = ProgressEvent | TerminalEvent;

export interface JobResult {
  schema_version: number;
  id: string;
  report: {
    tier: string;
    final_loss: number;
    init_loss: number;
    pitches: number[];
    budget: number;
  };
  preset: string;
  waveform_peaks: [number, number][];
}

export interface BestPreset {
  schema_version: number;
  tier: string;
  preset: Record<string, number>;
  preset_text: string;
  meta: { round_trip_loss: number };
  waveform_peaks: [number, number][];
}

type FetchLike = typeof fetch;

export function midiToHz(midi: number): number {
  return 440 * Math.pow(2, (midi - 69) / 12);
}

export function noteName(midi: number): string {
  const names = ['C', 'C#', 'D', 'D#', 'E', 'F', 'F#', 'G', 'G#', 'A', 'A#', 'B'];
  return `${names[midi % 12]}${Math.floor(midi / 12) - 1}`;
}

export function noteUrl(jobId: string | null, midi: number): string {
  if (midi < MIDI_LO || midi > MIDI_HI) {
    throw new Error(`midi ${midi} outside ${MIDI_LO}..${MIDI_HI}`);
  }
  return jobId === null
    ? `/api/presets/best/notes/${midi}`
    : `/api/jobs/${jobId}/notes/${midi}`;
}

export function progressUrl(jobId: string, base: string = ''): string {
  return `${base}/api/jobs/${jobId}/progress`;
}

export class ApiClient {
  constructor(private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  async createJob(
    file: File | Blob,
    options: { tier?: string; budget?: number; seed?: number } = {},
  ): Promise<string> {
    const form = new FormData();
    form.append('file', file, (file as File).name ?? 'upload.wav');
    if (options.tier) form.append('tier', options.tier);
    if (options.budget !== undefined) form.append('budget', String(options.budget));
    if (options.seed !== undefined) form.append('seed', String(options.seed));
    const res = await this.fetchFn('/api/jobs', { method: 'POST', body: form });
    if (!res.ok) {
      throw new Error(await describeError(res));
    }
    const body = (await res.json()) as { id: string };
    return body.id;
  }

  async jobStatus(id: string): Promise<JobStatus> {
    const res = await this.fetchFn(`/api/jobs/${id}`);
    if (!res.ok) throw new Error(await describeError(res));
    return (await res.json()) as JobStatus;
  }

  async jobResult(id: string): Promise<JobResult> {
    const res = await this.fetchFn(`/api/jobs/${id}/result`);
    if (!res.ok) throw new Error(await describeError(res));
    return (await res.json()) as JobResult;
  }

  async bestPreset(): Promise<BestPreset> {
    const res = await this.fetchFn('/api/presets/best');
    if (!res.ok) throw new Error(await describeError(res));
    return (await res.json()) as BestPreset;
  }

  async fetchNote(jobId: string | null, midi: number): Promise<ArrayBuffer> {
    const res = await this.fetchFn(noteUrl(jobId, midi));
    if (!res.ok) throw new Error(await describeError(res));
    return res.arrayBuffer();
  }
}

async function describeError(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (typeof body.detail === 'string') return body.detail;
    if (typeof body.error === 'string') return body.error;
  } catch {
    /* non-JSON error body */
  }
  return `request failed (${res.status})`;
}

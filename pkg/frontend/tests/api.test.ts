import { describe, expect, it, vi } from 'vitest';

import { ApiClient, noteName, noteUrl } from '../src/api.js';

describe('note urls', () => {
  it('uses the job endpoint for jobs and the preset endpoint otherwise', () => {
    expect(noteUrl('abc', 57)).toBe('/api/jobs/abc/notes/57');
    expect(noteUrl(null, 57)).toBe('/api/presets/best/notes/57');
  });

  it('rejects midi outside 48..72 client-side', () => {
    expect(() => noteUrl('abc', 47)).toThrow();
    expect(() => noteUrl(null, 73)).toThrow();
  });

  it('names notes like a keyboard', () => {
    expect(noteName(48)).toBe('C3');
    expect(noteName(57)).toBe('A3');
    expect(noteName(72)).toBe('C5');
  });
});

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
    arrayBuffer: async () => new ArrayBuffer(8),
  } as unknown as Response;
}

describe('api client', () => {
  it('posts multipart uploads with options', async () => {
    const fetchFn = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      expect(url).toBe('/api/jobs');
      const form = init?.body as FormData;
      expect(form.get('tier')).toBe('t24');
      expect(form.get('budget')).toBe('2000');
      expect(form.has('file')).toBe(true);
      return jsonResponse(201, { schema_version: 1, id: 'xyz' });
    });
    const client = new ApiClient(fetchFn as unknown as typeof fetch);
    const id = await client.createJob(new Blob([new Uint8Array(4)]), {
      tier: 't24',
      budget: 2000,
    });
    expect(id).toBe('xyz');
  });

  it('surfaces the server rejection reason', async () => {
    const fetchFn = vi.fn(async () =>
      jsonResponse(413, { detail: 'upload exceeds 50 MB' }),
    );
    const client = new ApiClient(fetchFn as unknown as typeof fetch);
    await expect(client.createJob(new Blob([]))).rejects.toThrow(
      'upload exceeds 50 MB',
    );
  });

  it('fetches notes as binary', async () => {
    const fetchFn = vi.fn(async (url: RequestInfo | URL) => {
      expect(url).toBe('/api/jobs/j/notes/60');
      return jsonResponse(200, {});
    });
    const client = new ApiClient(fetchFn as unknown as typeof fetch);
    const pcm = await client.fetchNote('j', 60);
    expect(pcm.byteLength).toBe(8);
  });
});
